#include "stratnet/strategy_space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <unordered_set>

namespace stratnet {

double popularity_weight(std::int32_t indegree, int variant, double smoothing) {
    if (variant == 1) return 1.0;
    return static_cast<double>(indegree) + smoothing;
}

double popularity_weight(const TemporalGraph& g, EdgeView view, std::int32_t target, Timestamp t,
                         int variant, double smoothing) {
    return popularity_weight(g.indegree_before(view, target, t), variant, smoothing);
}

double field_weight(const Eigen::Ref<const Eigen::VectorXd>& f_src,
                    const Eigen::Ref<const Eigen::VectorXd>& f_tgt, int variant) {
    if (f_src.isZero(0.0) || f_tgt.isZero(0.0)) return 1.0;
    const double similar = std::exp(-(f_src - f_tgt).norm());
    return variant == 0 ? similar : 1.0 - similar;
}

double familiarity_weight(bool familiar, int variant, double p) {
    if (!(p > 0.5 && p < 1.0)) {
        throw InvalidParameter("familiarity p must lie in (0.5, 1), got " + std::to_string(p));
    }
    const bool favored = variant == 0 ? familiar : !familiar;
    return favored ? p : 1.0 - p;
}

double recency_density(double delta, double alpha, double beta) {
    if (delta < 0.0 || delta > 1.0) {
        throw InvalidParameter("recency delta must lie in [0, 1]");
    }
    const double log_b = std::lgamma(alpha) + std::lgamma(beta) - std::lgamma(alpha + beta);
    const double x = 1.0 - delta;
    // pow(0, 0) == 1 covers the boundary exponents.
    return std::pow(x, alpha - 1.0) * std::pow(delta, beta - 1.0) / std::exp(log_b);
}

double time_weight(Timestamp source_t, Timestamp target_t, Timestamp t_min, int variant,
                   double alpha, double beta) {
    if (target_t > source_t) {
        throw TimeViolation("time_weight: target is newer than source");
    }
    if (target_t < t_min) {
        throw InvalidParameter("time_weight: target predates t_min");
    }
    if (variant == 1) return 1.0;
    const double denom = static_cast<double>(source_t - t_min);
    const double delta = denom > 0.0 ? static_cast<double>(source_t - target_t) / denom : 0.0;
    return recency_density(delta, alpha, beta);
}

// ---------------------------------------------------------------------------
// Pool and source contexts

PoolContext build_pool_context(const SnapshotView& view, const FieldStore& fields, EdgeView ev) {
    const TemporalGraph& g = view.graph();
    const Timestamp t = view.time();

    PoolContext ctx;
    ctx.view = ev;
    ctx.t = t;
    ctx.pool = g.candidate_pool(ev, t);
    const auto n = static_cast<Eigen::Index>(ctx.pool.size());
    ctx.indegree.resize(n);
    ctx.fields = Eigen::MatrixXd::Zero(kFieldDim, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        ctx.indegree[j] = g.indegree_before(ev, ctx.pool[static_cast<std::size_t>(j)], t);
    }

    switch (ev) {
        case EdgeView::ContentCitesContent: {
            ctx.target_time.resize(n);
            for (Eigen::Index j = 0; j < n; ++j) {
                const std::int32_t c = ctx.pool[static_cast<std::size_t>(j)];
                ctx.target_time[j] = g.content_meta[static_cast<std::size_t>(c)].time;
                if (fields.has(c)) ctx.fields.col(j) = fields.content(c);
            }
            break;
        }
        case EdgeView::AuthorCitesAuthor: {
            ctx.target_time.resize(n);
            for (Eigen::Index j = 0; j < n; ++j) {
                const std::int32_t a = ctx.pool[static_cast<std::size_t>(j)];
                const auto contents = view.contents_of_author_through(a);
                Timestamp latest = g.author_first_active[static_cast<std::size_t>(a)];
                for (std::int32_t c : contents) {
                    latest = std::max(latest, g.content_meta[static_cast<std::size_t>(c)].time);
                }
                ctx.target_time[j] = latest;
                ctx.fields.col(j) = author_field_vector(view, fields, a);
            }
            break;
        }
        case EdgeView::ContentAtVenue:
        case EdgeView::AuthorAtVenue: {
            // One pass over contents instead of one scan per venue.
            std::vector<Eigen::VectorXd> sums(ctx.pool.size());
            std::vector<int> counts(ctx.pool.size(), 0);
            std::vector<Eigen::Index> venue_slot(static_cast<std::size_t>(g.n_venues), -1);
            for (Eigen::Index j = 0; j < n; ++j) {
                venue_slot[static_cast<std::size_t>(ctx.pool[static_cast<std::size_t>(j)])] = j;
            }
            for (std::int32_t c = 0; c < g.n_contents; ++c) {
                const auto& meta = g.content_meta[static_cast<std::size_t>(c)];
                if (meta.venue < 0 || meta.time > t || !fields.has(c)) continue;
                const Eigen::Index j = venue_slot[static_cast<std::size_t>(meta.venue)];
                if (j < 0) continue;
                if (counts[static_cast<std::size_t>(j)] == 0) {
                    sums[static_cast<std::size_t>(j)] = fields.content(c);
                } else {
                    sums[static_cast<std::size_t>(j)] += fields.content(c);
                }
                ++counts[static_cast<std::size_t>(j)];
            }
            for (Eigen::Index j = 0; j < n; ++j) {
                if (counts[static_cast<std::size_t>(j)] == 0) continue;
                const double norm = sums[static_cast<std::size_t>(j)].norm();
                if (norm > 0.0) ctx.fields.col(j) = sums[static_cast<std::size_t>(j)] / norm;
            }
            break;
        }
    }

    ctx.pool_min_time = g.min_content_time;
    if (ctx.target_time.size() > 0) {
        ctx.pool_min_time = static_cast<Timestamp>(ctx.target_time.minCoeff());
    }
    return ctx;
}

namespace {

std::unordered_set<std::int32_t> familiar_targets(const SnapshotView& view, EdgeView ev,
                                                  std::int32_t source) {
    const TemporalGraph& g = view.graph();
    const Timestamp t = view.time();
    std::unordered_set<std::int32_t> out;
    switch (ev) {
        case EdgeView::ContentCitesContent: {
            // Handled separately (flagged per candidate via author overlap).
            break;
        }
        case EdgeView::AuthorCitesAuthor: {
            out = g.collaborators_before(source, t);
            out.insert(source);
            break;
        }
        case EdgeView::ContentAtVenue: {
            for (std::int32_t a : view.authors_of(source)) {
                for (std::int32_t u : g.venues_of_author_before(a, t)) out.insert(u);
            }
            break;
        }
        case EdgeView::AuthorAtVenue: {
            out = g.venues_of_author_before(source, t);
            for (std::int32_t b : g.collaborators_before(source, t)) {
                for (std::int32_t u : g.venues_of_author_before(b, t)) out.insert(u);
            }
            break;
        }
    }
    return out;
}

}  // namespace

SourceContext make_source_context(const SnapshotView& view, const FieldStore& fields,
                                  const PoolContext& pool, std::int32_t source,
                                  const std::vector<std::int32_t>& subset) {
    const TemporalGraph& g = view.graph();
    const Timestamp t = view.time();
    const bool author_source = is_author_view(pool.view);

    SourceContext ctx;
    ctx.group = space_group_of(pool.view);
    ctx.source_time = t;
    ctx.pool_min_time = pool.pool_min_time;

    std::vector<Eigen::Index> take;
    if (subset.empty()) {
        take.resize(pool.pool.size());
        for (std::size_t j = 0; j < pool.pool.size(); ++j) take[j] = static_cast<Eigen::Index>(j);
    } else {
        take.assign(subset.begin(), subset.end());
    }
    const auto n = static_cast<Eigen::Index>(take.size());
    if (n == 0) throw EmptyCandidates("source context: empty candidate set");

    ctx.candidates.resize(static_cast<std::size_t>(n));
    ctx.indegree.resize(n);
    ctx.field_known.resize(n);
    ctx.familiar.resize(n);
    if (ctx.group == SpaceGroup::Citation) ctx.target_time.resize(n);

    Eigen::VectorXd source_field = author_source
                                       ? author_field_vector(view, fields, source)
                                       : fields.content(source);
    const bool source_known = !source_field.isZero(0.0);

    // Familiarity. Content-citation sources flag candidates by author
    // overlap; the other views use an explicit familiar target set.
    std::unordered_set<std::int32_t> source_authors;
    std::unordered_set<std::int32_t> familiar_set;
    if (pool.view == EdgeView::ContentCitesContent) {
        for (std::int32_t a : view.authors_of(source)) source_authors.insert(a);
    } else {
        familiar_set = familiar_targets(view, pool.view, source);
    }

    ctx.field_distance = Eigen::ArrayXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index j = take[static_cast<std::size_t>(i)];
        const std::int32_t target = pool.pool[static_cast<std::size_t>(j)];
        ctx.candidates[static_cast<std::size_t>(i)] = target;
        ctx.indegree[i] = pool.indegree[j];
        const bool target_known = !pool.fields.col(j).isZero(0.0);
        ctx.field_known[i] = source_known && target_known;
        if (ctx.field_known[i]) {
            ctx.field_distance[i] = (source_field - pool.fields.col(j)).norm();
        }
        if (pool.view == EdgeView::ContentCitesContent) {
            bool overlap = false;
            for (std::int32_t b : g.content_meta[static_cast<std::size_t>(target)].authors) {
                if (source_authors.count(b)) {
                    overlap = true;
                    break;
                }
            }
            ctx.familiar[i] = overlap;
        } else {
            ctx.familiar[i] = familiar_set.count(target) > 0;
        }
        if (ctx.group == SpaceGroup::Citation) ctx.target_time[i] = pool.target_time[j];
    }
    return ctx;
}

Eigen::MatrixXd strategy_probability_matrix(const SourceContext& ctx,
                                            const StrategySpaceParams& params) {
    const auto n = static_cast<Eigen::Index>(ctx.candidates.size());
    if (n == 0) throw EmptyCandidates("strategy_probability_matrix: no candidates");
    const StrategySpace space = strategy_space(ctx.group);
    const int m = space.size();

    std::array<std::array<Eigen::ArrayXd, 2>, 4> w;  // [aspect][variant]
    w[0][0] = ctx.indegree + params.popularity_smoothing;
    w[0][1] = Eigen::ArrayXd::Ones(n);

    const Eigen::ArrayXd sim = (-ctx.field_distance).exp();
    w[1][0] = ctx.field_known.select(sim, Eigen::ArrayXd::Ones(n));
    w[1][1] = ctx.field_known.select(1.0 - sim, Eigen::ArrayXd::Ones(n));

    const double p = params.familiarity_p;
    if (!(p > 0.5 && p < 1.0)) {
        throw InvalidParameter("familiarity p must lie in (0.5, 1), got " + std::to_string(p));
    }
    w[2][0] = ctx.familiar.select(Eigen::ArrayXd::Constant(n, p),
                                  Eigen::ArrayXd::Constant(n, 1.0 - p));
    w[2][1] = ctx.familiar.select(Eigen::ArrayXd::Constant(n, 1.0 - p),
                                  Eigen::ArrayXd::Constant(n, p));

    if (ctx.group == SpaceGroup::Citation) {
        Eigen::ArrayXd recency(n);
        const double denom = static_cast<double>(ctx.source_time - ctx.pool_min_time);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (ctx.target_time[i] > static_cast<double>(ctx.source_time)) {
                throw TimeViolation("strategy_probability_matrix: target newer than source");
            }
            const double delta =
                denom > 0.0 ? (static_cast<double>(ctx.source_time) - ctx.target_time[i]) / denom
                            : 0.0;
            recency[i] = recency_density(delta, params.recency_alpha, params.recency_beta);
        }
        w[3][0] = std::move(recency);
        w[3][1] = Eigen::ArrayXd::Ones(n);
    }

    Eigen::MatrixXd probs(m, n);
    for (int code = 0; code < m; ++code) {
        Eigen::ArrayXd row = w[0][StrategySpace::variant(code, Aspect::Popularity)] *
                             w[1][StrategySpace::variant(code, Aspect::Field)] *
                             w[2][StrategySpace::variant(code, Aspect::Familiarity)];
        if (ctx.group == SpaceGroup::Citation) {
            row *= w[3][StrategySpace::variant(code, Aspect::Time)];
        }
        const double total = row.sum();
        if (total > 0.0) {
            probs.row(code) = (row / total).matrix().transpose();
        } else {
            probs.row(code).setConstant(1.0 / static_cast<double>(n));
        }
    }
    return probs;
}

double composite_edge_probability(const SourceContext& ctx, const StrategySpaceParams& params,
                                  int strategy_code, std::int32_t target) {
    auto it = std::lower_bound(ctx.candidates.begin(), ctx.candidates.end(), target);
    if (it == ctx.candidates.end() || *it != target) {
        throw InvalidParameter("composite_edge_probability: target not in candidate set");
    }
    const auto pos = static_cast<Eigen::Index>(it - ctx.candidates.begin());
    return strategy_probability_matrix(ctx, params)(strategy_code, pos);
}

EdgeLikelihoodTable build_likelihood_table(const SnapshotView& view, const FieldStore& fields,
                                           EdgeView ev, const StrategySpaceParams& params,
                                           const CandidateSampling& sampling) {
    const PoolContext pool = build_pool_context(view, fields, ev);
    std::unordered_map<std::int32_t, Eigen::Index> pool_slot;
    for (std::size_t j = 0; j < pool.pool.size(); ++j) {
        pool_slot[pool.pool[j]] = static_cast<Eigen::Index>(j);
    }

    EdgeLikelihoodTable table;
    table.view = ev;
    table.t = view.time();
    table.m = strategy_space_for(ev).size();

    // Group observed edges by source so the probability matrix is built once
    // per source.
    std::vector<std::pair<std::int32_t, std::int32_t>> edges = view.view_edges(ev);
    std::stable_sort(edges.begin(), edges.end());

    std::vector<std::pair<std::int32_t, std::int32_t>> kept;
    for (const auto& e : edges) {
        if (pool_slot.count(e.second)) {
            kept.push_back(e);
        } else {
            ++table.skipped_edges;
        }
    }
    table.edges = kept;
    table.rows.resize(static_cast<Eigen::Index>(kept.size()), table.m);

    std::size_t i = 0;
    while (i < kept.size()) {
        std::size_t j = i;
        while (j < kept.size() && kept[j].first == kept[i].first) ++j;

        std::vector<std::int32_t> subset;
        if (sampling.n_neg > 0 && static_cast<std::size_t>(sampling.n_neg) < pool.pool.size()) {
            // Observed targets plus a seeded sample of the pool, self-normalized.
            std::unordered_set<Eigen::Index> chosen;
            for (std::size_t k = i; k < j; ++k) chosen.insert(pool_slot.at(kept[k].second));
            std::mt19937_64 rng(derive_seed(
                sampling.seed, std::string(to_string(ev)) + ":" + std::to_string(view.time()) +
                                   ":" + std::to_string(kept[i].first)));
            std::uniform_int_distribution<std::size_t> pick(0, pool.pool.size() - 1);
            const std::size_t want = chosen.size() + static_cast<std::size_t>(sampling.n_neg);
            while (chosen.size() < want && chosen.size() < pool.pool.size()) {
                chosen.insert(static_cast<Eigen::Index>(pick(rng)));
            }
            subset.reserve(chosen.size());
            for (Eigen::Index slot : chosen) subset.push_back(static_cast<std::int32_t>(slot));
            std::sort(subset.begin(), subset.end());
        }

        const SourceContext ctx = make_source_context(view, fields, pool, kept[i].first, subset);
        const Eigen::MatrixXd probs = strategy_probability_matrix(ctx, params);
        for (std::size_t k = i; k < j; ++k) {
            const auto it = std::lower_bound(ctx.candidates.begin(), ctx.candidates.end(),
                                             kept[k].second);
            const auto pos = static_cast<Eigen::Index>(it - ctx.candidates.begin());
            table.rows.row(static_cast<Eigen::Index>(k)) = probs.col(pos).transpose();
        }
        i = j;
    }
    return table;
}

}  // namespace stratnet
