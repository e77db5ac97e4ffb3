#include "stratnet/rational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stratnet {

double author_utility(const TemporalGraph& g, const ModelState& model, std::int32_t author,
                      Timestamp t, std::int32_t k) {
    double total = 0.0;
    for (std::int32_t c : g.contents_of_author_at(author, t)) {
        const std::optional<double> mu = g.utilities.value(c, k);
        if (!mu) {
            throw MissingUtility("content '" + g.content_keys[static_cast<std::size_t>(c)] +
                                 "' has no utility at horizon " + std::to_string(k));
        }
        total += *mu * model.contribution_of(author, c);
    }
    return total;
}

double normalized_utility(const TemporalGraph& g, const ModelState& model, std::int32_t author,
                          Timestamp t, std::int32_t k) {
    if (k < 1) throw InvalidParameter("normalized_utility: k must be >= 1");
    const auto contents = g.contents_of_author_at(author, t);
    if (contents.empty()) {
        throw EmptyContentSet("author '" + g.author_keys[static_cast<std::size_t>(author)] +
                              "' created nothing at t=" + std::to_string(t));
    }
    return author_utility(g, model, author, t, k) /
           (static_cast<double>(k) * static_cast<double>(contents.size()));
}

int max_likelihood_strategy(const Eigen::Ref<const Eigen::VectorXd>& dist) {
    int best = 0;
    for (Eigen::Index i = 1; i < dist.size(); ++i) {
        if (dist[i] > dist[best]) best = static_cast<int>(i);
    }
    return best;
}

std::vector<AllocationRecord> build_allocations(const TemporalGraph& g, const ModelState& model,
                                                const RationalConfig& cfg) {
    std::vector<AllocationRecord> out;
    for (Timestamp t = 0; t < g.num_snapshots(); ++t) {
        const auto& snap = g.snapshots[static_cast<std::size_t>(t)];
        for (std::int32_t a : snap.active_authors) {
            const auto contents = g.contents_of_author_at(a, t);
            if (contents.empty()) continue;

            std::int32_t k;
            if (cfg.fixed_horizon) {
                k = *cfg.fixed_horizon;
                bool usable = true;
                for (std::int32_t c : contents) {
                    if (!g.utilities.value(c, k)) {
                        usable = false;
                        break;
                    }
                }
                if (!usable) continue;
            } else {
                // Largest horizon observable for every content of the pair.
                k = std::numeric_limits<std::int32_t>::max();
                for (std::int32_t c : contents) {
                    k = std::min(k, g.utilities.max_horizon(c));
                }
                if (k < 1) continue;
            }

            const double mu_hat = normalized_utility(g, model, a, t, k);
            for (int group = 0; group < kNumSpaceGroups; ++group) {
                const auto sg = static_cast<SpaceGroup>(group);
                const Eigen::VectorXd* dist = model.find_author_dist(sg, a, t);
                if (dist == nullptr) continue;
                AllocationRecord rec;
                rec.author = a;
                rec.t_created = t;
                rec.horizon = k;
                rec.space = sg;
                rec.strategy = max_likelihood_strategy(*dist);
                rec.utility = cfg.space_share * mu_hat;
                out.push_back(rec);
            }
        }
    }
    return out;
}

GlobalStrategyUtility::GlobalStrategyUtility(SpaceGroup space, Timestamp horizon_end)
    : space_(space), horizon_end_(horizon_end) {
    cells_.resize(static_cast<std::size_t>(std::max<Timestamp>(horizon_end, 0)) + 1);
}

std::optional<GlobalStrategyUtility::Cell> GlobalStrategyUtility::cell(Timestamp t,
                                                                       int strategy) const {
    if (t < 0 || t > horizon_end_) return std::nullopt;
    const auto& row = cells_[static_cast<std::size_t>(t)];
    auto it = row.find(strategy);
    if (it == row.end()) return std::nullopt;
    return it->second;
}

bool GlobalStrategyUtility::empty_at(Timestamp t) const {
    if (t < 0 || t > horizon_end_) return true;
    return cells_[static_cast<std::size_t>(t)].empty();
}

GlobalStrategyUtility global_expected_utility(const std::vector<AllocationRecord>& allocations,
                                              SpaceGroup space, Timestamp horizon_end) {
    GlobalStrategyUtility table(space, horizon_end);
    // Running sums per strategy, swept over t so each table row means
    // "allocations whose outcome was observable by t".
    std::map<int, std::pair<double, long>> running;
    std::vector<std::vector<const AllocationRecord*>> by_time(
        static_cast<std::size_t>(std::max<Timestamp>(horizon_end, 0)) + 1);
    for (const auto& rec : allocations) {
        if (rec.space != space) continue;
        const Timestamp observed = rec.t_created + rec.horizon;
        if (observed < 0 || observed > horizon_end) continue;
        by_time[static_cast<std::size_t>(observed)].push_back(&rec);
    }
    for (Timestamp t = 0; t <= horizon_end; ++t) {
        for (const AllocationRecord* rec : by_time[static_cast<std::size_t>(t)]) {
            auto& [sum, count] = running[rec->strategy];
            sum += rec->utility;
            ++count;
        }
        auto& row = table.cells_[static_cast<std::size_t>(t)];
        for (const auto& [strategy, sc] : running) {
            row[strategy] = {sc.first / static_cast<double>(sc.second), sc.second};
        }
    }
    return table;
}

int rational_choice(const GlobalStrategyUtility& table, Timestamp t) {
    if (table.empty_at(t)) {
        throw EmptyTable("no strategy utility observable at t=" + std::to_string(t));
    }
    int best = -1;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (int code = 0; code < m_for(table.space()); ++code) {
        const auto cell = table.cell(t, code);
        if (cell && cell->mean > best_mean) {
            best = code;
            best_mean = cell->mean;
        }
    }
    return best;
}

}  // namespace stratnet
