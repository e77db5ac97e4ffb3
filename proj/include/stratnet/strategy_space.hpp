#pragma once

#include "stratnet/features.hpp"
#include "stratnet/graph.hpp"
#include "stratnet/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace stratnet {

/// Strategic considerations biasing target choice. Time applies only to
/// citation views.
enum class Aspect : int { Popularity = 0, Field = 1, Familiarity = 2, Time = 3 };

/// Composite strategies are bit-coded, one bit per aspect, Popularity in the
/// lowest bit. Citation spaces have 4 aspects (16 strategies), venue spaces 3
/// (8 strategies); ordering is by code value.
struct StrategySpace {
    SpaceGroup group = SpaceGroup::Citation;

    int num_aspects() const { return group == SpaceGroup::Citation ? 4 : 3; }
    int size() const { return 1 << num_aspects(); }

    static int variant(int code, Aspect aspect) {
        return (code >> static_cast<int>(aspect)) & 1;
    }
};

inline StrategySpace strategy_space(SpaceGroup group) { return StrategySpace{group}; }
inline StrategySpace strategy_space_for(EdgeView view) {
    return StrategySpace{space_group_of(view)};
}

struct StrategySpaceParams {
    double familiarity_p = 0.9;       // must lie in (0.5, 1)
    double recency_alpha = 10.0;      // Beta density parameters for the
    double recency_beta = 1.0;        // small-time-gap strategy
    double popularity_smoothing = 1.0;
};

// ---------------------------------------------------------------------------
// Pure per-aspect weights. Variant 0 is the biased strategy, variant 1 its
// complement (uniform or inverted preference).

/// Variant 0: indegree + smoothing (preferential attachment); variant 1: 1.
double popularity_weight(std::int32_t indegree, int variant, double smoothing = 1.0);

/// Convenience overload resolving the indegree from the graph.
double popularity_weight(const TemporalGraph& g, EdgeView view, std::int32_t target, Timestamp t,
                         int variant, double smoothing = 1.0);

/// Variant 0: exp(-||f_src - f_tgt||); variant 1: 1 - exp(-||f_src - f_tgt||).
/// Either vector zero (unknown field): 1 for both variants.
double field_weight(const Eigen::Ref<const Eigen::VectorXd>& f_src,
                    const Eigen::Ref<const Eigen::VectorXd>& f_tgt, int variant);

/// Variant 0: p if the target is familiar, else 1-p; variant 1 swaps the
/// assignment. Requires 0.5 < p < 1.
double familiarity_weight(bool familiar, int variant, double p);

/// Beta(alpha, beta) density at 1 - delta, the recency weight.
double recency_density(double delta, double alpha, double beta);

/// delta = (source_t - target_t) / (source_t - t_min), or 0 if the
/// denominator is 0. Variant 0: recency_density(delta); variant 1: 1.
double time_weight(Timestamp source_t, Timestamp target_t, Timestamp t_min, int variant,
                   double alpha = 10.0, double beta = 1.0);

// ---------------------------------------------------------------------------
// Edge probabilities over candidate pools.

/// Per-candidate data shared by every source scoring the same (view, t) pool.
struct PoolContext {
    EdgeView view = EdgeView::ContentCitesContent;
    Timestamp t = 0;
    std::vector<std::int32_t> pool;      // ascending ids
    Eigen::ArrayXd indegree;             // incoming edges strictly before t
    Eigen::MatrixXd fields;              // kFieldDim x n, zero columns = unknown
    Eigen::ArrayXd target_time;          // citation views only
    Timestamp pool_min_time = 0;
};

PoolContext build_pool_context(const SnapshotView& view, const FieldStore& fields, EdgeView ev);

/// Everything needed to score one source against a candidate list.
struct SourceContext {
    SpaceGroup group = SpaceGroup::Citation;
    Timestamp source_time = 0;
    Timestamp pool_min_time = 0;
    std::vector<std::int32_t> candidates;  // ascending ids
    Eigen::ArrayXd indegree;
    Eigen::ArrayXd field_distance;         // valid where field_known
    Eigen::Array<bool, Eigen::Dynamic, 1> field_known;
    Eigen::Array<bool, Eigen::Dynamic, 1> familiar;
    Eigen::ArrayXd target_time;            // citation group only
};

/// Builds the context for one source over the given candidate subset (indexes
/// into pool.pool); pass an empty subset for the full pool.
SourceContext make_source_context(const SnapshotView& view, const FieldStore& fields,
                                  const PoolContext& pool, std::int32_t source,
                                  const std::vector<std::int32_t>& subset = {});

/// m x n matrix of candidate probabilities; row S is the distribution over
/// candidates under composite strategy S (rows sum to 1). A row whose raw
/// weights all vanish falls back to uniform.
Eigen::MatrixXd strategy_probability_matrix(const SourceContext& ctx,
                                            const StrategySpaceParams& params);

/// P(target | S) over the context's candidates.
double composite_edge_probability(const SourceContext& ctx, const StrategySpaceParams& params,
                                  int strategy_code, std::int32_t target);

// ---------------------------------------------------------------------------
// Likelihood tables: per-edge strategy probabilities for one snapshot view.
// They depend only on the graph and features, so training reuses them across
// epochs.

struct EdgeLikelihoodTable {
    EdgeView view = EdgeView::ContentCitesContent;
    Timestamp t = 0;
    int m = 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;  // (source, target)
    Eigen::MatrixXd rows;                                      // edges x m
    int skipped_edges = 0;  // observed edges whose target is outside the pool
};

struct CandidateSampling {
    int n_neg = 0;           // 0: normalize over the full pool
    std::uint64_t seed = 0;  // sampling stream for the subsampled estimator
};

EdgeLikelihoodTable build_likelihood_table(const SnapshotView& view, const FieldStore& fields,
                                           EdgeView ev, const StrategySpaceParams& params,
                                           const CandidateSampling& sampling = {});

}  // namespace stratnet
