#pragma once

#include "stratnet/graph.hpp"
#include "stratnet/model.hpp"
#include "stratnet/types.hpp"

#include <map>
#include <optional>
#include <vector>

namespace stratnet {

/// Utility a content's authors actually received, attributed by the
/// attention-derived contribution shares: sum over C_a(t) of
/// mu_c(k) * r(a | c). Throws MissingUtility when a content lacks a record
/// at horizon k.
double author_utility(const TemporalGraph& g, const ModelState& model, std::int32_t author,
                      Timestamp t, std::int32_t k);

/// Per-author utility normalized by content count and elapsed time:
/// (1/k) * sum_c mu_c(k) r(a|c) / |C_a(t)|, over contents created at t.
/// Throws EmptyContentSet when the author created nothing at t.
double normalized_utility(const TemporalGraph& g, const ModelState& model, std::int32_t author,
                          Timestamp t, std::int32_t k);

struct AllocationRecord {
    std::int32_t author = -1;
    Timestamp t_created = 0;
    std::int32_t horizon = 0;  // k
    SpaceGroup space = SpaceGroup::Citation;
    int strategy = 0;          // argmax of D_a(t_created), ties to lowest code
    double utility = 0.0;      // normalized utility allocated to the strategy
};

/// Returns the maximum-likelihood strategy of a distribution: argmax entry,
/// ties broken by lowest code.
int max_likelihood_strategy(const Eigen::Ref<const Eigen::VectorXd>& dist);

struct RationalConfig {
    /// Horizon per (author, creation time) pair: the largest k at which every
    /// content of the pair has a record, or a fixed k when set.
    std::optional<std::int32_t> fixed_horizon;
    /// Citation and venue strategies are assumed to contribute equally to a
    /// content's utility, so each space's allocation sees mu_c / 2.
    double space_share = 0.5;
};

/// Allocates each (author, creation time) pair's normalized utility to the
/// maximum-likelihood strategy of both spaces. Pairs without usable utility
/// records are skipped.
std::vector<AllocationRecord> build_allocations(const TemporalGraph& g, const ModelState& model,
                                                const RationalConfig& cfg = {});

/// Global expected utility per strategy: means over all allocations whose
/// outcome was observable by each time t (t_created + horizon <= t).
/// Strategies with no allocations are absent from the table.
class GlobalStrategyUtility {
public:
    struct Cell {
        double mean = 0.0;
        long count = 0;
    };

    GlobalStrategyUtility(SpaceGroup space, Timestamp horizon_end);

    SpaceGroup space() const { return space_; }
    Timestamp horizon_end() const { return horizon_end_; }

    /// Cell for strategy S at time t, if any allocation was observable by t.
    std::optional<Cell> cell(Timestamp t, int strategy) const;
    bool empty_at(Timestamp t) const;

    friend GlobalStrategyUtility global_expected_utility(
        const std::vector<AllocationRecord>& allocations, SpaceGroup space, Timestamp horizon_end);

private:
    SpaceGroup space_;
    Timestamp horizon_end_;
    // cells_[t][strategy]
    std::vector<std::map<int, Cell>> cells_;
};

GlobalStrategyUtility global_expected_utility(const std::vector<AllocationRecord>& allocations,
                                              SpaceGroup space, Timestamp horizon_end);

/// The strategy a myopic expected-utility maximizer plays after observing
/// everything through t: argmax of the mean table, ties to lowest code.
/// Throws EmptyTable when nothing is observable at t.
int rational_choice(const GlobalStrategyUtility& table, Timestamp t);

}  // namespace stratnet
