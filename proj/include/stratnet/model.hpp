#pragma once

#include "stratnet/features.hpp"
#include "stratnet/graph.hpp"
#include "stratnet/strategy_space.hpp"
#include "stratnet/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace stratnet {

/// One-layer attention head: a shared linear map W (hidden x feature) and the
/// scoring vector phi (2 * hidden).
struct AttentionHead {
    Eigen::MatrixXd W;
    Eigen::VectorXd phi;
};

/// The three heads of one space group: author->content contribution,
/// content->author contribution, and the temporal gate.
struct AttentionParams {
    AttentionHead content_author;  // scores authors for a content
    AttentionHead author_content;  // scores contents for an author
    AttentionHead temporal;        // gates prior vs current influence
    double leaky_slope = 0.2;

    int feature_dim() const { return static_cast<int>(content_author.W.cols()); }
    int hidden_dim() const { return static_cast<int>(content_author.W.rows()); }
};

AttentionParams init_attention_params(int feature_dim, int hidden_dim, double leaky_slope,
                                      std::uint64_t seed);

/// Gradients with the same shapes as AttentionParams.
struct ParamGrads {
    Eigen::MatrixXd W_ca, W_ac, W_aa;
    Eigen::VectorXd phi_ca, phi_ac, phi_aa;

    static ParamGrads zeros_like(const AttentionParams& p);
};

// Flat views used by the optimizer and the finite-difference harness.
Eigen::VectorXd flatten(const AttentionParams& p);
Eigen::VectorXd flatten(const ParamGrads& g);
void unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat, AttentionParams& p);

// ---------------------------------------------------------------------------
// Stateless forward pieces (exposed for unit tests).

/// Attention of a content over its authors: softmax of
/// LeakyReLU(phi . [W h_c || W h_a]) across the author list.
Eigen::VectorXd content_attention(const Eigen::Ref<const Eigen::VectorXd>& h_content,
                                  const std::vector<Eigen::VectorXd>& h_authors,
                                  const AttentionHead& head, double leaky_slope);

/// Content distribution from author distributions: L1-normalized tanh of the
/// attention-weighted mixture.
Eigen::VectorXd content_strategy(const Eigen::Ref<const Eigen::VectorXd>& alpha,
                                 const std::vector<Eigen::VectorXd>& author_dists);

/// Attention of an author over the contents they produced this snapshot.
Eigen::VectorXd author_attention(const Eigen::Ref<const Eigen::VectorXd>& h_author,
                                 const std::vector<Eigen::VectorXd>& h_contents,
                                 const AttentionHead& head, double leaky_slope);

/// Gate blending the author's prior distribution with the current snapshot:
/// sigmoid(phi . [W h_a(t) || W h_a(t-1)]).
double temporal_gate(const Eigen::Ref<const Eigen::VectorXd>& h_now,
                     const Eigen::Ref<const Eigen::VectorXd>& h_prev, const AttentionHead& head);

/// Author distribution update: L1-normalized tanh of
/// gate * D_prev + (1 - gate) * sum_c alpha_c * D_c.
Eigen::VectorXd author_strategy(double gate, const Eigen::Ref<const Eigen::VectorXd>& d_prev,
                                const Eigen::Ref<const Eigen::VectorXd>& alpha,
                                const std::vector<Eigen::VectorXd>& content_dists);

// ---------------------------------------------------------------------------
// Snapshot problem: one space group, one snapshot, assembled so the unrolled
// forward/backward passes are pure functions of it.

struct SnapshotProblem {
    int m = 0;  // strategy count for this group

    struct ContentNode {
        std::int32_t content = -1;
        Eigen::VectorXd h;
        std::vector<int> author_slots;  // indices into authors; may be empty
        Eigen::VectorXd d_init;         // flat Dirichlet draw (constant)
    };
    struct AuthorNode {
        std::int32_t author = -1;
        Eigen::VectorXd h_now, h_prev;
        std::vector<int> content_slots;  // indices into contents, never empty
        Eigen::VectorXd d_prev;          // frozen prior or Dirichlet draw
        Eigen::VectorXd d_init;          // working-value draw used by pass 1
    };

    std::vector<ContentNode> contents;
    std::vector<AuthorNode> authors;

    // Observed edges entering the loss: per edge the source slot and the
    // likelihood row P(edge | S) for every strategy S.
    std::vector<int> content_edge_src;
    Eigen::MatrixXd content_edge_rows;  // n_edges x m
    std::vector<int> author_edge_src;
    Eigen::MatrixXd author_edge_rows;
};

/// Full record of one unrolled forward pass; everything backward needs.
struct SnapshotTape {
    int K = 0;

    // Attention stage (independent of the alternations).
    std::vector<Eigen::VectorXd> alpha_author_for_content;  // per content, over its authors
    std::vector<Eigen::VectorXd> pre_author_for_content;    // pre-activation scores
    std::vector<Eigen::VectorXd> alpha_content_for_author;  // per author, over their contents
    std::vector<Eigen::VectorXd> pre_content_for_author;
    Eigen::VectorXd gate;       // per author
    Eigen::VectorXd gate_pre;

    // Alternation stage: distributions after each pass.
    // content_d[k][i], author_d[k][j] for k = 0..K (0 holds the inits).
    std::vector<std::vector<Eigen::VectorXd>> content_d;
    std::vector<std::vector<Eigen::VectorXd>> author_d;
    // Tanh masses of pass k (index k-1); backward recovers tanh outputs as
    // D * sum.
    std::vector<Eigen::VectorXd> content_sums;
    std::vector<Eigen::VectorXd> author_sums;

    double content_tanh_sum(std::size_t pass, std::size_t node) const {
        return content_sums[pass][static_cast<Eigen::Index>(node)];
    }
    double author_tanh_sum(std::size_t pass, std::size_t node) const {
        return author_sums[pass][static_cast<Eigen::Index>(node)];
    }

    double loss = 0.0;
    Eigen::VectorXd content_edge_mix;  // floored mixture per content edge
    Eigen::VectorXd author_edge_mix;

    const std::vector<Eigen::VectorXd>& final_content_d() const { return content_d.back(); }
    const std::vector<Eigen::VectorXd>& final_author_d() const { return author_d.back(); }
};

constexpr double kLossFloor = 1e-12;

/// Runs K alternations of the dual attention recurrences and the mixture
/// negative log likelihood. Deterministic; all randomness lives in the
/// problem's d_init/d_prev constants.
SnapshotTape forward_snapshot(const SnapshotProblem& problem, const AttentionParams& params,
                              int unroll_steps);

/// Exact reverse-mode gradients of tape.loss with respect to every W and phi.
ParamGrads backward_snapshot(const SnapshotProblem& problem, const AttentionParams& params,
                             const SnapshotTape& tape);

// ---------------------------------------------------------------------------
// Optimizer

enum class OptimizerKind { GradientDescent, Adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-2;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step_count = 0;
    Eigen::VectorXd m1, m2;  // Adam moments over the flat parameter vector

    void step(AttentionParams& params, const ParamGrads& grads);
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    int unroll_steps = 2;  // K
    int max_epochs = 200;
    double learning_rate = 1e-2;
    double tolerance = 1e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;
    int hidden_dim = 8;
    double leaky_slope = 0.2;
    std::uint64_t seed = 0;
    StrategySpaceParams space_params;
    CandidateSampling sampling;
};

/// Aggregated forward-pass validity checks, refreshed on every forward pass.
struct ValidityStats {
    long alpha_sets = 0;
    double max_alpha_sum_err = 0.0;
    long gates = 0;
    bool gates_in_open_unit = true;
    long distributions = 0;
    double max_dist_sum_err = 0.0;
    double min_dist_entry = 0.0;

    void absorb(const SnapshotProblem& problem, const SnapshotTape& tape);
};

struct ModelState {
    int feature_dim = 0;
    std::array<AttentionParams, kNumSpaceGroups> params;

    // Distributions per group: author distributions keyed by (author, t);
    // content distributions keyed by content id.
    std::array<std::map<std::pair<std::int32_t, Timestamp>, Eigen::VectorXd>, kNumSpaceGroups>
        author_dist;
    std::array<std::map<std::int32_t, Eigen::VectorXd>, kNumSpaceGroups> content_dist;

    // Attention-derived contribution shares r(a | c), recorded from the
    // citation group's final alternation; sums to 1 over each content's
    // authors.
    std::map<std::pair<std::int32_t, std::int32_t>, double> contribution;

    std::vector<std::vector<double>> loss_history;  // per snapshot, per epoch
    ValidityStats validity;
    std::uint64_t seed = 0;

    const Eigen::VectorXd* find_author_dist(SpaceGroup group, std::int32_t author,
                                            Timestamp t) const;
    double contribution_of(std::int32_t author, std::int32_t content) const;
};

int m_for(SpaceGroup group);

/// Per-snapshot training: alternate forward/backward/step until the relative
/// loss change drops below tolerance, then freeze the snapshot's author
/// distributions as the next snapshot's priors.
ModelState train(const TemporalGraph& g, const EmbeddingStore& embeddings,
                 const FieldStore& fields, const TrainConfig& cfg);

/// Builds the training problem for one snapshot view and group; likelihood
/// tables must cover this group's two views at view.time().
SnapshotProblem build_snapshot_problem(const SnapshotView& view, const EmbeddingStore& embeddings,
                                       SpaceGroup group,
                                       const EdgeLikelihoodTable& content_view_table,
                                       const EdgeLikelihoodTable& author_view_table,
                                       const ModelState& state, std::uint64_t draw_seed);

/// Re-trains a single snapshot on a masked view, warm-started from `base`'s
/// parameters and prior distributions; returns the refit distributions for
/// that snapshot only. Used by fold evaluation.
struct SnapshotRefit {
    std::array<std::map<std::int32_t, Eigen::VectorXd>, kNumSpaceGroups> author_dist;
    std::array<std::map<std::int32_t, Eigen::VectorXd>, kNumSpaceGroups> content_dist;
    std::array<std::vector<double>, kNumSpaceGroups> loss_history;
};

SnapshotRefit refit_snapshot(const TemporalGraph& g, const EmbeddingStore& embeddings,
                             const FieldStore& fields, const ModelState& base,
                             Timestamp t, const AuthorshipMask& mask, const TrainConfig& cfg,
                             int max_epochs);

/// Versioned serialization: JSON manifest plus a raw little-endian blob for
/// the tensors.
void save_model_state(const ModelState& state, const std::string& json_path,
                      const std::string& blob_path);
ModelState load_model_state(const std::string& json_path);

}  // namespace stratnet
