#include "stratnet/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace stratnet {

namespace {

using nlohmann::json;

// Saturation guard for the gate pre-activation: keeps the gate strictly
// inside (0, 1) in double precision. The gradient is zeroed in the clamped
// region, matching the clamped forward exactly.
constexpr double kGateClamp = 30.0;

Eigen::MatrixXd glorot_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

Eigen::VectorXd glorot_vector(Eigen::Index size, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(size + 1));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = dist(rng);
    return v;
}

Eigen::VectorXd flat_dirichlet(int m, std::mt19937_64& rng) {
    std::exponential_distribution<double> exp_dist(1.0);
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v[i] = exp_dist(rng);
    const double s = v.sum();
    if (s <= 0.0) return Eigen::VectorXd::Constant(m, 1.0 / m);
    return v / s;
}

/// Pre-activation of one attention pair: phi . [W x || W y].
double attention_score(const AttentionHead& head, const Eigen::VectorXd& wx,
                       const Eigen::VectorXd& wy) {
    const auto h = static_cast<Eigen::Index>(wx.size());
    return head.phi.head(h).dot(wx) + head.phi.tail(h).dot(wy);
}

}  // namespace

int m_for(SpaceGroup group) { return strategy_space(group).size(); }

AttentionParams init_attention_params(int feature_dim, int hidden_dim, double leaky_slope,
                                      std::uint64_t seed) {
    AttentionParams p;
    p.leaky_slope = leaky_slope;
    std::mt19937_64 rng(seed);
    p.content_author.W = glorot_matrix(hidden_dim, feature_dim, rng);
    p.content_author.phi = glorot_vector(2 * hidden_dim, rng);
    p.author_content.W = glorot_matrix(hidden_dim, feature_dim, rng);
    p.author_content.phi = glorot_vector(2 * hidden_dim, rng);
    p.temporal.W = glorot_matrix(hidden_dim, feature_dim, rng);
    p.temporal.phi = glorot_vector(2 * hidden_dim, rng);
    return p;
}

ParamGrads ParamGrads::zeros_like(const AttentionParams& p) {
    ParamGrads g;
    g.W_ca = Eigen::MatrixXd::Zero(p.content_author.W.rows(), p.content_author.W.cols());
    g.phi_ca = Eigen::VectorXd::Zero(p.content_author.phi.size());
    g.W_ac = Eigen::MatrixXd::Zero(p.author_content.W.rows(), p.author_content.W.cols());
    g.phi_ac = Eigen::VectorXd::Zero(p.author_content.phi.size());
    g.W_aa = Eigen::MatrixXd::Zero(p.temporal.W.rows(), p.temporal.W.cols());
    g.phi_aa = Eigen::VectorXd::Zero(p.temporal.phi.size());
    return g;
}

namespace {

template <typename F>
void for_each_tensor(F&& f, const Eigen::MatrixXd& w_ca, const Eigen::VectorXd& phi_ca,
                     const Eigen::MatrixXd& w_ac, const Eigen::VectorXd& phi_ac,
                     const Eigen::MatrixXd& w_aa, const Eigen::VectorXd& phi_aa) {
    f(w_ca);
    f(phi_ca);
    f(w_ac);
    f(phi_ac);
    f(w_aa);
    f(phi_aa);
}

Eigen::VectorXd flatten_tensors(const Eigen::MatrixXd& w_ca, const Eigen::VectorXd& phi_ca,
                                const Eigen::MatrixXd& w_ac, const Eigen::VectorXd& phi_ac,
                                const Eigen::MatrixXd& w_aa, const Eigen::VectorXd& phi_aa) {
    Eigen::Index total = 0;
    for_each_tensor([&](const auto& t) { total += t.size(); }, w_ca, phi_ca, w_ac, phi_ac, w_aa,
                    phi_aa);
    Eigen::VectorXd flat(total);
    Eigen::Index at = 0;
    for_each_tensor(
        [&](const auto& t) {
            flat.segment(at, t.size()) = Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
            at += t.size();
        },
        w_ca, phi_ca, w_ac, phi_ac, w_aa, phi_aa);
    return flat;
}

}  // namespace

Eigen::VectorXd flatten(const AttentionParams& p) {
    return flatten_tensors(p.content_author.W, p.content_author.phi, p.author_content.W,
                           p.author_content.phi, p.temporal.W, p.temporal.phi);
}

Eigen::VectorXd flatten(const ParamGrads& g) {
    return flatten_tensors(g.W_ca, g.phi_ca, g.W_ac, g.phi_ac, g.W_aa, g.phi_aa);
}

void unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat, AttentionParams& p) {
    Eigen::Index at = 0;
    auto take = [&](auto& t) {
        Eigen::Map<Eigen::VectorXd>(t.data(), t.size()) = flat.segment(at, t.size());
        at += t.size();
    };
    take(p.content_author.W);
    take(p.content_author.phi);
    take(p.author_content.W);
    take(p.author_content.phi);
    take(p.temporal.W);
    take(p.temporal.phi);
    if (at != flat.size()) throw DimensionMismatch("unflatten: size mismatch");
}

// ---------------------------------------------------------------------------
// Stateless forward pieces

Eigen::VectorXd content_attention(const Eigen::Ref<const Eigen::VectorXd>& h_content,
                                  const std::vector<Eigen::VectorXd>& h_authors,
                                  const AttentionHead& head, double leaky_slope) {
    if (h_authors.empty()) throw InvalidParameter("content_attention: no authors");
    if (h_content.size() != head.W.cols()) throw DimensionMismatch("content_attention: dim");
    const Eigen::VectorXd wc = head.W * h_content;
    Eigen::VectorXd logits(static_cast<Eigen::Index>(h_authors.size()));
    for (std::size_t i = 0; i < h_authors.size(); ++i) {
        if (h_authors[i].size() != head.W.cols()) {
            throw DimensionMismatch("content_attention: author dim");
        }
        logits[static_cast<Eigen::Index>(i)] =
            leaky_relu(attention_score(head, wc, head.W * h_authors[i]), leaky_slope);
    }
    return softmax(logits);
}

Eigen::VectorXd content_strategy(const Eigen::Ref<const Eigen::VectorXd>& alpha,
                                 const std::vector<Eigen::VectorXd>& author_dists) {
    Eigen::VectorXd mix = Eigen::VectorXd::Zero(author_dists.at(0).size());
    for (std::size_t i = 0; i < author_dists.size(); ++i) {
        mix += alpha[static_cast<Eigen::Index>(i)] * author_dists[i];
    }
    return l1_normalized_tanh(mix);
}

Eigen::VectorXd author_attention(const Eigen::Ref<const Eigen::VectorXd>& h_author,
                                 const std::vector<Eigen::VectorXd>& h_contents,
                                 const AttentionHead& head, double leaky_slope) {
    if (h_contents.empty()) throw InvalidParameter("author_attention: no contents");
    const Eigen::VectorXd wa = head.W * h_author;
    Eigen::VectorXd logits(static_cast<Eigen::Index>(h_contents.size()));
    for (std::size_t i = 0; i < h_contents.size(); ++i) {
        logits[static_cast<Eigen::Index>(i)] =
            leaky_relu(attention_score(head, wa, head.W * h_contents[i]), leaky_slope);
    }
    return softmax(logits);
}

double temporal_gate(const Eigen::Ref<const Eigen::VectorXd>& h_now,
                     const Eigen::Ref<const Eigen::VectorXd>& h_prev, const AttentionHead& head) {
    double pre = attention_score(head, head.W * h_now, head.W * h_prev);
    pre = std::clamp(pre, -kGateClamp, kGateClamp);
    return sigmoid(pre);
}

Eigen::VectorXd author_strategy(double gate, const Eigen::Ref<const Eigen::VectorXd>& d_prev,
                                const Eigen::Ref<const Eigen::VectorXd>& alpha,
                                const std::vector<Eigen::VectorXd>& content_dists) {
    Eigen::VectorXd mix = gate * d_prev;
    for (std::size_t i = 0; i < content_dists.size(); ++i) {
        mix += (1.0 - gate) * alpha[static_cast<Eigen::Index>(i)] * content_dists[i];
    }
    return l1_normalized_tanh(mix);
}

// ---------------------------------------------------------------------------
// Unrolled snapshot forward

SnapshotTape forward_snapshot(const SnapshotProblem& problem, const AttentionParams& params,
                              int unroll_steps) {
    if (unroll_steps < 1) throw InvalidParameter("unroll_steps must be >= 1");
    const auto n_contents = problem.contents.size();
    const auto n_authors = problem.authors.size();

    SnapshotTape tape;
    tape.K = unroll_steps;

    // Attention stage. Scores depend only on embeddings, so they are fixed
    // across alternations.
    tape.alpha_author_for_content.resize(n_contents);
    tape.pre_author_for_content.resize(n_contents);
    for (std::size_t i = 0; i < n_contents; ++i) {
        const auto& node = problem.contents[i];
        if (node.author_slots.empty()) continue;
        const Eigen::VectorXd wc = params.content_author.W * node.h;
        Eigen::VectorXd pre(static_cast<Eigen::Index>(node.author_slots.size()));
        for (std::size_t s = 0; s < node.author_slots.size(); ++s) {
            const auto& author = problem.authors[static_cast<std::size_t>(node.author_slots[s])];
            pre[static_cast<Eigen::Index>(s)] = attention_score(
                params.content_author, wc, params.content_author.W * author.h_now);
        }
        tape.pre_author_for_content[i] = pre;
        Eigen::VectorXd logits(pre.size());
        for (Eigen::Index s = 0; s < pre.size(); ++s) {
            logits[s] = leaky_relu(pre[s], params.leaky_slope);
        }
        tape.alpha_author_for_content[i] = softmax(logits);
    }

    tape.alpha_content_for_author.resize(n_authors);
    tape.pre_content_for_author.resize(n_authors);
    tape.gate.resize(static_cast<Eigen::Index>(n_authors));
    tape.gate_pre.resize(static_cast<Eigen::Index>(n_authors));
    for (std::size_t j = 0; j < n_authors; ++j) {
        const auto& node = problem.authors[j];
        const Eigen::VectorXd wa = params.author_content.W * node.h_now;
        Eigen::VectorXd pre(static_cast<Eigen::Index>(node.content_slots.size()));
        for (std::size_t s = 0; s < node.content_slots.size(); ++s) {
            const auto& content = problem.contents[static_cast<std::size_t>(node.content_slots[s])];
            pre[static_cast<Eigen::Index>(s)] = attention_score(
                params.author_content, wa, params.author_content.W * content.h);
        }
        tape.pre_content_for_author[j] = pre;
        Eigen::VectorXd logits(pre.size());
        for (Eigen::Index s = 0; s < pre.size(); ++s) {
            logits[s] = leaky_relu(pre[s], params.leaky_slope);
        }
        tape.alpha_content_for_author[j] = softmax(logits);

        double gate_pre = attention_score(params.temporal, params.temporal.W * node.h_now,
                                          params.temporal.W * node.h_prev);
        gate_pre = std::clamp(gate_pre, -kGateClamp, kGateClamp);
        tape.gate_pre[static_cast<Eigen::Index>(j)] = gate_pre;
        tape.gate[static_cast<Eigen::Index>(j)] = sigmoid(gate_pre);
    }

    // Alternation stage.
    tape.content_d.assign(static_cast<std::size_t>(unroll_steps) + 1, {});
    tape.author_d.assign(static_cast<std::size_t>(unroll_steps) + 1, {});
    tape.content_d[0].reserve(n_contents);
    for (const auto& node : problem.contents) tape.content_d[0].push_back(node.d_init);
    tape.author_d[0].reserve(n_authors);
    for (const auto& node : problem.authors) tape.author_d[0].push_back(node.d_init);

    tape.content_sums.assign(static_cast<std::size_t>(unroll_steps),
                             Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_contents)));
    tape.author_sums.assign(static_cast<std::size_t>(unroll_steps),
                            Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_authors)));

    auto norm_tanh = [](const Eigen::VectorXd& mix, double& sum_out) {
        Eigen::VectorXd u = mix.array().tanh().matrix();
        sum_out = u.sum();
        if (!(sum_out > 0.0)) {
            throw NumericalError("snapshot forward: non-positive tanh mass");
        }
        return Eigen::VectorXd(u / sum_out);
    };

    for (int k = 1; k <= unroll_steps; ++k) {
        auto& content_now = tape.content_d[static_cast<std::size_t>(k)];
        const auto& author_before = tape.author_d[static_cast<std::size_t>(k) - 1];
        auto& content_sums = tape.content_sums[static_cast<std::size_t>(k) - 1];
        content_now.resize(n_contents);
        for (std::size_t i = 0; i < n_contents; ++i) {
            const auto& node = problem.contents[i];
            if (node.author_slots.empty()) {
                content_now[i] = node.d_init;  // no authors to aggregate
                continue;
            }
            const Eigen::VectorXd& alpha = tape.alpha_author_for_content[i];
            Eigen::VectorXd mix = Eigen::VectorXd::Zero(problem.m);
            for (std::size_t s = 0; s < node.author_slots.size(); ++s) {
                mix += alpha[static_cast<Eigen::Index>(s)] *
                       author_before[static_cast<std::size_t>(node.author_slots[s])];
            }
            content_now[i] = norm_tanh(mix, content_sums[static_cast<Eigen::Index>(i)]);
        }

        auto& author_now = tape.author_d[static_cast<std::size_t>(k)];
        auto& author_sums = tape.author_sums[static_cast<std::size_t>(k) - 1];
        author_now.resize(n_authors);
        for (std::size_t j = 0; j < n_authors; ++j) {
            const auto& node = problem.authors[j];
            const double gate = tape.gate[static_cast<Eigen::Index>(j)];
            const Eigen::VectorXd& alpha = tape.alpha_content_for_author[j];
            Eigen::VectorXd mix = gate * node.d_prev;
            for (std::size_t s = 0; s < node.content_slots.size(); ++s) {
                mix += (1.0 - gate) * alpha[static_cast<Eigen::Index>(s)] *
                       content_now[static_cast<std::size_t>(node.content_slots[s])];
            }
            author_now[j] = norm_tanh(mix, author_sums[static_cast<Eigen::Index>(j)]);
        }
    }

    // Mixture negative log likelihood over all observed edges.
    auto edge_loss = [&](const std::vector<int>& srcs, const Eigen::MatrixXd& rows,
                         const std::vector<Eigen::VectorXd>& dists, Eigen::VectorXd& mixes) {
        mixes.resize(static_cast<Eigen::Index>(srcs.size()));
        double loss = 0.0;
        for (std::size_t e = 0; e < srcs.size(); ++e) {
            const double mix =
                dists[static_cast<std::size_t>(srcs[e])].dot(rows.row(static_cast<Eigen::Index>(e)));
            const double floored = std::max(mix, kLossFloor);
            mixes[static_cast<Eigen::Index>(e)] = floored;
            loss -= std::log(floored);
        }
        return loss;
    };
    tape.loss = edge_loss(problem.content_edge_src, problem.content_edge_rows,
                          tape.final_content_d(), tape.content_edge_mix) +
                edge_loss(problem.author_edge_src, problem.author_edge_rows,
                          tape.final_author_d(), tape.author_edge_mix);
    return tape;
}

// ---------------------------------------------------------------------------
// Reverse sweep

namespace {

/// Backward through D = tanh(v) / sum(tanh(v)): given dL/dD, the stored D and
/// the stored tanh sum, returns dL/dv.
Eigen::VectorXd norm_tanh_backward(const Eigen::VectorXd& grad_d, const Eigen::VectorXd& d,
                                   double tanh_sum) {
    const double inner = grad_d.dot(d);
    Eigen::VectorXd grad_u = (grad_d.array() - inner).matrix() / tanh_sum;
    const Eigen::VectorXd u = d * tanh_sum;
    return (grad_u.array() * (1.0 - u.array().square())).matrix();
}

Eigen::VectorXd softmax_backward(const Eigen::VectorXd& alpha, const Eigen::VectorXd& grad_alpha) {
    const double inner = alpha.dot(grad_alpha);
    return (alpha.array() * (grad_alpha.array() - inner)).matrix();
}

/// Accumulates the gradient of one attention score phi . [W x || W y].
void score_backward(const AttentionHead& head, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                    double grad_score, Eigen::MatrixXd& grad_w, Eigen::VectorXd& grad_phi) {
    const auto h = head.W.rows();
    grad_phi.head(h) += grad_score * (head.W * x);
    grad_phi.tail(h) += grad_score * (head.W * y);
    grad_w += grad_score * (head.phi.head(h) * x.transpose() + head.phi.tail(h) * y.transpose());
}

}  // namespace

ParamGrads backward_snapshot(const SnapshotProblem& problem, const AttentionParams& params,
                             const SnapshotTape& tape) {
    const auto n_contents = problem.contents.size();
    const auto n_authors = problem.authors.size();
    ParamGrads grads = ParamGrads::zeros_like(params);

    // Accumulated gradients on the attention outputs, summed over every
    // alternation they feed.
    std::vector<Eigen::VectorXd> grad_alpha_content(n_contents);
    for (std::size_t i = 0; i < n_contents; ++i) {
        grad_alpha_content[i] =
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.contents[i].author_slots.size()));
    }
    std::vector<Eigen::VectorXd> grad_alpha_author(n_authors);
    Eigen::VectorXd grad_gate = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_authors));
    for (std::size_t j = 0; j < n_authors; ++j) {
        grad_alpha_author[j] =
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.authors[j].content_slots.size()));
    }

    // Loss gradients on the final distributions.
    std::vector<Eigen::VectorXd> grad_content(n_contents, Eigen::VectorXd::Zero(problem.m));
    std::vector<Eigen::VectorXd> grad_author(n_authors, Eigen::VectorXd::Zero(problem.m));
    for (std::size_t e = 0; e < problem.content_edge_src.size(); ++e) {
        const double mix = tape.content_edge_mix[static_cast<Eigen::Index>(e)];
        if (mix <= kLossFloor) continue;  // flat region of the floored log
        grad_content[static_cast<std::size_t>(problem.content_edge_src[e])] -=
            problem.content_edge_rows.row(static_cast<Eigen::Index>(e)).transpose() / mix;
    }
    for (std::size_t e = 0; e < problem.author_edge_src.size(); ++e) {
        const double mix = tape.author_edge_mix[static_cast<Eigen::Index>(e)];
        if (mix <= kLossFloor) continue;
        grad_author[static_cast<std::size_t>(problem.author_edge_src[e])] -=
            problem.author_edge_rows.row(static_cast<Eigen::Index>(e)).transpose() / mix;
    }

    for (int k = tape.K; k >= 1; --k) {
        const auto& content_now = tape.content_d[static_cast<std::size_t>(k)];
        const auto& author_now = tape.author_d[static_cast<std::size_t>(k)];
        const auto& author_before = tape.author_d[static_cast<std::size_t>(k) - 1];

        // Author update backward: consumes grad_author, feeds grad_content
        // (same pass) plus the gate and content-attention gradients.
        for (std::size_t j = 0; j < n_authors; ++j) {
            if (grad_author[j].isZero(0.0)) continue;
            const auto& node = problem.authors[j];
            const double gate = tape.gate[static_cast<Eigen::Index>(j)];
            const Eigen::VectorXd grad_mix = norm_tanh_backward(
                grad_author[j], author_now[j],
                tape.author_tanh_sum(static_cast<std::size_t>(k) - 1, j));

            Eigen::VectorXd z = Eigen::VectorXd::Zero(problem.m);
            const Eigen::VectorXd& alpha = tape.alpha_content_for_author[j];
            for (std::size_t s = 0; s < node.content_slots.size(); ++s) {
                z += alpha[static_cast<Eigen::Index>(s)] *
                     content_now[static_cast<std::size_t>(node.content_slots[s])];
            }
            grad_gate[static_cast<Eigen::Index>(j)] += grad_mix.dot(node.d_prev - z);
            for (std::size_t s = 0; s < node.content_slots.size(); ++s) {
                const auto ci = static_cast<std::size_t>(node.content_slots[s]);
                grad_alpha_author[j][static_cast<Eigen::Index>(s)] +=
                    (1.0 - gate) * grad_mix.dot(content_now[ci]);
                grad_content[ci] += (1.0 - gate) * alpha[static_cast<Eigen::Index>(s)] * grad_mix;
            }
        }

        // Content update backward: consumes grad_content, feeds the previous
        // pass's author distributions and the author-attention gradients.
        std::vector<Eigen::VectorXd> grad_author_prev(n_authors,
                                                      Eigen::VectorXd::Zero(problem.m));
        for (std::size_t i = 0; i < n_contents; ++i) {
            const auto& node = problem.contents[i];
            if (node.author_slots.empty() || grad_content[i].isZero(0.0)) continue;
            const Eigen::VectorXd grad_mix = norm_tanh_backward(
                grad_content[i], content_now[i],
                tape.content_tanh_sum(static_cast<std::size_t>(k) - 1, i));
            const Eigen::VectorXd& alpha = tape.alpha_author_for_content[i];
            for (std::size_t s = 0; s < node.author_slots.size(); ++s) {
                const auto aj = static_cast<std::size_t>(node.author_slots[s]);
                grad_alpha_content[i][static_cast<Eigen::Index>(s)] +=
                    grad_mix.dot(author_before[aj]);
                grad_author_prev[aj] += alpha[static_cast<Eigen::Index>(s)] * grad_mix;
            }
        }

        grad_author = std::move(grad_author_prev);
        for (auto& g : grad_content) g.setZero();
    }

    // Attention stage backward.
    for (std::size_t i = 0; i < n_contents; ++i) {
        const auto& node = problem.contents[i];
        if (node.author_slots.empty() || grad_alpha_content[i].isZero(0.0)) continue;
        const Eigen::VectorXd grad_logits =
            softmax_backward(tape.alpha_author_for_content[i], grad_alpha_content[i]);
        for (std::size_t s = 0; s < node.author_slots.size(); ++s) {
            const double pre = tape.pre_author_for_content[i][static_cast<Eigen::Index>(s)];
            const double slope = pre >= 0.0 ? 1.0 : params.leaky_slope;
            const double grad_score = grad_logits[static_cast<Eigen::Index>(s)] * slope;
            if (grad_score == 0.0) continue;
            const auto& author = problem.authors[static_cast<std::size_t>(node.author_slots[s])];
            score_backward(params.content_author, node.h, author.h_now, grad_score, grads.W_ca,
                           grads.phi_ca);
        }
    }
    for (std::size_t j = 0; j < n_authors; ++j) {
        const auto& node = problem.authors[j];
        if (!grad_alpha_author[j].isZero(0.0)) {
            const Eigen::VectorXd grad_logits =
                softmax_backward(tape.alpha_content_for_author[j], grad_alpha_author[j]);
            for (std::size_t s = 0; s < node.content_slots.size(); ++s) {
                const double pre = tape.pre_content_for_author[j][static_cast<Eigen::Index>(s)];
                const double slope = pre >= 0.0 ? 1.0 : params.leaky_slope;
                const double grad_score = grad_logits[static_cast<Eigen::Index>(s)] * slope;
                if (grad_score == 0.0) continue;
                const auto& content =
                    problem.contents[static_cast<std::size_t>(node.content_slots[s])];
                score_backward(params.author_content, node.h_now, content.h, grad_score,
                               grads.W_ac, grads.phi_ac);
            }
        }
        const double gg = grad_gate[static_cast<Eigen::Index>(j)];
        if (gg != 0.0) {
            const double gate = tape.gate[static_cast<Eigen::Index>(j)];
            const double pre = tape.gate_pre[static_cast<Eigen::Index>(j)];
            if (std::abs(pre) < kGateClamp) {
                const double grad_score = gg * gate * (1.0 - gate);
                score_backward(params.temporal, node.h_now, node.h_prev, grad_score, grads.W_aa,
                               grads.phi_aa);
            }
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Optimizer

void OptimizerState::step(AttentionParams& params, const ParamGrads& grads) {
    Eigen::VectorXd theta = flatten(params);
    const Eigen::VectorXd g = flatten(grads);
    if (kind == OptimizerKind::GradientDescent) {
        theta -= learning_rate * g;
    } else {
        if (m1.size() != theta.size()) {
            m1 = Eigen::VectorXd::Zero(theta.size());
            m2 = Eigen::VectorXd::Zero(theta.size());
        }
        ++step_count;
        m1 = beta1 * m1 + (1.0 - beta1) * g;
        m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        const Eigen::VectorXd mhat = m1 / c1;
        const Eigen::VectorXd vhat = m2 / c2;
        theta -= learning_rate * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    }
    unflatten(theta, params);
}

// ---------------------------------------------------------------------------
// Validity accounting

void ValidityStats::absorb(const SnapshotProblem& problem, const SnapshotTape& tape) {
    for (std::size_t i = 0; i < problem.contents.size(); ++i) {
        const auto& alpha = tape.alpha_author_for_content[i];
        if (alpha.size() == 0) continue;
        ++alpha_sets;
        max_alpha_sum_err = std::max(max_alpha_sum_err, std::abs(alpha.sum() - 1.0));
    }
    for (std::size_t j = 0; j < problem.authors.size(); ++j) {
        const auto& alpha = tape.alpha_content_for_author[j];
        ++alpha_sets;
        max_alpha_sum_err = std::max(max_alpha_sum_err, std::abs(alpha.sum() - 1.0));
        ++gates;
        const double gate = tape.gate[static_cast<Eigen::Index>(j)];
        if (!(gate > 0.0 && gate < 1.0)) gates_in_open_unit = false;
    }
    for (std::size_t k = 1; k < tape.content_d.size(); ++k) {
        for (const auto& d : tape.content_d[k]) {
            ++distributions;
            max_dist_sum_err = std::max(max_dist_sum_err, std::abs(d.sum() - 1.0));
            min_dist_entry = std::min(min_dist_entry, d.minCoeff());
        }
        for (const auto& d : tape.author_d[k]) {
            ++distributions;
            max_dist_sum_err = std::max(max_dist_sum_err, std::abs(d.sum() - 1.0));
            min_dist_entry = std::min(min_dist_entry, d.minCoeff());
        }
    }
}

// ---------------------------------------------------------------------------
// ModelState

const Eigen::VectorXd* ModelState::find_author_dist(SpaceGroup group, std::int32_t author,
                                                    Timestamp t) const {
    const auto& map = author_dist[static_cast<int>(group)];
    auto it = map.find({author, t});
    return it == map.end() ? nullptr : &it->second;
}

double ModelState::contribution_of(std::int32_t author, std::int32_t content) const {
    auto it = contribution.find({author, content});
    return it == contribution.end() ? 0.0 : it->second;
}

// ---------------------------------------------------------------------------
// Problem assembly

SnapshotProblem build_snapshot_problem(const SnapshotView& view, const EmbeddingStore& embeddings,
                                       SpaceGroup group,
                                       const EdgeLikelihoodTable& content_view_table,
                                       const EdgeLikelihoodTable& author_view_table,
                                       const ModelState& state, std::uint64_t draw_seed) {
    const Timestamp t = view.time();
    SnapshotProblem problem;
    problem.m = m_for(group);

    const std::vector<std::int32_t> contents = view.new_contents();
    const std::vector<std::int32_t> authors = view.active_authors();
    std::unordered_map<std::int32_t, int> content_slot, author_slot;
    for (std::size_t i = 0; i < contents.size(); ++i) {
        content_slot[contents[i]] = static_cast<int>(i);
    }
    for (std::size_t j = 0; j < authors.size(); ++j) {
        author_slot[authors[j]] = static_cast<int>(j);
    }

    std::mt19937_64 rng(derive_seed(
        draw_seed, std::string("dirichlet:") + to_string(group) + ":" + std::to_string(t)));

    problem.contents.reserve(contents.size());
    for (std::int32_t c : contents) {
        SnapshotProblem::ContentNode node;
        node.content = c;
        node.h = embeddings.content(c);
        for (std::int32_t a : view.authors_of(c)) {
            auto it = author_slot.find(a);
            if (it != author_slot.end()) node.author_slots.push_back(it->second);
        }
        node.d_init = flat_dirichlet(problem.m, rng);
        problem.contents.push_back(std::move(node));
    }

    problem.authors.reserve(authors.size());
    for (std::int32_t a : authors) {
        SnapshotProblem::AuthorNode node;
        node.author = a;
        node.h_now = embeddings.author(a, t);
        node.h_prev = embeddings.author(a, t - 1);  // zero vector for new authors
        for (std::int32_t c : view.contents_of(a)) {
            node.content_slots.push_back(content_slot.at(c));
        }
        node.d_init = flat_dirichlet(problem.m, rng);
        if (const Eigen::VectorXd* prev = state.find_author_dist(group, a, t - 1)) {
            node.d_prev = *prev;
        } else {
            node.d_prev = flat_dirichlet(problem.m, rng);
        }
        problem.authors.push_back(std::move(node));
    }

    auto fill_edges = [&](const EdgeLikelihoodTable& table,
                          const std::unordered_map<std::int32_t, int>& slots,
                          std::vector<int>& srcs, Eigen::MatrixXd& rows) {
        srcs.clear();
        std::vector<Eigen::Index> keep;
        for (std::size_t e = 0; e < table.edges.size(); ++e) {
            auto it = slots.find(table.edges[e].first);
            if (it == slots.end()) continue;  // source dropped by the mask
            srcs.push_back(it->second);
            keep.push_back(static_cast<Eigen::Index>(e));
        }
        rows.resize(static_cast<Eigen::Index>(keep.size()), table.m);
        for (std::size_t e = 0; e < keep.size(); ++e) {
            rows.row(static_cast<Eigen::Index>(e)) = table.rows.row(keep[e]);
        }
    };
    fill_edges(content_view_table, content_slot, problem.content_edge_src,
               problem.content_edge_rows);
    fill_edges(author_view_table, author_slot, problem.author_edge_src, problem.author_edge_rows);
    return problem;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct SnapshotTrainResult {
    SnapshotTape tape;
    std::vector<double> losses;
};

/// Epoch loop for one group on one snapshot. The returned tape is the forward
/// pass of the final parameters.
SnapshotTrainResult train_group_snapshot(const SnapshotProblem& problem, AttentionParams& params,
                                         OptimizerState& opt, const TrainConfig& cfg,
                                         int max_epochs, ValidityStats& validity) {
    SnapshotTrainResult result;
    SnapshotTape tape = forward_snapshot(problem, params, cfg.unroll_steps);
    validity.absorb(problem, tape);
    if (!std::isfinite(tape.loss)) {
        throw NumericalError("non-finite snapshot loss at initialization");
    }
    result.losses.push_back(tape.loss);
    double prev = tape.loss;
    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
        const ParamGrads grads = backward_snapshot(problem, params, tape);
        opt.step(params, grads);
        tape = forward_snapshot(problem, params, cfg.unroll_steps);
        validity.absorb(problem, tape);
        if (!std::isfinite(tape.loss)) {
            throw NumericalError("non-finite snapshot loss at epoch " + std::to_string(epoch));
        }
        result.losses.push_back(tape.loss);
        const double rel = std::abs(tape.loss - prev) / std::max(std::abs(prev), 1e-12);
        prev = tape.loss;
        if (rel < cfg.tolerance) break;
    }
    result.tape = std::move(tape);
    return result;
}

std::array<EdgeLikelihoodTable, kNumEdgeViews> build_all_tables(const SnapshotView& view,
                                                                const FieldStore& fields,
                                                                const TrainConfig& cfg) {
    std::array<EdgeLikelihoodTable, kNumEdgeViews> tables;
    for (int v = 0; v < kNumEdgeViews; ++v) {
        CandidateSampling sampling = cfg.sampling;
        sampling.seed = derive_seed(cfg.seed, "sampling");
        tables[static_cast<std::size_t>(v)] = build_likelihood_table(
            view, fields, static_cast<EdgeView>(v), cfg.space_params, sampling);
    }
    return tables;
}

constexpr std::array<EdgeView, kNumSpaceGroups> kContentViewOf = {
    EdgeView::ContentCitesContent, EdgeView::ContentAtVenue};
constexpr std::array<EdgeView, kNumSpaceGroups> kAuthorViewOf = {EdgeView::AuthorCitesAuthor,
                                                                 EdgeView::AuthorAtVenue};

}  // namespace

ModelState train(const TemporalGraph& g, const EmbeddingStore& embeddings,
                 const FieldStore& fields, const TrainConfig& cfg) {
    ModelState state;
    state.feature_dim = embeddings.dim();
    state.seed = cfg.seed;
    std::array<OptimizerState, kNumSpaceGroups> opts;
    for (int group = 0; group < kNumSpaceGroups; ++group) {
        state.params[static_cast<std::size_t>(group)] = init_attention_params(
            embeddings.dim(), cfg.hidden_dim, cfg.leaky_slope,
            derive_seed(cfg.seed, std::string("params:") + std::to_string(group)));
        opts[static_cast<std::size_t>(group)].kind = cfg.optimizer;
        opts[static_cast<std::size_t>(group)].learning_rate = cfg.learning_rate;
    }

    for (Timestamp t = 0; t < g.num_snapshots(); ++t) {
        const SnapshotView view(g, t);
        const auto tables = build_all_tables(view, fields, cfg);

        std::vector<double> combined;
        for (int group = 0; group < kNumSpaceGroups; ++group) {
            const auto sg = static_cast<SpaceGroup>(group);
            const SnapshotProblem problem = build_snapshot_problem(
                view, embeddings, sg, tables[static_cast<int>(kContentViewOf[group])],
                tables[static_cast<int>(kAuthorViewOf[group])], state, cfg.seed);
            const SnapshotTrainResult result =
                train_group_snapshot(problem, state.params[static_cast<std::size_t>(group)],
                                     opts[static_cast<std::size_t>(group)], cfg, cfg.max_epochs,
                                     state.validity);

            // Freeze this snapshot's distributions.
            const auto& final_contents = result.tape.final_content_d();
            for (std::size_t i = 0; i < problem.contents.size(); ++i) {
                state.content_dist[static_cast<std::size_t>(group)][problem.contents[i].content] =
                    final_contents[i];
            }
            const auto& final_authors = result.tape.final_author_d();
            for (std::size_t j = 0; j < problem.authors.size(); ++j) {
                state.author_dist[static_cast<std::size_t>(group)][{problem.authors[j].author, t}] =
                    final_authors[j];
            }
            if (sg == SpaceGroup::Citation) {
                for (std::size_t i = 0; i < problem.contents.size(); ++i) {
                    const auto& node = problem.contents[i];
                    const auto& alpha = result.tape.alpha_author_for_content[i];
                    for (std::size_t s = 0; s < node.author_slots.size(); ++s) {
                        const std::int32_t a =
                            problem.authors[static_cast<std::size_t>(node.author_slots[s])].author;
                        state.contribution[{a, node.content}] =
                            alpha[static_cast<Eigen::Index>(s)];
                    }
                }
            }

            if (combined.empty()) {
                combined = result.losses;
            } else {
                // Histories may differ in length when groups converge at
                // different epochs; pad with the last value before summing.
                const std::size_t len = std::max(combined.size(), result.losses.size());
                combined.resize(len, combined.empty() ? 0.0 : combined.back());
                for (std::size_t e = 0; e < len; ++e) {
                    const double other =
                        e < result.losses.size() ? result.losses[e] : result.losses.back();
                    combined[e] += other;
                }
            }
        }
        state.loss_history.push_back(std::move(combined));
    }
    return state;
}

SnapshotRefit refit_snapshot(const TemporalGraph& g, const EmbeddingStore& embeddings,
                             const FieldStore& fields, const ModelState& base, Timestamp t,
                             const AuthorshipMask& mask, const TrainConfig& cfg, int max_epochs) {
    const SnapshotView view(g, t, &mask);
    TrainConfig local = cfg;
    const auto tables = build_all_tables(view, fields, local);

    SnapshotRefit refit;
    ValidityStats validity;
    for (int group = 0; group < kNumSpaceGroups; ++group) {
        const auto sg = static_cast<SpaceGroup>(group);
        AttentionParams params = base.params[static_cast<std::size_t>(group)];
        OptimizerState opt;
        opt.kind = cfg.optimizer;
        opt.learning_rate = cfg.learning_rate;
        const SnapshotProblem problem = build_snapshot_problem(
            view, embeddings, sg, tables[static_cast<int>(kContentViewOf[group])],
            tables[static_cast<int>(kAuthorViewOf[group])], base, cfg.seed);
        const SnapshotTrainResult result =
            train_group_snapshot(problem, params, opt, local, max_epochs, validity);
        for (std::size_t i = 0; i < problem.contents.size(); ++i) {
            refit.content_dist[static_cast<std::size_t>(group)][problem.contents[i].content] =
                result.tape.final_content_d()[i];
        }
        for (std::size_t j = 0; j < problem.authors.size(); ++j) {
            refit.author_dist[static_cast<std::size_t>(group)][problem.authors[j].author] =
                result.tape.final_author_d()[j];
        }
        refit.loss_history[static_cast<std::size_t>(group)] = result.losses;
    }
    return refit;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

struct BlobWriter {
    std::vector<double> data;

    std::size_t append(const Eigen::Ref<const Eigen::MatrixXd>& m) {
        const std::size_t offset = data.size();
        data.insert(data.end(), m.data(), m.data() + m.size());
        return offset;
    }
};

json tensor_entry(const char* name, const Eigen::Ref<const Eigen::MatrixXd>& m,
                  std::size_t offset) {
    return json{{"name", name},
                {"rows", m.rows()},
                {"cols", m.cols()},
                {"offset", offset}};
}

}  // namespace

void save_model_state(const ModelState& state, const std::string& json_path,
                      const std::string& blob_path) {
    BlobWriter blob;
    json doc;
    doc["format"] = "stratnet.model";
    doc["version"] = 1;
    doc["feature_dim"] = state.feature_dim;
    doc["seed"] = state.seed;
    doc["blob"] = std::filesystem::path(blob_path).filename().string();

    json groups = json::array();
    for (int group = 0; group < kNumSpaceGroups; ++group) {
        const AttentionParams& p = state.params[static_cast<std::size_t>(group)];
        json entry;
        entry["group"] = to_string(static_cast<SpaceGroup>(group));
        entry["m"] = m_for(static_cast<SpaceGroup>(group));
        entry["leaky_slope"] = p.leaky_slope;
        json tensors = json::array();
        tensors.push_back(tensor_entry("W_ca", p.content_author.W, blob.append(p.content_author.W)));
        tensors.push_back(
            tensor_entry("phi_ca", p.content_author.phi, blob.append(p.content_author.phi)));
        tensors.push_back(tensor_entry("W_ac", p.author_content.W, blob.append(p.author_content.W)));
        tensors.push_back(
            tensor_entry("phi_ac", p.author_content.phi, blob.append(p.author_content.phi)));
        tensors.push_back(tensor_entry("W_aa", p.temporal.W, blob.append(p.temporal.W)));
        tensors.push_back(tensor_entry("phi_aa", p.temporal.phi, blob.append(p.temporal.phi)));
        entry["tensors"] = std::move(tensors);

        json author_entries = json::array();
        for (const auto& [key, d] : state.author_dist[static_cast<std::size_t>(group)]) {
            author_entries.push_back(
                json::array({key.first, key.second, blob.append(d), d.size()}));
        }
        entry["author_dist"] = std::move(author_entries);
        json content_entries = json::array();
        for (const auto& [c, d] : state.content_dist[static_cast<std::size_t>(group)]) {
            content_entries.push_back(json::array({c, blob.append(d), d.size()}));
        }
        entry["content_dist"] = std::move(content_entries);
        groups.push_back(std::move(entry));
    }
    doc["groups"] = std::move(groups);

    json contribs = json::array();
    for (const auto& [key, r] : state.contribution) {
        contribs.push_back(json::array({key.first, key.second, r}));
    }
    doc["contribution"] = std::move(contribs);
    doc["loss_history"] = state.loss_history;
    doc["validity"] = {{"alpha_sets", state.validity.alpha_sets},
                       {"max_alpha_sum_err", state.validity.max_alpha_sum_err},
                       {"gates", state.validity.gates},
                       {"gates_in_open_unit", state.validity.gates_in_open_unit},
                       {"distributions", state.validity.distributions},
                       {"max_dist_sum_err", state.validity.max_dist_sum_err},
                       {"min_dist_entry", state.validity.min_dist_entry}};

    std::ofstream blob_out(blob_path, std::ios::binary);
    if (!blob_out) throw MissingArtifact("cannot write " + blob_path);
    blob_out.write(reinterpret_cast<const char*>(blob.data.data()),
                   static_cast<std::streamsize>(blob.data.size() * sizeof(double)));

    std::ofstream json_out(json_path);
    if (!json_out) throw MissingArtifact("cannot write " + json_path);
    json_out << doc.dump(1, '\t') << "\n";
}

ModelState load_model_state(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw MissingArtifact("cannot open " + json_path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("model file parse: ") + e.what());
    }
    if (doc.value("format", "") != "stratnet.model" || doc.value("version", 0) != 1) {
        throw SchemaError("unrecognized model file format");
    }

    const std::filesystem::path blob_path =
        std::filesystem::path(json_path).parent_path() / doc.at("blob").get<std::string>();
    std::ifstream blob_in(blob_path, std::ios::binary);
    if (!blob_in) throw MissingArtifact("cannot open " + blob_path.string());
    blob_in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(blob_in.tellg());
    blob_in.seekg(0);
    std::vector<double> blob(bytes / sizeof(double));
    blob_in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(bytes));

    auto read_tensor = [&](const json& entry) {
        const auto rows = entry.at("rows").get<Eigen::Index>();
        const auto cols = entry.at("cols").get<Eigen::Index>();
        const auto offset = entry.at("offset").get<std::size_t>();
        if (offset + static_cast<std::size_t>(rows * cols) > blob.size()) {
            throw SchemaError("model blob out of range");
        }
        return Eigen::MatrixXd(
            Eigen::Map<const Eigen::MatrixXd>(blob.data() + offset, rows, cols));
    };
    auto read_vector = [&](std::size_t offset, Eigen::Index size) {
        if (offset + static_cast<std::size_t>(size) > blob.size()) {
            throw SchemaError("model blob out of range");
        }
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(blob.data() + offset, size));
    };

    ModelState state;
    state.feature_dim = doc.at("feature_dim").get<int>();
    state.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& entry : doc.at("groups")) {
        const int group = entry.at("group").get<std::string>() == "citation" ? 0 : 1;
        AttentionParams& p = state.params[static_cast<std::size_t>(group)];
        p.leaky_slope = entry.at("leaky_slope").get<double>();
        for (const auto& tensor : entry.at("tensors")) {
            const std::string name = tensor.at("name").get<std::string>();
            Eigen::MatrixXd m = read_tensor(tensor);
            if (name == "W_ca") p.content_author.W = std::move(m);
            else if (name == "phi_ca") p.content_author.phi = m.reshaped();
            else if (name == "W_ac") p.author_content.W = std::move(m);
            else if (name == "phi_ac") p.author_content.phi = m.reshaped();
            else if (name == "W_aa") p.temporal.W = std::move(m);
            else if (name == "phi_aa") p.temporal.phi = m.reshaped();
            else throw SchemaError("unknown tensor '" + name + "'");
        }
        for (const auto& row : entry.at("author_dist")) {
            state.author_dist[static_cast<std::size_t>(group)]
                             [{row.at(0).get<std::int32_t>(), row.at(1).get<Timestamp>()}] =
                read_vector(row.at(2).get<std::size_t>(), row.at(3).get<Eigen::Index>());
        }
        for (const auto& row : entry.at("content_dist")) {
            state.content_dist[static_cast<std::size_t>(group)][row.at(0).get<std::int32_t>()] =
                read_vector(row.at(1).get<std::size_t>(), row.at(2).get<Eigen::Index>());
        }
    }
    for (const auto& row : doc.at("contribution")) {
        state.contribution[{row.at(0).get<std::int32_t>(), row.at(1).get<std::int32_t>()}] =
            row.at(2).get<double>();
    }
    state.loss_history = doc.at("loss_history").get<std::vector<std::vector<double>>>();
    const auto& validity = doc.at("validity");
    state.validity.alpha_sets = validity.at("alpha_sets").get<long>();
    state.validity.max_alpha_sum_err = validity.at("max_alpha_sum_err").get<double>();
    state.validity.gates = validity.at("gates").get<long>();
    state.validity.gates_in_open_unit = validity.at("gates_in_open_unit").get<bool>();
    state.validity.distributions = validity.at("distributions").get<long>();
    state.validity.max_dist_sum_err = validity.at("max_dist_sum_err").get<double>();
    state.validity.min_dist_entry = validity.at("min_dist_entry").get<double>();
    return state;
}

}  // namespace stratnet
