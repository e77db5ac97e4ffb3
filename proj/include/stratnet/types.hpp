#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stratnet {

enum class NodeKind : std::uint8_t { Author = 0, Content = 1, Venue = 2 };

const char* to_string(NodeKind kind);

/// Snapshot index. Snapshots are 0..T-1; negative values address the
/// background era (material that predates the first snapshot).
using Timestamp = std::int32_t;

struct NodeId {
    NodeKind kind;
    std::int32_t index;

    friend bool operator==(const NodeId&, const NodeId&) = default;
    friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

enum class EdgeView : std::uint8_t {
    ContentCitesContent = 0,
    AuthorCitesAuthor = 1,
    ContentAtVenue = 2,
    AuthorAtVenue = 3,
};

constexpr int kNumEdgeViews = 4;

const char* to_string(EdgeView view);

/// The two strategy-space groups. Citation views share one space (16
/// composite strategies), venue views the other (8).
enum class SpaceGroup : std::uint8_t { Citation = 0, Venue = 1 };

constexpr int kNumSpaceGroups = 2;

const char* to_string(SpaceGroup group);

constexpr SpaceGroup space_group_of(EdgeView view) {
    return (view == EdgeView::ContentCitesContent || view == EdgeView::AuthorCitesAuthor)
               ? SpaceGroup::Citation
               : SpaceGroup::Venue;
}

constexpr bool is_author_view(EdgeView view) {
    return view == EdgeView::AuthorCitesAuthor || view == EdgeView::AuthorAtVenue;
}

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : Error {
    using Error::Error;
};

struct DanglingReference : Error {
    using Error::Error;
};

struct TimeViolation : Error {
    using Error::Error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct InvalidParameter : Error {
    using Error::Error;
};

struct EmptyCandidates : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

struct MissingUtility : Error {
    using Error::Error;
};

struct EmptyContentSet : Error {
    using Error::Error;
};

struct EmptyTable : Error {
    using Error::Error;
};

struct NoPositives : Error {
    using Error::Error;
};

struct LengthMismatch : Error {
    using Error::Error;
};

struct KeyMismatch : Error {
    using Error::Error;
};

struct MissingArtifact : Error {
    using Error::Error;
};

/// Carries every violation found while validating a config, not just the first.
struct ConfigError : Error {
    explicit ConfigError(std::vector<std::string> problems);

    std::vector<std::string> problems;
};

// ---------------------------------------------------------------------------
// Small numeric helpers shared across modules.

/// True iff entries are non-negative, finite, and L1-sum to 1 within tol.
bool is_valid_distribution(const Eigen::Ref<const Eigen::VectorXd>& d, double tol = 1e-9);

/// Entrywise tanh followed by L1 normalization. Inputs are expected to be
/// non-negative with positive total mass.
template <typename Derived>
Eigen::VectorXd l1_normalized_tanh(const Eigen::MatrixBase<Derived>& v) {
    Eigen::VectorXd u = v.array().tanh().matrix();
    const double s = u.sum();
    if (!(s > 0.0)) {
        throw NumericalError("l1_normalized_tanh: non-positive mass after tanh");
    }
    return u / s;
}

template <typename Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& logits) {
    const double m = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

/// 0.5 * L1 distance between two distributions.
double total_variation(const Eigen::Ref<const Eigen::VectorXd>& p,
                       const Eigen::Ref<const Eigen::VectorXd>& q);

/// Deterministic 64-bit string hash (FNV-1a); used wherever hashed ids must be
/// stable across platforms and runs.
std::uint64_t fnv1a64(const std::string& s);

/// SplitMix64 step; used to derive independent rng streams from a master seed.
std::uint64_t mix64(std::uint64_t x);

/// Derive a named seed from a master seed.
std::uint64_t derive_seed(std::uint64_t master, const std::string& purpose);

}  // namespace stratnet
