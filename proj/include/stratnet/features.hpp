#pragma once

#include "stratnet/graph.hpp"
#include "stratnet/types.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <unordered_map>
#include <vector>

namespace stratnet {

constexpr int kFieldDim = 100;

/// Node embedding vectors: time-keyed for authors, time-free for contents.
/// Lookups never fail; missing keys resolve to the all-zero vector.
class EmbeddingStore {
public:
    explicit EmbeddingStore(int dim = 0) : dim_(dim) {}

    int dim() const { return dim_; }

    void set_content(std::int32_t content, Eigen::VectorXd vec);
    void set_author(std::int32_t author, Timestamp t, Eigen::VectorXd vec);

    Eigen::VectorXd content(std::int32_t content) const;
    Eigen::VectorXd author(std::int32_t author, Timestamp t) const;

    std::size_t size() const { return content_vecs_.size() + author_vecs_.size(); }

private:
    static std::int64_t key(std::int32_t author, Timestamp t) {
        return (static_cast<std::int64_t>(author) << 32) | static_cast<std::uint32_t>(t);
    }

    int dim_;
    std::unordered_map<std::int32_t, Eigen::VectorXd> content_vecs_;
    std::unordered_map<std::int64_t, Eigen::VectorXd> author_vecs_;
};

/// Reads embeddings.jsonl: {"id": str, "t": int|null, "vec": [float...]}.
/// Rows with t are author embeddings at that snapshot; rows without t are
/// content embeddings. Ids not present in the graph are rejected.
EmbeddingStore load_embeddings(std::istream& in, const TemporalGraph& g);
EmbeddingStore load_embeddings_file(const std::string& path, const TemporalGraph& g);

/// Deterministic embeddings from a seeded random projection of each node's
/// adjacency signature: every neighbor occurrence is hashed into one of dim
/// buckets with a +-1 sign, and the bucket sums are L2-normalized. Nodes with
/// an empty signature get a unit basis vector chosen by the hash of their key.
/// Author signatures accumulate over time, so the same author drifts across
/// snapshots. Same seed, same output.
EmbeddingStore fallback_embed(const TemporalGraph& g, int dim, std::uint64_t seed);

/// Per-content field vectors (fixed 100-dim, unit norm or zero). Contents
/// absent from the store are treated as unknown-field (zero vector).
class FieldStore {
public:
    void set(std::int32_t content, Eigen::VectorXd vec);
    Eigen::VectorXd content(std::int32_t content) const;
    bool has(std::int32_t content) const { return fields_.count(content) > 0; }
    std::size_t size() const { return fields_.size(); }

private:
    std::unordered_map<std::int32_t, Eigen::VectorXd> fields_;
};

/// Reads fields.jsonl: {"id": str, "vec": [float x 100]}. Nonzero vectors are
/// L2-normalized on load.
FieldStore load_fields(std::istream& in, const TemporalGraph& g);
FieldStore load_fields_file(const std::string& path, const TemporalGraph& g);

/// Mean of the field vectors of a's contents created by time t (contents with
/// unknown fields are skipped), L2-normalized; zero vector if none.
Eigen::VectorXd author_field_vector(const TemporalGraph& g, const FieldStore& fields,
                                    std::int32_t author, Timestamp t);

/// Masked variant: at snapshot view.time(), hidden authorships do not count.
Eigen::VectorXd author_field_vector(const SnapshotView& view, const FieldStore& fields,
                                    std::int32_t author);

/// Mean of the field vectors of contents published at u by time t, normalized.
Eigen::VectorXd venue_field_vector(const TemporalGraph& g, const FieldStore& fields,
                                   std::int32_t venue, Timestamp t);

}  // namespace stratnet
