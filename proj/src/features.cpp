#include "stratnet/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

namespace stratnet {

namespace {

using nlohmann::json;

Eigen::VectorXd vec_from_json(const json& arr) {
    Eigen::VectorXd v(arr.size());
    Eigen::Index i = 0;
    for (const auto& x : arr) v[i++] = x.get<double>();
    return v;
}

Eigen::VectorXd normalized_or_zero(Eigen::VectorXd v) {
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// EmbeddingStore

void EmbeddingStore::set_content(std::int32_t content, Eigen::VectorXd vec) {
    if (dim_ == 0) dim_ = static_cast<int>(vec.size());
    if (vec.size() != dim_) throw DimensionMismatch("content embedding dimension mismatch");
    content_vecs_[content] = std::move(vec);
}

void EmbeddingStore::set_author(std::int32_t author, Timestamp t, Eigen::VectorXd vec) {
    if (dim_ == 0) dim_ = static_cast<int>(vec.size());
    if (vec.size() != dim_) throw DimensionMismatch("author embedding dimension mismatch");
    author_vecs_[key(author, t)] = std::move(vec);
}

Eigen::VectorXd EmbeddingStore::content(std::int32_t content) const {
    auto it = content_vecs_.find(content);
    if (it != content_vecs_.end()) return it->second;
    return Eigen::VectorXd::Zero(dim_);
}

Eigen::VectorXd EmbeddingStore::author(std::int32_t author, Timestamp t) const {
    auto it = author_vecs_.find(key(author, t));
    if (it != author_vecs_.end()) return it->second;
    return Eigen::VectorXd::Zero(dim_);
}

EmbeddingStore load_embeddings(std::istream& in, const TemporalGraph& g) {
    // Build id lookup maps once; files can be large.
    std::unordered_map<std::string, std::int32_t> author_ids, content_ids;
    for (std::int32_t a = 0; a < g.n_authors; ++a) author_ids[g.author_keys[a]] = a;
    for (std::int32_t c = 0; c < g.n_contents; ++c) content_ids[g.content_keys[c]] = c;

    EmbeddingStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("embeddings line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!obj.contains("id") || !obj.contains("vec")) {
            throw ParseError("embeddings line " + std::to_string(lineno) + ": missing id/vec");
        }
        Eigen::VectorXd vec = vec_from_json(obj.at("vec"));
        if (store.dim() != 0 && vec.size() != store.dim()) {
            throw DimensionMismatch("embeddings line " + std::to_string(lineno) + ": dim " +
                                    std::to_string(vec.size()) + " != " + std::to_string(store.dim()));
        }
        const std::string id = obj.at("id").get<std::string>();
        const bool has_t = obj.contains("t") && !obj.at("t").is_null();
        if (has_t) {
            auto it = author_ids.find(id);
            if (it == author_ids.end()) throw DanglingReference("embedding for unknown author '" + id + "'");
            store.set_author(it->second, obj.at("t").get<Timestamp>(), std::move(vec));
        } else {
            auto it = content_ids.find(id);
            if (it == content_ids.end()) throw DanglingReference("embedding for unknown content '" + id + "'");
            store.set_content(it->second, std::move(vec));
        }
    }
    return store;
}

EmbeddingStore load_embeddings_file(const std::string& path, const TemporalGraph& g) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open " + path);
    return load_embeddings(in, g);
}

EmbeddingStore fallback_embed(const TemporalGraph& g, int dim, std::uint64_t seed) {
    if (dim < 2) throw InvalidParameter("fallback_embed: dim must be >= 2");
    EmbeddingStore store(dim);

    auto bucketed = [&](Eigen::VectorXd& sig, const std::string& neighbor_key, const char* rel) {
        const std::uint64_t h = mix64(seed ^ fnv1a64(neighbor_key) ^ fnv1a64(rel));
        const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim));
        sig[bucket] += (h >> 63) ? 1.0 : -1.0;
    };
    auto finish = [&](Eigen::VectorXd sig, const std::string& own_key) {
        const double norm = sig.norm();
        if (norm > 0.0) return Eigen::VectorXd(sig / norm);
        Eigen::VectorXd basis = Eigen::VectorXd::Zero(dim);
        basis[static_cast<Eigen::Index>(mix64(seed ^ fnv1a64(own_key)) %
                                        static_cast<std::uint64_t>(dim))] = 1.0;
        return basis;
    };

    for (std::int32_t c = 0; c < g.n_contents; ++c) {
        const auto& meta = g.content_meta[c];
        Eigen::VectorXd sig = Eigen::VectorXd::Zero(dim);
        for (std::int32_t a : meta.authors) bucketed(sig, g.author_keys[a], "writes");
        for (std::int32_t cited : meta.cited) bucketed(sig, g.content_keys[cited], "cites");
        if (meta.venue >= 0) bucketed(sig, g.venue_keys[meta.venue], "published_at");
        store.set_content(c, finish(std::move(sig), g.content_keys[c]));
    }

    // Author signature at t: everything authored through t.
    for (std::int32_t a = 0; a < g.n_authors; ++a) {
        const auto& list = g.author_contents[a];
        if (list.empty()) continue;
        Eigen::VectorXd sig = Eigen::VectorXd::Zero(dim);
        std::size_t next = 0;
        for (Timestamp t = 0; t < g.num_snapshots(); ++t) {
            while (next < list.size() && list[next].first <= t) {
                bucketed(sig, g.content_keys[list[next].second], "writes");
                ++next;
            }
            if (g.author_first_active[a] <= t) {
                store.set_author(a, t, finish(sig, g.author_keys[a]));
            }
        }
    }
    return store;
}

// ---------------------------------------------------------------------------
// FieldStore

void FieldStore::set(std::int32_t content, Eigen::VectorXd vec) {
    fields_[content] = std::move(vec);
}

Eigen::VectorXd FieldStore::content(std::int32_t content) const {
    auto it = fields_.find(content);
    if (it != fields_.end()) return it->second;
    return Eigen::VectorXd::Zero(kFieldDim);
}

FieldStore load_fields(std::istream& in, const TemporalGraph& g) {
    std::unordered_map<std::string, std::int32_t> content_ids;
    for (std::int32_t c = 0; c < g.n_contents; ++c) content_ids[g.content_keys[c]] = c;

    FieldStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("fields line " + std::to_string(lineno) + ": " + e.what());
        }
        Eigen::VectorXd vec = vec_from_json(obj.at("vec"));
        if (vec.size() != kFieldDim) {
            throw DimensionMismatch("fields line " + std::to_string(lineno) + ": expected " +
                                    std::to_string(kFieldDim) + " dims, got " +
                                    std::to_string(vec.size()));
        }
        const std::string id = obj.at("id").get<std::string>();
        auto it = content_ids.find(id);
        if (it == content_ids.end()) throw DanglingReference("field vector for unknown content '" + id + "'");
        store.set(it->second, normalized_or_zero(std::move(vec)));
    }
    return store;
}

FieldStore load_fields_file(const std::string& path, const TemporalGraph& g) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open " + path);
    return load_fields(in, g);
}

namespace {

Eigen::VectorXd mean_field(const FieldStore& fields, const std::vector<std::int32_t>& contents) {
    Eigen::VectorXd sum;
    int count = 0;
    for (std::int32_t c : contents) {
        if (!fields.has(c)) continue;
        Eigen::VectorXd f = fields.content(c);
        if (count == 0) {
            sum = std::move(f);
        } else {
            sum += f;
        }
        ++count;
    }
    if (count == 0) return Eigen::VectorXd::Zero(kFieldDim);
    return normalized_or_zero(sum / count);
}

}  // namespace

Eigen::VectorXd author_field_vector(const TemporalGraph& g, const FieldStore& fields,
                                    std::int32_t author, Timestamp t) {
    std::vector<std::int32_t> contents;
    for (const auto& [time, c] : g.author_contents[author]) {
        if (time > t) break;
        contents.push_back(c);
    }
    return mean_field(fields, contents);
}

Eigen::VectorXd author_field_vector(const SnapshotView& view, const FieldStore& fields,
                                    std::int32_t author) {
    return mean_field(fields, view.contents_of_author_through(author));
}

Eigen::VectorXd venue_field_vector(const TemporalGraph& g, const FieldStore& fields,
                                   std::int32_t venue, Timestamp t) {
    std::vector<std::int32_t> contents;
    for (std::int32_t c = 0; c < g.n_contents; ++c) {
        const auto& meta = g.content_meta[c];
        if (meta.venue == venue && meta.time <= t) contents.push_back(c);
    }
    return mean_field(fields, contents);
}

}  // namespace stratnet
