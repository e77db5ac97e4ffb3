#pragma once

#include "stratnet/types.hpp"

#include <array>
#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace stratnet {

/// Cumulative utility observations for contents: (horizon k, value) pairs
/// sorted by k, non-decreasing in value.
class UtilityStore {
public:
    void resize(std::int32_t n_contents) { records_.resize(static_cast<std::size_t>(n_contents)); }
    void add(std::int32_t content, std::int32_t k, double value);
    /// Sorts per-content records by k and checks non-decreasing values.
    void finalize();

    std::optional<double> value(std::int32_t content, std::int32_t k) const;
    /// Largest observed horizon for a content; 0 if none.
    std::int32_t max_horizon(std::int32_t content) const;
    bool empty() const;

    const std::vector<std::pair<std::int32_t, double>>& records(std::int32_t content) const {
        return records_[static_cast<std::size_t>(content)];
    }

    friend bool operator==(const UtilityStore&, const UtilityStore&) = default;

private:
    std::vector<std::vector<std::pair<std::int32_t, double>>> records_;
};

struct Snapshot {
    Timestamp t = 0;
    std::vector<std::int32_t> active_authors;   // sorted; authored >=1 content at t
    std::vector<std::int32_t> new_contents;     // sorted
    std::vector<std::pair<std::int32_t, std::int32_t>> authorship;  // (author, content)
    /// Indexed by EdgeView; (source, target) pairs, deduplicated, sorted.
    std::array<std::vector<std::pair<std::int32_t, std::int32_t>>, kNumEdgeViews> attribute_edges;

    friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct ContentMeta {
    Timestamp time = 0;
    std::int32_t venue = -1;                // -1: no venue edge
    std::vector<std::int32_t> cited;        // content ids, sorted
    std::vector<std::int32_t> authors;      // author ids, sorted

    friend bool operator==(const ContentMeta&, const ContentMeta&) = default;
};

struct IngestOptions {
    /// Raw time value that maps to snapshot 0 (e.g. 2000 for yearly data).
    std::int64_t epoch = 0;
};

/// Immutable snapshotted author-content-venue graph with the derived edge
/// views and the lookup indexes the rest of the pipeline needs. Build it via
/// ingest(); treat instances as read-only afterwards.
struct TemporalGraph {
    std::int32_t n_authors = 0;
    std::int32_t n_contents = 0;
    std::int32_t n_venues = 0;

    std::vector<Snapshot> snapshots;
    std::vector<std::int32_t> background;   // contents with time < 0, sorted
    std::vector<ContentMeta> content_meta;  // indexed by content id
    std::vector<Timestamp> author_first_active;

    // Original string keys, indexed by dense id.
    std::vector<std::string> author_keys;
    std::vector<std::string> content_keys;
    std::vector<std::string> venue_keys;

    UtilityStore utilities;

    // Derived indexes (filled by ingest).
    std::vector<std::vector<std::pair<Timestamp, std::int32_t>>> author_contents;  // sorted (time, content)
    std::vector<std::vector<Timestamp>> content_cited_times;  // per content: times of incoming citations, sorted
    std::vector<std::vector<Timestamp>> author_cited_times;   // per author: times of incoming derived citations, sorted
    std::vector<std::vector<Timestamp>> venue_pub_times;      // per venue: publication times, sorted
    Timestamp min_content_time = 0;                           // over all contents

    std::int32_t num_snapshots() const { return static_cast<std::int32_t>(snapshots.size()); }

    /// Authors with >= min_new_contents new contents at t.
    std::vector<std::int32_t> active_author_set(Timestamp t, std::int32_t min_new_contents) const;

    /// Permissible targets for a view at time t, ordered by id. Content
    /// targets must predate t; authors/venues must be active by t.
    std::vector<std::int32_t> candidate_pool(EdgeView view, Timestamp t) const;

    /// Number of incoming edges of the view's target kind strictly before t.
    std::int32_t indegree_before(EdgeView view, std::int32_t target, Timestamp t) const;

    /// Contents authored by a at exactly time t, sorted.
    std::vector<std::int32_t> contents_of_author_at(std::int32_t author, Timestamp t) const;
    /// Contents authored by a strictly before t, sorted.
    std::vector<std::int32_t> contents_of_author_before(std::int32_t author, Timestamp t) const;
    /// Creation time of a's most recent content at or before t, if any.
    std::optional<Timestamp> latest_content_time(std::int32_t author, Timestamp t) const;

    /// Authors who share a content with a, creation time strictly before t.
    /// Does not include a itself.
    std::unordered_set<std::int32_t> collaborators_before(std::int32_t author, Timestamp t) const;
    /// Venues of contents authored by a strictly before t.
    std::unordered_set<std::int32_t> venues_of_author_before(std::int32_t author, Timestamp t) const;
    /// Authors of contents cited by a's contents with creation time <= t.
    std::unordered_set<std::int32_t> authors_cited_by(std::int32_t author, Timestamp t) const;
    /// Venues of contents authored by a with creation time <= t.
    std::unordered_set<std::int32_t> venues_of_author_through(std::int32_t author, Timestamp t) const;

    friend bool operator==(const TemporalGraph&, const TemporalGraph&) = default;
};

TemporalGraph ingest(std::istream& nodes, std::istream& edges, std::istream& utilities,
                     const IngestOptions& options = {});

TemporalGraph ingest_files(const std::string& nodes_path, const std::string& edges_path,
                           const std::string& utilities_path, const IngestOptions& options = {});

/// Versioned JSON serialization; load(save(g)) == g field-by-field.
void save_temporal_graph(const TemporalGraph& g, const std::string& path);
TemporalGraph load_temporal_graph(const std::string& path);

/// A (author, hidden-contents) mask used by fold evaluation: the listed
/// authorship pairs, and everything derived from them, are treated as absent.
struct AuthorshipMask {
    std::unordered_map<std::int32_t, std::unordered_set<std::int32_t>> hidden;  // author -> contents

    bool contains(std::int32_t author, std::int32_t content) const {
        auto it = hidden.find(author);
        return it != hidden.end() && it->second.count(content) > 0;
    }
    bool empty() const { return hidden.empty(); }
};

/// Read view of one snapshot with an optional authorship mask applied. All
/// snapshot-level queries the training problem builder needs go through here
/// so that fold evaluation sees a consistently masked graph.
class SnapshotView {
public:
    SnapshotView(const TemporalGraph& g, Timestamp t, const AuthorshipMask* mask = nullptr);

    const TemporalGraph& graph() const { return *g_; }
    Timestamp time() const { return t_; }
    bool masked() const { return mask_ != nullptr && !mask_->empty(); }

    /// Authors of content c; for snapshot-t contents, masked pairs removed.
    std::vector<std::int32_t> authors_of(std::int32_t content) const;
    /// Contents authored by a at t, masked pairs removed.
    std::vector<std::int32_t> contents_of(std::int32_t author) const;
    /// Authors with >= 1 unmasked content at t.
    std::vector<std::int32_t> active_authors() const;
    std::vector<std::int32_t> new_contents() const;

    /// Attribute edges of the view at t. For author views, derived edges are
    /// recomputed from unmasked authorships when a mask is present.
    std::vector<std::pair<std::int32_t, std::int32_t>> view_edges(EdgeView view) const;

    /// Contents of a with creation time <= t, mask applied at t only.
    std::vector<std::int32_t> contents_of_author_through(std::int32_t author) const;

private:
    const TemporalGraph* g_;
    Timestamp t_;
    const AuthorshipMask* mask_;
};

}  // namespace stratnet
