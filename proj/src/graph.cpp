#include "stratnet/graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace stratnet {

namespace {

using nlohmann::json;

constexpr Timestamp kNeverActive = std::numeric_limits<Timestamp>::max();

json parse_line(const std::string& line, const char* what, std::size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        std::ostringstream os;
        os << what << " line " << lineno << ": " << e.what();
        throw SchemaError(os.str());
    }
}

struct RawGraph {
    std::vector<std::string> author_keys, content_keys, venue_keys;
    std::vector<ContentMeta> content_meta;  // authors/cited unsorted here
    std::vector<std::vector<std::pair<std::int32_t, double>>> utility_records;
};

template <typename T>
void sort_unique(std::vector<T>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

/// Builds snapshots and every derived index from node/edge data. Shared by
/// ingest and deserialization so both construct identical graphs.
TemporalGraph finalize_graph(RawGraph&& raw) {
    TemporalGraph g;
    g.author_keys = std::move(raw.author_keys);
    g.content_keys = std::move(raw.content_keys);
    g.venue_keys = std::move(raw.venue_keys);
    g.content_meta = std::move(raw.content_meta);
    g.n_authors = static_cast<std::int32_t>(g.author_keys.size());
    g.n_contents = static_cast<std::int32_t>(g.content_keys.size());
    g.n_venues = static_cast<std::int32_t>(g.venue_keys.size());

    for (auto& meta : g.content_meta) {
        sort_unique(meta.cited);
        sort_unique(meta.authors);
    }

    Timestamp max_time = -1;
    g.min_content_time = 0;
    for (std::int32_t c = 0; c < g.n_contents; ++c) {
        const Timestamp tc = g.content_meta[c].time;
        max_time = std::max(max_time, tc);
        g.min_content_time = std::min(g.min_content_time, tc);
        if (tc < 0) g.background.push_back(c);
        for (std::int32_t cited : g.content_meta[c].cited) {
            if (g.content_meta[cited].time > tc) {
                throw TimeViolation("content '" + g.content_keys[c] + "' cites future content '" +
                                    g.content_keys[cited] + "'");
            }
        }
    }

    g.author_first_active.assign(g.n_authors, kNeverActive);
    g.author_contents.assign(g.n_authors, {});
    for (std::int32_t c = 0; c < g.n_contents; ++c) {
        const Timestamp tc = g.content_meta[c].time;
        for (std::int32_t a : g.content_meta[c].authors) {
            g.author_first_active[a] = std::min(g.author_first_active[a], tc);
            g.author_contents[a].emplace_back(tc, c);
        }
    }
    for (auto& list : g.author_contents) std::sort(list.begin(), list.end());

    // Incoming-citation and publication time indexes (background included).
    g.content_cited_times.assign(g.n_contents, {});
    g.venue_pub_times.assign(g.n_venues, {});
    g.author_cited_times.assign(g.n_authors, {});
    std::vector<std::set<std::pair<Timestamp, std::int32_t>>> author_citation_events(g.n_authors);
    for (std::int32_t c = 0; c < g.n_contents; ++c) {
        const auto& meta = g.content_meta[c];
        for (std::int32_t cited : meta.cited) {
            g.content_cited_times[cited].push_back(meta.time);
            // Project onto authors: one event per (citing author, cited author, time).
            for (std::int32_t b : g.content_meta[cited].authors) {
                for (std::int32_t a : meta.authors) {
                    if (author_citation_events[b].emplace(meta.time, a).second) {
                        g.author_cited_times[b].push_back(meta.time);
                    }
                }
            }
        }
        if (meta.venue >= 0) g.venue_pub_times[meta.venue].push_back(meta.time);
    }
    for (auto& v : g.content_cited_times) std::sort(v.begin(), v.end());
    for (auto& v : g.author_cited_times) std::sort(v.begin(), v.end());
    for (auto& v : g.venue_pub_times) std::sort(v.begin(), v.end());

    // Snapshots cover 0..max content time.
    const std::int32_t T = max_time >= 0 ? max_time + 1 : 0;
    g.snapshots.resize(static_cast<std::size_t>(T));
    for (std::int32_t t = 0; t < T; ++t) g.snapshots[static_cast<std::size_t>(t)].t = t;
    for (std::int32_t c = 0; c < g.n_contents; ++c) {
        const auto& meta = g.content_meta[c];
        if (meta.time < 0) continue;
        auto& snap = g.snapshots[static_cast<std::size_t>(meta.time)];
        snap.new_contents.push_back(c);
        for (std::int32_t a : meta.authors) {
            snap.active_authors.push_back(a);
            snap.authorship.emplace_back(a, c);
        }
        for (std::int32_t cited : meta.cited) {
            snap.attribute_edges[static_cast<int>(EdgeView::ContentCitesContent)].emplace_back(c, cited);
            for (std::int32_t a : meta.authors) {
                for (std::int32_t b : g.content_meta[cited].authors) {
                    snap.attribute_edges[static_cast<int>(EdgeView::AuthorCitesAuthor)].emplace_back(a, b);
                }
            }
        }
        if (meta.venue >= 0) {
            snap.attribute_edges[static_cast<int>(EdgeView::ContentAtVenue)].emplace_back(c, meta.venue);
            for (std::int32_t a : meta.authors) {
                snap.attribute_edges[static_cast<int>(EdgeView::AuthorAtVenue)].emplace_back(a, meta.venue);
            }
        }
    }
    for (auto& snap : g.snapshots) {
        sort_unique(snap.active_authors);
        sort_unique(snap.new_contents);
        sort_unique(snap.authorship);
        for (auto& edges : snap.attribute_edges) sort_unique(edges);
    }

    g.utilities.resize(g.n_contents);
    for (std::int32_t c = 0; c < static_cast<std::int32_t>(raw.utility_records.size()); ++c) {
        for (const auto& [k, value] : raw.utility_records[static_cast<std::size_t>(c)]) {
            g.utilities.add(c, k, value);
        }
    }
    g.utilities.finalize();
    return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// UtilityStore

void UtilityStore::add(std::int32_t content, std::int32_t k, double value) {
    if (k < 1) throw SchemaError("utility horizon must be >= 1");
    if (!(value >= 0.0)) throw SchemaError("utility value must be non-negative");
    records_[static_cast<std::size_t>(content)].emplace_back(k, value);
}

void UtilityStore::finalize() {
    for (std::size_t c = 0; c < records_.size(); ++c) {
        auto& recs = records_[c];
        std::sort(recs.begin(), recs.end());
        for (std::size_t i = 1; i < recs.size(); ++i) {
            if (recs[i].first == recs[i - 1].first) {
                throw SchemaError("duplicate utility horizon for content index " + std::to_string(c));
            }
            if (recs[i].second < recs[i - 1].second) {
                throw SchemaError("cumulative utility decreases for content index " + std::to_string(c));
            }
        }
    }
}

std::optional<double> UtilityStore::value(std::int32_t content, std::int32_t k) const {
    const auto& recs = records_[static_cast<std::size_t>(content)];
    auto it = std::lower_bound(recs.begin(), recs.end(), std::make_pair(k, -1.0));
    if (it != recs.end() && it->first == k) return it->second;
    return std::nullopt;
}

std::int32_t UtilityStore::max_horizon(std::int32_t content) const {
    const auto& recs = records_[static_cast<std::size_t>(content)];
    return recs.empty() ? 0 : recs.back().first;
}

bool UtilityStore::empty() const {
    for (const auto& recs : records_) {
        if (!recs.empty()) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// TemporalGraph queries

std::vector<std::int32_t> TemporalGraph::active_author_set(Timestamp t,
                                                           std::int32_t min_new_contents) const {
    std::vector<std::int32_t> out;
    const auto& snap = snapshots.at(static_cast<std::size_t>(t));
    std::int32_t prev = -1;
    std::int32_t count = 0;
    auto flush = [&] {
        if (prev >= 0 && count >= min_new_contents) out.push_back(prev);
    };
    for (const auto& [a, c] : snap.authorship) {
        (void)c;
        if (a != prev) {
            flush();
            prev = a;
            count = 0;
        }
        ++count;
    }
    flush();
    return out;
}

std::vector<std::int32_t> TemporalGraph::candidate_pool(EdgeView view, Timestamp t) const {
    std::vector<std::int32_t> out;
    switch (view) {
        case EdgeView::ContentCitesContent:
            for (std::int32_t c = 0; c < n_contents; ++c) {
                if (content_meta[static_cast<std::size_t>(c)].time < t) out.push_back(c);
            }
            break;
        case EdgeView::AuthorCitesAuthor:
            for (std::int32_t a = 0; a < n_authors; ++a) {
                if (author_first_active[static_cast<std::size_t>(a)] != kNeverActive &&
                    author_first_active[static_cast<std::size_t>(a)] <= t) {
                    out.push_back(a);
                }
            }
            break;
        case EdgeView::ContentAtVenue:
        case EdgeView::AuthorAtVenue:
            for (std::int32_t u = 0; u < n_venues; ++u) {
                const auto& pubs = venue_pub_times[static_cast<std::size_t>(u)];
                if (!pubs.empty() && pubs.front() <= t) out.push_back(u);
            }
            break;
    }
    return out;
}

std::int32_t TemporalGraph::indegree_before(EdgeView view, std::int32_t target, Timestamp t) const {
    const std::vector<Timestamp>* times = nullptr;
    switch (view) {
        case EdgeView::ContentCitesContent:
            times = &content_cited_times[static_cast<std::size_t>(target)];
            break;
        case EdgeView::AuthorCitesAuthor:
            times = &author_cited_times[static_cast<std::size_t>(target)];
            break;
        case EdgeView::ContentAtVenue:
        case EdgeView::AuthorAtVenue:
            times = &venue_pub_times[static_cast<std::size_t>(target)];
            break;
    }
    return static_cast<std::int32_t>(std::lower_bound(times->begin(), times->end(), t) -
                                     times->begin());
}

std::vector<std::int32_t> TemporalGraph::contents_of_author_at(std::int32_t author,
                                                               Timestamp t) const {
    std::vector<std::int32_t> out;
    const auto& list = author_contents[static_cast<std::size_t>(author)];
    auto it = std::lower_bound(list.begin(), list.end(),
                               std::make_pair(t, std::numeric_limits<std::int32_t>::min()));
    for (; it != list.end() && it->first == t; ++it) out.push_back(it->second);
    return out;
}

std::vector<std::int32_t> TemporalGraph::contents_of_author_before(std::int32_t author,
                                                                   Timestamp t) const {
    std::vector<std::int32_t> out;
    for (const auto& [time, c] : author_contents[static_cast<std::size_t>(author)]) {
        if (time >= t) break;
        out.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<Timestamp> TemporalGraph::latest_content_time(std::int32_t author,
                                                            Timestamp t) const {
    const auto& list = author_contents[static_cast<std::size_t>(author)];
    auto it = std::upper_bound(list.begin(), list.end(),
                               std::make_pair(t, std::numeric_limits<std::int32_t>::max()));
    if (it == list.begin()) return std::nullopt;
    return std::prev(it)->first;
}

std::unordered_set<std::int32_t> TemporalGraph::collaborators_before(std::int32_t author,
                                                                     Timestamp t) const {
    std::unordered_set<std::int32_t> out;
    for (const auto& [time, c] : author_contents[static_cast<std::size_t>(author)]) {
        if (time >= t) break;
        for (std::int32_t b : content_meta[static_cast<std::size_t>(c)].authors) {
            if (b != author) out.insert(b);
        }
    }
    return out;
}

std::unordered_set<std::int32_t> TemporalGraph::venues_of_author_before(std::int32_t author,
                                                                        Timestamp t) const {
    std::unordered_set<std::int32_t> out;
    for (const auto& [time, c] : author_contents[static_cast<std::size_t>(author)]) {
        if (time >= t) break;
        const std::int32_t u = content_meta[static_cast<std::size_t>(c)].venue;
        if (u >= 0) out.insert(u);
    }
    return out;
}

std::unordered_set<std::int32_t> TemporalGraph::authors_cited_by(std::int32_t author,
                                                                 Timestamp t) const {
    std::unordered_set<std::int32_t> out;
    for (const auto& [time, c] : author_contents[static_cast<std::size_t>(author)]) {
        if (time > t) break;
        for (std::int32_t cited : content_meta[static_cast<std::size_t>(c)].cited) {
            for (std::int32_t b : content_meta[static_cast<std::size_t>(cited)].authors) {
                out.insert(b);
            }
        }
    }
    return out;
}

std::unordered_set<std::int32_t> TemporalGraph::venues_of_author_through(std::int32_t author,
                                                                         Timestamp t) const {
    std::unordered_set<std::int32_t> out;
    for (const auto& [time, c] : author_contents[static_cast<std::size_t>(author)]) {
        if (time > t) break;
        const std::int32_t u = content_meta[static_cast<std::size_t>(c)].venue;
        if (u >= 0) out.insert(u);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ingestion

TemporalGraph ingest(std::istream& nodes, std::istream& edges, std::istream& utilities,
                     const IngestOptions& options) {
    RawGraph raw;
    std::unordered_map<std::string, std::int32_t> author_ids, content_ids, venue_ids;

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(nodes, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj = parse_line(line, "nodes", lineno);
        if (!obj.contains("id") || !obj.contains("kind")) {
            throw SchemaError("nodes line " + std::to_string(lineno) + ": missing id/kind");
        }
        const std::string id = obj.at("id").get<std::string>();
        const std::string kind = obj.at("kind").get<std::string>();
        if (kind == "author") {
            if (!author_ids.emplace(id, static_cast<std::int32_t>(raw.author_keys.size())).second) {
                throw SchemaError("duplicate author id '" + id + "'");
            }
            raw.author_keys.push_back(id);
        } else if (kind == "content") {
            if (!obj.contains("time")) {
                throw SchemaError("content node '" + id + "' missing time");
            }
            if (!content_ids.emplace(id, static_cast<std::int32_t>(raw.content_keys.size())).second) {
                throw SchemaError("duplicate content id '" + id + "'");
            }
            raw.content_keys.push_back(id);
            ContentMeta meta;
            const std::int64_t t = obj.at("time").get<std::int64_t>() - options.epoch;
            meta.time = static_cast<Timestamp>(t);
            raw.content_meta.push_back(std::move(meta));
        } else if (kind == "venue") {
            if (!venue_ids.emplace(id, static_cast<std::int32_t>(raw.venue_keys.size())).second) {
                throw SchemaError("duplicate venue id '" + id + "'");
            }
            raw.venue_keys.push_back(id);
        } else {
            throw SchemaError("nodes line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
        }
    }

    auto lookup = [](const std::unordered_map<std::string, std::int32_t>& ids,
                     const std::string& key) -> std::int32_t {
        auto it = ids.find(key);
        return it == ids.end() ? -1 : it->second;
    };

    lineno = 0;
    while (std::getline(edges, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj = parse_line(line, "edges", lineno);
        if (!obj.contains("src") || !obj.contains("dst") || !obj.contains("rel")) {
            throw SchemaError("edges line " + std::to_string(lineno) + ": missing src/dst/rel");
        }
        const std::string src = obj.at("src").get<std::string>();
        const std::string dst = obj.at("dst").get<std::string>();
        const std::string rel = obj.at("rel").get<std::string>();
        if (rel == "writes") {
            const std::int32_t a = lookup(author_ids, src);
            const std::int32_t c = lookup(content_ids, dst);
            if (a < 0 || c < 0) {
                throw DanglingReference("writes edge '" + src + "' -> '" + dst + "'");
            }
            raw.content_meta[static_cast<std::size_t>(c)].authors.push_back(a);
        } else if (rel == "cites") {
            const std::int32_t c1 = lookup(content_ids, src);
            const std::int32_t c2 = lookup(content_ids, dst);
            if (c1 < 0 || c2 < 0) {
                throw DanglingReference("cites edge '" + src + "' -> '" + dst + "'");
            }
            raw.content_meta[static_cast<std::size_t>(c1)].cited.push_back(c2);
        } else if (rel == "published_at") {
            const std::int32_t c = lookup(content_ids, src);
            const std::int32_t u = lookup(venue_ids, dst);
            if (c < 0 || u < 0) {
                throw DanglingReference("published_at edge '" + src + "' -> '" + dst + "'");
            }
            auto& venue = raw.content_meta[static_cast<std::size_t>(c)].venue;
            if (venue >= 0 && venue != u) {
                throw SchemaError("content '" + src + "' has multiple venues");
            }
            venue = u;
        } else {
            throw SchemaError("edges line " + std::to_string(lineno) + ": unknown rel '" + rel + "'");
        }
    }

    raw.utility_records.resize(raw.content_keys.size());
    lineno = 0;
    while (std::getline(utilities, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj = parse_line(line, "utilities", lineno);
        if (!obj.contains("content") || !obj.contains("k") || !obj.contains("utility")) {
            throw SchemaError("utilities line " + std::to_string(lineno) + ": missing fields");
        }
        const std::int32_t c = lookup(content_ids, obj.at("content").get<std::string>());
        if (c < 0) throw DanglingReference("utility for unknown content");
        raw.utility_records[static_cast<std::size_t>(c)].emplace_back(
            obj.at("k").get<std::int32_t>(), obj.at("utility").get<double>());
    }

    return finalize_graph(std::move(raw));
}

TemporalGraph ingest_files(const std::string& nodes_path, const std::string& edges_path,
                           const std::string& utilities_path, const IngestOptions& options) {
    std::ifstream nodes(nodes_path), edges(edges_path), utilities(utilities_path);
    if (!nodes) throw MissingArtifact("cannot open " + nodes_path);
    if (!edges) throw MissingArtifact("cannot open " + edges_path);
    if (!utilities) throw MissingArtifact("cannot open " + utilities_path);
    return ingest(nodes, edges, utilities, options);
}

// ---------------------------------------------------------------------------
// Serialization

void save_temporal_graph(const TemporalGraph& g, const std::string& path) {
    json doc;
    doc["format"] = "stratnet.graph";
    doc["version"] = 1;
    doc["authors"] = g.author_keys;
    doc["venues"] = g.venue_keys;
    json contents = json::array();
    for (std::int32_t c = 0; c < g.n_contents; ++c) {
        const auto& meta = g.content_meta[static_cast<std::size_t>(c)];
        json item;
        item["key"] = g.content_keys[static_cast<std::size_t>(c)];
        item["time"] = meta.time;
        item["venue"] = meta.venue;
        item["cited"] = meta.cited;
        item["authors"] = meta.authors;
        contents.push_back(std::move(item));
    }
    doc["contents"] = std::move(contents);
    json utils = json::array();
    for (std::int32_t c = 0; c < g.n_contents; ++c) {
        for (const auto& [k, value] : g.utilities.records(c)) {
            utils.push_back(json::array({c, k, value}));
        }
    }
    doc["utilities"] = std::move(utils);

    std::ofstream out(path);
    if (!out) throw MissingArtifact("cannot write " + path);
    out << doc.dump(1, '\t') << "\n";
}

TemporalGraph load_temporal_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("graph file parse: ") + e.what());
    }
    if (doc.value("format", "") != "stratnet.graph" || doc.value("version", 0) != 1) {
        throw SchemaError("unrecognized graph file format");
    }
    RawGraph raw;
    raw.author_keys = doc.at("authors").get<std::vector<std::string>>();
    raw.venue_keys = doc.at("venues").get<std::vector<std::string>>();
    for (const auto& item : doc.at("contents")) {
        raw.content_keys.push_back(item.at("key").get<std::string>());
        ContentMeta meta;
        meta.time = item.at("time").get<Timestamp>();
        meta.venue = item.at("venue").get<std::int32_t>();
        meta.cited = item.at("cited").get<std::vector<std::int32_t>>();
        meta.authors = item.at("authors").get<std::vector<std::int32_t>>();
        raw.content_meta.push_back(std::move(meta));
    }
    raw.utility_records.resize(raw.content_keys.size());
    for (const auto& item : doc.at("utilities")) {
        raw.utility_records[item.at(0).get<std::size_t>()].emplace_back(
            item.at(1).get<std::int32_t>(), item.at(2).get<double>());
    }
    return finalize_graph(std::move(raw));
}

// ---------------------------------------------------------------------------
// SnapshotView

SnapshotView::SnapshotView(const TemporalGraph& g, Timestamp t, const AuthorshipMask* mask)
    : g_(&g), t_(t), mask_(mask) {
    if (t < 0 || t >= g.num_snapshots()) {
        throw InvalidParameter("snapshot index out of range: " + std::to_string(t));
    }
}

std::vector<std::int32_t> SnapshotView::authors_of(std::int32_t content) const {
    const auto& meta = g_->content_meta[static_cast<std::size_t>(content)];
    if (!masked() || meta.time != t_) return meta.authors;
    std::vector<std::int32_t> out;
    for (std::int32_t a : meta.authors) {
        if (!mask_->contains(a, content)) out.push_back(a);
    }
    return out;
}

std::vector<std::int32_t> SnapshotView::contents_of(std::int32_t author) const {
    std::vector<std::int32_t> out = g_->contents_of_author_at(author, t_);
    if (!masked()) return out;
    std::erase_if(out, [&](std::int32_t c) { return mask_->contains(author, c); });
    return out;
}

std::vector<std::int32_t> SnapshotView::active_authors() const {
    const auto& snap = g_->snapshots[static_cast<std::size_t>(t_)];
    if (!masked()) return snap.active_authors;
    std::vector<std::int32_t> out;
    for (std::int32_t a : snap.active_authors) {
        if (!contents_of(a).empty()) out.push_back(a);
    }
    return out;
}

std::vector<std::int32_t> SnapshotView::new_contents() const {
    return g_->snapshots[static_cast<std::size_t>(t_)].new_contents;
}

std::vector<std::pair<std::int32_t, std::int32_t>> SnapshotView::view_edges(EdgeView view) const {
    const auto& snap = g_->snapshots[static_cast<std::size_t>(t_)];
    if (!masked() || !is_author_view(view)) {
        return snap.attribute_edges[static_cast<int>(view)];
    }
    // Re-derive author-view edges from unmasked authorship.
    std::set<std::pair<std::int32_t, std::int32_t>> edges;
    for (std::int32_t c : snap.new_contents) {
        const auto& meta = g_->content_meta[static_cast<std::size_t>(c)];
        for (std::int32_t a : authors_of(c)) {
            if (view == EdgeView::AuthorCitesAuthor) {
                for (std::int32_t cited : meta.cited) {
                    for (std::int32_t b : g_->content_meta[static_cast<std::size_t>(cited)].authors) {
                        edges.emplace(a, b);
                    }
                }
            } else if (meta.venue >= 0) {
                edges.emplace(a, meta.venue);
            }
        }
    }
    return {edges.begin(), edges.end()};
}

std::vector<std::int32_t> SnapshotView::contents_of_author_through(std::int32_t author) const {
    std::vector<std::int32_t> out = g_->contents_of_author_before(author, t_);
    for (std::int32_t c : contents_of(author)) out.push_back(c);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace stratnet
