#include "stratnet/types.hpp"

#include <cmath>
#include <sstream>

namespace stratnet {

const char* to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::Author: return "author";
        case NodeKind::Content: return "content";
        case NodeKind::Venue: return "venue";
    }
    return "?";
}

const char* to_string(EdgeView view) {
    switch (view) {
        case EdgeView::ContentCitesContent: return "content_cites_content";
        case EdgeView::AuthorCitesAuthor: return "author_cites_author";
        case EdgeView::ContentAtVenue: return "content_at_venue";
        case EdgeView::AuthorAtVenue: return "author_at_venue";
    }
    return "?";
}

const char* to_string(SpaceGroup group) {
    return group == SpaceGroup::Citation ? "citation" : "venue";
}

namespace {
std::string join_problems(const std::vector<std::string>& problems) {
    std::ostringstream os;
    os << "config invalid (" << problems.size() << " problem(s)):";
    for (const auto& p : problems) {
        os << "\n  - " << p;
    }
    return os.str();
}
}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems_in)
    : Error(join_problems(problems_in)), problems(std::move(problems_in)) {}

bool is_valid_distribution(const Eigen::Ref<const Eigen::VectorXd>& d, double tol) {
    if (d.size() == 0) return false;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double x = d[i];
        if (!std::isfinite(x) || x < 0.0) return false;
        sum += x;
    }
    return std::abs(sum - 1.0) <= tol;
}

double total_variation(const Eigen::Ref<const Eigen::VectorXd>& p,
                       const Eigen::Ref<const Eigen::VectorXd>& q) {
    if (p.size() != q.size()) {
        throw LengthMismatch("total_variation: size mismatch");
    }
    return 0.5 * (p - q).cwiseAbs().sum();
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& purpose) {
    return mix64(master ^ fnv1a64(purpose));
}

}  // namespace stratnet
