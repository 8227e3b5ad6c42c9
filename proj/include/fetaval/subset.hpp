#ifndef FETAVAL_SUBSET_HPP
#define FETAVAL_SUBSET_HPP

#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "labels.hpp"
#include "manifest.hpp"

namespace fetaval {

/// Conjunction of optional predicates over case metadata and tissue. An
/// empty filter selects everything.
struct SubsetFilter {
    std::set<std::string> institutions;
    std::optional<Domain> domain;
    std::optional<Pathology> pathology;
    std::optional<int> quality;
    std::optional<std::string> sr_method;
    std::set<Tissue> tissues;

    bool selects_case(const CaseMetadata& m) const {
        if (!institutions.empty() && !institutions.count(m.institution)) return false;
        if (domain && m.domain != *domain) return false;
        if (pathology && m.pathology != *pathology) return false;
        if (quality && m.quality != *quality) return false;
        if (sr_method && m.sr_method != *sr_method) return false;
        return true;
    }
    bool selects_tissue(Tissue t) const { return tissues.empty() || tissues.count(t) > 0; }
    bool selects(const CaseMetadata& m, Tissue t) const { return selects_case(m) && selects_tissue(t); }

    bool empty() const {
        return institutions.empty() && !domain && !pathology && !quality && !sr_method && tissues.empty();
    }

    /// Canonical description, e.g. "domain=out_of_domain;tissue=GM". "all"
    /// for the empty filter.
    std::string describe() const {
        std::vector<std::string> parts;
        if (!institutions.empty()) {
            std::string s = "institution=";
            bool first = true;
            for (const auto& i : institutions) {
                s += (first ? "" : ",") + i;
                first = false;
            }
            parts.push_back(s);
        }
        if (domain) parts.push_back(std::string("domain=") + to_string(*domain));
        if (pathology) parts.push_back(std::string("pathology=") + to_string(*pathology));
        if (quality) parts.push_back("quality=" + std::to_string(*quality));
        if (sr_method) parts.push_back("sr_method=" + *sr_method);
        if (!tissues.empty()) {
            std::string s = "tissue=";
            bool first = true;
            for (Tissue t : tissues) {
                s += (first ? "" : ",") + std::string(name(t));
                first = false;
            }
            parts.push_back(s);
        }
        if (parts.empty()) return "all";
        std::string out;
        for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ";" : "") + parts[i];
        return out;
    }

    /// File-name friendly version of describe().
    std::string slug() const {
        std::string s = describe();
        for (char& c : s) {
            if (c == '=') c = '-';
            else if (c == ';') c = '_';
            else if (c == ',') c = '+';
        }
        return s;
    }
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace detail

/// Adds one "key=value" predicate (comma-separated values for institution
/// and tissue). Keys: institution, domain, pathology, quality, sr_method,
/// tissue.
inline void add_predicate(SubsetFilter& f, std::string_view expr) {
    const auto eq = expr.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::usage, "subset predicate must be key=value: '" + std::string(expr) + "'");
    const std::string key = detail::lowercase(detail::trim(expr.substr(0, eq)));
    const std::string value = detail::trim(expr.substr(eq + 1));
    auto bad = [&]() { fail(ErrorKind::usage, "bad value '" + value + "' for subset key '" + key + "'"); };
    if (key == "institution") {
        for (const auto& v : detail::split(value, ',')) {
            auto inst = parse_institution(v);
            if (!inst) bad();
            f.institutions.insert(*inst);
        }
    } else if (key == "domain") {
        auto d = parse_domain(value);
        if (!d) bad();
        f.domain = *d;
    } else if (key == "pathology") {
        auto p = parse_pathology(value);
        if (!p) bad();
        f.pathology = *p;
    } else if (key == "quality") {
        auto q = parse_quality(value);
        if (!q) bad();
        f.quality = *q;
    } else if (key == "sr_method" || key == "sr") {
        auto m = parse_sr_method(value);
        if (!m) bad();
        f.sr_method = *m;
    } else if (key == "tissue" || key == "label") {
        for (const auto& v : detail::split(value, ',')) {
            auto t = parse_tissue(v);
            if (!t || !is_scored(*t)) bad();
            f.tissues.insert(*t);
        }
    } else {
        fail(ErrorKind::usage, "unknown subset key '" + key + "'");
    }
}

inline SubsetFilter parse_subset(std::string_view spec) {
    SubsetFilter f;
    if (detail::trim(spec).empty() || detail::trim(spec) == "all") return f;
    for (const auto& part : detail::split(spec, ';'))
        if (!part.empty()) add_predicate(f, part);
    return f;
}

}  // namespace fetaval

#endif  // FETAVAL_SUBSET_HPP
