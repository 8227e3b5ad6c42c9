#ifndef FETAVAL_MANIFEST_HPP
#define FETAVAL_MANIFEST_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace fetaval {

enum class Domain { in_domain, out_of_domain };
enum class Pathology { normal, pathological };

inline const char* to_string(Domain d) { return d == Domain::in_domain ? "in_domain" : "out_of_domain"; }
inline const char* to_string(Pathology p) { return p == Pathology::normal ? "normal" : "pathological"; }

namespace detail {

inline std::string lowercase(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace detail

/// Institution name -> domain. Extend here when new centers join.
inline const std::map<std::string, Domain>& institution_domains() {
    static const std::map<std::string, Domain> table = {
        {"Kispi", Domain::in_domain},
        {"Vienna", Domain::in_domain},
        {"CHUV", Domain::out_of_domain},
        {"UCSF", Domain::out_of_domain},
    };
    return table;
}

inline const std::vector<std::string>& sr_methods() {
    static const std::vector<std::string> methods = {"irtk_simple", "mialsrtk", "niftymic"};
    return methods;
}

inline std::optional<std::string> parse_institution(std::string_view token) {
    const std::string lower = detail::lowercase(detail::trim(token));
    for (const auto& [inst, dom] : institution_domains()) {
        if (detail::lowercase(inst) == lower) return inst;
    }
    return std::nullopt;
}

inline std::optional<Domain> parse_domain(std::string_view token) {
    const std::string t = detail::lowercase(detail::trim(token));
    if (t == "in" || t == "in_domain" || t == "in-domain" || t == "indomain") return Domain::in_domain;
    if (t == "out" || t == "ood" || t == "out_of_domain" || t == "out-of-domain" || t == "outofdomain")
        return Domain::out_of_domain;
    return std::nullopt;
}

inline std::optional<Pathology> parse_pathology(std::string_view token) {
    const std::string t = detail::lowercase(detail::trim(token));
    if (t == "normal" || t == "neurotypical") return Pathology::normal;
    if (t == "pathological" || t == "pathology") return Pathology::pathological;
    return std::nullopt;
}

inline std::optional<std::string> parse_sr_method(std::string_view token) {
    std::string t = detail::lowercase(detail::trim(token));
    std::replace(t.begin(), t.end(), '-', '_');
    for (const auto& m : sr_methods())
        if (m == t) return m;
    return std::nullopt;
}

/// Reconstruction quality: Excellent=3, Good=2, Poor=1.
inline std::optional<int> parse_quality(std::string_view token) {
    const std::string t = detail::lowercase(detail::trim(token));
    if (t == "3" || t == "excellent") return 3;
    if (t == "2" || t == "good") return 2;
    if (t == "1" || t == "poor") return 1;
    return std::nullopt;
}

/// Median of per-rater quality scores; even-length lists take the lower
/// middle value.
inline int median_quality(std::span<const int> ratings) {
    if (ratings.empty()) fail(ErrorKind::data, "no quality ratings");
    std::vector<int> sorted(ratings.begin(), ratings.end());
    for (int r : sorted)
        if (r < 1 || r > 3) fail(ErrorKind::data, "quality rating outside 1..3");
    std::sort(sorted.begin(), sorted.end());
    return sorted[(sorted.size() - 1) / 2];
}

struct CaseMetadata {
    std::string case_id;
    std::string institution;
    Domain domain = Domain::in_domain;
    double ga_weeks = 0.0;
    Pathology pathology = Pathology::normal;
    int quality = 2;
    std::string sr_method;
};

struct GtEntry {
    std::string case_id;
    std::filesystem::path gt_path;
    CaseMetadata meta;
};

struct TeamEntry {
    std::string team_id;
    std::string case_id;
    std::filesystem::path prediction_path;
};

struct Manifest {
    std::vector<GtEntry> gt_entries;
    std::vector<TeamEntry> team_entries;

    const GtEntry* find_case(std::string_view id) const {
        for (const auto& e : gt_entries)
            if (e.case_id == id) return &e;
        return nullptr;
    }
    std::vector<std::string> team_ids() const {
        std::set<std::string> ids;
        for (const auto& t : team_entries) ids.insert(t.team_id);
        return {ids.begin(), ids.end()};
    }
};

namespace csv {

/// Splits one CSV line; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(detail::trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(detail::trim(cur));
    return fields;
}

inline std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

}  // namespace csv

inline constexpr std::string_view kGtHeader = "case_id,gt_path,institution,domain,ga_weeks,pathology,quality,sr_method";
inline constexpr std::string_view kTeamHeader = "team_id,case_id,prediction_path";

namespace detail {

inline bool is_header(const std::string& line, std::string_view header) {
    std::string compact;
    for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c))) compact.push_back(c);
    if (!compact.empty() && static_cast<unsigned char>(compact[0]) == 0xEF && compact.size() >= 3)
        compact.erase(0, 3);  // UTF-8 BOM
    return compact == header;
}

}  // namespace detail

/// Parses manifest text. The GT section starts with the GT header row; an
/// optional team section starts with the team header row, either in the same
/// stream or in a later `parse` call. Relative paths resolve against the
/// directory given for the stream they appear in.
class ManifestParser {
public:
    explicit ManifestParser(std::filesystem::path base_dir = {}) : base_(std::move(base_dir)) {}

    /// When set, relative prediction paths resolve against this directory.
    void set_prediction_root(std::filesystem::path root) { prediction_root_ = std::move(root); }

    void parse(std::istream& in, const std::string& where) { parse(in, where, base_); }

    void parse(std::istream& in, const std::string& where, const std::filesystem::path& base_dir) {
        current_base_ = base_dir;
        std::string line;
        std::size_t row = 0;
        enum { none, gt, team } section = none;
        while (std::getline(in, line)) {
            ++row;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (detail::trim(line).empty()) continue;
            if (detail::is_header(line, kGtHeader)) {
                section = gt;
                continue;
            }
            if (detail::is_header(line, kTeamHeader)) {
                section = team;
                continue;
            }
            const std::string at = where + " row " + std::to_string(row);
            if (section == none) fail(ErrorKind::manifest, at + ": expected header '" + std::string(kGtHeader) + "'");
            auto fields = csv::split_line(line);
            if (section == gt) parse_gt(fields, at);
            else parse_team(fields, at);
        }
    }

    Manifest finish() {
        for (const auto& t : manifest_.team_entries) {
            if (!manifest_.find_case(t.case_id))
                fail(ErrorKind::manifest, "team '" + t.team_id + "' references unknown case '" + t.case_id + "'");
        }
        std::set<std::pair<std::string, std::string>> pairs;
        for (const auto& t : manifest_.team_entries) {
            if (!pairs.insert({t.team_id, t.case_id}).second)
                fail(ErrorKind::manifest, "duplicate prediction for team '" + t.team_id + "' case '" + t.case_id + "'");
        }
        return manifest_;
    }

private:
    std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) const {
        std::filesystem::path path(p);
        if (path.is_relative() && !base.empty()) return base / path;
        return path;
    }
    std::filesystem::path resolve(const std::string& p) const { return resolve(p, current_base_); }

    void parse_gt(const std::vector<std::string>& f, const std::string& at) {
        if (f.size() != 8) fail(ErrorKind::manifest, at + ": expected 8 fields, got " + std::to_string(f.size()));
        GtEntry e;
        e.case_id = f[0];
        if (e.case_id.empty()) fail(ErrorKind::manifest, at + ": empty case_id");
        if (manifest_.find_case(e.case_id)) fail(ErrorKind::manifest, at + ": duplicate case_id '" + e.case_id + "'");
        e.gt_path = resolve(f[1]);
        auto inst = parse_institution(f[2]);
        if (!inst) fail(ErrorKind::manifest, at + ": unknown institution '" + f[2] + "'");
        auto dom = parse_domain(f[3]);
        if (!dom) fail(ErrorKind::manifest, at + ": unknown domain '" + f[3] + "'");
        if (institution_domains().at(*inst) != *dom)
            fail(ErrorKind::manifest, at + ": domain '" + f[3] + "' inconsistent with institution " + *inst);
        double ga = 0;
        auto [ptr, ec] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), ga);
        if (ec != std::errc() || ptr != f[4].data() + f[4].size() || !std::isfinite(ga) || ga < 0)
            fail(ErrorKind::manifest, at + ": bad ga_weeks '" + f[4] + "'");
        auto path = parse_pathology(f[5]);
        if (!path) fail(ErrorKind::manifest, at + ": unknown pathology '" + f[5] + "'");
        auto q = parse_quality(f[6]);
        if (!q) fail(ErrorKind::manifest, at + ": quality must be 1, 2 or 3, got '" + f[6] + "'");
        auto sr = parse_sr_method(f[7]);
        if (!sr) fail(ErrorKind::manifest, at + ": unknown sr_method '" + f[7] + "'");
        e.meta = {e.case_id, *inst, *dom, ga, *path, *q, *sr};
        manifest_.gt_entries.push_back(std::move(e));
    }

    void parse_team(const std::vector<std::string>& f, const std::string& at) {
        if (f.size() != 3) fail(ErrorKind::manifest, at + ": expected 3 fields, got " + std::to_string(f.size()));
        if (f[0].empty() || f[1].empty()) fail(ErrorKind::manifest, at + ": empty team_id or case_id");
        manifest_.team_entries.push_back({f[0], f[1], resolve(f[2], prediction_root_.empty() ? current_base_ : prediction_root_)});
    }

    std::filesystem::path base_;
    std::filesystem::path current_base_;
    std::filesystem::path prediction_root_;
    Manifest manifest_;
};

inline Manifest load_manifest(const std::filesystem::path& path,
                              const std::optional<std::filesystem::path>& teams_path = std::nullopt,
                              const std::optional<std::filesystem::path>& prediction_root = std::nullopt) {
    ManifestParser parser(path.parent_path());
    if (prediction_root) parser.set_prediction_root(*prediction_root);
    {
        std::ifstream in(path);
        if (!in) fail(ErrorKind::io, "cannot open manifest '" + path.string() + "'");
        parser.parse(in, path.string());
    }
    if (teams_path) {
        std::ifstream in(*teams_path);
        if (!in) fail(ErrorKind::io, "cannot open team manifest '" + teams_path->string() + "'");
        parser.parse(in, teams_path->string(), teams_path->parent_path());
    }
    return parser.finish();
}

}  // namespace fetaval

#endif  // FETAVAL_MANIFEST_HPP
