#ifndef FETAVAL_RUN_IO_HPP
#define FETAVAL_RUN_IO_HPP

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "engine.hpp"
#include "error.hpp"
#include "manifest.hpp"

namespace fetaval {

#ifndef FETAVAL_VERSION
#define FETAVAL_VERSION "1.0.0"
#endif

inline constexpr const char* kToolVersion = FETAVAL_VERSION;
inline constexpr const char* kRunFormat = "fetaval-run/1";

inline std::string format_number(double v, int precision, char conv = 'g') {
    char fmt[8] = {'%', '.', '*', conv, 0};
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, precision, v);
    std::string s = buf;
    if (!s.empty() && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string config_hash(const EvaluationConfig& cfg, const PenaltyPolicy& policy) {
    std::ostringstream s;
    s << "hd_percentile=" << format_number(cfg.hd_percentile, 17) << ";connectivity=" << static_cast<int>(cfg.connectivity)
      << ";penalty_scope=" << to_string(policy.hd95_scope) << ";min_penalty=" << format_number(policy.min_penalty, 17);
    if (policy.fallback_hd95) s << ";fallback_hd95=" << format_number(*policy.fallback_hd95, 17);
    if (policy.fallback_bne) s << ";fallback_bne=" << format_number(*policy.fallback_bne, 17);
    for (Tissue t : kTissues) {
        const auto& b = cfg.expected[t];
        s << ";expected_" << code(t) << '=' << b.b0 << ',' << b.b1 << ',' << b.b2;
    }
    return fnv1a_hex(s.str());
}

inline constexpr const char* kRecordsHeader = "team_id,case_id,tissue,dsc,hd95_mm,vs,b0,b1,b2,bne0,bne1,bne2,flags";

inline void write_records_csv(std::ostream& out, const std::vector<MetricRecord>& records) {
    out << kRecordsHeader << '\n';
    for (const auto& r : records) {
        out << csv::escape(r.team_id) << ',' << csv::escape(r.case_id) << ',' << name(r.tissue) << ','
            << format_number(r.dsc, 6) << ',' << (r.hd95_mm ? format_number(*r.hd95_mm, 6) : "") << ','
            << format_number(r.vs, 6) << ',';
        if (r.betti) out << r.betti->b0 << ',' << r.betti->b1 << ',' << r.betti->b2 << ',';
        else out << ",,,";
        if (r.bne) out << format_number(r.bne->e0, 6) << ',' << format_number(r.bne->e1, 6) << ',' << format_number(r.bne->e2, 6) << ',';
        else out << ",,,";
        out << r.flags.to_string() << '\n';
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
    f << text;
    if (!f) fail(ErrorKind::io, "failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot read '" + path.string() + "'");
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

inline nlohmann::ordered_json to_json(const CaseMetadata& m) {
    return {{"case_id", m.case_id},     {"institution", m.institution},       {"domain", to_string(m.domain)},
            {"ga_weeks", m.ga_weeks},   {"pathology", to_string(m.pathology)}, {"quality", m.quality},
            {"sr_method", m.sr_method}};
}

inline nlohmann::ordered_json to_json(const MetricRecord& r) {
    nlohmann::ordered_json j;
    j["team_id"] = r.team_id;
    j["case_id"] = r.case_id;
    j["tissue"] = name(r.tissue);
    j["dsc"] = r.dsc;
    j["hd95_mm"] = r.hd95_mm ? nlohmann::ordered_json(*r.hd95_mm) : nlohmann::ordered_json(nullptr);
    j["vs"] = r.vs;
    j["betti"] = r.betti ? nlohmann::ordered_json::array({r.betti->b0, r.betti->b1, r.betti->b2})
                         : nlohmann::ordered_json(nullptr);
    j["bne"] = r.bne ? nlohmann::ordered_json::array({r.bne->e0, r.bne->e1, r.bne->e2}) : nlohmann::ordered_json(nullptr);
    j["flags"] = r.flags.to_string();
    return j;
}

inline nlohmann::ordered_json run_to_json(const EvaluationRun& run) {
    nlohmann::ordered_json j;
    j["format"] = kRunFormat;
    j["tool_version"] = run.provenance.tool_version;
    j["config_hash"] = run.provenance.config_hash;
    j["config"] = {{"hd_percentile", run.config.hd_percentile},
                   {"connectivity", static_cast<int>(run.config.connectivity)},
                   {"penalty_scope", run.provenance.penalty_scope}};
    nlohmann::ordered_json expected = nlohmann::ordered_json::object();
    for (Tissue t : kTissues) {
        const auto& b = run.config.expected[t];
        expected[std::string(name(t))] = {b.b0, b.b1, b.b2};
    }
    j["config"]["expected_topology"] = expected;
    j["teams"] = run.teams;
    j["cases"] = nlohmann::ordered_json::array();
    for (const auto& c : run.cases) j["cases"].push_back(to_json(c));
    j["records"] = nlohmann::ordered_json::array();
    for (const auto& r : run.records) j["records"].push_back(to_json(r));
    return j;
}

inline EvaluationRun run_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kRunFormat)
            fail(ErrorKind::format, "unsupported run format '" + j.at("format").get<std::string>() + "'");
        EvaluationRun run;
        run.provenance.tool_version = j.at("tool_version").get<std::string>();
        run.provenance.config_hash = j.at("config_hash").get<std::string>();
        const auto& cfg = j.at("config");
        run.config.hd_percentile = cfg.at("hd_percentile").get<double>();
        run.config.connectivity = connectivity_from_int(cfg.at("connectivity").get<int>());
        run.provenance.penalty_scope = cfg.at("penalty_scope").get<std::string>();
        for (const auto& [k, v] : cfg.at("expected_topology").items()) {
            auto t = parse_tissue(k);
            if (!t || !is_scored(*t)) fail(ErrorKind::format, "unknown tissue '" + k + "' in expected topology");
            run.config.expected.per_label[static_cast<std::size_t>(code(*t))] =
                BettiTriple{v.at(0).get<std::int64_t>(), v.at(1).get<std::int64_t>(), v.at(2).get<std::int64_t>()};
        }
        run.teams = j.at("teams").get<std::vector<std::string>>();
        for (const auto& c : j.at("cases")) {
            CaseMetadata m;
            m.case_id = c.at("case_id").get<std::string>();
            m.institution = c.at("institution").get<std::string>();
            auto d = parse_domain(c.at("domain").get<std::string>());
            auto p = parse_pathology(c.at("pathology").get<std::string>());
            if (!d || !p) fail(ErrorKind::format, "bad metadata for case '" + m.case_id + "'");
            m.domain = *d;
            m.pathology = *p;
            m.ga_weeks = c.at("ga_weeks").get<double>();
            m.quality = c.at("quality").get<int>();
            m.sr_method = c.at("sr_method").get<std::string>();
            run.cases.push_back(std::move(m));
        }
        for (const auto& r : j.at("records")) {
            MetricRecord rec;
            rec.team_id = r.at("team_id").get<std::string>();
            rec.case_id = r.at("case_id").get<std::string>();
            auto t = parse_tissue(r.at("tissue").get<std::string>());
            if (!t || !is_scored(*t)) fail(ErrorKind::format, "bad tissue in record");
            rec.tissue = *t;
            rec.dsc = r.at("dsc").get<double>();
            if (!r.at("hd95_mm").is_null()) rec.hd95_mm = r.at("hd95_mm").get<double>();
            rec.vs = r.at("vs").get<double>();
            if (const auto& b = r.at("betti"); !b.is_null())
                rec.betti = BettiTriple{b.at(0).get<std::int64_t>(), b.at(1).get<std::int64_t>(), b.at(2).get<std::int64_t>()};
            if (const auto& b = r.at("bne"); !b.is_null())
                rec.bne = BneTriple{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>()};
            rec.flags = RecordFlags::parse(r.at("flags").get<std::string>());
            run.records.push_back(std::move(rec));
        }
        return run;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("malformed run file: ") + e.what());
    }
}

inline void save_run(const std::filesystem::path& path, const EvaluationRun& run) {
    write_text_file(path, run_to_json(run).dump(2) + "\n");
}

inline EvaluationRun load_run(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return run_from_json(j);
}

}  // namespace fetaval

#endif  // FETAVAL_RUN_IO_HPP
