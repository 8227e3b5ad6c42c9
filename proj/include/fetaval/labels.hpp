#ifndef FETAVAL_LABELS_HPP
#define FETAVAL_LABELS_HPP

#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "error.hpp"

namespace fetaval {

/// Tissue codes follow the listing order of the FeTA label maps.
enum class Tissue : std::uint8_t {
    background = 0,
    ecsf = 1,
    gm = 2,
    wm = 3,
    ventricles = 4,
    cerebellum = 5,
    deep_gm = 6,
    brainstem = 7,
};

inline constexpr int kLabelCount = 8;   // including background
inline constexpr int kTissueCount = 7;  // scored classes

inline constexpr std::array<Tissue, kTissueCount> kTissues = {
    Tissue::ecsf,       Tissue::gm,      Tissue::wm,        Tissue::ventricles,
    Tissue::cerebellum, Tissue::deep_gm, Tissue::brainstem,
};

inline constexpr std::array<std::string_view, kLabelCount> kTissueNames = {
    "background", "eCSF", "GM", "WM", "ventricles", "cerebellum", "deepGM", "brainstem",
};

constexpr int code(Tissue t) { return static_cast<int>(t); }

constexpr std::string_view name(Tissue t) { return kTissueNames[static_cast<std::size_t>(t)]; }

constexpr bool is_scored(Tissue t) { return t != Tissue::background; }

inline std::optional<Tissue> tissue_from_code(int c) {
    if (c < 0 || c >= kLabelCount) return std::nullopt;
    return static_cast<Tissue>(c);
}

/// Accepts canonical names case-insensitively, a few common aliases, or the
/// numeric code.
inline std::optional<Tissue> parse_tissue(std::string_view token) {
    std::string lower;
    for (char ch : token) {
        if (ch == '_' || ch == '-' || ch == ' ') continue;
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    if (lower.empty()) return std::nullopt;
    if (std::isdigit(static_cast<unsigned char>(lower[0]))) {
        if (lower.size() != 1) return std::nullopt;
        return tissue_from_code(lower[0] - '0');
    }
    for (int c = 0; c < kLabelCount; ++c) {
        std::string canon;
        for (char ch : kTissueNames[static_cast<std::size_t>(c)])
            canon.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        if (canon == lower) return static_cast<Tissue>(c);
    }
    if (lower == "csf" || lower == "externalcsf") return Tissue::ecsf;
    if (lower == "dgm" || lower == "deepgreymatter") return Tissue::deep_gm;
    if (lower == "greymatter" || lower == "graymatter") return Tissue::gm;
    if (lower == "whitematter") return Tissue::wm;
    if (lower == "bg") return Tissue::background;
    return std::nullopt;
}

inline Tissue require_tissue(std::string_view token) {
    auto t = parse_tissue(token);
    if (!t) fail(ErrorKind::usage, "unknown tissue '" + std::string(token) + "'");
    return *t;
}

}  // namespace fetaval

#endif  // FETAVAL_LABELS_HPP
