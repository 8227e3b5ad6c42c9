#ifndef FETAVAL_ERROR_HPP
#define FETAVAL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace fetaval {

enum class ErrorKind {
    usage,
    format,
    data,
    alphabet,
    manifest,
    shape,
    empty_mask,
    topology,
    policy,
    subset,
    ranking,
    stability,
    report,
    phantom,
    io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return "usage error";
        case ErrorKind::format: return "format error";
        case ErrorKind::data: return "data error";
        case ErrorKind::alphabet: return "alphabet error";
        case ErrorKind::manifest: return "manifest error";
        case ErrorKind::shape: return "shape error";
        case ErrorKind::empty_mask: return "empty-mask error";
        case ErrorKind::topology: return "topology error";
        case ErrorKind::policy: return "policy error";
        case ErrorKind::subset: return "subset error";
        case ErrorKind::ranking: return "ranking error";
        case ErrorKind::stability: return "stability error";
        case ErrorKind::report: return "report error";
        case ErrorKind::phantom: return "phantom error";
        case ErrorKind::io: return "io error";
    }
    return "error";
}

/// Every failure raised by the library carries a kind so the CLI can map it
/// to an exit code without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// 1 usage, 2 data, 3 internal invariant violation.
    int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::usage: return 1;
            case ErrorKind::topology: return 3;
            default: return 2;
        }
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace fetaval

#endif  // FETAVAL_ERROR_HPP
