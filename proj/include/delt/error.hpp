#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace delt {

enum class ErrorKind {
    ingestion,
    duplicate_id,
    rejected_sample,
    score_coverage,
    degenerate_sample,
    weight_domain,
    empty_eval,
    shape,
    divergence,
    insufficient_proxy,
    domain,
    io,
    format,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the
/// CLI) can map it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace delt
