#include "delt/error.hpp"

namespace delt {

std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::ingestion: return "ingestion";
    case ErrorKind::duplicate_id: return "duplicate-id";
    case ErrorKind::rejected_sample: return "rejected-sample";
    case ErrorKind::score_coverage: return "score-coverage";
    case ErrorKind::degenerate_sample: return "degenerate-sample";
    case ErrorKind::weight_domain: return "weight-domain";
    case ErrorKind::empty_eval: return "empty-eval";
    case ErrorKind::shape: return "shape";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::insufficient_proxy: return "insufficient-proxy";
    case ErrorKind::domain: return "domain";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind), detail_(message)
{}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace delt
