#include "gevbf/error.hpp"

namespace gevbf {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kShape: return "shape-error";
    case ErrorKind::kSignalTooShort: return "signal-too-short";
    case ErrorKind::kSingularCovariance: return "singular-covariance";
    case ErrorKind::kDegenerateMask: return "degenerate-mask";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kState: return "state-error";
    case ErrorKind::kFreezeViolation: return "freeze-violation";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kIo: return "io-error";
    case ErrorKind::kParse: return "parse-error";
    case ErrorKind::kNotImplemented: return "not-implemented";
  }
  return "unknown";
}

}  // namespace gevbf
