#include "cocole/error.hpp"

namespace cocole {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::kDimension: return "dimension_error";
        case ErrorKind::kDomain: return "domain_error";
        case ErrorKind::kDegenerateInput: return "degenerate_input";
        case ErrorKind::kContract: return "contract_error";
        case ErrorKind::kNonFinite: return "non_finite";
        case ErrorKind::kConfig: return "config_error";
        case ErrorKind::kCorruptFile: return "corrupt_file";
        case ErrorKind::kVersionMismatch: return "version_mismatch";
        case ErrorKind::kMissingArtifact: return "missing_artifact";
        case ErrorKind::kIo: return "io_error";
    }
    return "unknown_error";
}

}  // namespace cocole
