#include "extc/common/error.hpp"

namespace extc {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kInvalidInput: return "invalid-input";
    case Errc::kIncompleteCache: return "incomplete-cache";
    case Errc::kTooLarge: return "too-large";
    case Errc::kBackend: return "backend-error";
    case Errc::kProtocol: return "protocol-error";
    case Errc::kMissingPlaceholder: return "missing-placeholder";
    case Errc::kUnscoreable: return "unscoreable";
    case Errc::kEmptyGradient: return "empty-gradient";
    case Errc::kUnbalanceable: return "unbalanceable";
    case Errc::kUnbatchable: return "unbatchable";
    case Errc::kEmptyTaxonomy: return "empty-taxonomy";
    case Errc::kFile: return "file-error";
    case Errc::kConfig: return "config-error";
  }
  return "unknown";
}

}  // namespace extc
