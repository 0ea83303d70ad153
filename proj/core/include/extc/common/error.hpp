#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace extc {

/// Error classes surfaced by the library. The CLI maps each to its own exit
/// status, so new values must be appended, never reordered.
enum class Errc {
  kInvalidInput,
  kIncompleteCache,
  kTooLarge,
  kBackend,
  kProtocol,
  kMissingPlaceholder,
  kUnscoreable,
  kEmptyGradient,
  kUnbalanceable,
  kUnbatchable,
  kEmptyTaxonomy,
  kFile,
  kConfig,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(Errc::kInvalidInput, message);
}

}  // namespace extc
