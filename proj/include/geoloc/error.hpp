#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geoloc {

enum class ErrorCode {
  kOutOfBand,             // latitude outside the UTM band or result off the band
  kDomain,                // UTM coordinate outside its valid range
  kProjectionDistortion,  // point too far from a pinned zone
  kShape,
  kRank,
  kTape,
  kKey,
  kEmptyInput,
  kConfig,
  kIncompleteSample,
  kInsufficientData,
  kParse,
  kDivergence,
  kAlignment,
  kSize,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library. The code drives CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace geoloc
