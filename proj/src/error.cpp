#include "geoloc/error.hpp"

namespace geoloc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOutOfBand: return "out-of-band";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kProjectionDistortion: return "projection-distortion";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kRank: return "rank";
    case ErrorCode::kTape: return "tape";
    case ErrorCode::kKey: return "key";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIncompleteSample: return "incomplete-sample";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kAlignment: return "alignment";
    case ErrorCode::kSize: return "size";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace geoloc
