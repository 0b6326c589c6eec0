#pragma once

namespace ambical {

inline constexpr const char* kVersion = "0.1.0";

// Bumped when the serialized layout changes incompatibly.
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

}  // namespace ambical
