#pragma once

namespace ddlab {

inline constexpr const char* kToolName = "ddlab";
inline constexpr const char* kVersion = "0.1.0";

}  // namespace ddlab
