#pragma once

namespace evo {

inline constexpr const char* kToolName = "evomeasure";
inline constexpr const char* kToolVersion = "0.1.0";

} // namespace evo
