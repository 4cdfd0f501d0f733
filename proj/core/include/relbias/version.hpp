#pragma once

namespace relbias {

inline constexpr const char* kToolName = "relbias";
inline constexpr const char* kToolVersion = "0.1.0";

inline const char* tool_ident() { return "relbias/0.1.0"; }

}  // namespace relbias
