#pragma once

namespace nucleval {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nucleval
