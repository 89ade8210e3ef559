#pragma once

namespace proxtail {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace proxtail
