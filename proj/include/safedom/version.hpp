#pragma once

namespace safedom {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace safedom
