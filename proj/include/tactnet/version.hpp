#pragma once

namespace tactnet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tactnet
