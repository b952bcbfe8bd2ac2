#pragma once

namespace sfp {

inline constexpr const char* kVersion = "0.1.0";

} // namespace sfp
