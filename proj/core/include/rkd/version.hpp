#pragma once

namespace rkd {

inline constexpr const char* kVersion = "0.1.0";

} // namespace rkd
