#pragma once

namespace pdwols {
inline constexpr const char* kVersion = "0.1.0";
}
