#pragma once

namespace slgan {
inline constexpr const char* kVersion = "0.1.0";
}
