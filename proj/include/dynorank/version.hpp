#pragma once

namespace dynorank {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dynorank
