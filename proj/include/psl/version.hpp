#pragma once

namespace psl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace psl
