#pragma once

namespace latalign {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace latalign
