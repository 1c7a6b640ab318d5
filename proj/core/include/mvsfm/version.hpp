#pragma once

namespace mvsfm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mvsfm
