#pragma once

namespace letflab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace letflab
