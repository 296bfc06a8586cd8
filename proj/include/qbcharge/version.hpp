#pragma once

namespace qbcharge {

inline constexpr const char* kVersion = "0.1.0";

} // namespace qbcharge
