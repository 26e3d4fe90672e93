#pragma once

#include <cstdint>

namespace bca::detail {

extern const std::uint16_t kEdgeTable[256];
extern const std::int8_t kTriTable[256][16];

}  // namespace bca::detail
