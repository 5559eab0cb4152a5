#include "rsim/random.hpp"

namespace rsim {

std::vector<bool> SharedRandomness::bits(DrawKind kind, std::uint64_t index, unsigned width) const {
  std::vector<bool> out(width);
  std::uint64_t w = 0;
  for (unsigned i = 0; i < width; ++i) {
    if (i % 64 == 0) w = word(kind, index, i / 64);
    out[i] = (w >> (i % 64)) & 1U;
  }
  return out;
}

}  // namespace rsim
