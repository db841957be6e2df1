// SPDX-License-Identifier: Apache-2.0
#include "rfscope/rng.hpp"

namespace rfscope {

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace rfscope
