#include "cpgnn/binary_io.hpp"

#include <cstdio>

namespace cpgnn {

std::string hex_digest(std::uint64_t d) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(d));
  return buf;
}

}  // namespace cpgnn
