#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace stablehte {

// Fixed 17-significant-digit form that round-trips a double exactly. Used for
// every number we write, so identical runs produce byte-identical files.
inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Shortest %g form that still round-trips; for labels and names where
// readability matters more than a fixed width.
inline std::string shortest_g(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace stablehte
