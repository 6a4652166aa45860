#pragma once

#include <cstdio>
#include <string>

namespace mmfuse {

// Shortest exact round-trip formatting for doubles in reports and data files.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

}  // namespace mmfuse
