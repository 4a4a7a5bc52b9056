#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace upho {

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Fixed-point text with `decimals` places ("60.8").
inline std::string format_fixed(double v, int decimals = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string out = buf;
  if (out == "-0.0" || out == "-0") out.erase(0, 1);
  return out;
}

}  // namespace upho
