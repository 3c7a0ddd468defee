// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef IMLKD_CSV_HPP
#define IMLKD_CSV_HPP

#include <cstdio>
#include <string>

namespace imlkd {

// Shortest form that round-trips a double exactly.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace imlkd

#endif  // IMLKD_CSV_HPP
