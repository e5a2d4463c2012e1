// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <vector>

namespace dpgm::test {

struct Moments {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
  double var = 0.0;
};

inline Moments moments(const std::vector<double>& xs) {
  Moments m;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) m.mean += x / n;
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean) / (n - 1.0);
  m.se = std::sqrt(m.var / n);
  return m;
}

}  // namespace dpgm::test
