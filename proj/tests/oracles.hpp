/* Copyright 2026 The cmfkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Brute-force reference implementations. Written from the definitions, with
// no shared code paths with the library.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline int nature(double cmf) { return cmf < 1.0 ? -1 : (cmf > 1.0 ? 1 : 0); }

inline double spsf(double a, double b) {
  const double delta = a > b ? a - b : b - a;
  const double regular = std::cos(std::numbers::pi * delta / 2.0);
  const double s = nature(a) * nature(b) * delta;
  if (s > -1.0 && s < 0.0) return regular * (delta - 1.0) * (delta - 1.0);
  return regular;
}

// rows: (category or nullopt for missing, cmf). Missing cells form their own
// category named `missing_token`.
inline double target_encoding(const std::vector<std::pair<std::optional<std::string>, double>>& rows,
                              const std::string& category, double l,
                              const std::string& missing_token = "<MISSING>") {
  long double total = 0;
  long double cat_sum = 0;
  long n = 0;
  for (const auto& [c, y] : rows) {
    total += y;
    const std::string key = c ? *c : missing_token;
    if (key == category) {
      cat_sum += y;
      ++n;
    }
  }
  const long double global = total / static_cast<long double>(rows.size());
  if (n == 0) return static_cast<double>(global);
  const long double lambda = static_cast<long double>(n) / (n + l);
  return static_cast<double>(lambda * (cat_sum / n) + (1 - lambda) * global);
}

inline double mae(const std::vector<double>& y, const std::vector<double>& p) {
  long double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(static_cast<long double>(y[i]) - p[i]);
  return static_cast<double>(s / y.size());
}

inline double rmse(const std::vector<double>& y, const std::vector<double>& p) {
  long double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const long double d = static_cast<long double>(y[i]) - p[i];
    s += d * d;
  }
  return static_cast<double>(std::sqrt(s / y.size()));
}

inline double cr(const std::vector<double>& y, const std::vector<double>& p) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool same = (y[i] >= 1.0 && p[i] >= 1.0) || (y[i] <= 1.0 && p[i] <= 1.0);
    if (same) ++hits;
  }
  return static_cast<double>(hits) / y.size();
}

inline double pop(const std::vector<double>& y, const std::vector<double>& p) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::fabs(y[i] - p[i]) < 0.05) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / y.size();
}

}  // namespace oracle
