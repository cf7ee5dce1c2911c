#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "advicl/errors.hpp"
#include "advicl/stochastics.hpp"

namespace advicl {

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DegenerateInput("pearson needs two equal-length samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("pearson of a constant sample");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct CorrelationReport {
  double pcc = 0.0;
  double p_value = 1.0;
  int n_points = 0;
  std::string method = "permutation(10000)";
};

/// Pearson correlation with a two-sided permutation p-value,
/// (1 + #{|r_perm| >= |r_obs|}) / (permutations + 1).
inline CorrelationReport permutation_correlation(std::span<const double> x, std::span<const double> y,
                                                 const RngStream& stream, int permutations = 10000) {
  if (x.size() < 3) throw DegenerateInput("correlation needs at least 3 points");
  CorrelationReport rep;
  rep.n_points = static_cast<int>(x.size());
  rep.pcc = pearson(x, y);
  rep.method = "permutation(" + std::to_string(permutations) + ")";
  auto eng = stream.engine();
  std::vector<double> perm(y.begin(), y.end());
  const double thresh = std::abs(rep.pcc) * (1.0 - 1e-12);
  long hits = 0;
  for (int k = 0; k < permutations; ++k) {
    std::shuffle(perm.begin(), perm.end(), eng);
    if (std::abs(pearson(x, perm)) >= thresh) ++hits;
  }
  rep.p_value = static_cast<double>(hits + 1) / static_cast<double>(permutations + 1);
  return rep;
}

}  // namespace advicl
