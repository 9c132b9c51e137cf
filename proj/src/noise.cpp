#include <algorithm>
#include <cmath>
#include <vector>

#include "shiftbench/estimators.hpp"

namespace shiftbench {

namespace {

double median(std::vector<double>& v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

}  // namespace

double estimateNoiseVariance(std::span<const PixelGrid> frames) {
  std::vector<double> diffs;
  for (const auto& f : frames) {
    requireValidGrid(f, "estimateNoiseVariance");
    for (Eigen::Index r = 0; r + 1 < f.rows(); ++r) {
      for (Eigen::Index c = 0; c + 1 < f.cols(); ++c) diffs.push_back(f(r, c) - f(r + 1, c + 1));
    }
  }
  if (diffs.empty()) throw InvalidInput("estimateNoiseVariance: no frames");
  const double centre = median(diffs);
  for (double& d : diffs) d = std::abs(d - centre);
  // A diagonal difference of white noise has variance 2 sigma^2.
  const double sigma = 1.4826 * median(diffs) / std::sqrt(2.0);
  return sigma * sigma;
}

}  // namespace shiftbench
