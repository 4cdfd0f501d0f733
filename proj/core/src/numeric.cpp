#include "relbias/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "relbias/error.hpp"

namespace relbias {

double logsumexp(std::span<const double> x) {
  if (x.empty()) throw Error("logsumexp of empty sequence");
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) {
    // All -inf collapses to -inf; +inf or NaN propagates.
    return m;
  }
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - m);
  return m + std::log(sum);
}

std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) throw Error("softmax of empty sequence");
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> x) {
  const double lse = logsumexp(x);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

int argmax_tie_lowest(std::span<const double> x) {
  if (x.empty()) throw Error("argmax of empty sequence");
  int best = 0;
  for (size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[static_cast<size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("l1_distance: length mismatch");
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d += std::fabs(a[i] - b[i]);
  return d;
}

double linf_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("linf_distance: length mismatch");
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

bool all_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace relbias
