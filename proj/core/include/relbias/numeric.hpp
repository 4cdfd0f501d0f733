#pragma once

#include <span>
#include <vector>

namespace relbias {

/// log(sum(exp(x))) with max-subtraction.
double logsumexp(std::span<const double> x);

/// Softmax with max-subtraction; output sums to 1 exactly up to rounding.
std::vector<double> softmax(std::span<const double> x);

/// Elementwise x - logsumexp(x).
std::vector<double> log_softmax(std::span<const double> x);

/// Numerically stable logistic function.
double sigmoid(double x);

/// Index of the largest entry; ties resolve to the lowest index.
int argmax_tie_lowest(std::span<const double> x);

double l1_distance(std::span<const double> a, std::span<const double> b);
double linf_distance(std::span<const double> a, std::span<const double> b);

bool all_finite(std::span<const double> x);

}  // namespace relbias
