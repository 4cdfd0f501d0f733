#pragma once

#include <span>
#include <vector>

#include "relbias/types.hpp"

namespace relbias::adjust {

/// Everything needed to retarget one branch's logits: the prior its
/// training implies, the prior the evaluation target assumes, and the
/// temperature applied before softmax.
struct AdjustmentSpec {
  PriorDistribution train_prior;
  PriorDistribution target_prior;
  double tau = 1.0;

  int k() const { return train_prior.k(); }
  void validate() const;
};

/// o(r) - log P_train(r) + log P_target(r), per class.
std::vector<double> adjust_logits(std::span<const double> logits,
                                  const AdjustmentSpec& spec);

/// softmax(adjusted / tau) with max-subtraction.
std::vector<double> calibrated_probs(std::span<const double> adjusted,
                                     double tau);

struct TauGrid {
  double lo = 0.1;
  double hi = 10.0;
  int points = 50;

  std::vector<double> values() const;  // log-spaced, ascending
};

enum class Branch { zs, sg };

/// Grid search for the temperature minimizing mean negative log-likelihood
/// of the adjusted, calibrated probabilities at the ground-truth labels.
/// Ties resolve to the smaller temperature.
double fit_tau(const Dataset& ds, Branch branch, const AdjustmentSpec& spec,
               const TauGrid& grid = {});

/// The k relation logits of the chosen branch (for sg, background dropped).
std::vector<double> branch_logits(const RelationSample& sample, Branch branch);

}  // namespace relbias::adjust
