#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relbias/types.hpp"

namespace relbias::priors {

struct SolverConfig {
  int max_iters = 2000;
  double learning_rate = 0.1;
  double grad_tol = 1e-6;
  uint64_t seed = 0;
  enum class Init { uniform, counted } init = Init::uniform;

  void validate() const;
  /// Canonical string used for cache keys.
  std::string canonical() const;
};

struct SolverTrace {
  int iterations_run = 0;
  std::vector<double> loss_history;  // one entry per evaluated iterate
  double final_grad_norm = 0.0;
  bool converged = false;

  double final_loss() const {
    return loss_history.empty() ? 0.0 : loss_history.back();
  }
};

/// Empirical class distribution of a non-background dataset, floored and
/// renormalized.
PriorDistribution count_prior(const Dataset& ds);

struct EstimateResult {
  PriorDistribution prior;
  SolverTrace trace;
};

/// Recovers the training prior implied by the zs branch: finds the
/// distribution pi that minimizes the mean cross-entropy of
/// softmax(zs_logits - log pi + log pi_sg) against the ground-truth labels.
/// The simplex constraint is enforced by optimizing pi = softmax(theta)
/// with deterministic full-batch gradient descent, so every iterate is
/// feasible by construction. Non-convergence within max_iters is reported
/// through the trace, not thrown.
EstimateResult estimate_prior(const Dataset& ds, const PriorDistribution& pi_sg,
                              const SolverConfig& cfg);

/// Mean cross-entropy of the adjusted zs posterior at `candidate`, the
/// objective estimate_prior minimizes. Exposed so callers can re-check a
/// returned estimate against the recorded final loss.
double adjusted_cross_entropy(const Dataset& ds,
                              const PriorDistribution& candidate,
                              const PriorDistribution& pi_sg);

enum class TargetMode { uniform, training, file };

const char* to_string(TargetMode m);
TargetMode target_mode_from_string(const std::string& s);

/// Resolves the evaluation-target distribution. `training` returns the
/// supplied counted prior; `file` loads and validates `path`.
PriorDistribution target_prior(const RelationLabelSpace& space, TargetMode mode,
                               const PriorDistribution* counted = nullptr,
                               const std::string& path = "");

}  // namespace relbias::priors
