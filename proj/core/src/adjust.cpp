#include "relbias/adjust.hpp"

#include <cmath>

#include "relbias/error.hpp"
#include "relbias/numeric.hpp"

namespace relbias::adjust {

void AdjustmentSpec::validate() const {
  train_prior.validate(-1);
  target_prior.validate(train_prior.k());
  if (!(tau > 0.0)) throw Error("tau must be > 0");
}

std::vector<double> adjust_logits(std::span<const double> logits,
                                  const AdjustmentSpec& spec) {
  spec.validate();
  if (static_cast<int>(logits.size()) != spec.k()) {
    throw Error("adjust_logits: got " + std::to_string(logits.size()) +
                " logits for k=" + std::to_string(spec.k()));
  }
  if (!all_finite(logits)) throw Error("adjust_logits: non-finite input");
  std::vector<double> out(logits.size());
  for (size_t j = 0; j < logits.size(); ++j) {
    // Grouping the prior terms keeps identical priors an exact no-op.
    out[j] = logits[j] + (std::log(spec.target_prior.probs[j]) -
                          std::log(spec.train_prior.probs[j]));
  }
  return out;
}

std::vector<double> calibrated_probs(std::span<const double> adjusted,
                                     double tau) {
  if (!(tau > 0.0)) throw Error("calibrated_probs: tau must be > 0");
  if (adjusted.empty()) throw Error("calibrated_probs: empty input");
  std::vector<double> scaled(adjusted.size());
  for (size_t j = 0; j < adjusted.size(); ++j) scaled[j] = adjusted[j] / tau;
  return softmax(scaled);
}

std::vector<double> TauGrid::values() const {
  if (points < 1 || !(lo > 0.0) || !(hi >= lo)) {
    throw Error("bad tau grid");
  }
  std::vector<double> out(static_cast<size_t>(points));
  if (points == 1) {
    out[0] = lo;
    return out;
  }
  const double llo = std::log10(lo);
  const double lhi = std::log10(hi);
  for (int i = 0; i < points; ++i) {
    out[static_cast<size_t>(i)] =
        std::pow(10.0, llo + (lhi - llo) * i / (points - 1));
  }
  return out;
}

std::vector<double> branch_logits(const RelationSample& sample, Branch branch) {
  if (branch == Branch::zs) return sample.zs_logits;
  return std::vector<double>(sample.sg_logits.begin() + 1, sample.sg_logits.end());
}

double fit_tau(const Dataset& ds, Branch branch, const AdjustmentSpec& spec,
               const TauGrid& grid) {
  if (ds.empty()) throw Error("fit_tau: empty dataset");
  const auto taus = grid.values();

  // Adjust once; only the temperature changes across the grid.
  std::vector<std::vector<double>> adjusted;
  std::vector<int> labels;
  adjusted.reserve(ds.size());
  labels.reserve(ds.size());
  for (const auto& s : ds.samples) {
    if (s.gt_label == kBackgroundId) {
      throw Error("fit_tau requires non-background samples");
    }
    adjusted.push_back(adjust_logits(branch_logits(s, branch), spec));
    labels.push_back(s.gt_label - 1);
  }

  double best_tau = taus.front();
  double best_nll = 0.0;
  std::vector<double> scaled(static_cast<size_t>(ds.space.k));
  for (size_t t = 0; t < taus.size(); ++t) {
    const double tau = taus[t];
    double nll = 0.0;
    for (size_t i = 0; i < adjusted.size(); ++i) {
      const auto& row = adjusted[i];
      for (size_t j = 0; j < row.size(); ++j) scaled[j] = row[j] / tau;
      nll += logsumexp(scaled) - scaled[static_cast<size_t>(labels[i])];
    }
    nll /= static_cast<double>(adjusted.size());
    if (t == 0 || nll < best_nll) {  // ties keep the smaller tau
      best_nll = nll;
      best_tau = tau;
    }
  }
  return best_tau;
}

}  // namespace relbias::adjust
