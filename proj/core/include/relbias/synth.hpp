#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relbias/types.hpp"

namespace relbias::synth {

/// A fully specified synthetic world: Gaussian class-conditionals at unit
/// variance around `class_means`, with separate priors for the pretrain,
/// task-training, and target regimes. Because the generative model is
/// known, exact Bayes logits and posteriors are available for every
/// sample, which is what makes downstream behavior checkable.
struct SynthModel {
  int k = 0;
  int dim = 8;
  double separation = 2.0;
  std::vector<std::vector<double>> class_means;  // k rows of `dim`
  PriorDistribution pretrain_prior;
  PriorDistribution sgg_prior;
  PriorDistribution target_prior;
  double underrep_fraction = 0.1;
  double noise_sg = 3.0;
  uint64_t seed = 0;

  static constexpr double kBackgroundRate = 0.2;
  static constexpr double kBackgroundBoost = 2.0;

  void validate() const;
};

/// Builds a model with class means drawn deterministically from `seed`:
/// random directions on the unit sphere scaled by `separation`.
SynthModel make_model(int k, int dim, double separation,
                      PriorDistribution pretrain, PriorDistribution sgg,
                      PriorDistribution target, double underrep_fraction,
                      double noise_sg, uint64_t seed);

PriorDistribution zipf_prior(int k, double exponent);

enum class Regime { pretrain, sgg, target };

const char* to_string(Regime r);
Regime regime_from_string(const std::string& s);

/// Generated samples plus the latent state the Dataset cannot carry:
/// feature vectors (for posterior oracles) and the underrepresented mask.
struct SynthData {
  Dataset dataset;
  std::vector<std::vector<double>> features;
  std::vector<char> underrep;
};

/// Draws n samples with labels from the regime's prior. zs logits are the
/// exact Bayes relation logits under the pretrain prior; sg logits are the
/// exact Bayes logits over background + relations under the sgg prior,
/// except that underrepresented samples get their sg relation logits
/// corrupted by Gaussian noise of scale noise_sg. A fixed 20% of samples
/// are background (features drawn at the origin, sg background logit
/// raised by 2). Subject/object ids encode the underrepresented subset:
/// seen samples use (r, r), underrepresented ones (k + r, k + r).
SynthData generate(const SynthModel& model, int n, Regime regime);

/// Relation logits log prior(r) - |x - mean_r|^2 / 2 (shared constants
/// dropped).
std::vector<double> bayes_relation_logits(const SynthModel& model,
                                          std::span<const double> features,
                                          const PriorDistribution& prior);

/// Exact class posterior of a feature vector under the given prior.
std::vector<double> bayes_posterior(const SynthModel& model,
                                    std::span<const double> features,
                                    const PriorDistribution& prior);

/// Training inventory for the model's seen triples (r, r, r), with
/// multiplicities proportional to the sgg prior.
TripletInventory seen_inventory(const SynthModel& model);

/// Writes manifest + both logit tables + true priors + triplet inventory
/// under `dir`; returns the manifest path.
std::string emit_fixture(const SynthModel& model, int n, Regime regime,
                         const std::string& dir, bool quiet = true);

}  // namespace relbias::synth
