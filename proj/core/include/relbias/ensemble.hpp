#pragma once

#include <span>
#include <vector>

#include "relbias/types.hpp"

namespace relbias::ensemble {

/// Per-sample trust split between the two branches. w_cer is
/// sigmoid((conf_sg - conf_zs) / scale) where each conf is the branch's
/// maximum relation probability.
struct EnsembleWeights {
  double conf_zs = 0.0;
  double conf_sg = 0.0;
  double scale = 1.0;
  double w_cer = 0.5;
};

EnsembleWeights certainty_weight(std::span<const double> p_zs,
                                 std::span<const double> p_sg, double scale);

/// w_cer * p_sg + (1 - w_cer) * p_zs, elementwise.
std::vector<double> fuse_relations(std::span<const double> p_zs,
                                   std::span<const double> p_sg,
                                   const EnsembleWeights& w);

/// Final per-sample prediction over background + relations. p_relations is
/// already scaled by (1 - p_background).
struct EnsembleOutput {
  double p_background = 0.0;
  std::vector<double> p_relations;
  EnsembleWeights weights;

  void validate() const;
};

/// Splices the fused relation distribution with the background probability
/// taken from the sample's raw (unadjusted) sg logits.
EnsembleOutput compose_full(const RelationSample& sample,
                            std::span<const double> p_ens_relations,
                            const EnsembleWeights& weights = {});

}  // namespace relbias::ensemble
