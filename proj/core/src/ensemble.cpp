#include "relbias/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "relbias/error.hpp"
#include "relbias/numeric.hpp"

namespace relbias::ensemble {

namespace {

void check_probabilities(std::span<const double> p, const char* what) {
  if (p.size() < 2) throw Error(std::string(what) + ": need at least 2 entries");
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(std::string(what) + ": entries must be finite and >= 0");
    }
    sum += v;
  }
  if (std::fabs(sum - 1.0) > kSimplexTol) {
    throw Error(std::string(what) + ": probabilities sum to " + std::to_string(sum));
  }
}

}  // namespace

EnsembleWeights certainty_weight(std::span<const double> p_zs,
                                 std::span<const double> p_sg, double scale) {
  if (p_zs.size() != p_sg.size()) {
    throw Error("certainty_weight: branch length mismatch");
  }
  if (!(scale > 0.0)) throw Error("certainty_weight: scale must be > 0");
  check_probabilities(p_zs, "certainty_weight p_zs");
  check_probabilities(p_sg, "certainty_weight p_sg");
  EnsembleWeights w;
  w.conf_zs = *std::max_element(p_zs.begin(), p_zs.end());
  w.conf_sg = *std::max_element(p_sg.begin(), p_sg.end());
  w.scale = scale;
  w.w_cer = sigmoid((w.conf_sg - w.conf_zs) / scale);
  return w;
}

std::vector<double> fuse_relations(std::span<const double> p_zs,
                                   std::span<const double> p_sg,
                                   const EnsembleWeights& w) {
  if (p_zs.size() != p_sg.size()) {
    throw Error("fuse_relations: branch length mismatch");
  }
  std::vector<double> out(p_zs.size());
  for (size_t j = 0; j < out.size(); ++j) {
    out[j] = w.w_cer * p_sg[j] + (1.0 - w.w_cer) * p_zs[j];
  }
  return out;
}

void EnsembleOutput::validate() const {
  if (!(p_background >= 0.0 && p_background <= 1.0)) {
    throw Error("ensemble output: background probability out of range");
  }
  double total = p_background;
  for (double v : p_relations) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error("ensemble output: negative or non-finite relation mass");
    }
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw Error("ensemble output mass " + std::to_string(total) + " != 1");
  }
}

EnsembleOutput compose_full(const RelationSample& sample,
                            std::span<const double> p_ens_relations,
                            const EnsembleWeights& weights) {
  if (sample.sg_logits.size() != p_ens_relations.size() + 1) {
    throw Error("compose_full: relation count does not match sg logits of sample " +
                sample.sample_id);
  }
  check_probabilities(p_ens_relations, "compose_full p_ens");

  // Background mass comes from the raw sg logits, never the adjusted ones.
  const std::vector<double> full = softmax(sample.sg_logits);
  const double p_bg = full[0];

  double sum = 0.0;
  for (double v : p_ens_relations) sum += v;

  EnsembleOutput out;
  out.p_background = p_bg;
  out.weights = weights;
  out.p_relations.resize(p_ens_relations.size());
  for (size_t j = 0; j < p_ens_relations.size(); ++j) {
    out.p_relations[j] = (1.0 - p_bg) * (p_ens_relations[j] / sum);
  }
  out.validate();
  return out;
}

}  // namespace relbias::ensemble
