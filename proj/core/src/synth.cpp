#include "relbias/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "json.hpp"
#include "relbias/error.hpp"
#include "relbias/io.hpp"
#include "relbias/numeric.hpp"
#include "relbias/rng.hpp"
#include "relbias/version.hpp"

namespace relbias::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Distinct PCG streams so means and the three regimes never share draws.
constexpr uint64_t kMeansStream = 0;

uint64_t regime_stream(Regime r) {
  switch (r) {
    case Regime::pretrain:
      return 1;
    case Regime::sgg:
      return 2;
    case Regime::target:
      return 3;
  }
  throw Error("invalid regime");
}

int sample_label(Pcg32& rng, const PriorDistribution& prior) {
  const double u = rng.next_double();
  double cum = 0.0;
  for (int j = 0; j < prior.k(); ++j) {
    cum += prior.probs[static_cast<size_t>(j)];
    if (u < cum) return j + 1;
  }
  return prior.k();
}

double sqdist(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

}  // namespace

void SynthModel::validate() const {
  if (k < 2) throw Error("synth model needs k >= 2");
  if (dim < 1) throw Error("synth model needs dim >= 1");
  if (!(separation >= 0.0)) throw Error("separation must be >= 0");
  if (static_cast<int>(class_means.size()) != k) {
    throw Error("class_means must have k rows");
  }
  for (const auto& mean : class_means) {
    if (static_cast<int>(mean.size()) != dim) throw Error("class mean has wrong dim");
  }
  pretrain_prior.validate(k);
  sgg_prior.validate(k);
  target_prior.validate(k);
  if (!(underrep_fraction >= 0.0 && underrep_fraction < 1.0)) {
    throw Error("underrep_fraction must lie in [0, 1)");
  }
  if (!(noise_sg >= 0.0)) throw Error("noise_sg must be >= 0");
}

SynthModel make_model(int k, int dim, double separation, PriorDistribution pretrain,
                      PriorDistribution sgg, PriorDistribution target,
                      double underrep_fraction, double noise_sg, uint64_t seed) {
  SynthModel model;
  model.k = k;
  model.dim = dim;
  model.separation = separation;
  model.pretrain_prior = std::move(pretrain);
  model.sgg_prior = std::move(sgg);
  model.target_prior = std::move(target);
  model.underrep_fraction = underrep_fraction;
  model.noise_sg = noise_sg;
  model.seed = seed;

  Pcg32 rng(seed, kMeansStream);
  model.class_means.assign(static_cast<size_t>(k),
                           std::vector<double>(static_cast<size_t>(dim)));
  for (auto& mean : model.class_means) {
    double norm = 0.0;
    for (double& v : mean) {
      v = rng.next_gaussian();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    for (double& v : mean) v = v / norm * separation;
  }
  model.validate();
  return model;
}

PriorDistribution zipf_prior(int k, double exponent) {
  if (k < 2) throw Error("zipf prior needs k >= 2");
  std::vector<double> probs(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    probs[static_cast<size_t>(i)] = std::pow(static_cast<double>(i + 1), -exponent);
  }
  double sum = 0.0;
  for (double p : probs) sum += p;
  for (double& p : probs) p /= sum;
  return PriorDistribution::clamped(std::move(probs), PriorSource::file);
}

const char* to_string(Regime r) {
  switch (r) {
    case Regime::pretrain:
      return "pretrain";
    case Regime::sgg:
      return "sgg";
    case Regime::target:
      return "target";
  }
  return "unknown";
}

Regime regime_from_string(const std::string& s) {
  if (s == "pretrain") return Regime::pretrain;
  if (s == "sgg") return Regime::sgg;
  if (s == "target") return Regime::target;
  throw Error("unknown regime: " + s);
}

std::vector<double> bayes_relation_logits(const SynthModel& model,
                                          std::span<const double> features,
                                          const PriorDistribution& prior) {
  if (static_cast<int>(features.size()) != model.dim) {
    throw Error("feature vector has wrong dimensionality");
  }
  prior.validate(model.k);
  std::vector<double> logits(static_cast<size_t>(model.k));
  for (int j = 0; j < model.k; ++j) {
    logits[static_cast<size_t>(j)] =
        std::log(prior.probs[static_cast<size_t>(j)]) -
        0.5 * sqdist(features, model.class_means[static_cast<size_t>(j)]);
  }
  return logits;
}

std::vector<double> bayes_posterior(const SynthModel& model,
                                    std::span<const double> features,
                                    const PriorDistribution& prior) {
  return softmax(bayes_relation_logits(model, features, prior));
}

SynthData generate(const SynthModel& model, int n, Regime regime) {
  model.validate();
  if (n < 1) throw Error("generate: n must be >= 1");

  const PriorDistribution* prior = nullptr;
  switch (regime) {
    case Regime::pretrain:
      prior = &model.pretrain_prior;
      break;
    case Regime::sgg:
      prior = &model.sgg_prior;
      break;
    case Regime::target:
      prior = &model.target_prior;
      break;
  }
  if (!prior) throw Error("invalid regime");

  Pcg32 rng(model.seed, regime_stream(regime));
  const auto dim = static_cast<size_t>(model.dim);
  const auto k = static_cast<size_t>(model.k);
  const std::vector<double> origin(dim, 0.0);

  SynthData out;
  out.dataset.space.k = model.k;
  out.dataset.samples.reserve(static_cast<size_t>(n));
  out.features.reserve(static_cast<size_t>(n));
  out.underrep.reserve(static_cast<size_t>(n));

  const double log_bg = std::log(SynthModel::kBackgroundRate);
  const double log_fg = std::log(1.0 - SynthModel::kBackgroundRate);

  for (int i = 0; i < n; ++i) {
    const bool is_bg = rng.next_double() < SynthModel::kBackgroundRate;
    int label = 0;
    bool underrep = false;
    std::vector<double> x(dim);
    if (is_bg) {
      for (double& v : x) v = rng.next_gaussian();
    } else {
      label = sample_label(rng, *prior);
      underrep = rng.next_double() < model.underrep_fraction;
      const auto& mean = model.class_means[static_cast<size_t>(label - 1)];
      for (size_t d = 0; d < dim; ++d) x[d] = mean[d] + rng.next_gaussian();
    }

    RelationSample s;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%07d", i);
    s.sample_id = buf;
    std::snprintf(buf, sizeof(buf), "img%05d", i / 10);
    s.image_id = buf;
    s.gt_label = label;
    if (is_bg) {
      s.subject_class = 0;
      s.object_class = 0;
    } else if (underrep) {
      s.subject_class = model.k + label;
      s.object_class = model.k + label;
    } else {
      s.subject_class = label;
      s.object_class = label;
    }

    s.zs_logits = bayes_relation_logits(model, x, model.pretrain_prior);

    s.sg_logits.resize(k + 1);
    s.sg_logits[0] = log_bg - 0.5 * sqdist(x, origin) +
                     (is_bg ? SynthModel::kBackgroundBoost : 0.0);
    for (size_t j = 0; j < k; ++j) {
      s.sg_logits[j + 1] = log_fg + std::log(model.sgg_prior.probs[j]) -
                           0.5 * sqdist(x, model.class_means[j]);
    }
    if (underrep && model.noise_sg > 0.0) {
      for (size_t j = 0; j < k; ++j) {
        s.sg_logits[j + 1] += model.noise_sg * rng.next_gaussian();
      }
    }

    out.dataset.samples.push_back(std::move(s));
    out.features.push_back(std::move(x));
    out.underrep.push_back(underrep ? 1 : 0);
  }
  out.dataset.validate();
  return out;
}

TripletInventory seen_inventory(const SynthModel& model) {
  TripletInventory inv;
  for (int r = 1; r <= model.k; ++r) {
    const double p = model.sgg_prior.probs[static_cast<size_t>(r - 1)];
    const long count = std::max(1L, std::lround(10000.0 * p));
    inv.counts[{r, r, r}] = count;
  }
  return inv;
}

std::string emit_fixture(const SynthModel& model, int n, Regime regime,
                         const std::string& dir, bool quiet) {
  model.validate();
  fs::create_directories(dir);
  const SynthData data = generate(model, n, regime);

  const std::string zs_path = (fs::path(dir) / "zs_logits.tsv").string();
  const std::string sg_path = (fs::path(dir) / "sg_logits.tsv").string();
  const std::string triplets_path = (fs::path(dir) / "train_triplets.tsv").string();
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();

  io::write_logit_table(zs_path, io::zs_table(data.dataset));
  io::write_logit_table(sg_path, io::sg_table(data.dataset));
  io::write_triplets(triplets_path, seen_inventory(model));
  io::write_prior_file((fs::path(dir) / "pi_pretrain_true.json").string(),
                       model.pretrain_prior, {{"tool", tool_ident()}});
  io::write_prior_file((fs::path(dir) / "pi_sgg_true.json").string(),
                       model.sgg_prior, {{"tool", tool_ident()}});
  io::write_prior_file((fs::path(dir) / "pi_target_true.json").string(),
                       model.target_prior, {{"tool", tool_ident()}});

  json manifest;
  manifest["zs_logits"] = "zs_logits.tsv";
  manifest["sg_logits"] = "sg_logits.tsv";
  manifest["train_triplets"] = "train_triplets.tsv";
  json gen;
  gen["tool"] = tool_ident();
  gen["k"] = model.k;
  gen["dim"] = model.dim;
  gen["separation"] = model.separation;
  gen["underrep_fraction"] = model.underrep_fraction;
  gen["noise_sg"] = model.noise_sg;
  gen["seed"] = model.seed;
  gen["n"] = n;
  gen["regime"] = to_string(regime);
  manifest["generator"] = gen;
  io::write_file_bytes(manifest_path, manifest.dump(2) + "\n");

  if (!quiet) {
    std::fprintf(stderr, "synth: wrote %d samples (%s regime) under %s\n", n,
                 to_string(regime), dir.c_str());
  }
  return manifest_path;
}

}  // namespace relbias::synth
