#include <cmath>

#include "doctest.h"
#include "relbias/adjust.hpp"
#include "relbias/error.hpp"
#include "relbias/io.hpp"
#include "relbias/numeric.hpp"
#include "relbias/rng.hpp"
#include "relbias/synth.hpp"
#include "relbias/types.hpp"
#include "support.hpp"

using namespace relbias;

namespace {

synth::SynthModel standard_model(int k, uint64_t seed, double underrep = 0.1,
                                 double noise = 3.0) {
  return synth::make_model(k, 8, 2.0, synth::zipf_prior(k, 1.0),
                           synth::zipf_prior(k, 0.7),
                           PriorDistribution::uniform_over(k), underrep, noise, seed);
}

}  // namespace

TEST_CASE("pcg stream is stable across instances") {
  Pcg32 a(42, 1);
  Pcg32 b(42, 1);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());
  Pcg32 c(42, 2);
  bool all_equal = true;
  Pcg32 d(42, 1);
  for (int i = 0; i < 10; ++i) all_equal = all_equal && (c.next_u32() == d.next_u32());
  CHECK_FALSE(all_equal);
}

TEST_CASE("generation is bit-reproducible") {
  const auto model = standard_model(6, 123);
  const auto a = synth::generate(model, 200, synth::Regime::sgg);
  const auto b = synth::generate(model, 200, synth::Regime::sgg);
  CHECK(a.dataset == b.dataset);
  CHECK(a.features == b.features);
  CHECK(a.underrep == b.underrep);
}

TEST_CASE("zero separation collapses zs logits to the prior") {
  const auto prior = synth::zipf_prior(4, 1.0);
  const auto model = synth::make_model(4, 8, 0.0, prior, prior,
                                       PriorDistribution::uniform_over(4), 0.0, 0.0, 9);
  const auto data = synth::generate(model, 50, synth::Regime::pretrain);
  for (const auto& s : data.dataset.samples) {
    const auto probs = softmax(s.zs_logits);
    CHECK(linf_distance(probs, prior.probs) < 1e-12);
    CHECK(argmax_tie_lowest(s.zs_logits) == 0);  // the prior's mode
  }
}

TEST_CASE("empirical label frequencies track the regime prior") {
  const auto model = synth::make_model(
      2, 8, 2.0, PriorDistribution::clamped({0.8, 0.2}, PriorSource::file),
      PriorDistribution::clamped({0.8, 0.2}, PriorSource::file),
      PriorDistribution::uniform_over(2), 0.0, 0.0, 7);
  const auto data = synth::generate(model, 100000, synth::Regime::sgg);
  long counts[2] = {0, 0};
  long nonbg = 0, bg = 0;
  for (const auto& s : data.dataset.samples) {
    if (s.gt_label == 0) {
      bg++;
      continue;
    }
    counts[s.gt_label - 1]++;
    nonbg++;
  }
  CHECK(std::fabs(static_cast<double>(counts[0]) / nonbg - 0.8) < 0.01);
  CHECK(std::fabs(static_cast<double>(counts[1]) / nonbg - 0.2) < 0.01);
  // fixed background rate
  CHECK(std::fabs(static_cast<double>(bg) / data.dataset.size() - 0.2) < 0.01);
}

TEST_CASE("bayes_posterior basics") {
  const auto model = standard_model(5, 77, 0.0, 0.0);
  SUBCASE("uniform prior at a class mean peaks there") {
    const auto uniform = PriorDistribution::uniform_over(5);
    for (int j = 0; j < 5; ++j) {
      const auto p = synth::bayes_posterior(
          model, model.class_means[static_cast<size_t>(j)], uniform);
      CHECK(argmax_tie_lowest(p) == j);
    }
  }
  SUBCASE("posterior sums to one") {
    Pcg32 rng(5);
    std::vector<double> x(8);
    for (int trial = 0; trial < 100; ++trial) {
      for (double& v : x) v = 3.0 * (rng.next_double() - 0.5);
      const auto p = synth::bayes_posterior(model, x, model.pretrain_prior);
      double sum = 0.0;
      for (double v : p) sum += v;
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("adjusting generator logits reproduces the target posterior") {
  const auto model = standard_model(10, 55, 0.0, 0.0);
  const auto data = synth::generate(model, 1000, synth::Regime::target);
  const adjust::AdjustmentSpec spec{model.pretrain_prior, model.target_prior, 1.0};
  for (size_t i = 0; i < data.dataset.size(); ++i) {
    const auto adjusted = adjust::adjust_logits(data.dataset.samples[i].zs_logits, spec);
    const auto via_adjustment = softmax(adjusted);
    const auto direct =
        synth::bayes_posterior(model, data.features[i], model.target_prior);
    CHECK(linf_distance(via_adjustment, direct) < 1e-9);
  }
}

TEST_CASE("underrepresented subset: ids encode it and sg quality drops") {
  const auto model = standard_model(10, 99);
  const auto data = synth::generate(model, 8000, synth::Regime::sgg);

  long marked = 0, nonbg = 0;
  long zs_hits = 0, sg_hits = 0, subset = 0;
  for (size_t i = 0; i < data.dataset.size(); ++i) {
    const auto& s = data.dataset.samples[i];
    if (s.gt_label == 0) {
      CHECK_FALSE(data.underrep[i]);
      continue;
    }
    nonbg++;
    if (data.underrep[i]) {
      marked++;
      CHECK(s.subject_class == model.k + s.gt_label);
      subset++;
      const std::vector<double> sg_rel(s.sg_logits.begin() + 1, s.sg_logits.end());
      if (argmax_tie_lowest(s.zs_logits) + 1 == s.gt_label) zs_hits++;
      if (argmax_tie_lowest(sg_rel) + 1 == s.gt_label) sg_hits++;
    } else {
      CHECK(s.subject_class == s.gt_label);
    }
  }
  const double fraction = static_cast<double>(marked) / static_cast<double>(nonbg);
  CHECK(std::fabs(fraction - 0.1) < 0.02);
  // The clean zs branch beats the noise-corrupted sg branch on the subset.
  CHECK(subset > 300);
  CHECK(zs_hits > sg_hits);
}

TEST_CASE("inventory marks exactly the seen triples") {
  const auto model = standard_model(6, 31);
  const auto inv = synth::seen_inventory(model);
  const auto data = synth::generate(model, 2000, synth::Regime::sgg);
  for (size_t i = 0; i < data.dataset.size(); ++i) {
    const auto& s = data.dataset.samples[i];
    if (s.gt_label == 0) continue;
    const bool seen = inv.contains(s.subject_class, s.gt_label, s.object_class);
    CHECK(seen == !data.underrep[i]);
  }
  // counts follow the sgg prior ordering
  CHECK(inv.class_count(1) > inv.class_count(6));
}

TEST_CASE("emitted fixtures load back identically") {
  testsupport::TempDir tmp("fixture");
  const auto model = standard_model(4, 13);
  const auto manifest = synth::emit_fixture(model, 120, synth::Regime::sgg, tmp.path());
  const Dataset ds = io::load_dataset(manifest);
  const auto direct = synth::generate(model, 120, synth::Regime::sgg);
  CHECK(ds.space.k == 4);
  CHECK(ds.samples == direct.dataset.samples);
  REQUIRE(ds.inventory.has_value());
  CHECK(*ds.inventory == synth::seen_inventory(model));
}

TEST_CASE("generate rejects bad arguments") {
  const auto model = standard_model(4, 1);
  CHECK_THROWS_AS(synth::generate(model, 0, synth::Regime::sgg), Error);
  CHECK_THROWS_AS(synth::zipf_prior(1, 1.0), Error);
}
