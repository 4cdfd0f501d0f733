#include <cmath>

#include "doctest.h"
#include "relbias/adjust.hpp"
#include "relbias/error.hpp"
#include "relbias/numeric.hpp"
#include "relbias/rng.hpp"
#include "relbias/synth.hpp"
#include "relbias/types.hpp"
#include "support.hpp"

using namespace relbias;

namespace {

adjust::AdjustmentSpec make_spec(std::vector<double> train, std::vector<double> target,
                                 double tau = 1.0) {
  return {PriorDistribution::clamped(std::move(train), PriorSource::file),
          PriorDistribution::clamped(std::move(target), PriorSource::file), tau};
}

}  // namespace

TEST_CASE("adjust_logits: uniform priors cancel") {
  const auto spec = make_spec({1.0 / 3, 1.0 / 3, 1.0 / 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const std::vector<double> o{1.0, 2.0, 3.0};
  CHECK(adjust::adjust_logits(o, spec) == o);
}

TEST_CASE("adjust_logits: hand-computed shift") {
  const auto spec = make_spec({0.9, 0.1}, {0.5, 0.5});
  const auto out = adjust::adjust_logits(std::vector<double>{0.0, 0.0}, spec);
  // -log(0.9) + log(0.5), -log(0.1) + log(0.5), to six decimals
  CHECK(out[0] == doctest::Approx(-0.587787).epsilon(1e-6));
  CHECK(out[1] == doctest::Approx(1.609438).epsilon(1e-6));
  CHECK(out[0] == doctest::Approx(-std::log(0.9) + std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("adjust_logits: additive in the input") {
  const auto spec = make_spec({0.7, 0.2, 0.1}, {0.2, 0.3, 0.5});
  const std::vector<double> o{0.4, -1.0, 2.5};
  std::vector<double> shifted = o;
  for (double& v : shifted) v += 5.0;
  const auto a = adjust::adjust_logits(o, spec);
  const auto b = adjust::adjust_logits(shifted, spec);
  for (size_t j = 0; j < o.size(); ++j) {
    CHECK(b[j] - a[j] == doctest::Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("adjust_logits: errors") {
  auto spec = make_spec({0.5, 0.5}, {0.5, 0.5});
  CHECK_THROWS_AS(adjust::adjust_logits(std::vector<double>{1.0, 2.0, 3.0}, spec),
                  Error);
  spec.tau = 0.0;
  CHECK_THROWS_AS(adjust::adjust_logits(std::vector<double>{1.0, 2.0}, spec), Error);
}

TEST_CASE("calibrated_probs") {
  SUBCASE("hand softmax at tau=2") {
    const auto p = adjust::calibrated_probs(std::vector<double>{2.0, 0.0}, 2.0);
    CHECK(p[0] == doctest::Approx(0.731059).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(0.268941).epsilon(1e-6));
  }
  SUBCASE("huge tau flattens to uniform") {
    const auto p =
        adjust::calibrated_probs(std::vector<double>{3.0, -7.0, 11.0, 0.5}, 1e9);
    for (double v : p) CHECK(std::fabs(v - 0.25) < 1e-6);
  }
  SUBCASE("all-equal input is exactly uniform") {
    const auto p = adjust::calibrated_probs(std::vector<double>{0.0, 0.0, 0.0}, 1.0);
    for (double v : p) CHECK(v == 1.0 / 3.0);
  }
  SUBCASE("tau must be positive") {
    CHECK_THROWS_AS(adjust::calibrated_probs(std::vector<double>{1.0, 2.0}, 0.0), Error);
    CHECK_THROWS_AS(adjust::calibrated_probs(std::vector<double>{1.0, 2.0}, -1.0),
                    Error);
  }
}

TEST_CASE("argmax is untouched when train and target coincide") {
  Pcg32 rng(99);
  const auto prior = synth::zipf_prior(6, 0.9);
  const adjust::AdjustmentSpec spec{prior, prior, 1.0};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> o(6);
    for (double& v : o) v = 10.0 * (rng.next_double() - 0.5);
    const auto adjusted = adjust::adjust_logits(o, spec);
    CHECK(adjusted == o);  // identical prior objects cancel exactly
    CHECK(argmax_tie_lowest(adjusted) == argmax_tie_lowest(o));
  }
}

TEST_CASE("calibrated probabilities are shift invariant") {
  Pcg32 rng(3);
  const auto spec = make_spec({0.6, 0.3, 0.1}, {0.2, 0.2, 0.6}, 1.7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> o(3);
    for (double& v : o) v = 4.0 * (rng.next_double() - 0.5);
    std::vector<double> shifted = o;
    const double c = 100.0 * (rng.next_double() - 0.5);
    for (double& v : shifted) v += c;
    const auto p1 = adjust::calibrated_probs(adjust::adjust_logits(o, spec), spec.tau);
    const auto p2 =
        adjust::calibrated_probs(adjust::adjust_logits(shifted, spec), spec.tau);
    CHECK(linf_distance(p1, p2) < 1e-12);
  }
}

TEST_CASE("adjustment composes along prior chains") {
  Pcg32 rng(17);
  const auto pa = synth::zipf_prior(5, 1.0);
  const auto pb = synth::zipf_prior(5, 0.5);
  const auto pc = PriorDistribution::uniform_over(5);
  const adjust::AdjustmentSpec ab{pa, pb, 1.0};
  const adjust::AdjustmentSpec bc{pb, pc, 1.0};
  const adjust::AdjustmentSpec ac{pa, pc, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> o(5);
    for (double& v : o) v = 8.0 * (rng.next_double() - 0.5);
    const auto two_step = adjust::adjust_logits(adjust::adjust_logits(o, ab), bc);
    const auto one_step = adjust::adjust_logits(o, ac);
    CHECK(linf_distance(two_step, one_step) < 1e-12);
  }
}

TEST_CASE("adjusted argmax tracks the target posterior on synthetic data") {
  const auto pi_pt = synth::zipf_prior(8, 1.0);
  const auto target = PriorDistribution::uniform_over(8);
  const auto model = synth::make_model(8, 6, 2.0, pi_pt, synth::zipf_prior(8, 0.7),
                                       target, 0.0, 0.0, 29);
  const auto data = synth::generate(model, 3000, synth::Regime::target);
  const adjust::AdjustmentSpec spec{pi_pt, target, 1.0};

  int agree = 0, total = 0;
  int adjusted_correct = 0, unadjusted_correct = 0;
  for (size_t i = 0; i < data.dataset.size(); ++i) {
    const auto& s = data.dataset.samples[i];
    if (s.gt_label == 0) continue;
    total++;
    const auto adjusted = adjust::adjust_logits(s.zs_logits, spec);
    const int pred = argmax_tie_lowest(adjusted) + 1;
    const auto posterior = synth::bayes_posterior(model, data.features[i], target);
    if (pred == argmax_tie_lowest(posterior) + 1) agree++;
    if (pred == s.gt_label) adjusted_correct++;
    if (argmax_tie_lowest(s.zs_logits) + 1 == s.gt_label) unadjusted_correct++;
  }
  CHECK(total > 2000);
  CHECK(agree == total);
  CHECK(adjusted_correct >= unadjusted_correct);
}

TEST_CASE("fit_tau") {
  const int k = 5;
  const auto prior = synth::zipf_prior(k, 0.8);
  const auto model = synth::make_model(k, 6, 2.0, prior, prior, prior, 0.0, 0.0, 101);
  Dataset nonbg =
      filter_nonbackground(synth::generate(model, 60000, synth::Regime::sgg).dataset);
  const adjust::AdjustmentSpec noop{prior, prior, 1.0};
  const auto grid = adjust::TauGrid{}.values();
  const auto nearest = [&](double target) {
    double best = grid[0];
    for (double g : grid) {
      if (std::fabs(g - target) < std::fabs(best - target)) best = g;
    }
    return best;
  };

  SUBCASE("exact posteriors select the grid point nearest 1") {
    CHECK(adjust::fit_tau(nonbg, adjust::Branch::zs, noop) == nearest(1.0));
  }
  SUBCASE("doubled logits select the grid point nearest 2") {
    Dataset doubled = nonbg;
    for (auto& s : doubled.samples) {
      for (double& v : s.zs_logits) v *= 2.0;
    }
    CHECK(adjust::fit_tau(doubled, adjust::Branch::zs, noop) == nearest(2.0));
  }
  SUBCASE("single sample is degenerate but defined") {
    Dataset one;
    one.space.k = nonbg.space.k;
    one.samples.push_back(nonbg.samples[0]);
    const double tau = adjust::fit_tau(one, adjust::Branch::zs, noop);
    CHECK(tau >= 0.1);
    CHECK(tau <= 10.0);
  }
  SUBCASE("empty dataset throws") {
    Dataset empty;
    empty.space.k = k;
    CHECK_THROWS_AS(adjust::fit_tau(empty, adjust::Branch::zs, noop), Error);
  }
}
