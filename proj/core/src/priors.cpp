#include "relbias/priors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "relbias/error.hpp"
#include "relbias/io.hpp"
#include "relbias/numeric.hpp"

namespace relbias::priors {

void SolverConfig::validate() const {
  if (max_iters < 1) throw Error("solver max_iters must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("solver learning_rate must be > 0");
  if (!(grad_tol > 0.0)) throw Error("solver grad_tol must be > 0");
}

std::string SolverConfig::canonical() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "lr=%.17g;iters=%d;tol=%.17g;init=%s;seed=%llu",
                learning_rate, max_iters, grad_tol,
                init == Init::uniform ? "uniform" : "counted",
                static_cast<unsigned long long>(seed));
  return buf;
}

namespace {

void require_nonbackground(const Dataset& ds, const char* op) {
  for (const auto& s : ds.samples) {
    if (s.gt_label == kBackgroundId) {
      throw Error(std::string(op) + " requires a background-filtered dataset "
                  "(sample " + s.sample_id + " has gt_label 0)");
    }
  }
}

}  // namespace

PriorDistribution count_prior(const Dataset& ds) {
  if (ds.empty()) throw Error("count_prior: empty dataset");
  require_nonbackground(ds, "count_prior");
  const int k = ds.space.k;
  std::vector<double> counts(static_cast<size_t>(k), 0.0);
  for (const auto& s : ds.samples) counts[static_cast<size_t>(s.gt_label - 1)] += 1.0;
  const double n = static_cast<double>(ds.size());
  for (double& c : counts) c /= n;
  return PriorDistribution::clamped(std::move(counts), PriorSource::counted);
}

EstimateResult estimate_prior(const Dataset& ds, const PriorDistribution& pi_sg,
                              const SolverConfig& cfg) {
  cfg.validate();
  if (ds.empty()) throw Error("estimate_prior: empty dataset");
  require_nonbackground(ds, "estimate_prior");
  const int k = ds.space.k;
  pi_sg.validate(k);

  const size_t n = ds.size();
  const auto ku = static_cast<size_t>(k);

  // Per-sample reference posteriors a_ij = softmax(zs_ij + log pi_sg_j).
  // The iterate only rescales these columns, so each step is a weighted
  // renormalization instead of a fresh exponentiation:
  //   p_ij = a_ij * c_j / sum_l a_il * c_l,   c_j = exp(-theta_j - m).
  std::vector<double> log_pi_sg(ku);
  for (size_t j = 0; j < ku; ++j) log_pi_sg[j] = std::log(pi_sg.probs[j]);

  std::vector<double> base(n * ku);
  std::vector<int> labels(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& s = ds.samples[i];
    labels[i] = s.gt_label - 1;
    double m = -1e300;
    for (size_t j = 0; j < ku; ++j) {
      const double v = s.zs_logits[j] + log_pi_sg[j];
      base[i * ku + j] = v;
      m = std::max(m, v);
    }
    double sum = 0.0;
    for (size_t j = 0; j < ku; ++j) {
      const double e = std::exp(base[i * ku + j] - m);
      base[i * ku + j] = e;
      sum += e;
    }
    for (size_t j = 0; j < ku; ++j) base[i * ku + j] /= sum;
  }

  std::vector<double> freq(ku, 0.0);
  for (size_t i = 0; i < n; ++i) freq[static_cast<size_t>(labels[i])] += 1.0;
  for (double& f : freq) f /= static_cast<double>(n);

  std::vector<double> theta(ku, 0.0);
  if (cfg.init == SolverConfig::Init::counted) {
    for (size_t j = 0; j < ku; ++j) theta[j] = log_pi_sg[j];
  }

  SolverTrace trace;
  std::vector<double> weights(ku), mean_post(ku), grad(ku);
  double grad_norm = 0.0;

  for (int step = 0;; ++step) {
    double neg_max = -theta[0];
    for (size_t j = 1; j < ku; ++j) neg_max = std::max(neg_max, -theta[j]);
    for (size_t j = 0; j < ku; ++j) weights[j] = std::exp(-theta[j] - neg_max);

    std::fill(mean_post.begin(), mean_post.end(), 0.0);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double* row = &base[i * ku];
      double denom = 0.0;
      for (size_t j = 0; j < ku; ++j) denom += row[j] * weights[j];
      const double inv = 1.0 / denom;
      for (size_t j = 0; j < ku; ++j) mean_post[j] += row[j] * weights[j] * inv;
      const auto y = static_cast<size_t>(labels[i]);
      loss += std::log(denom) - std::log(row[y] * weights[y]);
    }
    loss /= static_cast<double>(n);
    trace.loss_history.push_back(loss);

    grad_norm = 0.0;
    for (size_t j = 0; j < ku; ++j) {
      grad[j] = freq[j] - mean_post[j] / static_cast<double>(n);
      grad_norm += grad[j] * grad[j];
    }
    grad_norm = std::sqrt(grad_norm);

    if (grad_norm < cfg.grad_tol) {
      trace.converged = true;
      trace.iterations_run = step;
      break;
    }
    if (step == cfg.max_iters) {
      trace.converged = false;
      trace.iterations_run = step;
      break;
    }
    for (size_t j = 0; j < ku; ++j) theta[j] -= cfg.learning_rate * grad[j];
  }
  trace.final_grad_norm = grad_norm;

  EstimateResult result;
  result.prior = PriorDistribution::clamped(softmax(theta), PriorSource::estimated);
  result.trace = std::move(trace);
  return result;
}

double adjusted_cross_entropy(const Dataset& ds,
                              const PriorDistribution& candidate,
                              const PriorDistribution& pi_sg) {
  if (ds.empty()) throw Error("adjusted_cross_entropy: empty dataset");
  const int k = ds.space.k;
  candidate.validate(k);
  pi_sg.validate(k);
  const auto ku = static_cast<size_t>(k);
  std::vector<double> adjusted(ku);
  double total = 0.0;
  for (const auto& s : ds.samples) {
    if (s.gt_label == kBackgroundId) {
      throw Error("adjusted_cross_entropy requires non-background samples");
    }
    for (size_t j = 0; j < ku; ++j) {
      adjusted[j] = s.zs_logits[j] - std::log(candidate.probs[j]) +
                    std::log(pi_sg.probs[j]);
    }
    const double lse = logsumexp(adjusted);
    total += lse - adjusted[static_cast<size_t>(s.gt_label - 1)];
  }
  return total / static_cast<double>(ds.size());
}

const char* to_string(TargetMode m) {
  switch (m) {
    case TargetMode::uniform:
      return "uniform";
    case TargetMode::training:
      return "training";
    case TargetMode::file:
      return "file";
  }
  return "unknown";
}

TargetMode target_mode_from_string(const std::string& s) {
  if (s == "uniform") return TargetMode::uniform;
  if (s == "training") return TargetMode::training;
  if (s == "file") return TargetMode::file;
  throw Error("unknown target mode: " + s);
}

PriorDistribution target_prior(const RelationLabelSpace& space, TargetMode mode,
                               const PriorDistribution* counted,
                               const std::string& path) {
  space.validate();
  switch (mode) {
    case TargetMode::uniform:
      return PriorDistribution::uniform_over(space.k);
    case TargetMode::training:
      if (!counted) throw Error("target mode 'training' needs a counted prior");
      counted->validate(space.k);
      return *counted;
    case TargetMode::file:
      if (path.empty()) throw Error("target mode 'file' needs a prior file path");
      return io::read_prior_file(path, space.k);
  }
  throw Error("unknown target mode");
}

}  // namespace relbias::priors
