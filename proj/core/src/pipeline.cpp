#include "relbias/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "json.hpp"
#include "relbias/adjust.hpp"
#include "relbias/ensemble.hpp"
#include "relbias/error.hpp"
#include "relbias/hash.hpp"
#include "relbias/numeric.hpp"
#include "relbias/version.hpp"

namespace relbias::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tau_to_json(const TauSetting& t) {
  json j;
  j["fit"] = t.fit;
  j["value"] = t.value;
  return j;
}

TauSetting tau_from_json(const json& j) {
  TauSetting t;
  if (j.is_number()) {
    t.value = j.get<double>();
  } else if (j.is_string() && j.get<std::string>() == "fit") {
    t.fit = true;
  } else if (j.is_object()) {
    t.fit = j.value("fit", false);
    t.value = j.value("value", 1.0);
  } else {
    throw Error("bad tau setting in config");
  }
  return t;
}

json num_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

json vector_or_nulls(const std::vector<double>& values) {
  json out = json::array();
  for (double v : values) out.push_back(num_or_null(v));
  return out;
}

json split_to_json(const metrics::SplitMetrics& m) {
  json j;
  json recall, mrecall, per_class;
  for (const auto& [cutoff, v] : m.ranking.recall_at) {
    recall[std::to_string(cutoff)] = num_or_null(v);
  }
  for (const auto& [cutoff, v] : m.ranking.mrecall_at) {
    mrecall[std::to_string(cutoff)] = num_or_null(v);
  }
  for (const auto& [cutoff, v] : m.ranking.per_class_recall) {
    per_class[std::to_string(cutoff)] = vector_or_nulls(v);
  }
  j["recall_at"] = recall;
  j["mrecall_at"] = mrecall;
  j["per_class_recall"] = per_class;
  j["acc"] = num_or_null(m.classification.acc);
  j["macc"] = num_or_null(m.classification.macc);
  j["per_class_acc"] = vector_or_nulls(m.classification.per_class_acc);
  j["images"] = m.ranking.image_count;
  j["gt_triplets"] = m.ranking.gt_count;
  j["samples"] = m.sample_count;
  return j;
}

std::string canonical_prior_string(const PriorDistribution& prior) {
  std::string out;
  for (double p : prior.probs) {
    out += io::format_value(p);
    out += ';';
  }
  return out;
}

template <typename Fn>
auto run_stage(const char* stage, const std::string& input, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.what(), input);
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (manifest.empty()) throw Error("pipeline config: manifest path required");
  if (!fs::exists(manifest)) throw Error("manifest does not exist: " + manifest);
  if (out_dir.empty()) throw Error("pipeline config: out_dir required");
  solver.validate();
  if (target == priors::TargetMode::file) {
    if (target_file.empty()) throw Error("target mode 'file' needs target_file");
    if (!fs::exists(target_file)) {
      throw Error("target prior file does not exist: " + target_file);
    }
  }
  if (!(ensemble_scale > 0.0)) throw Error("ensemble_scale must be > 0");
  if (!tau_zs.fit && !(tau_zs.value > 0.0)) throw Error("tau_zs must be > 0");
  if (!tau_sg.fit && !(tau_sg.value > 0.0)) throw Error("tau_sg must be > 0");
  if (cutoffs.empty()) throw Error("pipeline config: cutoffs required");
  for (size_t i = 0; i < cutoffs.size(); ++i) {
    if (cutoffs[i] < 1) throw Error("cutoffs must be >= 1");
    if (i > 0 && cutoffs[i] <= cutoffs[i - 1]) {
      throw Error("cutoffs must be sorted ascending");
    }
  }
  for (const auto& s : splits) {
    if (s != "all" && s != "seen" && s != "unseen") {
      throw Error("unknown split: " + s);
    }
  }
  if (buckets != "auto" && buckets != "none" &&
      buckets.find(',') == std::string::npos) {
    throw Error("buckets must be 'auto', 'none', or '<t_frequent>,<t_medium>'");
  }
}

std::string PipelineConfig::canonical_json() const {
  json j;
  j["manifest"] = manifest;
  j["target"] = priors::to_string(target);
  j["target_file"] = target_file;
  json solver_j;
  solver_j["learning_rate"] = solver.learning_rate;
  solver_j["max_iters"] = solver.max_iters;
  solver_j["grad_tol"] = solver.grad_tol;
  solver_j["seed"] = solver.seed;
  solver_j["init"] =
      solver.init == priors::SolverConfig::Init::uniform ? "uniform" : "counted";
  j["solver"] = solver_j;
  j["tau_zs"] = tau_to_json(tau_zs);
  j["tau_sg"] = tau_to_json(tau_sg);
  j["ensemble_scale"] = ensemble_scale;
  j["cutoffs"] = cutoffs;
  j["splits"] = splits;
  j["buckets"] = buckets;
  j["graph_constraint"] = graph_constraint;
  j["seed"] = seed;
  return j.dump();
}

std::string PipelineConfig::config_hash() const {
  return hash_hex(canonical_json());
}

PipelineConfig config_from_json_file(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_file_bytes(path));
  } catch (const json::exception& e) {
    throw Error("bad config JSON in " + path + ": " + e.what());
  }
  PipelineConfig cfg;
  cfg.manifest = j.value("manifest", std::string());
  cfg.target = priors::target_mode_from_string(j.value("target", "uniform"));
  cfg.target_file = j.value("target_file", std::string());
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    cfg.solver.learning_rate = s.value("learning_rate", cfg.solver.learning_rate);
    cfg.solver.max_iters = s.value("max_iters", cfg.solver.max_iters);
    cfg.solver.grad_tol = s.value("grad_tol", cfg.solver.grad_tol);
    cfg.solver.seed = s.value("seed", cfg.solver.seed);
    const std::string init = s.value("init", "uniform");
    cfg.solver.init = init == "counted" ? priors::SolverConfig::Init::counted
                                        : priors::SolverConfig::Init::uniform;
  }
  if (j.contains("tau_zs")) cfg.tau_zs = tau_from_json(j.at("tau_zs"));
  if (j.contains("tau_sg")) cfg.tau_sg = tau_from_json(j.at("tau_sg"));
  cfg.ensemble_scale = j.value("ensemble_scale", cfg.ensemble_scale);
  if (j.contains("cutoffs")) cfg.cutoffs = j.at("cutoffs").get<std::vector<int>>();
  if (j.contains("splits")) {
    cfg.splits = j.at("splits").get<std::vector<std::string>>();
  }
  cfg.buckets = j.value("buckets", cfg.buckets);
  cfg.graph_constraint = j.value("graph_constraint", cfg.graph_constraint);
  cfg.out_dir = j.value("out_dir", std::string());
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

metrics::PredictionSet predictions_from_table(const Dataset& ds,
                                              const io::LogitTable& table) {
  if (table.meta.k != ds.space.k) {
    throw Error("prediction table k=" + std::to_string(table.meta.k) +
                " does not match dataset k=" + std::to_string(ds.space.k));
  }
  std::map<std::string, const io::TableRow*> rows;
  for (const auto& row : table.rows) {
    if (!rows.emplace(row.sample_id, &row).second) {
      throw Error("duplicate sample_id in prediction table: " + row.sample_id);
    }
  }
  metrics::PredictionSet preds;
  preds.relation_scores.reserve(ds.size());
  for (const auto& s : ds.samples) {
    const auto it = rows.find(s.sample_id);
    if (it == rows.end()) {
      throw Error("prediction missing for sample " + s.sample_id);
    }
    const auto& values = it->second->values;
    std::vector<double> scores;
    if (table.meta.probs) {
      // Stored relation probabilities already carry any background scaling.
      scores.assign(values.begin() + (table.meta.background ? 1 : 0), values.end());
    } else if (table.meta.background) {
      const auto full = softmax(values);
      scores.assign(full.begin() + 1, full.end());
    } else {
      scores = softmax(values);
    }
    preds.relation_scores.push_back(std::move(scores));
  }
  return preds;
}

metrics::MetricReport evaluate_table(const Dataset& ds,
                                     const io::LogitTable& pred,
                                     const EvalOptions& opts) {
  if (!opts.expect_config.empty() && !opts.allow_config_mismatch &&
      pred.meta.config_hash != opts.expect_config) {
    throw Error("prediction table config hash \"" + pred.meta.config_hash +
                "\" does not match expected \"" + opts.expect_config +
                "\"; pass --allow-config-mismatch to override");
  }
  const auto preds = predictions_from_table(ds, pred);
  auto report = metrics::split_report(ds, preds, opts.report);
  metrics::validate_report(report);
  return report;
}

void write_report_file(const std::string& path,
                       const metrics::MetricReport& report,
                       const Provenance& prov) {
  json j;
  j["schema"] = "relbias-report v1";
  j["tool"] = tool_ident();
  if (!prov.config_hash.empty()) j["config"] = prov.config_hash;
  json inputs;
  inputs["manifest"] = prov.manifest;
  inputs["pred"] = prov.pred;
  if (!prov.pred_config_hash.empty()) inputs["pred_config"] = prov.pred_config_hash;
  j["inputs"] = inputs;
  j["k"] = report.k;
  j["cutoffs"] = report.cutoffs;
  j["graph_constraint"] = report.graph_constraint;
  json splits;
  for (const auto& [name, split] : report.splits) {
    json entry;
    entry["count"] = report.split_counts.at(name);
    entry["report"] = split ? split_to_json(*split) : json(nullptr);
    splits[name] = entry;
  }
  j["splits"] = splits;
  if (report.buckets_requested) {
    json buckets;
    buckets["frequent"] = report.buckets.frequent;
    buckets["medium"] = report.buckets.medium;
    buckets["rare"] = report.buckets.rare;
    buckets["t_frequent"] = report.buckets.t_frequent;
    buckets["t_medium"] = report.buckets.t_medium;
    j["buckets"] = buckets;
  }
  io::write_file_bytes(path, j.dump(2) + "\n");
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  const std::string config_hash = cfg.config_hash();
  fs::create_directories(cfg.out_dir);
  const auto out = [&](const char* name) {
    return (fs::path(cfg.out_dir) / name).string();
  };

  PipelineResult result;
  result.pi_sg_path = out("pi_sg.json");
  result.pi_pt_path = out("pi_pt.json");
  result.trace_path = out("pi_pt.trace.json");
  result.adjusted_zs_path = out("adjusted_zs.tsv");
  result.adjusted_sg_path = out("adjusted_sg.tsv");
  result.ensemble_path = out("ens.tsv");
  result.report_path = out("report.json");
  result.distribution_path = out("dist.tsv");

  const auto log = [&](const char* fmt, auto... args) {
    if (!cfg.quiet) {
      std::fprintf(stderr, fmt, args...);
      std::fputc('\n', stderr);
    }
  };

  // load
  Dataset ds = run_stage("load", cfg.manifest,
                         [&] { return io::load_dataset(cfg.manifest); });
  log("load: %zu samples, k=%d", ds.size(), ds.space.k);

  // estimate: count the task prior, then recover the pretrain prior.
  const Dataset nonbg = filter_nonbackground(ds);
  PriorDistribution pi_sg;
  PriorDistribution pi_pt;
  run_stage("estimate", cfg.manifest, [&] {
    if (nonbg.empty()) {
      throw Error("no non-background samples; nothing to count or estimate");
    }
    pi_sg = priors::count_prior(nonbg);

    const io::Manifest manifest = io::read_manifest(cfg.manifest);
    const std::string zs_bytes = io::read_file_bytes(manifest.zs_logits);
    uint64_t key = fnv1a64(zs_bytes);
    key = fnv1a64(canonical_prior_string(pi_sg), key);
    key = fnv1a64(cfg.solver.canonical(), key);
    const std::string cache_key = hex64(key);
    const std::string dataset_hash = hex64(
        fnv1a64(io::read_file_bytes(manifest.sg_logits), fnv1a64(zs_bytes)));

    bool cached = false;
    if (fs::exists(result.pi_pt_path)) {
      try {
        const json existing = json::parse(io::read_file_bytes(result.pi_pt_path));
        if (existing.value("cache_key", "") == cache_key) {
          pi_pt = io::read_prior_file(result.pi_pt_path, ds.space.k);
          pi_pt.source = PriorSource::estimated;
          cached = true;
        }
      } catch (...) {
        cached = false;  // unreadable cache entries are recomputed
      }
    }

    // The counted prior and the estimate depend on the dataset and solver
    // only, so they are stamped with input-scoped hashes and survive
    // target-mode changes byte-identically.
    io::write_prior_file(result.pi_sg_path, pi_sg,
                         {{"dataset", dataset_hash}, {"tool", tool_ident()}});
    if (!cached) {
      auto estimate = priors::estimate_prior(nonbg, pi_sg, cfg.solver);
      pi_pt = std::move(estimate.prior);
      io::write_prior_file(result.pi_pt_path, pi_pt,
                           {{"cache_key", cache_key}, {"tool", tool_ident()}});
      json trace;
      trace["iterations_run"] = estimate.trace.iterations_run;
      trace["final_loss"] = estimate.trace.final_loss();
      trace["final_grad_norm"] = estimate.trace.final_grad_norm;
      trace["converged"] = estimate.trace.converged;
      trace["cache_key"] = cache_key;
      trace["tool"] = tool_ident();
      io::write_file_bytes(result.trace_path, trace.dump(2) + "\n");
    }
    result.solver_cached = cached;

    std::ostringstream dist;
    dist << "# " << tool_ident() << "\tconfig=" << config_hash << '\n';
    dist << "class\tpi_sg\tpi_pt\n";
    for (int r = 1; r <= ds.space.k; ++r) {
      if (!ds.space.class_names.empty()) {
        dist << ds.space.class_names[static_cast<size_t>(r - 1)];
      } else {
        dist << r;
      }
      dist << '\t' << io::format_value(pi_sg.probs[static_cast<size_t>(r - 1)])
           << '\t' << io::format_value(pi_pt.probs[static_cast<size_t>(r - 1)])
           << '\n';
    }
    io::write_file_bytes(result.distribution_path, dist.str());
    return 0;
  });
  log("estimate: pi_pt %s", result.solver_cached ? "(cached)" : "(solved)");

  // adjust both branches toward the target distribution.
  double tau_zs = cfg.tau_zs.value;
  double tau_sg = cfg.tau_sg.value;
  run_stage("adjust", cfg.manifest, [&] {
    const PriorDistribution target = priors::target_prior(
        ds.space, cfg.target, &pi_sg, cfg.target_file);
    adjust::AdjustmentSpec spec_zs{pi_pt, target, 1.0};
    adjust::AdjustmentSpec spec_sg{pi_sg, target, 1.0};
    if (cfg.tau_zs.fit) tau_zs = adjust::fit_tau(nonbg, adjust::Branch::zs, spec_zs);
    if (cfg.tau_sg.fit) tau_sg = adjust::fit_tau(nonbg, adjust::Branch::sg, spec_sg);

    for (const auto& [branch, spec, path] :
         {std::tuple{adjust::Branch::zs, &spec_zs, &result.adjusted_zs_path},
          std::tuple{adjust::Branch::sg, &spec_sg, &result.adjusted_sg_path}}) {
      io::LogitTable table;
      table.meta.k = ds.space.k;
      table.meta.background = false;
      table.meta.config_hash = config_hash;
      table.meta.tool = tool_ident();
      table.rows.reserve(ds.size());
      for (const auto& s : ds.samples) {
        table.rows.push_back(
            {s.sample_id, s.image_id, s.subject_class, s.object_class, s.gt_label,
             adjust::adjust_logits(adjust::branch_logits(s, branch), *spec)});
      }
      io::write_logit_table(*path, table);
    }
    return 0;
  });
  log("adjust: target=%s tau_zs=%.4g tau_sg=%.4g", priors::to_string(cfg.target),
      tau_zs, tau_sg);

  // ensemble the calibrated branches.
  run_stage("ensemble", result.adjusted_zs_path, [&] {
    const io::LogitTable adj_zs = io::read_logit_table(result.adjusted_zs_path);
    const io::LogitTable adj_sg = io::read_logit_table(result.adjusted_sg_path);
    io::LogitTable ens;
    ens.meta.k = ds.space.k;
    ens.meta.background = true;
    ens.meta.probs = true;
    ens.meta.config_hash = config_hash;
    ens.meta.tool = tool_ident();
    ens.rows.reserve(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
      const auto& s = ds.samples[i];
      if (adj_zs.rows[i].sample_id != s.sample_id ||
          adj_sg.rows[i].sample_id != s.sample_id) {
        throw Error("adjusted tables out of order at sample " + s.sample_id);
      }
      const auto p_zs = adjust::calibrated_probs(adj_zs.rows[i].values, tau_zs);
      const auto p_sg = adjust::calibrated_probs(adj_sg.rows[i].values, tau_sg);
      const auto weights = ensemble::certainty_weight(p_zs, p_sg, cfg.ensemble_scale);
      const auto fused = ensemble::fuse_relations(p_zs, p_sg, weights);
      const auto output = ensemble::compose_full(s, fused, weights);
      std::vector<double> values;
      values.reserve(static_cast<size_t>(ds.space.k) + 1);
      values.push_back(output.p_background);
      values.insert(values.end(), output.p_relations.begin(), output.p_relations.end());
      ens.rows.push_back({s.sample_id, s.image_id, s.subject_class, s.object_class,
                          s.gt_label, std::move(values)});
    }
    io::write_logit_table(result.ensemble_path, ens);
    return 0;
  });
  log("ensemble: wrote %s", result.ensemble_path.c_str());

  // eval
  run_stage("eval", result.ensemble_path, [&] {
    const io::LogitTable pred = io::read_logit_table(result.ensemble_path);
    EvalOptions opts;
    opts.report.cutoffs = cfg.cutoffs;
    opts.report.splits = cfg.splits;
    opts.report.graph_constraint = cfg.graph_constraint;
    if (cfg.buckets == "none") {
      opts.report.buckets = false;
    } else if (cfg.buckets == "auto") {
      opts.report.buckets = ds.inventory.has_value();
    } else {
      const size_t comma = cfg.buckets.find(',');
      opts.report.buckets = true;
      opts.report.bucket_thresholds = {std::stol(cfg.buckets.substr(0, comma)),
                                       std::stol(cfg.buckets.substr(comma + 1))};
    }
    opts.expect_config = config_hash;
    result.report = evaluate_table(ds, pred, opts);
    Provenance prov;
    prov.manifest = cfg.manifest;
    // Basename only: reports from identical configs must not differ by
    // output directory.
    prov.pred = fs::path(result.ensemble_path).filename().string();
    prov.config_hash = config_hash;
    prov.pred_config_hash = pred.meta.config_hash;
    write_report_file(result.report_path, result.report, prov);
    return 0;
  });
  log("eval: wrote %s", result.report_path.c_str());

  return result;
}

std::string diff_reports(const std::string& path_a, const std::string& path_b) {
  json a, b;
  try {
    a = json::parse(io::read_file_bytes(path_a));
    b = json::parse(io::read_file_bytes(path_b));
  } catch (const json::exception& e) {
    throw Error(std::string("bad report JSON: ") + e.what());
  }
  if (a.value("cutoffs", json::array()) != b.value("cutoffs", json::array())) {
    throw Error("incompatible cutoffs");
  }
  if (!a.contains("splits") || !b.contains("splits")) {
    throw Error("reports missing splits");
  }
  std::vector<std::string> names_a, names_b;
  for (const auto& [name, value] : a.at("splits").items()) names_a.push_back(name);
  for (const auto& [name, value] : b.at("splits").items()) names_b.push_back(name);
  if (names_a != names_b) throw Error("incompatible splits");

  std::ostringstream outs;
  char line[160];
  std::snprintf(line, sizeof(line), "%-22s %8s %8s %8s\n", "metric", "a", "b",
                "delta");
  outs << line;

  auto emit = [&](const std::string& label, double va, double vb) {
    std::snprintf(line, sizeof(line), "%-22s %8.1f %8.1f %+8.1f\n", label.c_str(),
                  va * 100.0, vb * 100.0, (vb - va) * 100.0);
    outs << line;
  };

  for (const auto& name : names_a) {
    const json& sa = a.at("splits").at(name);
    const json& sb = b.at("splits").at(name);
    const json& ra = sa.value("report", json(nullptr));
    const json& rb = sb.value("report", json(nullptr));
    if (ra.is_null() || rb.is_null()) {
      std::snprintf(line, sizeof(line), "%-22s %8s %8s %8s\n", name.c_str(), "-",
                    "-", "-");
      outs << line;
      continue;
    }
    auto metric = [&](const json& r, const char* key) {
      return r.contains(key) && !r.at(key).is_null() ? r.at(key).get<double>()
                                                     : std::nan("");
    };
    emit(name + "/Acc", metric(ra, "acc"), metric(rb, "acc"));
    emit(name + "/mAcc", metric(ra, "macc"), metric(rb, "macc"));
    for (const auto& cutoff : a.at("cutoffs")) {
      const std::string key = std::to_string(cutoff.get<int>());
      auto nested = [&](const json& r, const char* group) {
        if (!r.contains(group) || !r.at(group).contains(key) ||
            r.at(group).at(key).is_null()) {
          return std::nan("");
        }
        return r.at(group).at(key).get<double>();
      };
      emit(name + "/R@" + key, nested(ra, "recall_at"), nested(rb, "recall_at"));
      emit(name + "/mR@" + key, nested(ra, "mrecall_at"), nested(rb, "mrecall_at"));
    }
  }
  return outs.str();
}

}  // namespace relbias::pipeline
