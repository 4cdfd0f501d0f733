// relbias: prior estimation, post-hoc logit adjustment, certainty-aware
// ensembling, and ranking metrics over exported relation-logit tables.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relbias/adjust.hpp"
#include "relbias/ensemble.hpp"
#include "relbias/error.hpp"
#include "relbias/hash.hpp"
#include "relbias/io.hpp"
#include "relbias/pipeline.hpp"
#include "relbias/priors.hpp"
#include "relbias/synth.hpp"
#include "relbias/types.hpp"
#include "relbias/version.hpp"

using namespace relbias;

namespace {

PriorDistribution parse_prior_spec(const std::string& spec, int k) {
  if (spec == "uniform") return PriorDistribution::uniform_over(k);
  if (spec.rfind("zipf:", 0) == 0) {
    return synth::zipf_prior(k, std::stod(spec.substr(5)));
  }
  if (spec.rfind("file:", 0) == 0) {
    return io::read_prior_file(spec.substr(5), k);
  }
  throw Error("bad prior spec \"" + spec + "\" (uniform | zipf:<s> | file:<path>)");
}

struct TargetSpec {
  priors::TargetMode mode = priors::TargetMode::uniform;
  std::string path;
};

TargetSpec parse_target_spec(const std::string& spec) {
  TargetSpec t;
  if (spec == "uniform") {
    t.mode = priors::TargetMode::uniform;
  } else if (spec == "training") {
    t.mode = priors::TargetMode::training;
  } else if (spec.rfind("file:", 0) == 0) {
    t.mode = priors::TargetMode::file;
    t.path = spec.substr(5);
  } else {
    throw Error("bad target \"" + spec + "\" (uniform | training | file:<path>)");
  }
  return t;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  size_t start = 0;
  while (start < csv.size()) {
    size_t pos = csv.find(',', start);
    if (pos == std::string::npos) pos = csv.size();
    out.push_back(std::stoi(csv.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> parse_str_list(const std::string& csv) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start < csv.size()) {
    size_t pos = csv.find(',', start);
    if (pos == std::string::npos) pos = csv.size();
    out.push_back(csv.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string trace_path_for(const std::string& out) {
  const std::string suffix = ".json";
  if (out.size() > suffix.size() &&
      out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return out.substr(0, out.size() - suffix.size()) + ".trace.json";
  }
  return out + ".trace.json";
}

pipeline::TauSetting parse_tau(const std::string& spec) {
  pipeline::TauSetting t;
  if (spec == "fit") {
    t.fit = true;
  } else {
    t.value = std::stod(spec);
  }
  return t;
}

void write_trace_json(const std::string& path, const priors::SolverTrace& trace) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\n  \"converged\": %s,\n  \"final_grad_norm\": %.17g,\n"
                "  \"final_loss\": %.17g,\n  \"iterations_run\": %d\n}\n",
                trace.converged ? "true" : "false", trace.final_grad_norm,
                trace.final_loss(), trace.iterations_run);
  io::write_file_bytes(path, buf);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relation-prior debiasing and evaluation toolkit"};
  app.set_version_flag("--version", tool_ident());
  app.require_subcommand(1);
  // Global flags may appear after the subcommand name.
  app.fallthrough();

  uint64_t seed = 0;
  std::string out_dir;
  bool quiet = false;
  std::string config_path;
  app.add_option("--seed", seed, "global seed");
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_flag("--quiet", quiet, "suppress progress output");
  app.add_option("--config", config_path, "pipeline config JSON");

  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic fixture");
  int synth_k = 50, synth_n = 50000, synth_dim = 8;
  double synth_sep = 2.0, synth_underrep = 0.1, synth_noise = 3.0;
  std::string synth_pretrain = "zipf:1.0", synth_sgg = "zipf:0.7",
              synth_target = "uniform", synth_regime = "sgg";
  cmd_synth->add_option("--k", synth_k, "relation classes");
  cmd_synth->add_option("--n", synth_n, "sample count");
  cmd_synth->add_option("--dim", synth_dim, "feature dimensionality");
  cmd_synth->add_option("--sep", synth_sep, "class-mean separation");
  cmd_synth->add_option("--underrep", synth_underrep, "underrepresented fraction");
  cmd_synth->add_option("--noise-sg", synth_noise, "sg logit noise on that subset");
  cmd_synth->add_option("--pretrain-prior", synth_pretrain, "zs-branch training prior");
  cmd_synth->add_option("--sgg-prior", synth_sgg, "sg-branch training prior");
  cmd_synth->add_option("--target-prior", synth_target, "target-regime prior");
  cmd_synth->add_option("--regime", synth_regime, "pretrain | sgg | target");

  auto* cmd_est = app.add_subcommand("estimate", "estimate the zs training prior");
  std::string est_manifest, est_prior_sg, est_out = "pi_pt.json", est_init = "uniform";
  priors::SolverConfig est_cfg;
  cmd_est->add_option("--manifest", est_manifest)->required();
  cmd_est->add_option("--prior-sg", est_prior_sg, "counted prior file (default: count)");
  cmd_est->add_option("--out", est_out);
  cmd_est->add_option("--lr", est_cfg.learning_rate);
  cmd_est->add_option("--iters", est_cfg.max_iters);
  cmd_est->add_option("--tol", est_cfg.grad_tol);
  cmd_est->add_option("--init", est_init, "uniform | counted");

  auto* cmd_adj = app.add_subcommand("adjust", "post-hoc logit adjustment");
  std::string adj_manifest, adj_branch = "zs", adj_train = "counted",
              adj_target = "uniform", adj_out = "adjusted.tsv";
  double adj_tau = 1.0;
  cmd_adj->add_option("--manifest", adj_manifest)->required();
  cmd_adj->add_option("--branch", adj_branch, "zs | sg");
  cmd_adj->add_option("--prior-train", adj_train, "prior file, or 'counted'");
  cmd_adj->add_option("--prior-target", adj_target, "uniform | training | file:<path>");
  cmd_adj->add_option("--tau", adj_tau);
  cmd_adj->add_option("--out", adj_out);

  auto* cmd_ens = app.add_subcommand("ensemble", "certainty-aware branch fusion");
  std::string ens_manifest, ens_zs, ens_sg, ens_out = "ens.tsv";
  double ens_tau_zs = 1.0, ens_tau_sg = 1.0, ens_scale = 1.0;
  cmd_ens->add_option("--manifest", ens_manifest)->required();
  cmd_ens->add_option("--adjusted-zs", ens_zs)->required();
  cmd_ens->add_option("--adjusted-sg", ens_sg)->required();
  cmd_ens->add_option("--tau-zs", ens_tau_zs);
  cmd_ens->add_option("--tau-sg", ens_tau_sg);
  cmd_ens->add_option("--scale", ens_scale);
  cmd_ens->add_option("--out", ens_out);

  auto* cmd_eval = app.add_subcommand("eval", "ranking and accuracy metrics");
  std::string eval_manifest, eval_pred, eval_out = "report.json";
  std::string eval_cutoffs = "20,50,100", eval_splits = "all,seen,unseen",
              eval_buckets = "auto", eval_expect;
  bool eval_no_gc = false, eval_allow_mismatch = false;
  cmd_eval->add_option("--manifest", eval_manifest)->required();
  cmd_eval->add_option("--pred", eval_pred)->required();
  cmd_eval->add_option("--cutoffs", eval_cutoffs);
  cmd_eval->add_option("--splits", eval_splits);
  cmd_eval->add_option("--buckets", eval_buckets, "auto | none | <t1>,<t2>");
  cmd_eval->add_option("--out", eval_out);
  cmd_eval->add_flag("--no-graph-constraint", eval_no_gc,
                     "rank every relation of every pair");
  cmd_eval->add_option("--expect-config", eval_expect,
                       "refuse prediction tables stamped differently");
  cmd_eval->add_flag("--allow-config-mismatch", eval_allow_mismatch);

  auto* cmd_pipe =
      app.add_subcommand("pipeline", "estimate -> adjust -> ensemble -> eval");
  std::string pipe_manifest, pipe_target = "uniform", pipe_init = "uniform";
  std::string pipe_tau_zs = "1.0", pipe_tau_sg = "1.0";
  std::string pipe_cutoffs = "20,50,100", pipe_splits = "all,seen,unseen",
              pipe_buckets = "auto";
  double pipe_lr = 0.1, pipe_tol = 1e-6, pipe_scale = 1.0;
  int pipe_iters = 2000;
  bool pipe_no_gc = false;
  cmd_pipe->add_option("--manifest", pipe_manifest);
  cmd_pipe->add_option("--target", pipe_target, "uniform | training | file:<path>");
  cmd_pipe->add_option("--lr", pipe_lr);
  cmd_pipe->add_option("--iters", pipe_iters);
  cmd_pipe->add_option("--tol", pipe_tol);
  cmd_pipe->add_option("--init", pipe_init, "uniform | counted");
  cmd_pipe->add_option("--tau-zs", pipe_tau_zs, "temperature, or 'fit'");
  cmd_pipe->add_option("--tau-sg", pipe_tau_sg, "temperature, or 'fit'");
  cmd_pipe->add_option("--scale", pipe_scale, "certainty sigmoid scale");
  cmd_pipe->add_option("--cutoffs", pipe_cutoffs);
  cmd_pipe->add_option("--splits", pipe_splits);
  cmd_pipe->add_option("--buckets", pipe_buckets);
  cmd_pipe->add_flag("--no-graph-constraint", pipe_no_gc);

  auto* cmd_diff = app.add_subcommand("diff", "metric deltas between two reports");
  std::string diff_a, diff_b;
  cmd_diff->add_option("report_a", diff_a)->required();
  cmd_diff->add_option("report_b", diff_b)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_synth) {
      if (out_dir.empty()) throw Error("synth needs --out-dir");
      const auto model = synth::make_model(
          synth_k, synth_dim, synth_sep, parse_prior_spec(synth_pretrain, synth_k),
          parse_prior_spec(synth_sgg, synth_k),
          parse_prior_spec(synth_target, synth_k), synth_underrep, synth_noise, seed);
      const auto manifest = synth::emit_fixture(
          model, synth_n, synth::regime_from_string(synth_regime), out_dir, quiet);
      if (!quiet) std::fprintf(stderr, "synth: %s\n", manifest.c_str());
    } else if (*cmd_est) {
      est_cfg.seed = seed;
      est_cfg.init = est_init == "counted" ? priors::SolverConfig::Init::counted
                                           : priors::SolverConfig::Init::uniform;
      const Dataset ds = filter_nonbackground(io::load_dataset(est_manifest));
      const PriorDistribution pi_sg =
          est_prior_sg.empty() ? priors::count_prior(ds)
                               : io::read_prior_file(est_prior_sg, ds.space.k);
      const auto result = priors::estimate_prior(ds, pi_sg, est_cfg);
      io::write_prior_file(est_out, result.prior, {{"tool", tool_ident()}});
      write_trace_json(trace_path_for(est_out), result.trace);
      if (!quiet) {
        std::fprintf(stderr, "estimate: %s (converged=%d, iters=%d)\n",
                     est_out.c_str(), result.trace.converged ? 1 : 0,
                     result.trace.iterations_run);
      }
    } else if (*cmd_adj) {
      const Dataset ds = io::load_dataset(adj_manifest);
      const Dataset nonbg = filter_nonbackground(ds);
      const adjust::Branch branch =
          adj_branch == "sg" ? adjust::Branch::sg : adjust::Branch::zs;
      const PriorDistribution train =
          adj_train == "counted" ? priors::count_prior(nonbg)
                                 : io::read_prior_file(adj_train, ds.space.k);
      const TargetSpec target_spec = parse_target_spec(adj_target);
      PriorDistribution counted;
      if (target_spec.mode == priors::TargetMode::training) {
        counted = priors::count_prior(nonbg);
      }
      const PriorDistribution target = priors::target_prior(
          ds.space, target_spec.mode, &counted, target_spec.path);
      const adjust::AdjustmentSpec spec{train, target, adj_tau};
      io::LogitTable table;
      table.meta.k = ds.space.k;
      table.meta.background = false;
      table.meta.tool = tool_ident();
      table.meta.config_hash = hash_hex("adjust;" + adj_manifest + ";" + adj_branch +
                                        ";" + adj_train + ";" + adj_target);
      for (const auto& s : ds.samples) {
        table.rows.push_back(
            {s.sample_id, s.image_id, s.subject_class, s.object_class, s.gt_label,
             adjust::adjust_logits(adjust::branch_logits(s, branch), spec)});
      }
      io::write_logit_table(adj_out, table);
      if (!quiet) std::fprintf(stderr, "adjust: %s\n", adj_out.c_str());
    } else if (*cmd_ens) {
      const Dataset ds = io::load_dataset(ens_manifest);
      const io::LogitTable adj_zs = io::read_logit_table(ens_zs);
      const io::LogitTable adj_sg = io::read_logit_table(ens_sg);
      const auto index_rows = [&](const io::LogitTable& t, const std::string& path) {
        std::map<std::string, const io::TableRow*> rows;
        for (const auto& row : t.rows) rows[row.sample_id] = &row;
        if (rows.size() != ds.size()) {
          throw Error("adjusted table " + path + " does not cover the dataset");
        }
        return rows;
      };
      const auto zs_rows = index_rows(adj_zs, ens_zs);
      const auto sg_rows = index_rows(adj_sg, ens_sg);
      io::LogitTable out_table;
      out_table.meta.k = ds.space.k;
      out_table.meta.background = true;
      out_table.meta.probs = true;
      out_table.meta.tool = tool_ident();
      out_table.meta.config_hash =
          hash_hex("ensemble;" + ens_manifest + ";" + ens_zs + ";" + ens_sg);
      for (const auto& s : ds.samples) {
        const auto zit = zs_rows.find(s.sample_id);
        const auto sit = sg_rows.find(s.sample_id);
        if (zit == zs_rows.end() || sit == sg_rows.end()) {
          throw Error("adjusted tables missing sample " + s.sample_id);
        }
        const auto p_zs = adjust::calibrated_probs(zit->second->values, ens_tau_zs);
        const auto p_sg = adjust::calibrated_probs(sit->second->values, ens_tau_sg);
        const auto w = ensemble::certainty_weight(p_zs, p_sg, ens_scale);
        const auto fused = ensemble::fuse_relations(p_zs, p_sg, w);
        const auto output = ensemble::compose_full(s, fused, w);
        std::vector<double> values;
        values.push_back(output.p_background);
        values.insert(values.end(), output.p_relations.begin(),
                      output.p_relations.end());
        out_table.rows.push_back({s.sample_id, s.image_id, s.subject_class,
                                  s.object_class, s.gt_label, std::move(values)});
      }
      io::write_logit_table(ens_out, out_table);
      if (!quiet) std::fprintf(stderr, "ensemble: %s\n", ens_out.c_str());
    } else if (*cmd_eval) {
      const Dataset ds = io::load_dataset(eval_manifest);
      const io::LogitTable pred = io::read_logit_table(eval_pred);
      pipeline::EvalOptions opts;
      opts.report.cutoffs = parse_int_list(eval_cutoffs);
      opts.report.splits = parse_str_list(eval_splits);
      opts.report.graph_constraint = !eval_no_gc;
      if (eval_buckets == "none") {
        opts.report.buckets = false;
      } else if (eval_buckets == "auto") {
        opts.report.buckets = ds.inventory.has_value();
      } else {
        const auto parts = parse_int_list(eval_buckets);
        if (parts.size() != 2) throw Error("bad --buckets value");
        opts.report.buckets = true;
        opts.report.bucket_thresholds = {{parts[0], parts[1]}};
      }
      opts.expect_config = eval_expect;
      opts.allow_config_mismatch = eval_allow_mismatch;
      const auto report = pipeline::evaluate_table(ds, pred, opts);
      pipeline::Provenance prov;
      prov.manifest = eval_manifest;
      prov.pred = eval_pred;
      prov.config_hash = hash_hex("eval;" + eval_manifest + ";" + eval_pred + ";" +
                                  eval_cutoffs + ";" + eval_splits);
      prov.pred_config_hash = pred.meta.config_hash;
      pipeline::write_report_file(eval_out, report, prov);
      if (!quiet) std::fprintf(stderr, "eval: %s\n", eval_out.c_str());
    } else if (*cmd_pipe) {
      pipeline::PipelineConfig cfg;
      if (!config_path.empty()) cfg = pipeline::config_from_json_file(config_path);
      if (!pipe_manifest.empty()) cfg.manifest = pipe_manifest;
      if (cmd_pipe->count("--target")) {
        const TargetSpec t = parse_target_spec(pipe_target);
        cfg.target = t.mode;
        cfg.target_file = t.path;
      }
      if (cmd_pipe->count("--lr")) cfg.solver.learning_rate = pipe_lr;
      if (cmd_pipe->count("--iters")) cfg.solver.max_iters = pipe_iters;
      if (cmd_pipe->count("--tol")) cfg.solver.grad_tol = pipe_tol;
      if (cmd_pipe->count("--init")) {
        cfg.solver.init = pipe_init == "counted"
                              ? priors::SolverConfig::Init::counted
                              : priors::SolverConfig::Init::uniform;
      }
      if (cmd_pipe->count("--tau-zs")) cfg.tau_zs = parse_tau(pipe_tau_zs);
      if (cmd_pipe->count("--tau-sg")) cfg.tau_sg = parse_tau(pipe_tau_sg);
      if (cmd_pipe->count("--scale")) cfg.ensemble_scale = pipe_scale;
      if (cmd_pipe->count("--cutoffs")) cfg.cutoffs = parse_int_list(pipe_cutoffs);
      if (cmd_pipe->count("--splits")) cfg.splits = parse_str_list(pipe_splits);
      if (cmd_pipe->count("--buckets")) cfg.buckets = pipe_buckets;
      if (cmd_pipe->count("--no-graph-constraint")) cfg.graph_constraint = false;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (app.count("--seed")) {
        cfg.seed = seed;
        cfg.solver.seed = seed;
      }
      cfg.quiet = quiet;
      const auto result = pipeline::run_pipeline(cfg);
      if (!quiet) std::fprintf(stderr, "pipeline: %s\n", result.report_path.c_str());
    } else if (*cmd_diff) {
      std::cout << pipeline::diff_reports(diff_a, diff_b);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
