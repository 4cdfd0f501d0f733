#include "relbias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "relbias/error.hpp"
#include "relbias/numeric.hpp"

namespace relbias::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_inputs(const Dataset& ds, const PredictionSet& preds) {
  if (preds.relation_scores.size() != ds.size()) {
    throw Error("prediction count " + std::to_string(preds.relation_scores.size()) +
                " does not match dataset size " + std::to_string(ds.size()));
  }
  const auto k = static_cast<size_t>(ds.space.k);
  for (size_t i = 0; i < ds.size(); ++i) {
    if (preds.relation_scores[i].size() != k) {
      throw Error("prediction for sample " + ds.samples[i].sample_id +
                  " has wrong width");
    }
  }
}

void check_cutoffs(const std::vector<int>& cutoffs) {
  if (cutoffs.empty()) throw Error("no cutoffs given");
  int prev = 0;
  for (int c : cutoffs) {
    if (c < 1) throw Error("cutoff must be >= 1, got " + std::to_string(c));
    if (c <= prev) throw Error("cutoffs must be strictly ascending");
    prev = c;
  }
}

// Per-image tallies from one ranking pass; recall variants for any class
// subset aggregate from these.
struct ImageCounts {
  std::string image_id;
  std::map<int, long> gt;                   // class -> GT pair count
  std::map<int, std::map<int, long>> hits;  // cutoff -> class -> hits in top-K
};

struct Candidate {
  double score;
  const std::string* sample_id;
  int relation;
};

std::vector<ImageCounts> rank_images(const Dataset& ds, const PredictionSet& preds,
                                     const std::vector<int>& cutoffs,
                                     bool graph_constraint) {
  // Group sample indices per image, images ordered by id.
  std::map<std::string, std::vector<size_t>> by_image;
  for (size_t i = 0; i < ds.size(); ++i) {
    by_image[ds.samples[i].image_id].push_back(i);
  }

  std::vector<ImageCounts> out;
  std::vector<Candidate> candidates;
  for (const auto& [image_id, indices] : by_image) {
    ImageCounts counts;
    counts.image_id = image_id;
    std::set<std::pair<std::string, int>> gt_set;
    for (size_t i : indices) {
      const auto& s = ds.samples[i];
      if (s.gt_label != kBackgroundId) {
        counts.gt[s.gt_label] += 1;
        gt_set.emplace(s.sample_id, s.gt_label);
      }
    }
    if (gt_set.empty()) continue;  // images without GT are excluded

    candidates.clear();
    for (size_t i : indices) {
      const auto& s = ds.samples[i];
      const auto& scores = preds.relation_scores[i];
      if (graph_constraint) {
        const int idx = argmax_tie_lowest(scores);
        candidates.push_back({scores[static_cast<size_t>(idx)], &s.sample_id, idx + 1});
      } else {
        for (size_t j = 0; j < scores.size(); ++j) {
          candidates.push_back({scores[j], &s.sample_id, static_cast<int>(j) + 1});
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                if (a.score != b.score) return a.score > b.score;
                if (*a.sample_id != *b.sample_id) return *a.sample_id < *b.sample_id;
                return a.relation < b.relation;
              });

    for (int cutoff : cutoffs) {
      auto& hit_map = counts.hits[cutoff];
      const size_t limit = std::min(candidates.size(), static_cast<size_t>(cutoff));
      for (size_t c = 0; c < limit; ++c) {
        if (gt_set.count({*candidates[c].sample_id, candidates[c].relation})) {
          hit_map[candidates[c].relation] += 1;
        }
      }
    }
    out.push_back(std::move(counts));
  }
  return out;
}

// Aggregates ranking tallies over an optional class subset (empty = all).
RankingMetrics aggregate_ranking(const std::vector<ImageCounts>& images,
                                 const std::vector<int>& cutoffs, int k,
                                 const std::set<int>* class_filter) {
  auto in_filter = [&](int cls) {
    return class_filter == nullptr || class_filter->count(cls) > 0;
  };

  RankingMetrics out;
  for (int cutoff : cutoffs) {
    double recall_sum = 0.0;
    long recall_images = 0;
    std::vector<double> class_sum(static_cast<size_t>(k), 0.0);
    std::vector<long> class_images(static_cast<size_t>(k), 0);

    for (const auto& img : images) {
      long gt_total = 0;
      long hit_total = 0;
      const auto hits_it = img.hits.find(cutoff);
      for (const auto& [cls, gt_count] : img.gt) {
        if (!in_filter(cls)) continue;
        gt_total += gt_count;
        long h = 0;
        if (hits_it != img.hits.end()) {
          const auto it = hits_it->second.find(cls);
          if (it != hits_it->second.end()) h = it->second;
        }
        hit_total += h;
        class_sum[static_cast<size_t>(cls - 1)] +=
            static_cast<double>(h) / static_cast<double>(gt_count);
        class_images[static_cast<size_t>(cls - 1)] += 1;
      }
      if (gt_total > 0) {
        recall_sum += static_cast<double>(hit_total) / static_cast<double>(gt_total);
        recall_images += 1;
      }
    }

    out.recall_at[cutoff] =
        recall_images > 0 ? recall_sum / static_cast<double>(recall_images) : kNaN;

    auto& per_class = out.per_class_recall[cutoff];
    per_class.assign(static_cast<size_t>(k), kNaN);
    double mrecall_sum = 0.0;
    long mrecall_classes = 0;
    for (int cls = 1; cls <= k; ++cls) {
      if (!in_filter(cls) || class_images[static_cast<size_t>(cls - 1)] == 0) continue;
      const double r = class_sum[static_cast<size_t>(cls - 1)] /
                       static_cast<double>(class_images[static_cast<size_t>(cls - 1)]);
      per_class[static_cast<size_t>(cls - 1)] = r;
      mrecall_sum += r;
      mrecall_classes += 1;
    }
    out.mrecall_at[cutoff] =
        mrecall_classes > 0 ? mrecall_sum / static_cast<double>(mrecall_classes) : kNaN;

    if (cutoff == cutoffs.front()) {
      out.image_count = static_cast<size_t>(recall_images);
    }
  }

  long gt_count = 0;
  for (const auto& img : images) {
    for (const auto& [cls, count] : img.gt) {
      if (in_filter(cls)) gt_count += count;
    }
  }
  out.gt_count = static_cast<size_t>(gt_count);
  return out;
}

ClassificationMetrics aggregate_classification(const std::vector<long>& correct,
                                               const std::vector<long>& total,
                                               const std::set<int>* class_filter) {
  const int k = static_cast<int>(total.size());
  auto in_filter = [&](int cls) {
    return class_filter == nullptr || class_filter->count(cls) > 0;
  };

  ClassificationMetrics out;
  out.per_class_acc.assign(static_cast<size_t>(k), kNaN);
  out.per_class_total.assign(static_cast<size_t>(k), 0);
  out.per_class_correct.assign(static_cast<size_t>(k), 0);

  long sum_correct = 0;
  long sum_total = 0;
  double macc_sum = 0.0;
  long macc_classes = 0;
  for (int cls = 1; cls <= k; ++cls) {
    const auto j = static_cast<size_t>(cls - 1);
    if (!in_filter(cls)) continue;
    out.per_class_total[j] = total[j];
    out.per_class_correct[j] = correct[j];
    sum_total += total[j];
    sum_correct += correct[j];
    if (total[j] > 0) {
      out.per_class_acc[j] =
          static_cast<double>(correct[j]) / static_cast<double>(total[j]);
      macc_sum += out.per_class_acc[j];
      macc_classes += 1;
    }
  }
  if (sum_total == 0) throw Error("no non-background samples to classify");
  out.acc = static_cast<double>(sum_correct) / static_cast<double>(sum_total);
  out.macc = macc_sum / static_cast<double>(macc_classes);
  out.sample_count = static_cast<size_t>(sum_total);
  return out;
}

void count_classification(const Dataset& ds, const PredictionSet& preds,
                          std::vector<long>& correct, std::vector<long>& total) {
  const int k = ds.space.k;
  correct.assign(static_cast<size_t>(k), 0);
  total.assign(static_cast<size_t>(k), 0);
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.gt_label == kBackgroundId) continue;
    const int pred = argmax_tie_lowest(preds.relation_scores[i]) + 1;
    total[static_cast<size_t>(s.gt_label - 1)] += 1;
    if (pred == s.gt_label) correct[static_cast<size_t>(s.gt_label - 1)] += 1;
  }
}

}  // namespace

std::vector<SceneGroundTruth> build_ground_truth(const Dataset& ds) {
  std::map<std::string, SceneGroundTruth> by_image;
  for (const auto& s : ds.samples) {
    if (s.gt_label == kBackgroundId) continue;
    auto& scene = by_image[s.image_id];
    scene.image_id = s.image_id;
    scene.gt_triplets.emplace(s.sample_id, s.gt_label);
  }
  std::vector<SceneGroundTruth> out;
  out.reserve(by_image.size());
  for (auto& [id, scene] : by_image) out.push_back(std::move(scene));
  return out;
}

RankingMetrics recall_at_k(const Dataset& ds, const PredictionSet& preds,
                           const std::vector<int>& cutoffs, bool graph_constraint) {
  check_inputs(ds, preds);
  check_cutoffs(cutoffs);
  const auto images = rank_images(ds, preds, cutoffs, graph_constraint);
  return aggregate_ranking(images, cutoffs, ds.space.k, nullptr);
}

ClassificationMetrics classification_acc(const Dataset& ds,
                                         const PredictionSet& preds) {
  check_inputs(ds, preds);
  std::vector<long> correct, total;
  count_classification(ds, preds, correct, total);
  return aggregate_classification(correct, total, nullptr);
}

FrequencyBuckets threshold_buckets(const TripletInventory& inv, int k,
                                   long t_frequent, long t_medium) {
  if (t_frequent < t_medium) {
    throw Error("bucket thresholds must satisfy t_frequent >= t_medium");
  }
  FrequencyBuckets out;
  out.t_frequent = t_frequent;
  out.t_medium = t_medium;
  for (int cls = 1; cls <= k; ++cls) {
    const long count = inv.class_count(cls);
    if (count >= t_frequent) {
      out.frequent.push_back(cls);
    } else if (count >= t_medium) {
      out.medium.push_back(cls);
    } else {
      out.rare.push_back(cls);
    }
  }
  return out;
}

FrequencyBuckets auto_buckets(const TripletInventory& inv, int k) {
  std::vector<long> counts(static_cast<size_t>(k));
  for (int cls = 1; cls <= k; ++cls) {
    counts[static_cast<size_t>(cls - 1)] = inv.class_count(cls);
  }
  std::vector<long> sorted = counts;
  std::sort(sorted.begin(), sorted.end(), std::greater<long>());
  // Top 30% / middle 40% / bottom 30% of classes by training count.
  const auto n_frequent = static_cast<size_t>(std::max(1, (k * 3) / 10));
  const auto n_medium = static_cast<size_t>(std::max(1, (k * 4) / 10));
  const long t_frequent = sorted[std::min(n_frequent - 1, sorted.size() - 1)];
  const long t_medium =
      sorted[std::min(n_frequent + n_medium - 1, sorted.size() - 1)];
  return threshold_buckets(inv, k, t_frequent, std::min(t_medium, t_frequent));
}

MetricReport split_report(const Dataset& ds, const PredictionSet& preds,
                          const ReportOptions& opts) {
  check_inputs(ds, preds);
  check_cutoffs(opts.cutoffs);
  const int k = ds.space.k;

  const bool want_seen =
      std::count(opts.splits.begin(), opts.splits.end(), "seen") > 0;
  const bool want_unseen =
      std::count(opts.splits.begin(), opts.splits.end(), "unseen") > 0;
  if ((want_seen || want_unseen) && !ds.inventory) {
    throw Error("training triplet inventory missing for seen/unseen splits");
  }
  if (opts.buckets && !ds.inventory) {
    throw Error("training triplet inventory missing for frequency buckets");
  }

  MetricReport report;
  report.k = k;
  report.cutoffs = opts.cutoffs;
  report.graph_constraint = opts.graph_constraint;

  auto evaluate_subset = [&](const std::vector<size_t>& indices)
      -> std::optional<SplitMetrics> {
    Dataset sub;
    sub.space = ds.space;
    sub.inventory = ds.inventory;
    PredictionSet sub_preds;
    size_t nonbg = 0;
    for (size_t i : indices) {
      sub.samples.push_back(ds.samples[i]);
      sub_preds.relation_scores.push_back(preds.relation_scores[i]);
      if (ds.samples[i].gt_label != kBackgroundId) ++nonbg;
    }
    if (nonbg == 0) return std::nullopt;
    SplitMetrics m;
    m.sample_count = indices.size();
    const auto images = rank_images(sub, sub_preds, opts.cutoffs, opts.graph_constraint);
    m.ranking = aggregate_ranking(images, opts.cutoffs, k, nullptr);
    std::vector<long> correct, total;
    count_classification(sub, sub_preds, correct, total);
    m.classification = aggregate_classification(correct, total, nullptr);
    return m;
  };

  std::vector<size_t> all_indices(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) all_indices[i] = i;

  for (const auto& name : opts.splits) {
    std::vector<size_t> indices;
    if (name == "all") {
      indices = all_indices;
    } else if (name == "seen" || name == "unseen") {
      for (size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.samples[i];
        if (s.gt_label == kBackgroundId) continue;
        const bool seen =
            ds.inventory->contains(s.subject_class, s.gt_label, s.object_class);
        if (seen == (name == "seen")) indices.push_back(i);
      }
    } else {
      throw Error("unknown split: " + name);
    }
    report.split_counts[name] = indices.size();
    report.splits[name] =
        indices.empty() ? std::nullopt : evaluate_subset(indices);
  }

  if (opts.buckets) {
    report.buckets_requested = true;
    report.buckets =
        opts.bucket_thresholds
            ? threshold_buckets(*ds.inventory, k, opts.bucket_thresholds->first,
                                opts.bucket_thresholds->second)
            : auto_buckets(*ds.inventory, k);

    // Bucket reports restrict the full pass to each class subset; the
    // ranking itself is unchanged, only the aggregation filters classes.
    const auto images = rank_images(ds, preds, opts.cutoffs, opts.graph_constraint);
    std::vector<long> correct, total;
    count_classification(ds, preds, correct, total);

    const std::vector<std::pair<std::string, const std::vector<int>*>> buckets = {
        {"frequent", &report.buckets.frequent},
        {"medium", &report.buckets.medium},
        {"rare", &report.buckets.rare},
    };
    for (const auto& [name, classes] : buckets) {
      const std::set<int> filter(classes->begin(), classes->end());
      size_t samples_in_bucket = 0;
      for (int cls : *classes) {
        samples_in_bucket += static_cast<size_t>(total[static_cast<size_t>(cls - 1)]);
      }
      report.split_counts[name] = samples_in_bucket;
      if (filter.empty() || samples_in_bucket == 0) {
        report.splits[name] = std::nullopt;
        continue;
      }
      SplitMetrics m;
      m.sample_count = samples_in_bucket;
      m.ranking = aggregate_ranking(images, opts.cutoffs, k, &filter);
      m.classification = aggregate_classification(correct, total, &filter);
      report.splits[name] = std::move(m);
    }
  }
  return report;
}

void validate_report(const MetricReport& report) {
  auto in_unit = [](double v) { return std::isnan(v) || (v >= 0.0 && v <= 1.0); };
  for (const auto& [name, split] : report.splits) {
    if (!split) continue;
    if (!in_unit(split->classification.acc) || !in_unit(split->classification.macc)) {
      throw Error("report split " + name + ": accuracy out of [0, 1]");
    }
    double prev_recall = -1.0;
    for (int cutoff : report.cutoffs) {
      const double recall = split->ranking.recall_at.at(cutoff);
      const double mrecall = split->ranking.mrecall_at.at(cutoff);
      if (!in_unit(recall) || !in_unit(mrecall)) {
        throw Error("report split " + name + ": recall out of [0, 1]");
      }
      if (!std::isnan(recall)) {
        if (recall + 1e-12 < prev_recall) {
          throw Error("report split " + name + ": recall decreased with cutoff");
        }
        prev_recall = recall;
      }
      const auto& per_class = split->ranking.per_class_recall.at(cutoff);
      double sum = 0.0;
      long present = 0;
      for (double v : per_class) {
        if (std::isnan(v)) continue;
        if (!in_unit(v)) throw Error("report split " + name + ": per-class recall out of range");
        sum += v;
        present += 1;
      }
      if (present > 0 &&
          std::fabs(mrecall - sum / static_cast<double>(present)) > 1e-12) {
        throw Error("report split " + name +
                    ": mean recall does not match per-class recalls");
      }
    }
  }
}

}  // namespace relbias::metrics
