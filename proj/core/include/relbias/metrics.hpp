#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "relbias/types.hpp"

namespace relbias::metrics {

/// Ground truth of one image: the (sample_id, relation) pairs annotated
/// with non-background labels.
struct SceneGroundTruth {
  std::string image_id;
  std::set<std::pair<std::string, int>> gt_triplets;
};

std::vector<SceneGroundTruth> build_ground_truth(const Dataset& ds);

/// Per-sample relation scores aligned with ds.samples; entry [i][r-1]
/// scores relation r for sample i. For ensembled predictions these are
/// the (1 - p_background)-scaled relation probabilities, so candidate
/// ranking reflects the full composed score.
struct PredictionSet {
  std::vector<std::vector<double>> relation_scores;
};

struct RankingMetrics {
  std::map<int, double> recall_at;
  std::map<int, double> mrecall_at;
  // Per cutoff, per class (index r-1): mean per-image recall of that class
  // over images containing it; NaN for classes absent from GT.
  std::map<int, std::vector<double>> per_class_recall;
  size_t image_count = 0;  // images with at least one GT triplet
  size_t gt_count = 0;
};

/// Ranked triplet retrieval. With the graph constraint each pair
/// contributes its single argmax relation as a candidate; without it,
/// every relation of every pair competes. Candidates rank by score
/// descending, ties by sample_id ascending.
RankingMetrics recall_at_k(const Dataset& ds, const PredictionSet& preds,
                           const std::vector<int>& cutoffs,
                           bool graph_constraint = true);

struct ClassificationMetrics {
  double acc = 0.0;
  double macc = 0.0;
  std::vector<double> per_class_acc;  // NaN for classes absent from GT
  std::vector<long> per_class_total;
  std::vector<long> per_class_correct;
  size_t sample_count = 0;
};

/// Top-1 accuracy over non-background samples; prediction is the argmax
/// relation (background excluded), ties to the lowest class index.
ClassificationMetrics classification_acc(const Dataset& ds,
                                         const PredictionSet& preds);

struct SplitMetrics {
  RankingMetrics ranking;
  ClassificationMetrics classification;
  size_t sample_count = 0;
};

/// Classes partitioned by their training count (frequent >= t_frequent,
/// medium >= t_medium, rest rare). Ids are 1..k.
struct FrequencyBuckets {
  std::vector<int> frequent;
  std::vector<int> medium;
  std::vector<int> rare;
  long t_frequent = 0;
  long t_medium = 0;
};

/// Thresholds chosen so the buckets hold the top 30% / middle 40% /
/// bottom 30% of classes by training count.
FrequencyBuckets auto_buckets(const TripletInventory& inv, int k);
FrequencyBuckets threshold_buckets(const TripletInventory& inv, int k,
                                   long t_frequent, long t_medium);

struct ReportOptions {
  std::vector<int> cutoffs{20, 50, 100};
  std::vector<std::string> splits{"all", "seen", "unseen"};
  bool graph_constraint = true;
  bool buckets = false;
  // Explicit thresholds; unset means auto.
  std::optional<std::pair<long, long>> bucket_thresholds;
};

struct MetricReport {
  int k = 0;
  std::vector<int> cutoffs;
  bool graph_constraint = true;
  // Sample splits (all/seen/unseen) and class buckets (frequent/medium/
  // rare). Empty splits carry a count of 0 and no metrics.
  std::map<std::string, std::optional<SplitMetrics>> splits;
  std::map<std::string, size_t> split_counts;
  bool buckets_requested = false;
  FrequencyBuckets buckets;
};

/// Full evaluation: the "all" split ranks every pair (background-labeled
/// pairs included as candidates); seen/unseen partition the
/// non-background samples by triplet membership in the training
/// inventory; buckets restrict the "all" pass to each class subset.
MetricReport split_report(const Dataset& ds, const PredictionSet& preds,
                          const ReportOptions& opts);

/// Internal consistency checks: every value lies in [0, 1], each mean
/// recall equals the mean of its per-class recalls, and recall is
/// non-decreasing in the cutoff. Throws on violation.
void validate_report(const MetricReport& report);

}  // namespace relbias::metrics
