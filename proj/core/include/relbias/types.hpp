#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace relbias {

inline constexpr int kBackgroundId = 0;
inline constexpr double kProbFloor = 1e-8;
inline constexpr double kSimplexTol = 1e-6;

/// The label space for one dataset: k non-background relation classes
/// (ids 1..k) plus the implicit background class 0.
struct RelationLabelSpace {
  int k = 0;
  std::vector<std::string> class_names;  // empty or exactly k entries

  void validate() const;
  bool operator==(const RelationLabelSpace&) const = default;
};

/// One subject-object pair with the raw logits of both branches.
/// zs_logits covers the k relation classes only; sg_logits has k+1
/// entries with index 0 = background.
struct RelationSample {
  std::string sample_id;
  std::string image_id;
  int subject_class = 0;
  int object_class = 0;
  int gt_label = 0;  // 0 = background
  std::vector<double> zs_logits;
  std::vector<double> sg_logits;

  bool operator==(const RelationSample&) const = default;
};

enum class PriorSource { counted, estimated, uniform, file };

const char* to_string(PriorSource s);
PriorSource prior_source_from_string(const std::string& s);

/// A distribution over the k non-background relation classes.
/// probs[r-1] is the mass of relation r.
struct PriorDistribution {
  std::vector<double> probs;
  PriorSource source = PriorSource::uniform;

  int k() const { return static_cast<int>(probs.size()); }

  /// Checks length, non-negativity, and that the mass sums to 1 within
  /// kSimplexTol.
  void validate(int expected_k) const;

  static PriorDistribution uniform_over(int k);

  /// Floors every entry at kProbFloor and renormalizes, so log(prob)
  /// stays finite downstream.
  static PriorDistribution clamped(std::vector<double> probs,
                                   PriorSource source);

  bool operator==(const PriorDistribution&) const = default;
};

/// Multiset of (subject_class, relation, object_class) triples seen in
/// training. Duplicated file rows accumulate as counts.
struct TripletInventory {
  std::map<std::array<int, 3>, long> counts;

  bool contains(int subject, int relation, int object) const {
    return counts.count({subject, relation, object}) > 0;
  }
  /// Total training count of relation class r across all triples.
  long class_count(int relation) const;
  size_t distinct() const { return counts.size(); }

  bool operator==(const TripletInventory&) const = default;
};

struct Dataset {
  RelationLabelSpace space;
  std::vector<RelationSample> samples;  // canonical order: ascending sample_id
  std::optional<TripletInventory> inventory;

  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  void validate() const;

  bool operator==(const Dataset&) const = default;
};

/// Keeps only samples with a non-background ground-truth label; order and
/// label space are unchanged.
Dataset filter_nonbackground(const Dataset& ds);

}  // namespace relbias
