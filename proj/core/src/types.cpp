#include "relbias/types.hpp"

#include <cmath>
#include <set>
#include <unordered_set>

#include "relbias/error.hpp"
#include "relbias/numeric.hpp"

namespace relbias {

void RelationLabelSpace::validate() const {
  if (k < 2) throw Error("label space needs k >= 2, got " + std::to_string(k));
  if (!class_names.empty()) {
    if (static_cast<int>(class_names.size()) != k) {
      throw Error("class_names has " + std::to_string(class_names.size()) +
                  " entries, expected " + std::to_string(k));
    }
    std::set<std::string> seen;
    for (const auto& name : class_names) {
      if (name.empty()) throw Error("empty class name");
      if (!seen.insert(name).second) throw Error("duplicate class name: " + name);
    }
  }
}

const char* to_string(PriorSource s) {
  switch (s) {
    case PriorSource::counted:
      return "counted";
    case PriorSource::estimated:
      return "estimated";
    case PriorSource::uniform:
      return "uniform";
    case PriorSource::file:
      return "file";
  }
  return "unknown";
}

PriorSource prior_source_from_string(const std::string& s) {
  if (s == "counted") return PriorSource::counted;
  if (s == "estimated") return PriorSource::estimated;
  if (s == "uniform") return PriorSource::uniform;
  if (s == "file") return PriorSource::file;
  throw Error("unknown prior source: " + s);
}

void PriorDistribution::validate(int expected_k) const {
  if (expected_k >= 0 && k() != expected_k) {
    throw Error("prior has " + std::to_string(k()) + " entries, expected " +
                std::to_string(expected_k));
  }
  if (probs.size() < 2) throw Error("prior needs at least 2 entries");
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw Error("prior entry must be finite and >= 0");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > kSimplexTol) {
    throw Error("prior mass sums to " + std::to_string(sum) + ", expected 1");
  }
}

PriorDistribution PriorDistribution::uniform_over(int k) {
  if (k < 2) throw Error("uniform prior needs k >= 2");
  PriorDistribution out;
  out.probs.assign(static_cast<size_t>(k), 1.0 / k);
  out.source = PriorSource::uniform;
  return out;
}

PriorDistribution PriorDistribution::clamped(std::vector<double> probs,
                                             PriorSource source) {
  if (probs.size() < 2) throw Error("prior needs at least 2 entries");
  double sum = 0.0;
  for (double& p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw Error("prior entry must be finite and >= 0");
    if (p < kProbFloor) p = kProbFloor;
    sum += p;
  }
  for (double& p : probs) p /= sum;
  PriorDistribution out;
  out.probs = std::move(probs);
  out.source = source;
  return out;
}

long TripletInventory::class_count(int relation) const {
  long total = 0;
  for (const auto& [triple, count] : counts) {
    if (triple[1] == relation) total += count;
  }
  return total;
}

void Dataset::validate() const {
  space.validate();
  const int k = space.k;
  std::unordered_set<std::string> ids;
  ids.reserve(samples.size());
  const RelationSample* prev = nullptr;
  for (const auto& s : samples) {
    if (s.sample_id.empty()) throw Error("sample with empty sample_id");
    if (s.image_id.empty()) throw Error("sample " + s.sample_id + " has no image_id");
    if (!ids.insert(s.sample_id).second) {
      throw Error("duplicate sample_id: " + s.sample_id);
    }
    if (s.subject_class < 0 || s.object_class < 0) {
      throw Error("negative object-class id at sample " + s.sample_id);
    }
    if (s.gt_label < 0 || s.gt_label > k) {
      throw Error("gt_label out of range at sample " + s.sample_id);
    }
    if (static_cast<int>(s.zs_logits.size()) != k) {
      throw Error("zs logits of sample " + s.sample_id + " have length " +
                  std::to_string(s.zs_logits.size()) + ", expected " +
                  std::to_string(k));
    }
    if (static_cast<int>(s.sg_logits.size()) != k + 1) {
      throw Error("sg logits of sample " + s.sample_id + " have length " +
                  std::to_string(s.sg_logits.size()) + ", expected " +
                  std::to_string(k + 1));
    }
    if (!all_finite(s.zs_logits) || !all_finite(s.sg_logits)) {
      throw Error("non-finite logit at sample " + s.sample_id);
    }
    if (prev && !(prev->sample_id < s.sample_id)) {
      throw Error("samples not in canonical order at " + s.sample_id);
    }
    prev = &s;
  }
  if (inventory) {
    for (const auto& [triple, count] : inventory->counts) {
      if (triple[1] < 1 || triple[1] > k) {
        throw Error("inventory relation out of range: " + std::to_string(triple[1]));
      }
      if (count < 1) throw Error("inventory count must be positive");
    }
  }
}

Dataset filter_nonbackground(const Dataset& ds) {
  Dataset out;
  out.space = ds.space;
  out.inventory = ds.inventory;
  out.samples.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    if (s.gt_label != kBackgroundId) out.samples.push_back(s);
  }
  return out;
}

}  // namespace relbias
