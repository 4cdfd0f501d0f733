#pragma once

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "relbias/types.hpp"

namespace testsupport {

inline std::string data_path(const std::string& name) {
  return std::string(RELBIAS_TEST_DATA_DIR) + "/" + name;
}

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = (std::filesystem::temp_directory_path() /
             ("relbias_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++)))
                .string();
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (std::filesystem::path(path_) / name).string();
  }

 private:
  std::string path_;
};

inline relbias::RelationSample make_sample(const std::string& id,
                                           const std::string& image, int gt,
                                           std::vector<double> zs,
                                           std::vector<double> sg,
                                           int subject = 1, int object = 1) {
  relbias::RelationSample s;
  s.sample_id = id;
  s.image_id = image;
  s.subject_class = subject;
  s.object_class = object;
  s.gt_label = gt;
  s.zs_logits = std::move(zs);
  s.sg_logits = std::move(sg);
  return s;
}

/// Dataset with flat logits; only ids/labels matter to the caller.
inline relbias::Dataset make_flat_dataset(int k, const std::vector<int>& gts) {
  relbias::Dataset ds;
  ds.space.k = k;
  for (size_t i = 0; i < gts.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%04zu", i);
    ds.samples.push_back(make_sample(
        buf, "img0", gts[i], std::vector<double>(static_cast<size_t>(k), 0.0),
        std::vector<double>(static_cast<size_t>(k) + 1, 0.0)));
  }
  return ds;
}

}  // namespace testsupport
