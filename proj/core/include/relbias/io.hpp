#pragma once

#include <string>
#include <vector>

#include "relbias/types.hpp"

namespace relbias::io {

/// Header metadata of a logit/probability table. `background` tables carry
/// k+1 value columns (index 0 = background); otherwise k columns.
/// Optional tokens record whether values are probabilities rather than
/// logits, plus the producing tool and config hash.
struct TableMeta {
  int k = 0;
  bool background = false;
  bool probs = false;
  std::string config_hash;  // empty = no token
  std::string tool;         // empty = no token
};

struct TableRow {
  std::string sample_id;
  std::string image_id;
  int subject_class = 0;
  int object_class = 0;
  int gt_label = 0;
  std::vector<double> values;
};

struct LogitTable {
  TableMeta meta;
  std::vector<TableRow> rows;
};

/// Canonical float formatting for TSV emission: scientific notation with
/// 17 fractional digits, which round-trips doubles exactly.
std::string format_value(double v);

std::string table_to_string(const LogitTable& table);
LogitTable read_logit_table(const std::string& path);
void write_logit_table(const std::string& path, const LogitTable& table);

/// Builds the two canonical tables of a dataset.
LogitTable zs_table(const Dataset& ds);
LogitTable sg_table(const Dataset& ds);

PriorDistribution read_prior_file(const std::string& path, int expected_k = -1);

/// Extra key/value pairs (e.g. cache_key, config) are embedded alongside
/// the standard fields.
void write_prior_file(const std::string& path, const PriorDistribution& prior,
                      const std::vector<std::pair<std::string, std::string>>&
                          extra = {});

TripletInventory read_triplets(const std::string& path);
void write_triplets(const std::string& path, const TripletInventory& inv);

std::vector<std::string> read_class_names(const std::string& path, int k);

struct Manifest {
  std::string path;  // manifest file itself, as given
  std::string zs_logits;
  std::string sg_logits;
  std::string class_names;     // optional
  std::string train_triplets;  // optional
};

Manifest read_manifest(const std::string& path);

/// Loads and joins both branch tables named by a manifest into a validated
/// Dataset in canonical (ascending sample_id) order.
Dataset load_dataset(const std::string& manifest_path);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

}  // namespace relbias::io
