#include "relbias/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "relbias/error.hpp"
#include "relbias/numeric.hpp"

namespace relbias::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

long parse_int(const std::string& text, const std::string& what) {
  if (text.empty()) throw Error("empty " + what);
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(text.c_str(), &end, 10);
  if (errno != 0 || end != text.c_str() + text.size()) {
    throw Error("bad integer for " + what + ": \"" + text + "\"");
  }
  return v;
}

double parse_value(const std::string& text, const std::string& sample_id) {
  if (text.empty()) throw Error("empty logit field at sample_id " + sample_id);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (errno == ERANGE || end != text.c_str() + text.size()) {
    throw Error("unparseable logit \"" + text + "\" at sample_id " + sample_id);
  }
  if (!std::isfinite(v)) {
    throw Error("non-finite logit at sample_id " + sample_id);
  }
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string bytes = buf.str();
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= bytes.size()) {
    size_t pos = bytes.find('\n', start);
    if (pos == std::string::npos) {
      if (start < bytes.size()) lines.push_back(bytes.substr(start));
      break;
    }
    std::string line = bytes.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = pos + 1;
  }
  return lines;
}

json parse_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("bad JSON in " + path + ": " + e.what());
  }
}

std::string resolve_relative(const std::string& base_file,
                             const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(base_file).parent_path() / p).string();
}

}  // namespace

std::string format_value(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17e", v);
  return buf;
}

std::string table_to_string(const LogitTable& table) {
  const int cols = table.meta.background ? table.meta.k + 1 : table.meta.k;
  std::ostringstream out;
  out << "#relbias-logits v1\tk=" << table.meta.k
      << "\tbackground=" << (table.meta.background ? 1 : 0);
  if (table.meta.probs) out << "\tvalues=probs";
  if (!table.meta.config_hash.empty()) out << "\tconfig=" << table.meta.config_hash;
  if (!table.meta.tool.empty()) out << "\ttool=" << table.meta.tool;
  out << '\n';
  out << "sample_id\timage_id\tsubject_class\tobject_class\tgt_label";
  for (int c = 0; c < cols; ++c) out << "\tl" << c;
  out << '\n';
  for (const auto& row : table.rows) {
    if (static_cast<int>(row.values.size()) != cols) {
      throw Error("row " + row.sample_id + " has " +
                  std::to_string(row.values.size()) + " values, expected " +
                  std::to_string(cols));
    }
    out << row.sample_id << '\t' << row.image_id << '\t' << row.subject_class
        << '\t' << row.object_class << '\t' << row.gt_label;
    for (double v : row.values) out << '\t' << format_value(v);
    out << '\n';
  }
  return out.str();
}

LogitTable read_logit_table(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.size() < 2) throw Error("truncated logit table: " + path);

  LogitTable table;
  const auto header = split_tabs(lines[0]);
  if (header.empty() || header[0] != "#relbias-logits v1") {
    throw Error("not a relbias logit table: " + path);
  }
  bool have_k = false, have_bg = false;
  for (size_t i = 1; i < header.size(); ++i) {
    const auto& tok = header[i];
    const size_t eq = tok.find('=');
    if (eq == std::string::npos) throw Error("bad header token \"" + tok + "\" in " + path);
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "k") {
      table.meta.k = static_cast<int>(parse_int(val, "k"));
      have_k = true;
    } else if (key == "background") {
      table.meta.background = parse_int(val, "background") != 0;
      have_bg = true;
    } else if (key == "values") {
      table.meta.probs = (val == "probs");
    } else if (key == "config") {
      table.meta.config_hash = val;
    } else if (key == "tool") {
      table.meta.tool = val;
    } else {
      throw Error("unknown header token \"" + key + "\" in " + path);
    }
  }
  if (!have_k || !have_bg) throw Error("header missing k/background in " + path);
  if (table.meta.k < 2) throw Error("table declares k < 2: " + path);

  const int cols = table.meta.background ? table.meta.k + 1 : table.meta.k;
  const auto names = split_tabs(lines[1]);
  if (names.size() != static_cast<size_t>(5 + cols) || names[0] != "sample_id") {
    throw Error("bad column header in " + path);
  }

  table.rows.reserve(lines.size() - 2);
  for (size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split_tabs(lines[i]);
    if (fields.size() != static_cast<size_t>(5 + cols)) {
      throw Error("row " + std::to_string(i + 1) + " in " + path + " has " +
                  std::to_string(fields.size()) + " fields, expected " +
                  std::to_string(5 + cols) +
                  " (declared k may not match row width)");
    }
    TableRow row;
    row.sample_id = fields[0];
    row.image_id = fields[1];
    row.subject_class = static_cast<int>(parse_int(fields[2], "subject_class"));
    row.object_class = static_cast<int>(parse_int(fields[3], "object_class"));
    row.gt_label = static_cast<int>(parse_int(fields[4], "gt_label"));
    row.values.reserve(static_cast<size_t>(cols));
    for (int c = 0; c < cols; ++c) {
      row.values.push_back(parse_value(fields[static_cast<size_t>(5 + c)], row.sample_id));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_logit_table(const std::string& path, const LogitTable& table) {
  write_file_bytes(path, table_to_string(table));
}

LogitTable zs_table(const Dataset& ds) {
  LogitTable t;
  t.meta.k = ds.space.k;
  t.meta.background = false;
  for (const auto& s : ds.samples) {
    t.rows.push_back({s.sample_id, s.image_id, s.subject_class, s.object_class,
                      s.gt_label, s.zs_logits});
  }
  return t;
}

LogitTable sg_table(const Dataset& ds) {
  LogitTable t;
  t.meta.k = ds.space.k;
  t.meta.background = true;
  for (const auto& s : ds.samples) {
    t.rows.push_back({s.sample_id, s.image_id, s.subject_class, s.object_class,
                      s.gt_label, s.sg_logits});
  }
  return t;
}

PriorDistribution read_prior_file(const std::string& path, int expected_k) {
  const json j = parse_json_file(path);
  if (!j.is_object() || !j.contains("k") || !j.contains("probs")) {
    throw Error("prior file missing k/probs: " + path);
  }
  const int k = j.at("k").get<int>();
  if (expected_k >= 0 && k != expected_k) {
    throw Error("prior file " + path + " has k=" + std::to_string(k) +
                ", expected " + std::to_string(expected_k));
  }
  PriorDistribution prior;
  prior.probs = j.at("probs").get<std::vector<double>>();
  if (static_cast<int>(prior.probs.size()) != k) {
    throw Error("prior file " + path + " declares k=" + std::to_string(k) +
                " but has " + std::to_string(prior.probs.size()) + " probs");
  }
  prior.source = j.contains("source")
                     ? prior_source_from_string(j.at("source").get<std::string>())
                     : PriorSource::file;
  prior.validate(k);
  const bool needs_clamp =
      std::any_of(prior.probs.begin(), prior.probs.end(),
                  [](double p) { return p < kProbFloor; });
  if (needs_clamp) {
    prior = PriorDistribution::clamped(std::move(prior.probs), prior.source);
  }
  return prior;
}

void write_prior_file(
    const std::string& path, const PriorDistribution& prior,
    const std::vector<std::pair<std::string, std::string>>& extra) {
  json j;
  j["k"] = prior.k();
  j["probs"] = prior.probs;
  j["source"] = to_string(prior.source);
  for (const auto& [key, value] : extra) j[key] = value;
  write_file_bytes(path, j.dump(2) + "\n");
}

TripletInventory read_triplets(const std::string& path) {
  TripletInventory inv;
  for (const auto& line : read_lines(path)) {
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) throw Error("bad triplet row in " + path + ": " + line);
    const int s = static_cast<int>(parse_int(fields[0], "subject_class"));
    const int r = static_cast<int>(parse_int(fields[1], "relation"));
    const int o = static_cast<int>(parse_int(fields[2], "object_class"));
    inv.counts[{s, r, o}] += 1;
  }
  return inv;
}

void write_triplets(const std::string& path, const TripletInventory& inv) {
  std::ostringstream out;
  for (const auto& [triple, count] : inv.counts) {
    for (long i = 0; i < count; ++i) {
      out << triple[0] << '\t' << triple[1] << '\t' << triple[2] << '\n';
    }
  }
  write_file_bytes(path, out.str());
}

std::vector<std::string> read_class_names(const std::string& path, int k) {
  std::vector<std::string> names;
  for (const auto& line : read_lines(path)) {
    if (!line.empty()) names.push_back(line);
  }
  if (static_cast<int>(names.size()) != k) {
    throw Error("class-names file " + path + " has " +
                std::to_string(names.size()) + " names, expected " +
                std::to_string(k));
  }
  return names;
}

Manifest read_manifest(const std::string& path) {
  const json j = parse_json_file(path);
  if (!j.is_object() || !j.contains("zs_logits") || !j.contains("sg_logits")) {
    throw Error("manifest missing zs_logits/sg_logits: " + path);
  }
  Manifest m;
  m.path = path;
  m.zs_logits = resolve_relative(path, j.at("zs_logits").get<std::string>());
  m.sg_logits = resolve_relative(path, j.at("sg_logits").get<std::string>());
  if (j.contains("class_names") && !j.at("class_names").is_null()) {
    m.class_names = resolve_relative(path, j.at("class_names").get<std::string>());
  }
  if (j.contains("train_triplets") && !j.at("train_triplets").is_null()) {
    m.train_triplets =
        resolve_relative(path, j.at("train_triplets").get<std::string>());
  }
  return m;
}

Dataset load_dataset(const std::string& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const LogitTable zs = read_logit_table(m.zs_logits);
  const LogitTable sg = read_logit_table(m.sg_logits);
  if (zs.meta.background) {
    throw Error("zs table must be background=0: " + m.zs_logits);
  }
  if (!sg.meta.background) {
    throw Error("sg table must be background=1: " + m.sg_logits);
  }
  if (zs.meta.k != sg.meta.k) {
    throw Error("k mismatch between branch tables: " + std::to_string(zs.meta.k) +
                " vs " + std::to_string(sg.meta.k));
  }

  std::map<std::string, const TableRow*> sg_rows;
  for (const auto& row : sg.rows) {
    if (!sg_rows.emplace(row.sample_id, &row).second) {
      throw Error("duplicate sample_id in " + m.sg_logits + ": " + row.sample_id);
    }
  }

  Dataset ds;
  ds.space.k = zs.meta.k;
  ds.samples.reserve(zs.rows.size());
  std::map<std::string, bool> zs_seen;
  for (const auto& row : zs.rows) {
    if (!zs_seen.emplace(row.sample_id, true).second) {
      throw Error("duplicate sample_id in " + m.zs_logits + ": " + row.sample_id);
    }
    const auto it = sg_rows.find(row.sample_id);
    if (it == sg_rows.end()) {
      throw Error("sample " + row.sample_id + " present in zs table but not sg table");
    }
    const TableRow& other = *it->second;
    if (other.image_id != row.image_id || other.subject_class != row.subject_class ||
        other.object_class != row.object_class || other.gt_label != row.gt_label) {
      throw Error("branch tables disagree on metadata of sample " + row.sample_id);
    }
    RelationSample s;
    s.sample_id = row.sample_id;
    s.image_id = row.image_id;
    s.subject_class = row.subject_class;
    s.object_class = row.object_class;
    s.gt_label = row.gt_label;
    s.zs_logits = row.values;
    s.sg_logits = other.values;
    ds.samples.push_back(std::move(s));
  }
  if (sg_rows.size() != zs_seen.size()) {
    for (const auto& [id, row] : sg_rows) {
      if (!zs_seen.count(id)) {
        throw Error("sample " + id + " present in sg table but not zs table");
      }
    }
  }

  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const RelationSample& a, const RelationSample& b) {
              return a.sample_id < b.sample_id;
            });

  if (!m.class_names.empty()) {
    ds.space.class_names = read_class_names(m.class_names, ds.space.k);
  }
  if (!m.train_triplets.empty()) {
    ds.inventory = read_triplets(m.train_triplets);
  }
  ds.validate();
  return ds;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

}  // namespace relbias::io
