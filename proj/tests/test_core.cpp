#include <algorithm>
#include <map>
#include <random>

#include "doctest.h"
#include "relbias/error.hpp"
#include "relbias/io.hpp"
#include "relbias/rng.hpp"
#include "relbias/synth.hpp"
#include "relbias/types.hpp"
#include "support.hpp"

using namespace relbias;
using testsupport::TempDir;
using testsupport::data_path;

TEST_CASE("label space validation") {
  RelationLabelSpace space;
  space.k = 1;
  CHECK_THROWS_AS(space.validate(), Error);
  space.k = 2;
  CHECK_NOTHROW(space.validate());
  space.class_names = {"on"};
  CHECK_THROWS_AS(space.validate(), Error);
  space.class_names = {"on", "on"};
  CHECK_THROWS_AS(space.validate(), Error);
  space.class_names = {"on", "under"};
  CHECK_NOTHROW(space.validate());
}

TEST_CASE("prior clamping keeps the simplex and floors zeros") {
  const auto p = PriorDistribution::clamped({1.0, 0.0}, PriorSource::counted);
  CHECK(p.probs[0] == doctest::Approx(1.0 - 1e-8).epsilon(1e-10));
  CHECK(p.probs[1] >= kProbFloor * 0.99);
  double sum = p.probs[0] + p.probs[1];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_NOTHROW(p.validate(2));
}

TEST_CASE("tiny fixture loads, joins, and round-trips byte-identically") {
  const Dataset ds = io::load_dataset(data_path("tiny_manifest.json"));
  CHECK(ds.space.k == 2);
  REQUIRE(ds.size() == 3);
  CHECK(ds.samples[0].sample_id == "s001");
  CHECK(ds.samples[2].gt_label == 0);
  CHECK(ds.inventory.has_value());
  CHECK(ds.inventory->contains(1, 1, 2));
  CHECK_FALSE(ds.inventory->contains(5, 1, 6));

  const std::string zs_bytes = io::read_file_bytes(data_path("tiny_zs.tsv"));
  const std::string sg_bytes = io::read_file_bytes(data_path("tiny_sg.tsv"));
  CHECK(io::table_to_string(io::zs_table(ds)) == zs_bytes);
  CHECK(io::table_to_string(io::sg_table(ds)) == sg_bytes);
}

TEST_CASE("empty tables yield an empty dataset with the declared k") {
  TempDir tmp("empty");
  io::LogitTable zs;
  zs.meta.k = 50;
  zs.meta.background = false;
  io::LogitTable sg;
  sg.meta.k = 50;
  sg.meta.background = true;
  io::write_logit_table(tmp.file("zs.tsv"), zs);
  io::write_logit_table(tmp.file("sg.tsv"), sg);
  io::write_file_bytes(tmp.file("m.json"),
                       "{\"zs_logits\":\"zs.tsv\",\"sg_logits\":\"sg.tsv\"}\n");
  const Dataset ds = io::load_dataset(tmp.file("m.json"));
  CHECK(ds.space.k == 50);
  CHECK(ds.empty());
}

TEST_CASE("loader error paths") {
  TempDir tmp("ioerr");
  const std::string header0 = "#relbias-logits v1\tk=2\tbackground=0\n";
  const std::string header1 = "#relbias-logits v1\tk=2\tbackground=1\n";
  const std::string cols0 = "sample_id\timage_id\tsubject_class\tobject_class\tgt_label\tl0\tl1\n";
  const std::string cols1 = "sample_id\timage_id\tsubject_class\tobject_class\tgt_label\tl0\tl1\tl2\n";
  const auto manifest = [&](const std::string& dir) {
    io::write_file_bytes(dir + "/m.json",
                         "{\"zs_logits\":\"zs.tsv\",\"sg_logits\":\"sg.tsv\"}\n");
    return dir + "/m.json";
  };

  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(io::load_dataset(tmp.file("absent.json")),
                         doctest::Contains("cannot open"), Error);
  }
  SUBCASE("NaN logit text names the sample") {
    io::write_file_bytes(tmp.file("zs.tsv"),
                         header0 + cols0 + "a\timg\t1\t1\t1\tNaN\t0.0\n");
    io::write_file_bytes(tmp.file("sg.tsv"),
                         header1 + cols1 + "a\timg\t1\t1\t1\t0\t0\t0\n");
    CHECK_THROWS_WITH_AS(io::load_dataset(manifest(tmp.path())),
                         doctest::Contains("non-finite logit at sample_id a"), Error);
  }
  SUBCASE("duplicate sample_id") {
    io::write_file_bytes(tmp.file("zs.tsv"), header0 + cols0 +
                                                 "a\timg\t1\t1\t1\t0\t0\n"
                                                 "a\timg\t1\t1\t1\t0\t0\n");
    io::write_file_bytes(tmp.file("sg.tsv"),
                         header1 + cols1 + "a\timg\t1\t1\t1\t0\t0\t0\n");
    CHECK_THROWS_WITH_AS(io::load_dataset(manifest(tmp.path())),
                         doctest::Contains("duplicate sample_id"), Error);
  }
  SUBCASE("row width does not match declared k") {
    io::write_file_bytes(tmp.file("zs.tsv"),
                         header0 + cols0 + "a\timg\t1\t1\t1\t0\t0\t0\n");
    io::write_file_bytes(tmp.file("sg.tsv"),
                         header1 + cols1 + "a\timg\t1\t1\t1\t0\t0\t0\n");
    CHECK_THROWS_WITH_AS(io::load_dataset(manifest(tmp.path())),
                         doctest::Contains("declared k"), Error);
  }
  SUBCASE("orphan rows in either table") {
    io::write_file_bytes(tmp.file("zs.tsv"), header0 + cols0 +
                                                 "a\timg\t1\t1\t1\t0\t0\n"
                                                 "b\timg\t1\t1\t1\t0\t0\n");
    io::write_file_bytes(tmp.file("sg.tsv"),
                         header1 + cols1 + "a\timg\t1\t1\t1\t0\t0\t0\n");
    CHECK_THROWS_WITH_AS(io::load_dataset(manifest(tmp.path())),
                         doctest::Contains("not sg table"), Error);

    io::write_file_bytes(tmp.file("zs.tsv"), header0 + cols0 + "a\timg\t1\t1\t1\t0\t0\n");
    io::write_file_bytes(tmp.file("sg.tsv"), header1 + cols1 +
                                                 "a\timg\t1\t1\t1\t0\t0\t0\n"
                                                 "c\timg\t1\t1\t1\t0\t0\t0\n");
    CHECK_THROWS_WITH_AS(io::load_dataset(manifest(tmp.path())),
                         doctest::Contains("not zs table"), Error);
  }
}

TEST_CASE("join is insensitive to file row order") {
  const auto model = synth::make_model(
      4, 3, 2.0, PriorDistribution::uniform_over(4), synth::zipf_prior(4, 0.7),
      PriorDistribution::uniform_over(4), 0.1, 1.0, 21);
  const Dataset ds = synth::generate(model, 40, synth::Regime::sgg).dataset;

  TempDir tmp("shuffle");
  io::LogitTable zs = io::zs_table(ds);
  io::LogitTable sg = io::sg_table(ds);
  std::mt19937 gen(7);
  std::shuffle(zs.rows.begin(), zs.rows.end(), gen);
  std::shuffle(sg.rows.begin(), sg.rows.end(), gen);
  io::write_logit_table(tmp.file("zs.tsv"), zs);
  io::write_logit_table(tmp.file("sg.tsv"), sg);
  io::write_file_bytes(tmp.file("m.json"),
                       "{\"zs_logits\":\"zs.tsv\",\"sg_logits\":\"sg.tsv\"}\n");

  const Dataset reloaded = io::load_dataset(tmp.file("m.json"));
  CHECK(reloaded.samples == ds.samples);
}

TEST_CASE("serialize(load(x)) is stable for generated data") {
  const auto model = synth::make_model(
      3, 2, 1.5, synth::zipf_prior(3, 1.0), synth::zipf_prior(3, 0.5),
      PriorDistribution::uniform_over(3), 0.0, 0.0, 5);
  const Dataset ds = synth::generate(model, 25, synth::Regime::sgg).dataset;

  TempDir tmp("roundtrip");
  io::write_logit_table(tmp.file("zs.tsv"), io::zs_table(ds));
  io::write_logit_table(tmp.file("sg.tsv"), io::sg_table(ds));
  io::write_file_bytes(tmp.file("m.json"),
                       "{\"zs_logits\":\"zs.tsv\",\"sg_logits\":\"sg.tsv\"}\n");
  const Dataset reloaded = io::load_dataset(tmp.file("m.json"));
  CHECK(reloaded.samples == ds.samples);
  CHECK(io::table_to_string(io::zs_table(reloaded)) ==
        io::read_file_bytes(tmp.file("zs.tsv")));
}

TEST_CASE("filter_nonbackground") {
  SUBCASE("all background yields empty") {
    const auto ds = testsupport::make_flat_dataset(2, {0, 0, 0});
    CHECK(filter_nonbackground(ds).empty());
  }
  SUBCASE("keeps order and labels") {
    const auto ds = testsupport::make_flat_dataset(2, {0, 1, 0, 2});
    const auto kept = filter_nonbackground(ds);
    REQUIRE(kept.size() == 2);
    CHECK(kept.samples[0].sample_id == "s0001");
    CHECK(kept.samples[1].sample_id == "s0003");
  }
  SUBCASE("count and multiset match an independent scan; idempotent") {
    const auto model = synth::make_model(
        5, 4, 2.0, synth::zipf_prior(5, 1.0), synth::zipf_prior(5, 0.7),
        PriorDistribution::uniform_over(5), 0.1, 2.0, 11);
    const Dataset ds = synth::generate(model, 100, synth::Regime::sgg).dataset;
    std::map<int, int> expected;
    int nonbg = 0;
    for (const auto& s : ds.samples) {
      if (s.gt_label != 0) {
        expected[s.gt_label]++;
        nonbg++;
      }
    }
    const Dataset kept = filter_nonbackground(ds);
    CHECK(static_cast<int>(kept.size()) == nonbg);
    std::map<int, int> got;
    for (const auto& s : kept.samples) got[s.gt_label]++;
    CHECK(got == expected);
    CHECK(filter_nonbackground(kept) == kept);
  }
}

TEST_CASE("manifest class names") {
  TempDir tmp("names");
  const Dataset base = io::load_dataset(data_path("tiny_manifest.json"));
  io::write_logit_table(tmp.file("zs.tsv"), io::zs_table(base));
  io::write_logit_table(tmp.file("sg.tsv"), io::sg_table(base));
  io::write_file_bytes(tmp.file("names.txt"), "on\nunder\n");
  io::write_file_bytes(tmp.file("m.json"),
                       "{\"zs_logits\":\"zs.tsv\",\"sg_logits\":\"sg.tsv\","
                       "\"class_names\":\"names.txt\"}\n");
  const Dataset ds = io::load_dataset(tmp.file("m.json"));
  CHECK(ds.space.class_names == std::vector<std::string>{"on", "under"});

  io::write_file_bytes(tmp.file("names.txt"), "on\n");
  CHECK_THROWS_WITH_AS(io::load_dataset(tmp.file("m.json")),
                       doctest::Contains("class-names"), Error);
}

TEST_CASE("prior file read-back") {
  const auto prior = io::read_prior_file(data_path("tiny_prior.json"), 2);
  CHECK(prior.probs[0] == 0.6);
  CHECK(prior.probs[1] == 0.4);
  CHECK(prior.source == PriorSource::file);

  TempDir tmp("prior");
  io::write_prior_file(tmp.file("p.json"), prior);
  const auto again = io::read_prior_file(tmp.file("p.json"), 2);
  CHECK(again.probs == prior.probs);
}
