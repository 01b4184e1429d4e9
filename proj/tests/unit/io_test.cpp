// Copyright 2026 The Reward Audit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "reward_audit/io.hpp"

namespace ra = reward_audit;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("reward_audit_io_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

std::size_t ingest_error_line(const fs::path& p, std::string* what = nullptr) {
  try {
    ra::ingest_pairs(p);
  } catch (const ra::IngestError& e) {
    if (what) *what = e.what();
    return e.line();
  }
  ADD_FAILURE() << "expected IngestError";
  return 0;
}

TEST_F(IoTest, EmptyFileHasNoPairs) {
  std::string what;
  ingest_error_line(write("empty.jsonl", ""), &what);
  EXPECT_NE(what.find("no pairs"), std::string::npos) << what;
}

TEST_F(IoTest, TwoValidRecords) {
  const auto pairs = ra::ingest_pairs(write(
      "ok.jsonl",
      "{\"pair_id\": \"a\", \"preferred\": [1, 2, 3], \"rejected\": [0, 0, 1]}\n"
      "\n"
      "{\"pair_id\": \"b\", \"preferred\": [0.5, -1, 2e-3], \"rejected\": [1, 1, 1], "
      "\"schema\": \"v1\"}\n"));
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].dim(), 3u);
  EXPECT_EQ(pairs[1].pair_id(), "b");
  EXPECT_EQ(pairs[0].margin(), ra::FeatureVector({1.0, 2.0, 2.0}));
}

TEST_F(IoTest, MismatchedLengthsNameBothDimensions) {
  std::string what;
  const std::size_t line = ingest_error_line(
      write("bad.jsonl",
            "{\"pair_id\": \"a\", \"preferred\": [1, 2, 3], \"rejected\": [0, 0, 1]}\n"
            "{\"pair_id\": \"b\", \"preferred\": [1, 2, 3], \"rejected\": [0, 0, 1, 4]}\n"),
      &what);
  EXPECT_EQ(line, 2u);
  EXPECT_NE(what.find("line 2"), std::string::npos) << what;
  EXPECT_NE(what.find("3"), std::string::npos) << what;
  EXPECT_NE(what.find("4"), std::string::npos) << what;
}

TEST_F(IoTest, MalformedRecordsCarryLineNumbers) {
  EXPECT_EQ(ingest_error_line(write("a.jsonl",
                                    "{\"pair_id\": \"a\", \"preferred\": [1], \"rejected\": [0]}\n"
                                    "{not json\n")),
            2u);
  EXPECT_EQ(ingest_error_line(write("b.jsonl", "{\"preferred\": [1], \"rejected\": [0]}\n")), 1u);
  EXPECT_EQ(ingest_error_line(write("c.jsonl",
                                    "{\"pair_id\": \"a\", \"preferred\": [1], \"rejected\": [0]}\n"
                                    "{\"pair_id\": \"b\", \"preferred\": [1, 2], "
                                    "\"rejected\": [0, 1]}\n")),
            2u);
  EXPECT_EQ(ingest_error_line(write("d.jsonl",
                                    "{\"pair_id\": \"a\", \"preferred\": [\"x\"], "
                                    "\"rejected\": [0]}\n")),
            1u);
  EXPECT_EQ(ingest_error_line(write("e.jsonl",
                                    "{\"pair_id\": \"a\", \"preferred\": [1], \"rejected\": [0], "
                                    "\"schema\": \"v9\"}\n")),
            1u);
  EXPECT_EQ(ingest_error_line(write("f.jsonl", "[1, 2]\n")), 1u);
  EXPECT_EQ(ingest_error_line(dir_ / "missing.jsonl"), 0u);
}

TEST_F(IoTest, PairsRoundTrip) {
  const std::vector<ra::PreferencePair> pairs{
      ra::PreferencePair("x", ra::FeatureVector({0.1, 1.0 / 3.0}), ra::FeatureVector({-2.5, 1e-300})),
      ra::PreferencePair("y", ra::FeatureVector({7.0, -0.0}), ra::FeatureVector({3.0, 2.0}))};
  const fs::path p = dir_ / "pairs.jsonl";
  ra::write_pairs_jsonl(p, pairs);
  const auto back = ra::ingest_pairs(p);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].pair_id(), pairs[i].pair_id());
    EXPECT_EQ(back[i].preferred(), pairs[i].preferred());
    EXPECT_EQ(back[i].rejected(), pairs[i].rejected());
  }
}

TEST_F(IoTest, CompletionsRoundTripAndValidation) {
  const std::vector<ra::Completion> cs{{"c0", ra::FeatureVector({0.25, -1.0}), 1},
                                       {"c1", ra::FeatureVector({2.0, 3.0}), 0}};
  const fs::path p = dir_ / "completions.jsonl";
  ra::write_completions(p, cs);
  const auto back = ra::read_completions(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].completion_id, "c0");
  EXPECT_EQ(back[0].features, cs[0].features);
  EXPECT_EQ(back[0].toxic, 1);
  EXPECT_THROW(ra::read_completions(write("bad.jsonl",
                                          "{\"completion_id\": \"c\", \"features\": [1], "
                                          "\"toxic\": 2}\n")),
               ra::IngestError);
}

TEST_F(IoTest, CheckpointRoundTripIsBitExact) {
  ra::Rng rng(1);
  ra::Checkpoint c;
  c.round = 3;
  for (int i = 0; i < 16; ++i) {
    c.mu.push_back(rng.normal() * 1e-7 + rng.normal());
    c.log_std.push_back(-std::abs(rng.normal()) * 3.0);
  }
  c.mu[0] = 1.0 / 3.0;
  c.log_std[1] = -745.0 / 7.0;
  c.contraction = ra::log_det_diag(c.posterior());
  c.config_digest = "0123456789abcdef";
  const fs::path p = dir_ / "ckpt.json";
  ra::write_checkpoint(p, c);
  const ra::Checkpoint back = ra::read_checkpoint(p);
  EXPECT_EQ(back.round, 3u);
  EXPECT_EQ(back.mu, c.mu);
  EXPECT_EQ(back.log_std, c.log_std);
  EXPECT_EQ(back.contraction, c.contraction);
  EXPECT_EQ(back.config_digest, c.config_digest);
  EXPECT_EQ(back.posterior(), c.posterior());
}

TEST_F(IoTest, StandardizationAndWorldRoundTrip) {
  ra::StandardizationStats s;
  s.per_dim_mean = {0.1, -0.2};
  s.per_dim_std = {1.5, 1e-6};
  std::string digest;
  ra::write_standardization(dir_ / "s.json", s, "d1");
  const auto sb = ra::read_standardization(dir_ / "s.json", &digest);
  EXPECT_EQ(sb.per_dim_mean, s.per_dim_mean);
  EXPECT_EQ(sb.per_dim_std, s.per_dim_std);
  EXPECT_EQ(digest, "d1");

  ra::WorldOptions opts;
  opts.dim = 6;
  opts.manifold_dim = 4;
  const ra::SyntheticWorld w = ra::make_world(2, opts);
  ra::write_world(dir_ / "w.json", w, "d2");
  const ra::SyntheticWorld wb = ra::read_world(dir_ / "w.json", &digest);
  EXPECT_EQ(wb.true_theta, w.true_theta);
  EXPECT_EQ(wb.basis, w.basis);
  EXPECT_EQ(wb.toxicity_threshold, w.toxicity_threshold);
  EXPECT_EQ(wb.candidates_per_prompt, w.candidates_per_prompt);
  EXPECT_EQ(digest, "d2");
}

TEST_F(IoTest, CurvesCsvHeaderAndRoundTrip) {
  ra::TrainingCurves c;
  c.points = {{0, 0.5, 0.25, 0.0, 0.2, 0.0}, {10, 0.75, 0.125, 1.0 / 3.0, 0.1, 0.0}};
  const fs::path p = dir_ / "curves.csv";
  ra::write_curves_csv(p, c);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,reward_mean,reward_std,kl,toxicity_rate");
  const ra::TrainingCurves back = ra::read_curves_csv(p);
  ASSERT_EQ(back.points.size(), 2u);
  EXPECT_EQ(back.points[1].step, 10u);
  EXPECT_EQ(back.points[1].kl_to_reference, 1.0 / 3.0);
  EXPECT_THROW(ra::read_curves_csv(write("bad.csv", "step,kl\n")), ra::IngestError);
}

TEST_F(IoTest, ReliabilityCsvHeader) {
  const std::vector<ra::ReliabilityBin> bins{{0.05, 0.04, 0.0, 3}, {0.15, 0.12, 0.5, 2}};
  ra::write_reliability_csv(dir_ / "rel.csv", bins);
  std::ifstream in(dir_ / "rel.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "bin_center,mean_confidence,empirical_accuracy,count");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2u);
}

TEST(Digest, Fnv1aKnownVectors) {
  EXPECT_EQ(ra::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(ra::fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(ra::fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST_F(IoTest, FileDigestTracksContent) {
  const fs::path a = write("a.txt", "hello");
  const fs::path b = write("b.txt", "hello");
  const fs::path c = write("c.txt", "hellp");
  EXPECT_EQ(ra::file_digest(a), ra::file_digest(b));
  EXPECT_NE(ra::file_digest(a), ra::file_digest(c));
  EXPECT_EQ(ra::file_digest(a), ra::fnv1a_hex("hello"));
}

}  // namespace
