#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cag/data/synth.hpp"
#include "cag/eval/protocol.hpp"
#include "eval_oracle.hpp"
#include "network_fixtures.hpp"

using namespace cag;
using eval::EmbeddingRow;
using eval::EmbeddingTable;

namespace {

EmbeddingRow row(const std::string& subject, std::size_t view, std::vector<double> e) {
  return {subject, view, "nm-01", std::move(e)};
}

void expect_matches_oracle(const EmbeddingTable& gallery, const EmbeddingTable& probe, bool exclude,
                           std::size_t views) {
  const auto got = eval::rank1(gallery, probe, exclude, views);
  const auto want = cag::testing::rank1_oracle(gallery, probe, exclude, views);
  for (std::size_t pv = 0; pv < views; ++pv)
    for (std::size_t gv = 0; gv < views; ++gv) {
      const auto it = want.cells.find({pv, gv});
      ASSERT_EQ(got.cell_defined(pv, gv), it != want.cells.end()) << pv << "," << gv;
      if (it == want.cells.end()) continue;
      EXPECT_EQ(got.hits[pv * views + gv], it->second.first);
      EXPECT_EQ(got.probes[pv * views + gv], it->second.second);
    }
  for (std::size_t pv = 0; pv < views; ++pv) {
    const auto it = want.per_view.find(pv);
    if (it == want.per_view.end()) {
      EXPECT_TRUE(std::isnan(got.per_view[pv]));
    } else {
      EXPECT_EQ(got.per_view[pv], it->second);
    }
  }
  if (std::isnan(want.overall)) {
    EXPECT_TRUE(std::isnan(got.overall));
  } else {
    EXPECT_EQ(got.overall, want.overall);
  }
}

}  // namespace

TEST(Rank1, SelfRetrievalWithoutExclusion) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  EmbeddingTable table;
  for (std::size_t s = 0; s < 5; ++s)
    for (std::size_t v = 0; v < 3; ++v) table.push_back(row("s" + std::to_string(s), v, {n(rng), n(rng), n(rng)}));
  const auto r = eval::rank1(table, table, false);
  EXPECT_EQ(r.pooled, 1.0);
  EXPECT_EQ(r.pooled_probes, table.size());
  for (std::size_t v = 0; v < 3; ++v) EXPECT_EQ(r.accuracy(v, v), 1.0);
}

TEST(Rank1, SeparableEmbeddingsAcrossViews) {
  EmbeddingTable gallery, probe;
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t v = 0; v < 5; ++v) {
      std::vector<double> e(4, 0.0);
      e[s] = 1.0;
      gallery.push_back(row(std::to_string(s), v, e));
      e[s] = 0.9;
      probe.push_back(row(std::to_string(s), v, e));
    }
  const auto r = eval::rank1(gallery, probe, true);
  EXPECT_EQ(r.overall, 1.0);
  for (std::size_t v = 0; v < 5; ++v) {
    EXPECT_FALSE(r.cell_defined(v, v));
    EXPECT_EQ(r.per_view[v], 1.0);
  }
}

TEST(Rank1, HandPlacedThreeSubjects) {
  // Subject b's probe at view 1 sits closer to a's gallery row at view 0.
  const EmbeddingTable gallery = {row("a", 0, {0, 0}), row("b", 0, {5, 0}), row("c", 0, {0, 5}),
                                  row("a", 1, {1, 1}), row("b", 1, {6, 1}), row("c", 1, {1, 6})};
  const EmbeddingTable probe = {row("a", 1, {0.2, 0.1}), row("b", 1, {1.0, 0.0}), row("c", 0, {1.2, 6.1})};
  const auto r = eval::rank1(gallery, probe, true);
  EXPECT_EQ(r.probes[1 * 2 + 0], 2u);
  EXPECT_EQ(r.hits[1 * 2 + 0], 1u);
  EXPECT_EQ(r.hits[0 * 2 + 1], 1u);
  EXPECT_DOUBLE_EQ(r.per_view[1], 0.5);
  EXPECT_DOUBLE_EQ(r.per_view[0], 1.0);
  EXPECT_DOUBLE_EQ(r.overall, 0.75);
  expect_matches_oracle(gallery, probe, true, 2);
  expect_matches_oracle(gallery, probe, false, 2);
}

TEST(Rank1, TiesGoToEarlierGalleryRow) {
  const EmbeddingTable gallery = {row("x", 0, {1, 0}), row("y", 0, {-1, 0})};
  const auto first = eval::rank1(gallery, {row("x", 1, {0, 0})}, true, 2);
  EXPECT_EQ(first.hits[2], 1u);
  const auto second = eval::rank1(gallery, {row("y", 1, {0, 0})}, true, 2);
  EXPECT_EQ(second.hits[2], 0u);
}

TEST(Rank1, UndefinedCellsAreSkipped) {
  const EmbeddingTable gallery = {row("a", 0, {0}), row("b", 0, {3})};
  const EmbeddingTable probe = {row("a", 0, {0.1}), row("b", 2, {2.9})};
  const auto r = eval::rank1(gallery, probe, true, 3);
  EXPECT_FALSE(r.cell_defined(0, 0));
  EXPECT_FALSE(r.cell_defined(2, 1));
  EXPECT_TRUE(r.cell_defined(2, 0));
  EXPECT_TRUE(std::isnan(r.per_view[0]));
  EXPECT_TRUE(std::isnan(r.per_view[1]));
  EXPECT_EQ(r.overall, 1.0);
  EXPECT_EQ(r.pooled_probes, 1u);
}

TEST(Rank1, MatchesOracleOnRandomToyTables) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto [gallery, probe] = cag::testing::toy_tables(rng, 30, 4, 3);
    if (gallery.empty() || probe.empty()) continue;
    expect_matches_oracle(gallery, probe, true, 4);
    expect_matches_oracle(gallery, probe, false, 4);
  }
}

TEST(Rank1, InvariantUnderOrthogonalTransform) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  EmbeddingTable gallery, probe;
  for (std::size_t s = 0; s < 6; ++s)
    for (std::size_t v = 0; v < 3; ++v) {
      gallery.push_back(row(std::to_string(s), v, {n(rng), n(rng), n(rng), n(rng)}));
      probe.push_back(row(std::to_string(s), v, {n(rng), n(rng), n(rng), n(rng)}));
    }
  // Householder reflection I - 2 u u^T / |u|^2.
  std::vector<double> u = {n(rng), n(rng), n(rng), n(rng)};
  double uu = 0.0;
  for (double x : u) uu += x * x;
  auto reflect = [&](EmbeddingTable t) {
    for (auto& r : t) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 4; ++i) dot += u[i] * r.embedding[i];
      for (std::size_t i = 0; i < 4; ++i) r.embedding[i] -= 2.0 * dot / uu * u[i];
    }
    return t;
  };
  const auto a = eval::rank1(gallery, probe, true);
  const auto b = eval::rank1(reflect(gallery), reflect(probe), true);
  EXPECT_EQ(a.hits, b.hits);
  EXPECT_EQ(a.overall, b.overall);
}

TEST(Rank1, ExclusionNeverAddsCandidates) {
  std::mt19937_64 rng(4);
  auto [gallery, probe] = cag::testing::toy_tables(rng, 30, 4, 3);
  const auto with = eval::rank1(gallery, probe, true, 4);
  const auto without = eval::rank1(gallery, probe, false, 4);
  for (std::size_t c = 0; c < 16; ++c) EXPECT_LE(with.probes[c], without.probes[c]);
  EXPECT_LE(with.pooled_probes, without.pooled_probes);
}

TEST(Rank1, RejectsEmptyOrRaggedTables) {
  EXPECT_THROW(eval::rank1({}, {row("a", 0, {1})}), std::invalid_argument);
  EXPECT_THROW(eval::rank1({row("a", 0, {1})}, {row("a", 1, {1, 2})}), std::invalid_argument);
}

TEST(Rank1, CsvExport) {
  const EmbeddingTable gallery = {row("a", 0, {0}), row("b", 1, {3})};
  const EmbeddingTable probe = {row("a", 1, {0.1}), row("b", 0, {2.9})};
  std::ostringstream out;
  eval::write_csv(eval::rank1(gallery, probe, true), out);
  EXPECT_EQ(out.str(), "probe_view,gallery_0,gallery_1,mean\n0,,1,1\n1,1,,1\noverall,,,1\n");
  EXPECT_NE(eval::format_matrix(eval::rank1(gallery, probe, true)).find("overall rank-1 100.0%"), std::string::npos);
}

TEST(Split, ByCondition) {
  const auto spec = graph::build_skeleton("coco17");
  std::vector<data::SequenceRecord> records;
  for (const char* c : {"nm-01", "bg-01", "nm-02", "cl-01", "nm-03"})
    records.push_back(data::synthesize_sequence(1, 0, c, spec, 1));
  const auto split = eval::split_by_condition(records);
  EXPECT_EQ(split.gallery.size(), 2u);
  EXPECT_EQ(split.probe.size(), 3u);
}

TEST(ExtractEmbeddings, BatchSizeInvariantAndDeterministic) {
  auto cfg = cag::testing::tiny_config();
  cfg.skeleton = "coco17";
  net::Model model(cfg, graph::build_skeleton("coco17"), 3);
  const auto spec = graph::build_skeleton("coco17");
  std::vector<data::SequenceRecord> records;
  data::SynthOptions opts;
  opts.views = 3;
  for (std::size_t i = 0; i < 9; ++i) records.push_back(data::synthesize_sequence(i % 3, i % 3, "nm-01", spec, i, opts));
  records.push_back(records[4]);
  // Move BN running statistics away from their initial values.
  {
    data::Corpus corpus(records);
    std::vector<std::size_t> all(records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    model.forward(data::stack_records(corpus, all, cfg.frames), ad::Mode::train);
  }
  const auto one = eval::extract_embeddings(model, records, 1);
  const auto eight = eval::extract_embeddings(model, records, 8);
  ASSERT_EQ(one.size(), records.size());
  ASSERT_EQ(eight.size(), records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    EXPECT_EQ(one[r].subject, records[r].subject);
    EXPECT_EQ(one[r].embedding.size(), 12u * 8u);
    for (std::size_t i = 0; i < one[r].embedding.size(); ++i) EXPECT_NEAR(one[r].embedding[i], eight[r].embedding[i], 1e-9);
  }
  EXPECT_EQ(one[4].embedding, one.back().embedding);
}
