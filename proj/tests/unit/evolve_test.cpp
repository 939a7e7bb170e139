// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/evolve.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

namespace wdgnas {
namespace {

SearchSpace toy_space() {
  SearchSpace s;
  s.entries.push_back({"toy", build_wdg(load_summary_file(WDGNAS_FIXTURE_DIR "/toy.arch")), 0.5});
  return s;
}

SearchSpace chain_space() {
  SearchSpace s;
  s.entries.push_back({"chain", build_wdg({"chain", {{LayerKind::ReLU, {}}}}), 0.1});
  return s;
}

SearchSpace three_space() {
  SearchSpace s;
  s.entries.push_back({"a", build_wdg({"a", {{LayerKind::ReLU, {}}}}), 0.1});
  s.entries.push_back({"b", build_wdg({"b", {{LayerKind::ReLU, {}}, {LayerKind::Flatten, {}}}}), 0.2});
  s.entries.push_back({"c", build_wdg({"c", {{LayerKind::ReLU, {}}, {LayerKind::Linear, {{Param::OutFeatures, 10}}}}}), 0.3});
  return s;
}

int count_convs(const CandidateArchitecture& c) {
  return static_cast<int>(std::count_if(c.layers.begin(), c.layers.end(),
                                        [](const LayerRecord& l) { return l.kind == LayerKind::Conv; }));
}

TEST(ParentPool, Examples) {
  const auto space = three_space();
  EXPECT_EQ(parent_pool(space, LayerKind::Linear), std::vector<std::size_t>{2});
  EXPECT_EQ(parent_pool(space, LayerKind::Start), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(parent_pool(space, LayerKind::Skip).empty());
  EXPECT_TRUE(parent_pool(space, LayerKind::End).empty());
}

TEST(RankedRoulette, AnalyticProbabilities) {
  const PoolMember single[] = {{"x", 0.3}};
  EXPECT_EQ(rank_probabilities(single), std::vector<double>{1.0});
  Rng rng(1);
  EXPECT_EQ(ranked_roulette(single, rng), 0u);

  const PoolMember three[] = {{"a", 0.1}, {"b", 0.5}, {"c", 0.9}};
  const auto p = rank_probabilities(three);
  EXPECT_DOUBLE_EQ(p[0], 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(p[1], 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(p[2], 3.0 / 6.0);

  const PoolMember shuffled[] = {{"c", 0.9}, {"a", 0.1}, {"b", 0.5}};
  const auto q = rank_probabilities(shuffled);
  EXPECT_DOUBLE_EQ(q[0], 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(q[1], 1.0 / 6.0);

  const PoolMember tied[] = {{"b", 0.5}, {"a", 0.5}};
  const auto t = rank_probabilities(tied);
  EXPECT_DOUBLE_EQ(t[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(t[1], 1.0 / 3.0);

  EXPECT_THROW(rank_probabilities({}), UsageError);
}

TEST(RankedRoulette, EmpiricalFrequencies) {
  const PoolMember three[] = {{"a", 0.1}, {"b", 0.5}, {"c", 0.9}};
  Rng rng(12345);
  std::array<int, 3> hits{};
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) ++hits[ranked_roulette(three, rng)];
  EXPECT_NEAR(hits[0] / double(kDraws), 1.0 / 6.0, 0.02);
  EXPECT_NEAR(hits[1] / double(kDraws), 2.0 / 6.0, 0.02);
  EXPECT_NEAR(hits[2] / double(kDraws), 3.0 / 6.0, 0.02);
}

TEST(FpsSample, Frequencies) {
  Rng rng(3);
  const KindDistribution certain{{{LayerKind::ReLU, 1.0}}};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(fps_sample(certain, rng), LayerKind::ReLU);

  const ValueDistribution even{{{1.0, 0.5}, {2.0, 0.5}}};
  const ValueDistribution skewed{{{1.0, 0.25}, {2.0, 0.75}}};
  int a = 0, b = 0;
  for (int i = 0; i < 10000; ++i) {
    a += fps_sample(even, rng) == 1.0;
    b += fps_sample(skewed, rng) == 2.0;
  }
  EXPECT_NEAR(a / 10000.0, 0.5, 0.02);
  EXPECT_NEAR(b / 10000.0, 0.75, 0.02);

  EXPECT_THROW(fps_sample(ValueDistribution{}, rng), UsageError);
}

TEST(MaybeMutate, OnlyConvolutionsMutate) {
  Rng rng(5);
  const LayerRecord relu{LayerKind::ReLU, {}};
  const LayerRecord conv{LayerKind::Conv, {{Param::KernelSize, 3}, {Param::OutChannels, 8}}};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(maybe_mutate(relu, 1.0, rng), relu);
  EXPECT_EQ(maybe_mutate(conv, 1.0, rng), (LayerRecord{LayerKind::Skip, {}}));
  EXPECT_EQ(maybe_mutate(conv, 0.0, rng), conv);

  int skips = 0;
  for (int i = 0; i < 10000; ++i) skips += maybe_mutate(conv, 0.5, rng).kind == LayerKind::Skip;
  EXPECT_NEAR(skips / 10000.0, 0.5, 0.02);
}

TEST(SampleNextLayer, Examples) {
  SearchConfig cfg;
  cfg.mutation_prob = 0.0;
  Rng rng(8);
  const auto toy = toy_space();
  for (int i = 0; i < 50; ++i) {
    const auto s = sample_next_layer(toy, LayerKind::Start, cfg, rng);
    ASSERT_FALSE(s.is_end());
    EXPECT_EQ(s.layer->kind, LayerKind::Conv);
    const double k = *s.layer->get(Param::KernelSize);
    EXPECT_TRUE(k == 1 || k == 3);
    EXPECT_EQ(*s.layer->get(Param::OutChannels), 8);
    EXPECT_EQ(s.source, "toy");
  }
  EXPECT_TRUE(sample_next_layer(toy, LayerKind::Linear, cfg, rng).is_end());

  const auto chain = sample_next_layer(chain_space(), LayerKind::Start, cfg, rng);
  ASSERT_FALSE(chain.is_end());
  EXPECT_EQ(chain.layer->kind, LayerKind::ReLU);

  const auto none = sample_next_layer(toy, LayerKind::Skip, cfg, rng);
  EXPECT_TRUE(none.is_end());
  EXPECT_EQ(none.source, kNoParent);
}

TEST(GenerateArchitecture, Examples) {
  SearchConfig cfg;
  Rng rng(11);
  const auto chain = generate_architecture(chain_space(), cfg, rng);
  ASSERT_EQ(chain.layers.size(), 1u);
  EXPECT_EQ(chain.layers[0].kind, LayerKind::ReLU);

  cfg.max_layers = 3;
  const auto toy = toy_space();
  const Wdg& g = toy.entries[0].graph;
  for (int i = 0; i < 100; ++i) {
    const auto c = generate_architecture(toy, cfg, rng);
    ASSERT_GE(c.layers.size(), 1u);
    ASSERT_LE(c.layers.size(), 3u);
    LayerKind prev = LayerKind::Start;
    for (std::size_t j = 0; j < c.layers.size(); ++j) {
      EXPECT_GT(g.edge_prob(prev, c.sampled_kinds[j]), 0.0);
      if (c.layers[j].kind != c.sampled_kinds[j]) {
        EXPECT_EQ(c.sampled_kinds[j], LayerKind::Conv);
        EXPECT_EQ(c.layers[j].kind, LayerKind::Skip);
      }
      prev = c.sampled_kinds[j];
    }
  }

  cfg.max_layers = 1;
  EXPECT_EQ(generate_architecture(toy, cfg, rng).layers.size(), 1u);
}

TEST(GenerateArchitecture, DegenerateSpaceThrows) {
  SearchSpace s;
  s.entries.push_back({"empty", Wdg::from_counts({LayerKind::Start, LayerKind::End},
                                                 {{{LayerKind::Start, LayerKind::End}, 1}}, {}),
                       0.0});
  Rng rng(0);
  EXPECT_THROW(generate_architecture(s, SearchConfig{}, rng), DataError);
}

TEST(GenerateArchitecture, GenealogyAndInnerStateSupport) {
  SearchSpace space = toy_space();
  space.entries.push_back({"vgg", build_wdg(parse_summary("conv k=3 out=16\nrelu\nmaxpool k=2\nconv k=5 out=32\nrelu\nadaptiveavgpool size=1\nflatten\nlinear out=10\n")), 0.7});
  space.entries.push_back({"res", build_wdg(parse_summary("conv k=3 out=8\nskip\nrelu\nconv k=3 out=8 s=2\nbatchnorm\nskip\nrelu\ndropout p=0.5\nlinear out=10\n")), 0.2});
  SearchConfig cfg;
  cfg.max_layers = 40;
  std::map<std::string, const Wdg*> by_name;
  for (const auto& e : space.entries) by_name[e.name] = &e.graph;

  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = generate_architecture(space, cfg, rng);
    ASSERT_EQ(c.genealogy.size(), c.layers.size());
    LayerKind prev = LayerKind::Start;
    for (std::size_t i = 0; i < c.layers.size(); ++i) {
      const Wdg& parent = *by_name.at(c.genealogy[i]);
      EXPECT_GT(parent.edge_prob(prev, c.sampled_kinds[i]), 0.0);
      for (const auto& [param, value] : c.layers[i].params) {
        EXPECT_GT(parent.inner_state_dist(c.layers[i].kind, param).probability(value), 0.0);
      }
      prev = c.sampled_kinds[i];
    }
  }
}

TEST(Evolve, SingleCandidateRun) {
  FunctionEvaluator constant([](const CandidateArchitecture&) { return 0.42; });
  SearchConfig cfg;
  cfg.generations = 1;
  cfg.population = 1;
  const auto result = evolve(toy_space(), cfg, constant);
  ASSERT_EQ(result.archive.size(), 1u);
  ASSERT_EQ(result.history.size(), 1u);
  EXPECT_EQ(*result.best.fitness, 0.42);
  EXPECT_EQ(result.best.id, result.archive[0].id);
}

TEST(Evolve, ElitismKeepsBestNonDecreasing) {
  SearchSpace space = toy_space();
  space.entries.push_back({"wide", build_wdg(parse_summary("conv k=3 out=16\nrelu\nconv k=3 out=16\nrelu\nconv k=3 out=16\nlinear out=10\n")), 0.3});
  FunctionEvaluator convs([](const CandidateArchitecture& c) { return double(count_convs(c)); });
  SearchConfig cfg;
  cfg.generations = 10;
  cfg.population = 10;
  cfg.seed = 17;
  const auto result = evolve(space, cfg, convs);
  ASSERT_EQ(result.history.size(), 10u);
  for (std::size_t t = 1; t < result.history.size(); ++t) {
    EXPECT_GE(result.history[t].best, result.history[t - 1].best);
  }
  double archive_max = -INFINITY;
  for (const auto& c : result.archive) archive_max = std::max(archive_max, *c.fitness);
  EXPECT_EQ(*result.best.fitness, archive_max);
  EXPECT_EQ(result.history.back().best, archive_max);
  EXPECT_EQ(result.history[0].elite_ids.size(), 2u);
  EXPECT_GT(result.final_space.size(), space.size());
}

TEST(Evolve, SmallestConfigurationArchive) {
  FunctionEvaluator convs([](const CandidateArchitecture& c) { return double(count_convs(c)); });
  SearchConfig cfg;
  cfg.generations = 5;
  cfg.population = 5;
  const auto result = evolve(toy_space(), cfg, convs);
  EXPECT_EQ(result.archive.size(), 25u);
  EXPECT_EQ(result.history.size(), 5u);
  for (const auto& h : result.history) EXPECT_EQ(h.elite_ids.size(), 1u);
}

TEST(Evolve, ReproducibleForSameSeed) {
  FunctionEvaluator convs([](const CandidateArchitecture& c) { return count_convs(c) + 0.01 * c.layers.size(); });
  SearchConfig cfg;
  cfg.generations = 4;
  cfg.population = 6;
  cfg.seed = 99;
  const auto a = evolve(toy_space(), cfg, convs);
  const auto b = evolve(toy_space(), cfg, convs);
  ASSERT_EQ(a.archive.size(), b.archive.size());
  for (std::size_t i = 0; i < a.archive.size(); ++i) {
    EXPECT_EQ(a.archive[i].layers, b.archive[i].layers);
    EXPECT_EQ(a.archive[i].genealogy, b.archive[i].genealogy);
    EXPECT_EQ(*a.archive[i].fitness, *b.archive[i].fitness);
  }
  EXPECT_EQ(write_candidate(a.best), write_candidate(b.best));
}

TEST(Evolve, FailedCandidatesNeverBecomeElites) {
  FunctionEvaluator flaky([](const CandidateArchitecture& c) -> double {
    if (c.id % 2 == 0) throw NumericError("diverged");
    return double(c.layers.size());
  });
  SearchConfig cfg;
  cfg.generations = 3;
  cfg.population = 8;
  const auto result = evolve(toy_space(), cfg, flaky);
  for (const auto& h : result.history) {
    for (auto id : h.elite_ids) EXPECT_EQ(id % 2, 1u);
  }
  for (const auto& c : result.archive) {
    if (c.id % 2 == 0) {
      EXPECT_TRUE(std::isinf(*c.fitness));
      EXPECT_EQ(c.failure, "diverged");
    }
  }
}

TEST(SearchConfig, Validation) {
  SearchConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lambda = 1.5;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = SearchConfig{};
  cfg.generations = 0;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = SearchConfig{};
  cfg.elitism_frac = 1.0;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = SearchConfig{};
  cfg.population = 10;
  EXPECT_EQ(cfg.elite_count(), 2);
  cfg.population = 20;
  EXPECT_EQ(cfg.elite_count(), 3);
}

TEST(SaveSearchResult, WritesRunDirectory) {
  FunctionEvaluator convs([](const CandidateArchitecture& c) { return double(count_convs(c)); });
  SearchConfig cfg;
  cfg.generations = 2;
  cfg.population = 3;
  const auto result = evolve(toy_space(), cfg, convs);
  const auto dir = std::filesystem::temp_directory_path() / "wdgnas_evolve_run";
  std::filesystem::remove_all(dir);
  save_search_result(dir.string(), result, cfg);
  EXPECT_TRUE(std::filesystem::exists(dir / "config.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "space.json"));
  std::ifstream history(dir / "history.csv");
  std::string line;
  int lines = 0;
  while (std::getline(history, line)) ++lines;
  EXPECT_EQ(lines, 3);
  const auto best = load_summary_file((dir / "best.arch").string());
  EXPECT_EQ(best.layers, result.best.layers);
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir / "archive"), {}), 6);
}

}  // namespace
}  // namespace wdgnas
