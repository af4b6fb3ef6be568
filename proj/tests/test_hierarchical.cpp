#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hmm2/hierarchical.hpp"
#include "hmm2/oracle.hpp"
#include "hmm2/synthetic.hpp"

using namespace hmm2;

namespace {

Hmm2Model sub_model(std::vector<double> emit_a, std::vector<double> emit_b) {
  Hmm2Model m = build_model(TopologySpec::ergodic(2, emit_a.size()), 0);
  m.pi = {0.5, 0.5};
  m.a2 = {0.8, 0.2, 0.3, 0.7};
  m.a3 = {0.85, 0.15, 0.4, 0.6, 0.5, 0.5, 0.1, 0.9};
  m.emissions = {CategoricalPdf(std::move(emit_a)), CategoricalPdf(std::move(emit_b))};
  return m;
}

DataMatrix matrix_from(const Corpus& rows, std::size_t alphabet) {
  DataMatrix d;
  for (std::size_t r = 0; r < rows.size(); ++r) d.site_ids.push_back(std::to_string(r));
  for (std::size_t t = 0; t < rows.front().size(); ++t) d.slot_labels.push_back(std::to_string(t));
  for (const auto& r : rows) d.cells.insert(d.cells.end(), r.begin(), r.end());
  for (std::size_t c = 0; c < alphabet; ++c) d.codebook.add("c" + std::to_string(c));
  return d;
}

/// 32x32 raster in scan order with a disc region; each region's sites follow
/// their own temporal sub-model. Returns the data and the true region labels.
std::pair<DataMatrix, std::vector<std::size_t>> planted_regions(std::uint64_t seed) {
  const auto sub_a = sub_model({0.5, 0.35, 0.1, 0.05}, {0.35, 0.5, 0.05, 0.1});
  const auto sub_b = sub_model({0.05, 0.1, 0.5, 0.35}, {0.1, 0.05, 0.35, 0.5});
  std::mt19937_64 gen(seed);
  const std::size_t w = 32;
  Corpus raster;
  std::vector<std::size_t> truth_raster;
  for (std::size_t y = 0; y < w; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = double(x) - 12.0, dy = double(y) - 18.0;
      const std::size_t region = dx * dx + dy * dy < 90.0 ? 1 : 0;
      truth_raster.push_back(region);
      raster.push_back(sample_sequence(region ? sub_b : sub_a, 10, gen).observations);
    }
  const auto ordering = hilbert_curve(5);
  DataMatrix data = apply_ordering(matrix_from(raster, 4), ordering);
  std::vector<std::size_t> truth;
  for (const auto& c : ordering.order) truth.push_back(truth_raster[c.y * w + c.x]);
  return {std::move(data), std::move(truth)};
}

MasterModel random_master(std::size_t ns, std::size_t nsub, std::size_t m, std::mt19937_64& gen) {
  MasterModel mm;
  mm.master = random_model(TopologySpec::ergodic(ns, 1), gen);
  for (std::size_t s = 0; s < ns; ++s) mm.subs.push_back(random_model(TopologySpec::ergodic(nsub, m), gen));
  return mm;
}

}  // namespace

TEST(SubTable, MatchesDirectForwardCalls) {
  std::mt19937_64 gen(1);
  const auto mm = random_master(3, 2, 3, gen);
  const Corpus vectors{{0, 1, 2}, {2, 2}, {1}, {0, kMissing, 1, 1}};
  const auto table = sub_loglik_table(mm, vectors, 2);
  for (std::size_t p = 0; p < vectors.size(); ++p)
    for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(table[p * 3 + s], forward(mm.subs[s], vectors[p]).loglik);
}

TEST(HierarchicalPosteriors, SingleSuperStateIsOneColumn) {
  std::mt19937_64 gen(2);
  const auto mm = random_master(1, 3, 4, gen);
  const Corpus vectors{{0, 1, 3, 3}, {2, 1}, {0}};
  const auto ps = hierarchical_posteriors(mm, vectors);
  double total = 0.0;
  for (const auto& v : vectors) total += forward(mm.subs[0], v).loglik;
  EXPECT_NEAR(ps.loglik, total, 1e-10 * std::abs(total));
  for (std::size_t p = 0; p < vectors.size(); ++p) EXPECT_NEAR(ps.gamma_at(p, 0), 1.0, 1e-12);
}

TEST(HierarchicalPosteriors, IdenticalSubsGiveMasterPrior) {
  std::mt19937_64 gen(3);
  auto mm = random_master(2, 2, 3, gen);
  mm.subs[1] = mm.subs[0];
  const Corpus vectors{{0, 1}, {2, 2, 1}, {1, 0, 0}};
  const auto ps = hierarchical_posteriors(mm, vectors);
  // The data is uninformative about the super state, so gamma is the master's marginal.
  const auto prior = posteriors(mm.master, emission_table_from_logs(3, 2, std::vector<double>(6, 0.0)));
  for (std::size_t x = 0; x < ps.gamma.size(); ++x) EXPECT_NEAR(ps.gamma[x], prior.gamma[x], 1e-12);
}

TEST(HierarchicalPosteriors, MatchesTwoLevelEnumeration) {
  std::mt19937_64 gen(4);
  for (int rep = 0; rep < 5; ++rep) {
    const auto mm = random_master(2, 2, 3, gen);
    Corpus vectors;
    for (int p = 0; p < 4; ++p) {
      Sequence v(3);
      for (auto& o : v) o = Code(gen() % 3);
      vectors.push_back(v);
    }
    const auto ps = hierarchical_posteriors(mm, vectors);
    const auto bf = oracle::brute_force_hierarchical(mm.master, mm.subs, vectors);
    EXPECT_NEAR(ps.loglik, bf.loglik, 1e-8 * std::abs(bf.loglik));
    for (std::size_t x = 0; x < ps.gamma.size(); ++x) EXPECT_NEAR(ps.gamma[x], bf.gamma[x], 1e-8);
    for (std::size_t x = 0; x < ps.eta.size(); ++x) EXPECT_NEAR(ps.eta[x], bf.eta[x], 1e-8);
  }
}

TEST(HierarchicalPosteriors, LongVectorsStayFinite) {
  std::mt19937_64 gen(5);
  const auto mm = random_master(2, 2, 4, gen);
  Corpus vectors;
  for (int p = 0; p < 6; ++p) vectors.push_back(sample_sequence(mm.subs[p % 2], 3000, gen).observations);
  const auto ps = hierarchical_posteriors(mm, vectors);
  EXPECT_TRUE(std::isfinite(ps.loglik));
  EXPECT_LT(ps.loglik, -1000.0);
  for (std::size_t p = 0; p < 6; ++p) EXPECT_NEAR(ps.gamma_at(p, 0) + ps.gamma_at(p, 1), 1.0, 1e-9);
}

TEST(HierarchicalPosteriors, ImpossiblePositionIsReported) {
  MasterModel mm;
  mm.master = build_model(TopologySpec::ergodic(1, 1), 0);
  auto spec = TopologySpec::ergodic(1, 2);
  spec.kinds = {StateKind::dirac(0)};
  mm.subs = {build_model(spec, 0)};
  try {
    hierarchical_posteriors(mm, Corpus{{0, 0}, {0, 1}});
    FAIL();
  } catch (const ImpossibleObservation& e) {
    EXPECT_EQ(e.position(), 1u);
  }
}

TEST(HierarchicalTrain, SingleSuperStateMatchesPlainTraining) {
  std::mt19937_64 gen(6);
  const auto truth = sub_model({0.6, 0.3, 0.1}, {0.1, 0.2, 0.7});
  Corpus rows;
  for (int r = 0; r < 12; ++r) rows.push_back(sample_sequence(truth, 15, gen).observations);
  const auto data = matrix_from(rows, 3);
  const auto init = build_master(1, 2, 3, HierMode::SpatialMaster, 9);
  TrainConfig cfg;
  cfg.max_iters = 15;
  const auto hier = hierarchical_train(init, data, cfg);
  const auto flat = train(init.subs[0], rows, cfg);
  ASSERT_EQ(hier.history.size(), flat.history.size());
  for (std::size_t t = 0; t < flat.history.size(); ++t)
    EXPECT_NEAR(hier.history[t], flat.history[t], 1e-9 * std::abs(flat.history[t]));
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_NEAR(hier.model.subs[0].emissions[s][c], flat.model.emissions[s][c], 1e-9);
}

TEST(HierarchicalTrain, MonotoneAndDeterministic) {
  auto [data, truth] = planted_regions(1);
  TrainConfig cfg;
  cfg.max_iters = 8;
  cfg.threads = 1;
  const auto init = build_master(2, 2, 4, HierMode::SpatialMaster, 3);
  const auto a = hierarchical_train(init, data, cfg);
  cfg.threads = 3;
  const auto b = hierarchical_train(init, data, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.history, b.history);
  for (std::size_t t = 1; t < a.history.size(); ++t) EXPECT_GE(a.history[t], a.history[t - 1] - 1e-9);
}

TEST(Segment, RecoversPlantedRegions) {
  auto [data, truth] = planted_regions(7);
  TrainConfig cfg;
  cfg.max_iters = 50;
  cfg.seed = 7;
  const auto rep = hierarchical_train(build_master(2, 2, 4, HierMode::SpatialMaster, cfg.seed), data, cfg);
  const auto seg = segment_spatiotemporal(rep.model, data, true);
  EXPECT_GE(aligned_accuracy(truth, seg.labels, 2), 0.85);
  ASSERT_TRUE(seg.map);
  EXPECT_EQ(seg.map->size(), 32u);
  EXPECT_EQ(seg.map->front().size(), 32u);
}

TEST(Segment, TemporalModeHasNoMap) {
  auto [data, truth] = planted_regions(2);
  const auto mm = build_master(2, 2, 4, HierMode::TemporalMaster, 1);
  const auto seg = segment_spatiotemporal(mm, data);
  EXPECT_EQ(seg.labels.size(), data.n_slots());
  EXPECT_FALSE(seg.map);
  EXPECT_THROW(segment_spatiotemporal(mm, data, true), Error);
  auto flat = data;
  flat.geometry.reset();
  EXPECT_THROW(segment_spatiotemporal(build_master(2, 2, 4, HierMode::SpatialMaster, 1), flat, true), Error);
}

TEST(MasterJson, RoundTrip) {
  std::mt19937_64 gen(8);
  auto mm = random_master(2, 3, 4, gen);
  mm.mode = HierMode::TemporalMaster;
  const auto back = master_from_json(nlohmann::json::parse(dump_json(master_to_json(mm))));
  EXPECT_EQ(back, mm);
  auto broken = master_to_json(mm);
  broken["subs"].erase(0);
  EXPECT_THROW(master_from_json(broken), Error);
  EXPECT_THROW(hier_mode_from_string("diagonal"), Error);
}

TEST(LabelMapIo, PgmRoundTripAndCsv) {
  const LabelMap map{{0, 1, 2}, {2, 2, 0}};
  std::stringstream pgm;
  write_pgm(pgm, map, 3);
  EXPECT_EQ(pgm.str().substr(0, 3), "P2\n");
  EXPECT_EQ(read_pgm(pgm), map);
  std::ostringstream csv;
  write_map_csv(csv, map);
  EXPECT_EQ(csv.str(), "x,y,label\n0,0,0\n1,0,1\n2,0,2\n0,1,2\n1,1,2\n2,1,0\n");
}
