#pragma once

// Two-level HMM2: a master chain whose super states score whole observation
// vectors with their own sub-HMM2.
//
// SpatialMaster: the master walks the sites in scan order and super state s
// emits the temporal sequence of a site with subs[s].
// TemporalMaster: the master walks the time slots and super state s emits the
// linearised image of a slot with subs[s].
//
// Sub log likelihoods are far outside the linear double range for long
// vectors, so the master recursion runs on per-position shifted likelihoods
// exp(L(p, s) - max_s L(p, s)) and adds the shifts back to the log likelihood.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmm2/data.hpp"
#include "hmm2/error.hpp"
#include "hmm2/inference.hpp"
#include "hmm2/map_io.hpp"
#include "hmm2/model.hpp"
#include "hmm2/model_io.hpp"
#include "hmm2/parallel.hpp"
#include "hmm2/training.hpp"

namespace hmm2 {

enum class HierMode { SpatialMaster, TemporalMaster };

inline std::string to_string(HierMode m) { return m == HierMode::SpatialMaster ? "spatial" : "temporal"; }

inline HierMode hier_mode_from_string(const std::string& s) {
  if (s == "spatial") return HierMode::SpatialMaster;
  if (s == "temporal") return HierMode::TemporalMaster;
  throw Error("unknown hierarchical mode '" + s + "' (expected spatial or temporal)");
}

struct MasterModel {
  Hmm2Model master;  // emission slots unused
  std::vector<Hmm2Model> subs;
  HierMode mode = HierMode::SpatialMaster;

  std::size_t n_super() const noexcept { return master.n_states; }

  void check() const {
    if (subs.size() != master.n_states) throw Error("master model needs one sub-model per super state");
    for (const auto& s : subs)
      if (s.alphabet_size != subs.front().alphabet_size) throw Error("sub-models must share one alphabet");
  }

  friend bool operator==(const MasterModel&, const MasterModel&) = default;
};

/// Ergodic master over `n_super` states, each carrying an ergodic sub-model
/// with `n_sub` states. Sub-model s is jittered with seed + 1 + s.
inline MasterModel build_master(std::size_t n_super, std::size_t n_sub, std::size_t alphabet, HierMode mode,
                                std::uint64_t seed) {
  MasterModel mm;
  mm.mode = mode;
  mm.master = build_model(TopologySpec::ergodic(n_super, 1), seed);
  for (std::size_t s = 0; s < n_super; ++s)
    mm.subs.push_back(build_model(TopologySpec::ergodic(n_sub, alphabet), seed + 1 + s));
  return mm;
}

/// Observation vectors the master steps over, in master order.
inline Corpus position_vectors(HierMode mode, const DataMatrix& m) {
  return mode == HierMode::SpatialMaster ? rows_as_sequences(m) : columns_as_sequences(m);
}

inline constexpr std::size_t kSubTableBlock = 64;

/// table[p * N_M + s] = log P(vector_p | subs[s]); -inf where sub-model s
/// cannot produce the vector. Throws when no super state can.
inline std::vector<double> sub_loglik_table(const MasterModel& mm, const Corpus& vectors, std::size_t threads = 0) {
  mm.check();
  const std::size_t ns = mm.n_super();
  std::vector<double> table(vectors.size() * ns, 0.0);
  parallel_blocks(vectors.size(), kSubTableBlock, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p)
      for (std::size_t s = 0; s < ns; ++s) {
        try {
          table[p * ns + s] = forward(mm.subs[s], vectors[p]).loglik;
        } catch (const ImpossibleObservation&) {
          table[p * ns + s] = -std::numeric_limits<double>::infinity();
        }
      }
  });
  for (std::size_t p = 0; p < vectors.size(); ++p) {
    bool any = false;
    for (std::size_t s = 0; s < ns; ++s) any = any || std::isfinite(table[p * ns + s]);
    if (!any) throw ImpossibleObservation(p);
  }
  return table;
}

inline std::vector<double> sub_loglik_table(const MasterModel& mm, const DataMatrix& m, std::size_t threads = 0) {
  return sub_loglik_table(mm, position_vectors(mm.mode, m), threads);
}

/// Master-level posteriors over super states; loglik is the total log likelihood.
inline PosteriorSet hierarchical_posteriors(const MasterModel& mm, const Corpus& vectors, std::size_t threads = 0) {
  if (vectors.empty()) throw Error("hierarchical model needs at least one position");
  const auto table = sub_loglik_table(mm, vectors, threads);
  return posteriors(mm.master, emission_table_from_logs(vectors.size(), mm.n_super(), table));
}

inline PosteriorSet hierarchical_posteriors(const MasterModel& mm, const DataMatrix& m, std::size_t threads = 0) {
  return hierarchical_posteriors(mm, position_vectors(mm.mode, m), threads);
}

struct HierTrainReport {
  MasterModel model;
  std::vector<double> history;  // total log likelihood before each outer M-step, then of the final model
  bool converged = false;
};

/// Alternating EM: master posteriors with the subs fixed, then master
/// transitions from the trigram posteriors and every sub-model by Baum-Welch
/// over all vectors weighted by the posterior of its super state.
inline HierTrainReport hierarchical_train(const MasterModel& init, const DataMatrix& m, const TrainConfig& cfg = {},
                                          const ProgressFn& progress = {}) {
  cfg.check();
  init.check();
  if (init.subs.front().alphabet_size < m.alphabet_size())
    throw Error("sub-model alphabet is smaller than the data codebook");
  const Corpus vectors = position_vectors(init.mode, m);
  if (vectors.empty()) throw Error("hierarchical model needs at least one position");
  const std::size_t ns = init.n_super(), positions = vectors.size();

  HierTrainReport rep;
  rep.model = init;
  for (std::size_t iter = 0;; ++iter) {
    const PosteriorSet ps = hierarchical_posteriors(rep.model, vectors, cfg.threads);
    const double prev = rep.history.empty() ? ps.loglik : rep.history.back();
    rep.history.push_back(ps.loglik);
    if (progress) progress(iter, ps.loglik, ps.loglik - prev);
    if (has_converged(rep.history, cfg.rel_tol)) {
      rep.converged = true;
      break;
    }
    if (iter == cfg.max_iters) break;

    SufficientStats master_stats(ns, 1);
    for (std::size_t s = 0; s < ns; ++s) master_stats.initial[s] = ps.gamma_at(0, s);
    if (!ps.first_pair.empty()) master_stats.first_pair = ps.first_pair;
    for (std::size_t e = 0; e < ps.eta_steps(); ++e)
      for (std::size_t x = 0; x < ns * ns * ns; ++x) master_stats.trigram[x] += ps.eta[e * ns * ns * ns + x];
    update_transitions(rep.model.master, master_stats);

    std::vector<double> weights(positions);
    for (std::size_t s = 0; s < ns; ++s) {
      for (std::size_t p = 0; p < positions; ++p) weights[p] = ps.gamma_at(p, s);
      Hmm2Model& sub = rep.model.subs[s];
      const SufficientStats st = expected_counts(sub, vectors, weights, cfg.threads);
      update_transitions(sub, st);
      update_emissions(sub, st, cfg.emission_floor);
    }
  }
  return rep;
}

struct Segmentation {
  std::vector<std::size_t> labels;  // one super state per master position
  std::optional<LabelMap> map;      // SpatialMaster with geometry
  PosteriorSet posteriors;
};

/// Hard super-state labels; with `require_map` a SpatialMaster result is laid
/// out on the data grid.
inline Segmentation segment_spatiotemporal(const MasterModel& mm, const DataMatrix& m, bool require_map = false,
                                           std::size_t threads = 0) {
  Segmentation seg;
  seg.posteriors = hierarchical_posteriors(mm, m, threads);
  seg.labels = classify(seg.posteriors);
  if (mm.mode == HierMode::SpatialMaster && m.geometry) {
    seg.map = delinearize(seg.labels, m.geometry->ordering);
  } else if (require_map) {
    throw Error(mm.mode == HierMode::SpatialMaster ? "a label map needs grid geometry on the data"
                                                   : "temporal master mode yields a label series, not a map");
  }
  return seg;
}

inline nlohmann::json master_to_json(const MasterModel& mm) {
  nlohmann::json j;
  j["mode"] = to_string(mm.mode);
  j["master"] = model_to_json(mm.master);
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : mm.subs) subs.push_back(model_to_json(s));
  j["subs"] = std::move(subs);
  return j;
}

inline MasterModel master_from_json(const nlohmann::json& j) {
  MasterModel mm;
  try {
    mm.mode = hier_mode_from_string(j.at("mode").get<std::string>());
    mm.master = model_from_json(j.at("master"));
    for (const auto& s : j.at("subs")) mm.subs.push_back(model_from_json(s));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed master model document: ") + e.what());
  }
  mm.check();
  return mm;
}

inline nlohmann::json hier_report_to_json(const HierTrainReport& rep) {
  return {{"history", rep.history},
          {"iterations", rep.history.empty() ? 0 : rep.history.size() - 1},
          {"converged", rep.converged}};
}

}  // namespace hmm2
