#pragma once

// Second-order Baum-Welch over a corpus, with Dirac freezing, masked
// transitions kept at zero, and the divergence-driven merge-and-retrain loop.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmm2/error.hpp"
#include "hmm2/inference.hpp"
#include "hmm2/model.hpp"
#include "hmm2/parallel.hpp"

namespace hmm2 {

struct TrainConfig {
  std::size_t max_iters = 200;
  double rel_tol = 1e-6;
  double emission_floor = 1e-10;
  double merge_threshold = 0.1;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void check() const {
    if (!(rel_tol > 0.0)) throw Error("rel_tol must be positive");
    if (!(emission_floor > 0.0)) throw Error("emission floor must be positive");
    if (!(merge_threshold >= 0.0)) throw Error("merge threshold must be non-negative");
  }
};

/// Expected counts gathered by the E-step.
struct SufficientStats {
  std::size_t n = 0;
  std::size_t m = 0;
  double loglik = 0.0;
  std::vector<double> initial;     // N      sum of gamma_0
  std::vector<double> first_pair;  // N*N    sum of P(q_0, q_1)
  std::vector<double> trigram;     // N^3    sum over t of eta
  std::vector<double> emission;    // N*M    gamma-weighted observation counts
  std::vector<double> occupancy;   // N      sum over t of gamma

  SufficientStats() = default;
  SufficientStats(std::size_t n_states, std::size_t alphabet)
      : n(n_states), m(alphabet), initial(n, 0.0), first_pair(n * n, 0.0), trigram(n * n * n, 0.0),
        emission(n * alphabet, 0.0), occupancy(n, 0.0) {}

  void add(const SufficientStats& o) {
    loglik += o.loglik;
    auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
      for (std::size_t x = 0; x < a.size(); ++x) a[x] += b[x];
    };
    acc(initial, o.initial);
    acc(first_pair, o.first_pair);
    acc(trigram, o.trigram);
    acc(emission, o.emission);
    acc(occupancy, o.occupancy);
  }
};

/// Adds weight x (posterior statistics of one sequence) to `stats`. `codes`
/// may be empty when the emissions are not categorical; emission counts are
/// then skipped. Returns the sequence log likelihood.
inline double accumulate_sequence(const Hmm2Model& model, const EmissionTable& em, std::span<const Code> codes,
                                  double weight, SufficientStats& stats) {
  const std::size_t n = model.n_states, steps = em.steps;
  const ForwardResult fw = forward(model, em);
  stats.loglik += weight * fw.loglik;
  if (weight == 0.0) return fw.loglik;
  const BackwardResult bw = backward(model, em, fw);

  std::vector<double> gamma(n);
  auto add_gamma = [&](std::size_t t) {
    for (std::size_t i = 0; i < n; ++i) {
      stats.occupancy[i] += weight * gamma[i];
      if (!codes.empty() && codes[t] != kMissing)
        stats.emission[i * stats.m + static_cast<std::size_t>(codes[t])] += weight * gamma[i];
    }
  };

  for (std::size_t i = 0; i < n; ++i) {
    gamma[i] = fw.initial[i] * bw.initial[i];
    stats.initial[i] += weight * gamma[i];
  }
  add_gamma(0);

  for (std::size_t t = 1; t < steps; ++t) {
    std::fill(gamma.begin(), gamma.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t x = (t * n + i) * n + j;
        const double p = fw.pairs[x] * bw.pairs[x];
        gamma[j] += p;
        if (t == 1) stats.first_pair[i * n + j] += weight * p;
      }
    add_gamma(t);
  }

  for (std::size_t t = 1; t + 1 < steps; ++t) {
    const double inv = weight / fw.scales[t + 1];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double a = fw.pairs[(t * n + i) * n + j];
        if (a == 0.0) continue;
        for (std::size_t k = 0; k < n; ++k)
          stats.trigram[(i * n + j) * n + k] +=
              a * model.a3[(i * n + j) * n + k] * em(t + 1, k) * bw.pairs[((t + 1) * n + j) * n + k] * inv;
      }
  }
  return fw.loglik;
}

inline constexpr std::size_t kEStepBlock = 8;

/// E-step over a weighted corpus (empty weights = all 1). Per-block partial
/// sums are reduced in block order, so the result does not depend on `threads`.
inline SufficientStats expected_counts(const Hmm2Model& model, const Corpus& corpus, std::span<const double> weights,
                                       std::size_t threads) {
  if (corpus.empty()) throw Error("training corpus is empty");
  if (!weights.empty() && weights.size() != corpus.size()) throw Error("one weight per sequence required");
  const std::size_t n_blocks = (corpus.size() + kEStepBlock - 1) / kEStepBlock;
  std::vector<SufficientStats> partial(n_blocks, SufficientStats(model.n_states, model.alphabet_size));
  parallel_blocks(corpus.size(), kEStepBlock, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      if (corpus[s].empty()) throw Error("sequence " + std::to_string(s) + " is empty");
      try {
        accumulate_sequence(model, emission_table(model, corpus[s]), corpus[s], weights.empty() ? 1.0 : weights[s],
                            partial[b]);
      } catch (const ImpossibleObservation& e) {
        throw ImpossibleObservation(e.position(), s);
      }
    }
  });
  SufficientStats total(model.n_states, model.alphabet_size);
  for (const auto& p : partial) total.add(p);
  return total;
}

/// Maximiser of sum_m counts[m] log p[m] subject to p[m] >= floor: entries
/// whose free share would fall below the floor are pinned to it. Returns
/// nullopt when all counts are zero.
inline std::optional<std::vector<double>> floored_distribution(std::span<const double> counts, double floor) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (!(total > 0.0)) return std::nullopt;
  std::vector<bool> pinned(counts.size(), false);
  std::size_t n_pinned = 0;
  double free_count = total;
  for (bool changed = true; changed;) {
    changed = false;
    const double free_mass = 1.0 - double(n_pinned) * floor;
    for (std::size_t x = 0; x < counts.size(); ++x) {
      if (pinned[x] || counts[x] * free_mass >= floor * free_count) continue;
      pinned[x] = true;
      ++n_pinned;
      free_count -= counts[x];
      changed = true;
    }
  }
  const double free_mass = 1.0 - double(n_pinned) * floor;
  std::vector<double> p(counts.size());
  for (std::size_t x = 0; x < counts.size(); ++x) p[x] = pinned[x] ? floor : counts[x] * free_mass / free_count;
  return p;
}

namespace detail {

/// Normalises `counts` over the allowed entries into `out`; leaves `out`
/// untouched when there is no mass.
inline void normalize_into(std::span<const double> counts, std::span<const std::uint8_t> allowed,
                           std::span<double> out) {
  double s = 0.0;
  for (std::size_t x = 0; x < counts.size(); ++x)
    if (allowed[x]) s += counts[x];
  if (!(s > 0.0)) return;
  for (std::size_t x = 0; x < counts.size(); ++x) out[x] = allowed[x] ? counts[x] / s : 0.0;
}

}  // namespace detail

/// Transition re-estimation (pi, a2, a3) from expected counts; rows without
/// mass keep their current values.
inline void update_transitions(Hmm2Model& model, const SufficientStats& st) {
  const std::size_t n = model.n_states;
  const std::vector<std::uint8_t> all(n, 1);
  detail::normalize_into(st.initial, all, model.pi);
  std::vector<std::uint8_t> row_mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row_mask[j] = model.pair_allowed(i, j) ? 1 : 0;
    detail::normalize_into(std::span(st.first_pair).subspan(i * n, n), row_mask,
                           std::span(model.a2).subspan(i * n, n));
  }
  for (std::size_t ij = 0; ij < n * n; ++ij)
    detail::normalize_into(std::span(st.trigram).subspan(ij * n, n), std::span(model.mask).subspan(ij * n, n),
                           std::span(model.a3).subspan(ij * n, n));
}

/// Container emission re-estimation; Dirac states are never touched.
inline void update_emissions(Hmm2Model& model, const SufficientStats& st, double floor) {
  const std::size_t m = model.alphabet_size;
  for (std::size_t s = 0; s < model.n_states; ++s) {
    if (model.kinds[s].is_dirac()) continue;
    if (auto p = floored_distribution(std::span(st.emission).subspan(s * m, m), floor))
      model.emissions[s].probs = std::move(*p);
  }
}

/// Optional start for ordered-period models: container emissions are set from
/// a split of every sequence into equal consecutive segments, one per container
/// state in index order. Transitions and Dirac states are left as they are.
inline Hmm2Model segmental_init(Hmm2Model model, const Corpus& corpus, double floor) {
  std::vector<std::size_t> containers;
  for (std::size_t s = 0; s < model.n_states; ++s)
    if (!model.kinds[s].is_dirac()) containers.push_back(s);
  const std::size_t c = containers.size(), m = model.alphabet_size;
  if (c == 0) return model;
  std::vector<double> counts(c * m, 0.0);
  for (const auto& seq : corpus)
    for (std::size_t t = 0; t < seq.size(); ++t)
      if (seq[t] != kMissing) {
        if (seq[t] < 0 || std::size_t(seq[t]) >= m) throw Error("observation code outside the model alphabet");
        counts[(t * c / seq.size()) * m + std::size_t(seq[t])] += 1.0;
      }
  for (std::size_t k = 0; k < c; ++k)
    if (auto p = floored_distribution(std::span(counts).subspan(k * m, m), floor))
      model.emissions[containers[k]].probs = std::move(*p);
  return model;
}

struct EmStepResult {
  Hmm2Model model;         // re-estimated parameters
  double loglik = 0.0;     // corpus log likelihood of the input model
  std::vector<double> occupancy;
};

inline EmStepResult em_step(const Hmm2Model& model, const Corpus& corpus, const TrainConfig& cfg = {}) {
  const SufficientStats st = expected_counts(model, corpus, {}, cfg.threads);
  EmStepResult r{model, st.loglik, st.occupancy};
  update_transitions(r.model, st);
  update_emissions(r.model, st, cfg.emission_floor);
  return r;
}

struct MergeEvent {
  std::size_t first = 0;
  std::size_t second = 0;
  double distance = 0.0;
  std::size_t n_states_after = 0;
};

struct TrainPhase {
  std::size_t n_states = 0;
  std::vector<double> history;
  bool converged = false;
};

struct TrainReport {
  std::vector<double> history;     // all phases, concatenated
  std::vector<TrainPhase> phases;  // one per (re)training
  std::vector<MergeEvent> merges;
  std::vector<double> occupancy;   // expected state occupancy under the final model
  Hmm2Model model;
};

using ProgressFn = std::function<void(std::size_t iter, double loglik, double delta)>;

/// True when the last improvement is below rel_tol * |previous| and did not
/// grow over the one before it. A small but growing improvement means EM is
/// leaving a saddle (near-symmetric start), not converging. The first
/// improvement from an equiprobable start is always large, so it is never
/// used as the reference.
inline bool has_converged(std::span<const double> history, double rel_tol) {
  const std::size_t n = history.size();
  if (n < 2) return false;
  const double delta = history[n - 1] - history[n - 2];
  if (delta > rel_tol * std::abs(history[n - 2])) return false;
  if (delta <= 0.0) return true;
  return n >= 4 && delta <= history[n - 2] - history[n - 3];
}

/// EM until has_converged or max_iters M-steps have run. history[t] is the log likelihood of the model
/// after t M-steps; the returned model is the one scored last.
inline TrainReport train(const Hmm2Model& init, const Corpus& corpus, const TrainConfig& cfg = {},
                         const ProgressFn& progress = {}) {
  cfg.check();
  TrainReport rep;
  rep.model = init;
  TrainPhase phase;
  phase.n_states = init.n_states;
  for (std::size_t iter = 0;; ++iter) {
    const SufficientStats st = expected_counts(rep.model, corpus, {}, cfg.threads);
    const double prev = phase.history.empty() ? st.loglik : phase.history.back();
    phase.history.push_back(st.loglik);
    rep.occupancy = st.occupancy;
    if (progress) progress(iter, st.loglik, st.loglik - prev);
    if (has_converged(phase.history, cfg.rel_tol)) {
      phase.converged = true;
      break;
    }
    if (iter == cfg.max_iters) break;
    update_transitions(rep.model, st);
    update_emissions(rep.model, st, cfg.emission_floor);
  }
  rep.history = phase.history;
  rep.phases.push_back(std::move(phase));
  return rep;
}

/// Merges states i and j into min(i, j). Emissions are averaged with weights
/// proportional to `occupancy` (equal weights when it is empty); incoming
/// transitions are summed, outgoing ones weighted the same way, and every row
/// is renormalised over the OR-combined mask.
inline Hmm2Model merge_states(const Hmm2Model& model, std::size_t i, std::size_t j,
                              std::span<const double> occupancy = {}) {
  const std::size_t n = model.n_states;
  if (i == j) throw Error("cannot merge a state with itself");
  if (i >= n || j >= n) throw Error("merge: state index out of range");
  if (model.kinds[i].is_dirac() || model.kinds[j].is_dirac()) throw Error("Dirac states cannot be merged");
  const std::size_t keep = std::min(i, j), drop = std::max(i, j);
  double wi = 0.5, wj = 0.5;
  if (occupancy.size() == n && occupancy[i] + occupancy[j] > 0.0) {
    wi = occupancy[i] / (occupancy[i] + occupancy[j]);
    wj = 1.0 - wi;
  }
  std::vector<double> w(n, 1.0);
  w[i] = wi;
  w[j] = wj;
  auto to = [&](std::size_t s) { return s == drop ? keep : (s > drop ? s - 1 : s); };

  const std::size_t r = n - 1;
  Hmm2Model out;
  out.n_states = r;
  out.alphabet_size = model.alphabet_size;
  out.pi.assign(r, 0.0);
  out.a2.assign(r * r, 0.0);
  out.a3.assign(r * r * r, 0.0);
  out.mask.assign(r * r * r, 0);
  for (std::size_t s = 0; s < n; ++s) {
    if (s == drop) continue;
    out.kinds.push_back(model.kinds[s]);
    out.emissions.push_back(model.emissions[s]);
  }
  auto& merged = out.emissions[keep].probs;
  for (std::size_t x = 0; x < merged.size(); ++x)
    merged[x] = wi * model.emissions[i].probs[x] + wj * model.emissions[j].probs[x];

  for (std::size_t a = 0; a < n; ++a) {
    out.pi[to(a)] += model.pi[a];
    for (std::size_t b = 0; b < n; ++b) {
      out.a2[to(a) * r + to(b)] += w[a] * model.trans2(a, b);
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t y = (to(a) * r + to(b)) * r + to(c);
        out.a3[y] += w[a] * w[b] * model.trans3(a, b, c);
        if (model.allowed(a, b, c)) out.mask[y] = 1;
      }
    }
  }

  auto renorm = [](std::span<double> row, auto allowed_at) {
    double s = 0.0;
    std::size_t n_allowed = 0;
    for (std::size_t x = 0; x < row.size(); ++x) {
      if (allowed_at(x)) {
        s += row[x];
        ++n_allowed;
      } else {
        row[x] = 0.0;
      }
    }
    for (std::size_t x = 0; x < row.size(); ++x) {
      if (!allowed_at(x)) continue;
      row[x] = s > 0.0 ? row[x] / s : 1.0 / double(n_allowed);
    }
  };
  renorm(out.pi, [](std::size_t) { return true; });
  for (std::size_t a = 0; a < r; ++a)
    renorm(std::span(out.a2).subspan(a * r, r), [&](std::size_t b) { return out.pair_allowed(a, b); });
  for (std::size_t ab = 0; ab < r * r; ++ab)
    renorm(std::span(out.a3).subspan(ab * r, r), [&](std::size_t c) { return out.mask[ab * r + c] != 0; });
  return out;
}

/// Closest pair of container states by Jeffreys divergence.
inline std::optional<MergeEvent> closest_container_pair(const Hmm2Model& model) {
  std::optional<MergeEvent> best;
  for (std::size_t i = 0; i < model.n_states; ++i) {
    if (model.kinds[i].is_dirac()) continue;
    for (std::size_t j = i + 1; j < model.n_states; ++j) {
      if (model.kinds[j].is_dirac()) continue;
      const double d = state_distance(model.emissions[i], model.emissions[j]);
      if (!best || d < best->distance) best = MergeEvent{i, j, d, model.n_states - 1};
    }
  }
  return best;
}

/// Trains, then repeatedly merges the closest container pair while its
/// divergence is below cfg.merge_threshold, retraining after every merge.
inline TrainReport train_with_merging(const TopologySpec& spec, const Corpus& corpus, const TrainConfig& cfg = {},
                                      const ProgressFn& progress = {}) {
  TrainReport rep = train(build_model(spec, cfg.seed), corpus, cfg, progress);
  for (;;) {
    auto pair = closest_container_pair(rep.model);
    if (!pair || !(pair->distance < cfg.merge_threshold)) break;
    const Hmm2Model merged = merge_states(rep.model, pair->first, pair->second, rep.occupancy);
    TrainReport next = train(merged, corpus, cfg, progress);
    rep.merges.push_back(*pair);
    rep.history.insert(rep.history.end(), next.history.begin(), next.history.end());
    rep.phases.push_back(std::move(next.phases.front()));
    rep.occupancy = std::move(next.occupancy);
    rep.model = std::move(next.model);
  }
  return rep;
}

inline nlohmann::json report_to_json(const TrainReport& rep) {
  nlohmann::json j;
  j["history"] = rep.history;
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : rep.phases)
    phases.push_back({{"n_states", p.n_states}, {"iterations", p.history.size() - 1}, {"converged", p.converged},
                      {"history", p.history}});
  j["phases"] = std::move(phases);
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : rep.merges)
    merges.push_back({{"states", {m.first, m.second}}, {"distance", m.distance}, {"n_states_after", m.n_states_after}});
  j["merges"] = std::move(merges);
  j["occupancy"] = rep.occupancy;
  j["final_n_states"] = rep.model.n_states;
  return j;
}

}  // namespace hmm2
