#pragma once

// Brute-force reference computations for tests. Nothing here calls the
// forward-backward engine: likelihoods and posteriors come from summing over
// every hidden path in extended precision.

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "hmm2/error.hpp"
#include "hmm2/model.hpp"

namespace hmm2::oracle {

struct EnumerationBudget {
  std::size_t max_paths = 1'000'000;
};

struct BruteForcePosteriors {
  std::size_t steps = 0;
  std::size_t states = 0;
  long double likelihood = 0.0L;
  double loglik = 0.0;
  std::vector<double> gamma;  // T x N
  std::vector<double> eta;    // (T-2) x N^3, same layout as the engine's PosteriorSet
};

namespace detail {

inline std::size_t path_count(std::size_t n, std::size_t steps, const EnumerationBudget& budget) {
  std::size_t count = 1;
  for (std::size_t t = 0; t < steps; ++t) {
    if (count > budget.max_paths / n) throw Error("enumeration budget exceeded");
    count *= n;
  }
  return count;
}

/// Visits every state path with its joint probability. `emit(t, s)` is the
/// (linear) emission likelihood of state s at time t.
inline void for_each_path(const Hmm2Model& model, std::size_t steps,
                          const std::function<long double(std::size_t, std::size_t)>& emit,
                          const EnumerationBudget& budget,
                          const std::function<void(const std::vector<std::size_t>&, long double)>& visit) {
  const std::size_t n = model.n_states;
  const std::size_t total = path_count(n, steps, budget);
  std::vector<std::size_t> path(steps, 0);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t t = 0; t < steps; ++t) {
      path[t] = c % n;
      c /= n;
    }
    long double w = static_cast<long double>(model.pi[path[0]]) * emit(0, path[0]);
    if (steps > 1) w *= static_cast<long double>(model.a2[path[0] * n + path[1]]) * emit(1, path[1]);
    for (std::size_t t = 2; t < steps && w != 0.0L; ++t)
      w *= static_cast<long double>(model.a3[(path[t - 2] * n + path[t - 1]) * n + path[t]]) * emit(t, path[t]);
    visit(path, w);
  }
}

inline BruteForcePosteriors enumerate(const Hmm2Model& model, std::size_t steps,
                                      const std::function<long double(std::size_t, std::size_t)>& emit,
                                      const EnumerationBudget& budget) {
  const std::size_t n = model.n_states;
  BruteForcePosteriors r;
  r.steps = steps;
  r.states = n;
  std::vector<long double> gamma(steps * n, 0.0L);
  std::vector<long double> eta(steps >= 2 ? (steps - 2) * n * n * n : 0, 0.0L);
  long double total = 0.0L;
  for_each_path(model, steps, emit, budget, [&](const std::vector<std::size_t>& path, long double w) {
    if (w == 0.0L) return;
    total += w;
    for (std::size_t t = 0; t < steps; ++t) gamma[t * n + path[t]] += w;
    for (std::size_t e = 0; e + 2 < steps; ++e) eta[((e * n + path[e]) * n + path[e + 1]) * n + path[e + 2]] += w;
  });
  r.likelihood = total;
  r.loglik = static_cast<double>(std::log(total));
  r.gamma.resize(gamma.size());
  r.eta.resize(eta.size());
  if (total > 0.0L) {
    for (std::size_t x = 0; x < gamma.size(); ++x) r.gamma[x] = static_cast<double>(gamma[x] / total);
    for (std::size_t x = 0; x < eta.size(); ++x) r.eta[x] = static_cast<double>(eta[x] / total);
  }
  return r;
}

inline long double emission_of(const Hmm2Model& model, const Sequence& seq, std::size_t t, std::size_t s) {
  if (seq[t] == kMissing) return 1.0L;
  return static_cast<long double>(model.emissions[s].probs.at(static_cast<std::size_t>(seq[t])));
}

}  // namespace detail

/// P(seq | model) summed over all N^T paths.
inline long double brute_force_likelihood(const Hmm2Model& model, const Sequence& seq,
                                          const EnumerationBudget& budget = {}) {
  if (seq.empty()) throw Error("empty sequence");
  long double total = 0.0L;
  detail::for_each_path(
      model, seq.size(), [&](std::size_t t, std::size_t s) { return detail::emission_of(model, seq, t, s); }, budget,
      [&](const std::vector<std::size_t>&, long double w) { total += w; });
  return total;
}

inline BruteForcePosteriors brute_force_posteriors(const Hmm2Model& model, const Sequence& seq,
                                                   const EnumerationBudget& budget = {}) {
  if (seq.empty()) throw Error("empty sequence");
  return detail::enumerate(
      model, seq.size(), [&](std::size_t t, std::size_t s) { return detail::emission_of(model, seq, t, s); }, budget);
}

/// Two-level enumeration: the master chain over `vectors.size()` positions,
/// super state s emitting vector p with the brute-force likelihood of `subs[s]`.
inline BruteForcePosteriors brute_force_hierarchical(const Hmm2Model& master, const std::vector<Hmm2Model>& subs,
                                                     const std::vector<Sequence>& vectors,
                                                     const EnumerationBudget& budget = {}) {
  if (subs.size() != master.n_states) throw Error("one sub-model per super state required");
  std::vector<long double> table(vectors.size() * subs.size());
  for (std::size_t p = 0; p < vectors.size(); ++p)
    for (std::size_t s = 0; s < subs.size(); ++s)
      table[p * subs.size() + s] = brute_force_likelihood(subs[s], vectors[p], budget);
  return detail::enumerate(
      master, vectors.size(), [&](std::size_t p, std::size_t s) { return table[p * subs.size() + s]; }, budget);
}

using Trigram = std::array<Code, 3>;

/// Sliding-window frequencies of observation triples over the corpus,
/// normalised by the total number of windows.
inline std::map<Trigram, double> count_trigrams(const Corpus& corpus) {
  std::map<Trigram, std::size_t> counts;
  std::size_t windows = 0;
  for (const auto& seq : corpus)
    for (std::size_t t = 0; t + 2 < seq.size(); ++t) {
      ++counts[{seq[t], seq[t + 1], seq[t + 2]}];
      ++windows;
    }
  std::map<Trigram, double> out;
  for (const auto& [k, c] : counts) out[k] = double(c) / double(windows);
  return out;
}

}  // namespace hmm2::oracle
