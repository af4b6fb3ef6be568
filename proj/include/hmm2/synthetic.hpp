#pragma once

// Sampling from a model, random parameter draws and label-alignment scoring,
// used to build planted-structure data sets with known ground truth.

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "hmm2/error.hpp"
#include "hmm2/model.hpp"

namespace hmm2 {

struct SampledSequence {
  std::vector<std::size_t> states;
  Sequence observations;
};

inline std::size_t sample_index(std::span<const double> probs, std::mt19937_64& gen) {
  const double u = detail::unit_uniform(gen);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t x = 0; x < probs.size(); ++x) {
    if (probs[x] <= 0.0) continue;
    acc += probs[x];
    last = x;
    if (u < acc) return x;
  }
  return last;
}

inline SampledSequence sample_sequence(const Hmm2Model& model, std::size_t length, std::mt19937_64& gen) {
  const std::size_t n = model.n_states;
  SampledSequence out;
  out.states.reserve(length);
  out.observations.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    std::size_t s = 0;
    if (t == 0)
      s = sample_index(model.pi, gen);
    else if (t == 1)
      s = sample_index(std::span(model.a2).subspan(out.states[0] * n, n), gen);
    else
      s = sample_index(std::span(model.a3).subspan((out.states[t - 2] * n + out.states[t - 1]) * n, n), gen);
    out.states.push_back(s);
    out.observations.push_back(static_cast<Code>(sample_index(model.emissions[s].probs, gen)));
  }
  return out;
}

/// Random probability vector; `allowed` (when given) selects the support.
inline std::vector<double> random_distribution(std::size_t size, std::mt19937_64& gen,
                                               std::span<const std::uint8_t> allowed = {}) {
  std::vector<double> p(size, 0.0);
  double s = 0.0;
  for (std::size_t x = 0; x < size; ++x) {
    if (!allowed.empty() && !allowed[x]) continue;
    p[x] = 0.05 + detail::unit_uniform(gen);
    s += p[x];
  }
  if (s > 0.0)
    for (auto& v : p) v /= s;
  return p;
}

/// Random parameters on the topology of `spec`: every allowed entry positive.
inline Hmm2Model random_model(const TopologySpec& spec, std::mt19937_64& gen) {
  Hmm2Model m = build_model(spec, gen());
  const std::size_t n = m.n_states;
  m.pi = random_distribution(n, gen);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint8_t> allowed(n);
    for (std::size_t j = 0; j < n; ++j) allowed[j] = m.pair_allowed(i, j) ? 1 : 0;
    auto row = random_distribution(n, gen, allowed);
    std::copy(row.begin(), row.end(), m.a2.begin() + std::ptrdiff_t(i * n));
  }
  for (std::size_t ij = 0; ij < n * n; ++ij) {
    auto row = random_distribution(n, gen, std::span(m.mask).subspan(ij * n, n));
    std::copy(row.begin(), row.end(), m.a3.begin() + std::ptrdiff_t(ij * n));
  }
  for (std::size_t s = 0; s < n; ++s)
    if (!m.kinds[s].is_dirac()) m.emissions[s].probs = random_distribution(m.alphabet_size, gen);
  return m;
}

/// Total-variation distance between two pdfs.
inline double total_variation(const CategoricalPdf& p, const CategoricalPdf& q) {
  if (p.size() != q.size()) throw Error("total_variation: alphabet sizes differ");
  double d = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) d += std::abs(p[x] - q[x]);
  return 0.5 * d;
}

/// Best fraction of agreement between `truth` and `predicted` over all
/// relabelings of the predicted labels (labels < n_labels, n_labels <= 8).
inline double aligned_accuracy(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                               std::size_t n_labels) {
  if (truth.size() != predicted.size()) throw Error("aligned_accuracy: length mismatch");
  if (truth.empty()) return 1.0;
  if (n_labels > 8) throw Error("aligned_accuracy: too many labels for exhaustive alignment");
  std::vector<std::size_t> confusion(n_labels * n_labels, 0);
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (truth[t] >= n_labels || predicted[t] >= n_labels) throw Error("aligned_accuracy: label out of range");
    ++confusion[predicted[t] * n_labels + truth[t]];
  }
  std::vector<std::size_t> perm(n_labels);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t p = 0; p < n_labels; ++p) hit += confusion[p * n_labels + perm[p]];
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return double(best) / double(truth.size());
}

}  // namespace hmm2
