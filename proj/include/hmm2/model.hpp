#pragma once

// Second-order HMM parameter structures, topology construction, validation
// and the inter-state divergence used for merging.
//
// The hidden chain starts with `pi` at t = 0, uses the first-order matrix `a2`
// for the step t = 0 -> 1, and the second-order tensor `a3` from t = 2 on.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hmm2/error.hpp"

namespace hmm2 {

/// Observation code. Valid codes are in [0, alphabet_size); kMissing marks an absent value.
using Code = int;
inline constexpr Code kMissing = -1;
using Sequence = std::vector<Code>;
using Corpus = std::vector<Sequence>;

inline constexpr double kSumTolerance = 1e-9;

/// Probability vector over the modality alphabet.
struct CategoricalPdf {
  std::vector<double> probs;

  CategoricalPdf() = default;
  explicit CategoricalPdf(std::vector<double> p) : probs(std::move(p)) {}

  static CategoricalPdf uniform(std::size_t m) { return CategoricalPdf(std::vector<double>(m, 1.0 / double(m))); }
  static CategoricalPdf indicator(std::size_t m, std::size_t code) {
    std::vector<double> p(m, 0.0);
    p.at(code) = 1.0;
    return CategoricalPdf(std::move(p));
  }

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  bool is_valid(double tol = kSumTolerance) const {
    double s = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) return false;
      s += p;
    }
    return !probs.empty() && std::abs(s - 1.0) <= tol;
  }

  friend bool operator==(const CategoricalPdf&, const CategoricalPdf&) = default;
};

/// Container states carry a full pdf; Dirac states emit a single modality.
struct StateKind {
  enum class Type { Container, Dirac };
  Type type = Type::Container;
  std::size_t modality = 0;  // meaningful for Dirac only

  static StateKind container() { return {}; }
  static StateKind dirac(std::size_t code) { return {Type::Dirac, code}; }
  bool is_dirac() const noexcept { return type == Type::Dirac; }

  friend bool operator==(const StateKind&, const StateKind&) = default;
};

struct Hmm2Model {
  std::size_t n_states = 0;
  std::size_t alphabet_size = 0;
  std::vector<double> pi;                 // N
  std::vector<double> a2;                 // N*N, row-major
  std::vector<double> a3;                 // N*N*N, index (i*N + j)*N + k
  std::vector<CategoricalPdf> emissions;  // N
  std::vector<StateKind> kinds;           // N
  std::vector<std::uint8_t> mask;         // N*N*N, 1 = allowed

  std::size_t idx2(std::size_t i, std::size_t j) const noexcept { return i * n_states + j; }
  std::size_t idx3(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return (i * n_states + j) * n_states + k;
  }

  double trans2(std::size_t i, std::size_t j) const { return a2[idx2(i, j)]; }
  double trans3(std::size_t i, std::size_t j, std::size_t k) const { return a3[idx3(i, j, k)]; }
  bool allowed(std::size_t i, std::size_t j, std::size_t k) const { return mask[idx3(i, j, k)] != 0; }

  /// First-order transition i -> j is allowed when some predecessor h admits (h, i, j).
  bool pair_allowed(std::size_t i, std::size_t j) const {
    for (std::size_t h = 0; h < n_states; ++h)
      if (allowed(h, i, j)) return true;
    return false;
  }

  bool slice_reachable(std::size_t i, std::size_t j) const {
    for (std::size_t k = 0; k < n_states; ++k)
      if (allowed(i, j, k)) return true;
    return false;
  }

  std::size_t dirac_count() const {
    std::size_t n = 0;
    for (const auto& k : kinds) n += k.is_dirac() ? 1 : 0;
    return n;
  }

  friend bool operator==(const Hmm2Model&, const Hmm2Model&) = default;
};

enum class Shape { Ergodic, LeftRight, Custom };

struct TopologySpec {
  Shape shape = Shape::Ergodic;
  std::size_t n_states = 0;
  std::size_t alphabet_size = 0;
  std::vector<StateKind> kinds;            // empty = all containers
  std::vector<std::uint8_t> custom_mask;   // N*N*N, Custom only

  static TopologySpec ergodic(std::size_t n, std::size_t m) { return {Shape::Ergodic, n, m, {}, {}}; }
  static TopologySpec left_right(std::size_t n, std::size_t m) { return {Shape::LeftRight, n, m, {}, {}}; }
};

/// Topology with `n_periods` columns, each holding one container state followed
/// by one Dirac state per entry of `dirac_codes`. Transitions stay inside a
/// column or advance to the next one, in both orders of a trigram.
inline TopologySpec period_dirac_topology(std::size_t n_periods, const std::vector<std::size_t>& dirac_codes,
                                          std::size_t alphabet_size) {
  if (n_periods == 0) throw Error("period topology needs at least one period");
  const std::size_t per = 1 + dirac_codes.size();
  TopologySpec spec;
  spec.shape = Shape::Custom;
  spec.n_states = n_periods * per;
  spec.alphabet_size = alphabet_size;
  for (std::size_t p = 0; p < n_periods; ++p) {
    spec.kinds.push_back(StateKind::container());
    for (auto c : dirac_codes) spec.kinds.push_back(StateKind::dirac(c));
  }
  const std::size_t n = spec.n_states;
  spec.custom_mask.assign(n * n * n, 0);
  auto col = [per](std::size_t s) { return s / per; };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        bool ok = col(i) <= col(j) && col(j) <= col(k) && col(j) - col(i) <= 1 && col(k) - col(j) <= 1;
        spec.custom_mask[(i * n + j) * n + k] = ok ? 1 : 0;
      }
  return spec;
}

namespace detail {

inline double unit_uniform(std::mt19937_64& gen) { return double(gen() >> 11) * 0x1.0p-53; }

inline std::vector<std::uint8_t> topology_mask(const TopologySpec& spec) {
  const std::size_t n = spec.n_states;
  std::vector<std::uint8_t> mask(n * n * n, 1);
  switch (spec.shape) {
    case Shape::Ergodic:
      break;
    case Shape::LeftRight:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = 0; k < n; ++k) mask[(i * n + j) * n + k] = (i <= j && j <= k) ? 1 : 0;
      break;
    case Shape::Custom:
      if (spec.custom_mask.size() != n * n * n) throw Error("custom mask must have N^3 entries");
      for (std::size_t x = 0; x < mask.size(); ++x) mask[x] = spec.custom_mask[x] ? 1 : 0;
      break;
  }
  return mask;
}

}  // namespace detail

/// Relative magnitude of the seeded perturbation applied to container emissions.
inline constexpr double kEmissionJitter = 1e-2;

/// Equiprobable allowed transitions, uniform (jittered) container emissions and
/// indicator Dirac emissions. Deterministic in (spec, seed).
inline Hmm2Model build_model(const TopologySpec& spec, std::uint64_t seed) {
  const std::size_t n = spec.n_states, m = spec.alphabet_size;
  if (n == 0) throw Error("model needs at least one state");
  if (m == 0) throw Error("model needs a non-empty alphabet");
  if (!spec.kinds.empty() && spec.kinds.size() != n) throw Error("state kinds must list every state");
  for (const auto& k : spec.kinds)
    if (k.is_dirac() && k.modality >= m)
      throw Error("Dirac modality " + std::to_string(k.modality) + " outside alphabet of size " + std::to_string(m));

  Hmm2Model model;
  model.n_states = n;
  model.alphabet_size = m;
  model.kinds = spec.kinds.empty() ? std::vector<StateKind>(n, StateKind::container()) : spec.kinds;
  model.mask = detail::topology_mask(spec);

  model.pi.assign(n, 1.0 / double(n));

  model.a2.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t allowed = 0;
    for (std::size_t j = 0; j < n; ++j) allowed += model.pair_allowed(i, j) ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j)
      if (model.pair_allowed(i, j)) model.a2[model.idx2(i, j)] = 1.0 / double(allowed);
  }

  model.a3.assign(n * n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t allowed = 0;
      for (std::size_t k = 0; k < n; ++k) allowed += model.allowed(i, j, k) ? 1 : 0;
      for (std::size_t k = 0; k < n; ++k)
        if (model.allowed(i, j, k)) model.a3[model.idx3(i, j, k)] = 1.0 / double(allowed);
    }

  std::mt19937_64 gen(seed);
  model.emissions.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (model.kinds[s].is_dirac()) {
      model.emissions.push_back(CategoricalPdf::indicator(m, model.kinds[s].modality));
      continue;
    }
    std::vector<double> p(m);
    double total = 0.0;
    for (auto& v : p) {
      v = (1.0 + kEmissionJitter * (2.0 * detail::unit_uniform(gen) - 1.0)) / double(m);
      total += v;
    }
    for (auto& v : p) v /= total;
    model.emissions.emplace_back(std::move(p));
  }
  return model;
}

struct Violation {
  std::string location;
  std::string message;
};

inline std::string to_string(const Violation& v) { return v.location + ": " + v.message; }

/// Every invariant breach of `model`, with its location. Empty means valid.
inline std::vector<Violation> validate(const Hmm2Model& model) {
  std::vector<Violation> out;
  const std::size_t n = model.n_states, m = model.alphabet_size;
  auto add = [&out](std::string where, std::string what) { out.push_back({std::move(where), std::move(what)}); };
  if (n == 0) add("model", "no states");
  if (m == 0) add("model", "empty alphabet");
  if (model.pi.size() != n) add("pi", "expected " + std::to_string(n) + " entries");
  if (model.a2.size() != n * n) add("a2", "expected N^2 entries");
  if (model.a3.size() != n * n * n) add("a3", "expected N^3 entries");
  if (model.mask.size() != n * n * n) add("mask", "expected N^3 entries");
  if (model.emissions.size() != n) add("emissions", "expected one pdf per state");
  if (model.kinds.size() != n) add("kinds", "expected one kind per state");
  if (!out.empty()) return out;

  auto bad_value = [](double v) { return !(v >= 0.0) || !std::isfinite(v) || v > 1.0 + kSumTolerance; };

  double pi_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (bad_value(model.pi[i])) add("pi[" + std::to_string(i) + "]", "not a probability");
    pi_sum += model.pi[i];
  }
  if (std::abs(pi_sum - 1.0) > kSumTolerance) add("pi", "sums to " + std::to_string(pi_sum));

  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = model.trans2(i, j);
      const std::string where = "a2[" + std::to_string(i) + "," + std::to_string(j) + "]";
      if (bad_value(v)) add(where, "not a probability");
      if (!model.pair_allowed(i, j) && v != 0.0) add(where, "masked transition is non-zero");
      any = any || model.pair_allowed(i, j);
      s += v;
    }
    if (any ? std::abs(s - 1.0) > kSumTolerance : s != 0.0)
      add("a2 row " + std::to_string(i), "sums to " + std::to_string(s));
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double v = model.trans3(i, j, k);
        const std::string where =
            "a3[" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) + "]";
        if (bad_value(v)) add(where, "not a probability");
        if (!model.allowed(i, j, k) && v != 0.0) add(where, "masked transition is non-zero");
        s += v;
      }
      const bool reachable = model.slice_reachable(i, j);
      if (reachable ? std::abs(s - 1.0) > kSumTolerance : s != 0.0)
        add("a3 slice (" + std::to_string(i) + "," + std::to_string(j) + ")", "sums to " + std::to_string(s));
    }

  for (std::size_t s = 0; s < n; ++s) {
    const auto& pdf = model.emissions[s];
    const std::string where = "emissions[" + std::to_string(s) + "]";
    if (pdf.size() != m) {
      add(where, "expected " + std::to_string(m) + " entries");
      continue;
    }
    if (!pdf.is_valid()) add(where, "not a normalized pdf");
    if (model.kinds[s].is_dirac()) {
      if (model.kinds[s].modality >= m) {
        add("kinds[" + std::to_string(s) + "]", "Dirac modality outside alphabet");
      } else if (pdf != CategoricalPdf::indicator(m, model.kinds[s].modality)) {
        add(where, "Dirac state pdf is not an indicator on modality " + std::to_string(model.kinds[s].modality));
      }
    }
  }
  return out;
}

inline constexpr double kDistanceFloor = 1e-6;

/// Jeffreys (symmetrised Kullback-Leibler) divergence after flooring both pdfs
/// at `epsilon` and renormalising.
inline double state_distance(const CategoricalPdf& p, const CategoricalPdf& q, double epsilon = kDistanceFloor) {
  if (p.size() != q.size()) throw Error("state_distance: alphabet sizes differ");
  if (!(epsilon > 0.0)) throw Error("state_distance: floor must be positive");
  auto floored = [epsilon](const CategoricalPdf& d) {
    std::vector<double> v(d.probs);
    double s = 0.0;
    for (auto& x : v) {
      x = std::max(x, epsilon);
      s += x;
    }
    for (auto& x : v) x /= s;
    return v;
  };
  const auto fp = floored(p), fq = floored(q);
  double d = 0.0;
  for (std::size_t i = 0; i < fp.size(); ++i) d += (fp[i] - fq[i]) * (std::log(fp[i]) - std::log(fq[i]));
  return std::max(d, 0.0);
}

}  // namespace hmm2
