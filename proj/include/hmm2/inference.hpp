#pragma once

// Scaled second-order forward-backward.
//
// Times are 0-based. The forward table keeps the unary term for t = 0 and pair
// terms alpha_t(i, j) = P(o_0..o_t, q_{t-1} = i, q_t = j) for t >= 1, each time
// slice normalised to sum 1. The normaliser of slice t is scales[t]; the log
// likelihood is sum_t (log scales[t] + log_shift[t]).
//
// Emissions enter through an EmissionTable so that the same recursion serves
// categorical observations and the master level of a hierarchical model, where
// per-position likelihoods are only representable after subtracting a shift.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "hmm2/error.hpp"
#include "hmm2/model.hpp"
#include "hmm2/numfmt.hpp"

namespace hmm2 {

/// Linear emission likelihoods per (time, state), each time scaled by exp(-log_shift[t]).
struct EmissionTable {
  std::size_t steps = 0;
  std::size_t states = 0;
  std::vector<double> values;     // steps x states
  std::vector<double> log_shift;  // steps

  double operator()(std::size_t t, std::size_t s) const { return values[t * states + s]; }
};

/// b_s(o_t) for every t; a missing observation has likelihood 1 in every state.
inline EmissionTable emission_table(const Hmm2Model& model, std::span<const Code> seq) {
  EmissionTable e;
  e.steps = seq.size();
  e.states = model.n_states;
  e.values.resize(e.steps * e.states);
  e.log_shift.assign(e.steps, 0.0);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const Code o = seq[t];
    if (o != kMissing && (o < 0 || static_cast<std::size_t>(o) >= model.alphabet_size))
      throw Error("observation code " + std::to_string(o) + " at t=" + std::to_string(t) + " outside alphabet");
    for (std::size_t s = 0; s < e.states; ++s)
      e.values[t * e.states + s] = o == kMissing ? 1.0 : model.emissions[s].probs[static_cast<std::size_t>(o)];
  }
  return e;
}

/// Emission table from per-(time, state) log likelihoods, normalised so that
/// the best state of every time has value 1.
inline EmissionTable emission_table_from_logs(std::size_t steps, std::size_t states, std::span<const double> logs) {
  EmissionTable e;
  e.steps = steps;
  e.states = states;
  e.values.resize(steps * states);
  e.log_shift.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < states; ++s) mx = std::max(mx, logs[t * states + s]);
    if (!std::isfinite(mx)) throw ImpossibleObservation(t);
    e.log_shift[t] = mx;
    for (std::size_t s = 0; s < states; ++s) e.values[t * states + s] = std::exp(logs[t * states + s] - mx);
  }
  return e;
}

struct ForwardResult {
  std::size_t steps = 0;
  std::size_t states = 0;
  std::vector<double> initial;  // N, scaled alpha_0
  std::vector<double> pairs;    // T x N x N, scaled alpha_t for t >= 1 (slot 0 unused)
  std::vector<double> scales;   // T
  double loglik = 0.0;

  double pair(std::size_t t, std::size_t i, std::size_t j) const { return pairs[(t * states + i) * states + j]; }
};

struct BackwardResult {
  std::vector<double> initial;  // N, scaled beta_0
  std::vector<double> pairs;    // T x N x N, scaled beta_t for t >= 1
};

inline ForwardResult forward(const Hmm2Model& model, const EmissionTable& em) {
  const std::size_t n = model.n_states, steps = em.steps;
  if (steps == 0) throw Error("forward: empty sequence");
  if (em.states != n) throw Error("forward: emission table does not match model");
  ForwardResult f;
  f.steps = steps;
  f.states = n;
  f.initial.assign(n, 0.0);
  f.pairs.assign(steps * n * n, 0.0);
  f.scales.assign(steps, 0.0);

  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    f.initial[i] = model.pi[i] * em(0, i);
    c += f.initial[i];
  }
  if (!(c > 0.0)) throw ImpossibleObservation(0);
  for (auto& v : f.initial) v /= c;
  f.scales[0] = c;

  if (steps > 1) {
    double* cur = &f.pairs[n * n];
    c = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double v = f.initial[i] * model.a2[i * n + j] * em(1, j);
        cur[i * n + j] = v;
        c += v;
      }
    if (!(c > 0.0)) throw ImpossibleObservation(1);
    for (std::size_t x = 0; x < n * n; ++x) cur[x] /= c;
    f.scales[1] = c;
  }

  for (std::size_t t = 2; t < steps; ++t) {
    const double* prev = &f.pairs[(t - 1) * n * n];
    double* cur = &f.pairs[t * n * n];
    c = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += prev[i * n + j] * model.a3[(i * n + j) * n + k];
        const double v = acc * em(t, k);
        cur[j * n + k] = v;
        c += v;
      }
    if (!(c > 0.0)) throw ImpossibleObservation(t);
    for (std::size_t x = 0; x < n * n; ++x) cur[x] /= c;
    f.scales[t] = c;
  }

  double ll = 0.0;
  for (std::size_t t = 0; t < steps; ++t) ll += std::log(f.scales[t]) + em.log_shift[t];
  f.loglik = ll;
  return f;
}

/// Backward pass scaled by the forward normalisers, so that alpha_t * beta_t
/// is the pair posterior at every t.
inline BackwardResult backward(const Hmm2Model& model, const EmissionTable& em, const ForwardResult& fw) {
  const std::size_t n = model.n_states, steps = em.steps;
  if (fw.steps != steps || fw.states != n) throw Error("backward: forward result does not match inputs");
  BackwardResult b;
  b.initial.assign(n, 0.0);
  b.pairs.assign(steps * n * n, 0.0);
  if (steps == 1) {
    std::fill(b.initial.begin(), b.initial.end(), 1.0);
    return b;
  }
  std::fill(b.pairs.begin() + std::ptrdiff_t((steps - 1) * n * n), b.pairs.end(), 1.0);
  for (std::size_t t = steps - 1; t >= 2; --t) {
    const double* next = &b.pairs[t * n * n];
    double* cur = &b.pairs[(t - 1) * n * n];
    const double inv = 1.0 / fw.scales[t];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += model.a3[(i * n + j) * n + k] * em(t, k) * next[j * n + k];
        cur[i * n + j] = acc * inv;
      }
  }
  const double* next = &b.pairs[n * n];
  const double inv = 1.0 / fw.scales[1];
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += model.a2[i * n + j] * em(1, j) * next[i * n + j];
    b.initial[i] = acc * inv;
  }
  return b;
}

inline ForwardResult forward(const Hmm2Model& model, std::span<const Code> seq) {
  return forward(model, emission_table(model, seq));
}

inline BackwardResult backward(const Hmm2Model& model, std::span<const Code> seq, const ForwardResult& fw) {
  return backward(model, emission_table(model, seq), fw);
}

/// Posterior marginals of one sequence.
///
/// gamma(t, i) = P(q_t = i | O). eta(e, i, j, k) = P(q_e = i, q_{e+1} = j,
/// q_{e+2} = k | O) for e in [0, T-2); first_pair(i, j) = P(q_0 = i, q_1 = j | O)
/// (empty when T < 2).
struct PosteriorSet {
  std::size_t steps = 0;
  std::size_t states = 0;
  double loglik = 0.0;
  std::vector<double> gamma;
  std::vector<double> eta;
  std::vector<double> first_pair;

  double gamma_at(std::size_t t, std::size_t i) const { return gamma[t * states + i]; }
  double eta_at(std::size_t e, std::size_t i, std::size_t j, std::size_t k) const {
    return eta[((e * states + i) * states + j) * states + k];
  }
  std::size_t eta_steps() const noexcept { return steps >= 2 ? steps - 2 : 0; }
};

inline PosteriorSet posteriors(const Hmm2Model& model, const EmissionTable& em) {
  const std::size_t n = model.n_states, steps = em.steps;
  const ForwardResult fw = forward(model, em);
  const BackwardResult bw = backward(model, em, fw);
  PosteriorSet ps;
  ps.steps = steps;
  ps.states = n;
  ps.loglik = fw.loglik;
  ps.gamma.assign(steps * n, 0.0);

  for (std::size_t i = 0; i < n; ++i) ps.gamma[i] = fw.initial[i] * bw.initial[i];
  if (steps >= 2) {
    ps.first_pair.resize(n * n);
    for (std::size_t x = 0; x < n * n; ++x) ps.first_pair[x] = fw.pairs[n * n + x] * bw.pairs[n * n + x];
  }
  for (std::size_t t = 1; t < steps; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t x = (t * n + i) * n + j;
        ps.gamma[t * n + j] += fw.pairs[x] * bw.pairs[x];
      }

  if (steps >= 3) {
    ps.eta.assign((steps - 2) * n * n * n, 0.0);
    for (std::size_t e = 0; e + 2 < steps; ++e) {
      const std::size_t t = e + 1;  // middle time
      const double inv = 1.0 / fw.scales[t + 1];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double a = fw.pairs[(t * n + i) * n + j];
          if (a == 0.0) continue;
          for (std::size_t k = 0; k < n; ++k)
            ps.eta[((e * n + i) * n + j) * n + k] = a * model.a3[(i * n + j) * n + k] * em(t + 1, k) *
                                                    bw.pairs[((t + 1) * n + j) * n + k] * inv;
        }
    }
  }
  return ps;
}

inline PosteriorSet posteriors(const Hmm2Model& model, std::span<const Code> seq) {
  return posteriors(model, emission_table(model, seq));
}

/// argmax_i gamma(t, i), lowest index on ties.
inline std::vector<std::size_t> classify(const PosteriorSet& ps) {
  std::vector<std::size_t> labels(ps.steps, 0);
  for (std::size_t t = 0; t < ps.steps; ++t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ps.states; ++i)
      if (ps.gamma_at(t, i) > ps.gamma_at(t, best)) best = i;
    labels[t] = best;
  }
  return labels;
}

/// CSV "t,state,gamma", one row per (t, state), exact decimal values.
inline void write_posterior_csv(std::ostream& out, const PosteriorSet& ps, bool header = true) {
  if (header) out << "t,state,gamma\n";
  for (std::size_t t = 0; t < ps.steps; ++t)
    for (std::size_t i = 0; i < ps.states; ++i) out << t << ',' << i << ',' << format_double(ps.gamma_at(t, i)) << '\n';
  if (!out) throw Error("failed writing posterior series");
}

/// Duration behaviour of a state: after entering j from some i != j the chain
/// leaves again at once with probability 1 - a3(i, j, j) (averaged over the
/// predecessors that can enter j); once it has stayed, further stays decay
/// geometrically with rate a3(j, j, j).
struct DurationDiagnostic {
  std::size_t state = 0;
  double p_single_visit = 0.0;
  double decay_rate = 0.0;
};

inline std::vector<DurationDiagnostic> duration_report(const Hmm2Model& model) {
  const std::size_t n = model.n_states;
  std::vector<DurationDiagnostic> out;
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j || !model.slice_reachable(i, j) || !model.pair_allowed(i, j)) continue;
      sum += 1.0 - model.trans3(i, j, j);
      ++count;
    }
    out.push_back({j, count ? sum / double(count) : 1.0 - model.trans3(j, j, j), model.trans3(j, j, j)});
  }
  return out;
}

inline void write_duration_csv(std::ostream& out, const std::vector<DurationDiagnostic>& d) {
  out << "state,p_single_visit,decay_rate\n";
  for (const auto& r : d) out << r.state << ',' << format_double(r.p_single_visit) << ',' << format_double(r.decay_rate) << '\n';
}

}  // namespace hmm2
