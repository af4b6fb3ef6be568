#pragma once

// Succession statistics read off a trained model: per-state category
// distributions, 3-year succession probabilities between Dirac states and the
// annual transitions derived from them.
//
// Succession probabilities are shares of the total trigram posterior mass of
// the corpus (all states, all windows), so Dirac triples compete with the mass
// held by container states.

#include <algorithm>
#include <array>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "hmm2/data.hpp"
#include "hmm2/error.hpp"
#include "hmm2/model.hpp"
#include "hmm2/numfmt.hpp"
#include "hmm2/training.hpp"

namespace hmm2 {

inline std::string code_label(const std::vector<std::string>& labels, std::size_t code) {
  return code < labels.size() ? labels[code] : std::to_string(code);
}

struct RankedCategory {
  std::size_t code = 0;
  std::string label;
  double probability = 0.0;
};

struct StateDistribution {
  std::size_t state = 0;
  double occupancy_share = 0.0;  // expected fraction of observations assigned to the state
  std::vector<RankedCategory> categories;  // descending probability
};

/// Emission pdf of each selected state with its categories ranked, plus the
/// state's share of the corpus occupancy.
inline std::vector<StateDistribution> period_distribution(const Hmm2Model& model, const Corpus& corpus,
                                                          const std::vector<std::size_t>& states,
                                                          const std::vector<std::string>& labels = {},
                                                          std::size_t threads = 0) {
  if (states.empty()) throw Error("period_distribution: no states selected");
  const SufficientStats st = expected_counts(model, corpus, {}, threads);
  double total = 0.0;
  for (double o : st.occupancy) total += o;
  std::vector<StateDistribution> out;
  for (auto s : states) {
    if (s >= model.n_states) throw Error("period_distribution: state " + std::to_string(s) + " out of range");
    StateDistribution d;
    d.state = s;
    d.occupancy_share = total > 0.0 ? st.occupancy[s] / total : 0.0;
    for (std::size_t c = 0; c < model.alphabet_size; ++c)
      d.categories.push_back({c, code_label(labels, c), model.emissions[s].probs[c]});
    std::stable_sort(d.categories.begin(), d.categories.end(),
                     [](const RankedCategory& a, const RankedCategory& b) { return a.probability > b.probability; });
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<std::size_t> container_states(const Hmm2Model& model) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < model.n_states; ++s)
    if (!model.kinds[s].is_dirac()) out.push_back(s);
  return out;
}

struct SuccessionEntry {
  std::array<std::size_t, 3> codes{};
  std::array<std::string, 3> labels;
  double probability = 0.0;

  std::string joined() const { return labels[0] + " + " + labels[1] + " + " + labels[2]; }
};

struct SuccessionTable {
  std::vector<SuccessionEntry> entries;  // descending probability, ties by codes
  std::string period;
};

/// Trigram posterior mass between Dirac states, aggregated by the modality
/// triple they stand for, divided by the all-state trigram mass.
inline SuccessionTable triple_probabilities(const Hmm2Model& model, const Corpus& corpus,
                                            const std::vector<std::string>& labels = {}, std::size_t threads = 0) {
  if (model.dirac_count() == 0) throw Error("succession mining needs at least one Dirac state");
  const SufficientStats st = expected_counts(model, corpus, {}, threads);
  const std::size_t n = model.n_states;
  double total = 0.0;
  for (double v : st.trigram) total += v;
  if (!(total > 0.0)) throw Error("succession mining needs sequences of length 3 or more");

  std::map<std::array<std::size_t, 3>, double> mass;
  std::set<std::size_t> modalities;
  for (std::size_t s = 0; s < n; ++s)
    if (model.kinds[s].is_dirac()) modalities.insert(model.kinds[s].modality);
  for (auto a : modalities)
    for (auto b : modalities)
      for (auto c : modalities) mass[{a, b, c}] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!model.kinds[i].is_dirac()) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (!model.kinds[j].is_dirac()) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (!model.kinds[k].is_dirac()) continue;
        mass[{model.kinds[i].modality, model.kinds[j].modality, model.kinds[k].modality}] +=
            st.trigram[(i * n + j) * n + k];
      }
    }
  }

  SuccessionTable table;
  for (const auto& [codes, v] : mass) {
    SuccessionEntry e;
    e.codes = codes;
    for (std::size_t x = 0; x < 3; ++x) e.labels[x] = code_label(labels, codes[x]);
    e.probability = v / total;
    table.entries.push_back(std::move(e));
  }
  std::stable_sort(table.entries.begin(), table.entries.end(),
                   [](const SuccessionEntry& a, const SuccessionEntry& b) { return a.probability > b.probability; });
  return table;
}

struct AnnualTransitions {
  std::vector<std::size_t> codes;   // Dirac modalities, ascending
  std::vector<std::string> labels;
  std::vector<double> mass;         // K x K, triple table summed over the third element
  std::vector<double> probs;        // K x K, rows of `mass` normalised (zero rows stay zero)

  double prob(std::size_t a, std::size_t b) const { return probs[a * codes.size() + b]; }
};

inline AnnualTransitions annual_transitions(const SuccessionTable& triples) {
  AnnualTransitions at;
  std::map<std::size_t, std::string> names;
  for (const auto& e : triples.entries)
    for (std::size_t x = 0; x < 3; ++x) names.emplace(e.codes[x], e.labels[x]);
  std::map<std::size_t, std::size_t> index;
  for (const auto& [code, label] : names) {
    index[code] = at.codes.size();
    at.codes.push_back(code);
    at.labels.push_back(label);
  }
  const std::size_t k = at.codes.size();
  at.mass.assign(k * k, 0.0);
  for (const auto& e : triples.entries) at.mass[index[e.codes[0]] * k + index[e.codes[1]]] += e.probability;
  at.probs = at.mass;
  for (std::size_t a = 0; a < k; ++a) {
    double s = 0.0;
    for (std::size_t b = 0; b < k; ++b) s += at.mass[a * k + b];
    if (s > 0.0)
      for (std::size_t b = 0; b < k; ++b) at.probs[a * k + b] /= s;
  }
  return at;
}

inline AnnualTransitions annual_transitions(const Hmm2Model& model, const Corpus& corpus,
                                            const std::vector<std::string>& labels = {}, std::size_t threads = 0) {
  return annual_transitions(triple_probabilities(model, corpus, labels, threads));
}

inline void write_succession_csv(std::ostream& out, const SuccessionTable& t) {
  out << "rank,cat1,cat2,cat3,probability\n";
  for (std::size_t r = 0; r < t.entries.size(); ++r) {
    const auto& e = t.entries[r];
    out << r + 1 << ',' << e.labels[0] << ',' << e.labels[1] << ',' << e.labels[2] << ','
        << format_double(e.probability) << '\n';
  }
}

inline void write_succession_text(std::ostream& out, const SuccessionTable& t, std::size_t top = 0) {
  std::size_t width = 6;
  for (const auto& e : t.entries) width = std::max(width, e.joined().size());
  if (!t.period.empty()) out << "period: " << t.period << '\n';
  const std::size_t shown = top ? std::min(top, t.entries.size()) : t.entries.size();
  for (std::size_t r = 0; r < shown; ++r) {
    const auto& e = t.entries[r];
    const std::string rank = std::to_string(r + 1);
    out << std::string(4 - std::min<std::size_t>(4, rank.size()), ' ') << rank << "  " << e.joined()
        << std::string(width - e.joined().size() + 2, ' ') << format_fixed(e.probability, 3) << '\n';
  }
}

inline void write_transitions_csv(std::ostream& out, const AnnualTransitions& at) {
  out << "from,to,probability\n";
  const std::size_t k = at.codes.size();
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      out << at.labels[a] << ',' << at.labels[b] << ',' << format_double(at.probs[a * k + b]) << '\n';
}

inline void write_distribution_csv(std::ostream& out, const std::vector<StateDistribution>& d) {
  out << "state,occupancy_share,rank,category,probability\n";
  for (const auto& s : d)
    for (std::size_t r = 0; r < s.categories.size(); ++r)
      out << s.state << ',' << format_double(s.occupancy_share) << ',' << r + 1 << ',' << s.categories[r].label << ','
          << format_double(s.categories[r].probability) << '\n';
}

}  // namespace hmm2
