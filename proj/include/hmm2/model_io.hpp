#pragma once

// JSON (de)serialisation of Hmm2Model.
//
//   { "n_states": N, "alphabet_size": M,
//     "pi": [N], "a2": [N*N row-major], "a3": [N*N*N, i-major then j],
//     "emissions": [[M] x N],
//     "kinds": [{"type": "container"} | {"type": "dirac", "modality": c}],
//     "mask": [N*N*N of 0/1]        (omitted when every transition is allowed)
//     "labels": ["wheat", ...]      (optional codebook, not part of the model) }
//
// Doubles are written with round-trip precision (17 significant digits).

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmm2/error.hpp"
#include "hmm2/model.hpp"

namespace hmm2 {

using Json = nlohmann::json;

inline Json model_to_json(const Hmm2Model& model, const std::vector<std::string>* labels = nullptr) {
  Json j;
  j["n_states"] = model.n_states;
  j["alphabet_size"] = model.alphabet_size;
  j["pi"] = model.pi;
  j["a2"] = model.a2;
  j["a3"] = model.a3;
  Json em = Json::array();
  for (const auto& e : model.emissions) em.push_back(e.probs);
  j["emissions"] = std::move(em);
  Json kinds = Json::array();
  for (const auto& k : model.kinds) {
    if (k.is_dirac())
      kinds.push_back({{"type", "dirac"}, {"modality", k.modality}});
    else
      kinds.push_back({{"type", "container"}});
  }
  j["kinds"] = std::move(kinds);
  bool all_allowed = true;
  for (auto v : model.mask) all_allowed = all_allowed && v;
  if (!all_allowed) {
    std::vector<int> mask(model.mask.begin(), model.mask.end());
    j["mask"] = mask;
  }
  if (labels) j["labels"] = *labels;
  return j;
}

/// Structural parse; does not run `validate`.
inline Hmm2Model model_from_json(const Json& j) {
  try {
    Hmm2Model m;
    m.n_states = j.at("n_states").get<std::size_t>();
    m.alphabet_size = j.at("alphabet_size").get<std::size_t>();
    const std::size_t n = m.n_states;
    m.pi = j.at("pi").get<std::vector<double>>();
    m.a2 = j.at("a2").get<std::vector<double>>();
    m.a3 = j.at("a3").get<std::vector<double>>();
    for (const auto& e : j.at("emissions")) m.emissions.emplace_back(e.get<std::vector<double>>());
    if (j.contains("kinds")) {
      for (const auto& k : j.at("kinds")) {
        const auto type = k.at("type").get<std::string>();
        if (type == "dirac")
          m.kinds.push_back(StateKind::dirac(k.at("modality").get<std::size_t>()));
        else if (type == "container")
          m.kinds.push_back(StateKind::container());
        else
          throw Error("unknown state kind '" + type + "'");
      }
    } else {
      m.kinds.assign(n, StateKind::container());
    }
    if (j.contains("mask")) {
      for (const auto& v : j.at("mask")) m.mask.push_back(v.get<int>() ? 1 : 0);
    } else {
      m.mask.assign(n * n * n, 1);
    }
    if (m.pi.size() != n || m.a2.size() != n * n || m.a3.size() != n * n * n || m.emissions.size() != n ||
        m.kinds.size() != n || m.mask.size() != n * n * n)
      throw Error("model arrays do not match n_states=" + std::to_string(n));
    return m;
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed model document: ") + e.what());
  }
}

inline std::optional<std::vector<std::string>> labels_from_json(const Json& j) {
  if (!j.contains("labels")) return std::nullopt;
  return j.at("labels").get<std::vector<std::string>>();
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed for " + path);
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline Hmm2Model load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

inline void save_model(const std::string& path, const Hmm2Model& model,
                       const std::vector<std::string>* labels = nullptr) {
  write_text_file(path, dump_json(model_to_json(model, labels)));
}

}  // namespace hmm2
