// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "hmm2/hmm2.hpp"
#include "hmm2/oracle.hpp"

using namespace hmm2;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Sequence random_sequence(std::size_t len, std::size_t m, std::mt19937_64& gen) {
  Sequence s(len);
  for (auto& o : s) o = gen() % 7 == 0 ? kMissing : Code(gen() % m);
  return s;
}

bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(1.0, std::abs(b)); }

// 1. Forward-backward against exhaustive path enumeration.
Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2024);
  std::size_t cases = 0, bad = 0;
  double worst = 0.0;
  for (std::size_t n = 1; n <= 4; ++n)
    for (std::size_t len = 1; len <= 8; ++len)
      for (int rep = 0; rep < 20; ++rep) {
        const std::size_t m = 2 + gen() % 3;
        const auto spec = gen() % 3 == 0 ? TopologySpec::left_right(n, m) : TopologySpec::ergodic(n, m);
        const auto model = random_model(spec, gen);
        const auto seq = random_sequence(len, m, gen);
        const auto ps = posteriors(model, seq);
        const auto bf = oracle::brute_force_posteriors(model, seq);
        bool ok = close_rel(ps.loglik, bf.loglik, 1e-10) && ps.gamma.size() == bf.gamma.size() &&
                  ps.eta.size() == bf.eta.size();
        worst = std::max(worst, std::abs(ps.loglik - bf.loglik) / std::max(1.0, std::abs(bf.loglik)));
        for (std::size_t x = 0; ok && x < ps.gamma.size(); ++x) ok = close_rel(ps.gamma[x], bf.gamma[x], 1e-10);
        for (std::size_t x = 0; ok && x < ps.eta.size(); ++x) ok = close_rel(ps.eta[x], bf.eta[x], 1e-10);
        ++cases;
        bad += ok ? 0 : 1;
      }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 10.0, std::to_string(cases - bad) + "/" + std::to_string(cases) +
                                       " cases match, worst loglik rel err " + fmt("%.2e", worst) + ", " +
                                       fmt("%.2f", secs) + " s"};
}

// 2. EM never lowers the corpus likelihood.
Outcome em_monotonicity() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(7);
  const auto truth = random_model(TopologySpec::ergodic(3, 5), gen);
  Corpus corpus;
  for (int s = 0; s < 50; ++s) corpus.push_back(sample_sequence(truth, 100, gen).observations);
  double worst_drop = 0.0;
  for (int init = 0; init < 10; ++init) {
    auto model = random_model(TopologySpec::ergodic(3, 5), gen);
    double prev = -INFINITY;
    for (int it = 0; it < 50; ++it) {
      auto r = em_step(model, corpus);
      worst_drop = std::max(worst_drop, prev - r.loglik);
      prev = r.loglik;
      model = std::move(r.model);
    }
  }
  const double secs = seconds_since(t0);
  return {worst_drop <= 1e-9 && secs < 30.0,
          "largest decrease " + fmt("%.2e", std::max(0.0, worst_drop)) + ", " + fmt("%.2f", secs) + " s"};
}

Hmm2Model left_right_truth(double stay) {
  Hmm2Model m = build_model(TopologySpec::left_right(3, 6), 0);
  m.pi = {1.0, 0.0, 0.0};
  // Stay with probability `stay`, otherwise advance; the last period absorbs.
  const auto next = [stay](std::size_t j, std::size_t k) {
    const double s = j == 2 ? 1.0 : stay;
    return k == j ? s : k == j + 1 ? 1.0 - s : 0.0;
  };
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      m.a2[m.idx2(i, j)] = next(i, j);
      for (std::size_t k = 0; k < 3; ++k) m.a3[m.idx3(i, j, k)] = m.allowed(i, j, k) ? next(j, k) : 0.0;
    }
  m.emissions = {CategoricalPdf({0.6, 0.2, 0.05, 0.05, 0.05, 0.05}), CategoricalPdf({0.05, 0.05, 0.6, 0.2, 0.05, 0.05}),
                 CategoricalPdf({0.05, 0.05, 0.05, 0.05, 0.6, 0.2})};
  return m;
}

double period_accuracy(const Hmm2Model& init, const Corpus& corpus, const std::vector<std::vector<std::size_t>>& states,
                       const TrainConfig& cfg) {
  const auto model = train(init, corpus, cfg).model;
  std::vector<std::size_t> truth, predicted;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto c = classify(posteriors(model, corpus[s]));
    truth.insert(truth.end(), states[s].begin(), states[s].end());
    predicted.insert(predicted.end(), c.begin(), c.end());
  }
  return aligned_accuracy(truth, predicted, 3);
}

// 3. Ordered periods recovered by a left-right model.
Outcome planted_temporal() {
  const auto t0 = Clock::now();
  const auto truth = left_right_truth(0.985);
  double tv = 1.0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) tv = std::min(tv, total_variation(truth.emissions[a], truth.emissions[b]));
  std::mt19937_64 gen(300);
  Corpus corpus;
  std::vector<std::vector<std::size_t>> states;
  for (int s = 0; s < 100; ++s) {
    auto x = sample_sequence(truth, 200, gen);
    corpus.push_back(std::move(x.observations));
    states.push_back(std::move(x.states));
  }
  TrainConfig cfg;
  cfg.seed = 3;
  const auto start = build_model(TopologySpec::left_right(3, 6), cfg.seed);
  const double acc = period_accuracy(segmental_init(start, corpus, cfg.emission_floor), corpus, states, cfg);
  const double flat = period_accuracy(start, corpus, states, cfg);
  const double secs = seconds_since(t0);
  return {tv >= 0.5 && acc >= 0.95 && secs < 30.0,
          "min TV " + fmt("%.2f", tv) + ", accuracy " + fmt("%.4f", acc) + " from segmental start (" +
              fmt("%.4f", flat) + " from the equiprobable start), " + fmt("%.2f", secs) + " s"};
}

bool unit_steps(const SiteOrdering& o) {
  for (std::size_t i = 1; i < o.order.size(); ++i)
    if (manhattan(o.order[i - 1], o.order[i]) != 1) return false;
  return true;
}

bool bijective(const SiteOrdering& o) {
  std::vector<char> seen(o.width * o.height, 0);
  if (o.order.size() != seen.size()) return false;
  for (const auto& c : o.order) {
    if (c.x >= o.width || c.y >= o.height || seen[c.y * o.width + c.x]) return false;
    seen[c.y * o.width + c.x] = 1;
  }
  return true;
}

// 4. Space-filling orderings.
Outcome hilbert_properties() {
  const auto t0 = Clock::now();
  bool ok = true;
  for (unsigned k = 0; k <= 7; ++k) {
    const auto h = hilbert_curve(k);
    ok = ok && bijective(h) && unit_steps(h);
  }
  const auto s = serpentine_grid(6, 6);
  ok = ok && bijective(s) && unit_steps(s);
  const auto two = compose_two_level(hilbert_curve(5), serpentine_grid(6, 6));
  ok = ok && bijective(two) && two.order.size() == 36864;
  const double secs = seconds_since(t0);
  return {ok && secs < 5.0, std::string(ok ? "all orderings valid" : "ordering property violated") + ", " +
                                fmt("%.2f", secs) + " s"};
}

// 5. Four regions of a 64x64 image along the Hilbert curve.
Outcome planted_spatial() {
  const auto t0 = Clock::now();
  constexpr std::size_t w = 64;
  const double cx[4] = {14, 50, 20, 46}, cy[4] = {12, 16, 50, 44};
  std::vector<std::size_t> region(w * w);
  for (std::size_t y = 0; y < w; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double best = INFINITY;
      for (std::size_t r = 0; r < 4; ++r) {
        const double d = (double(x) - cx[r]) * (double(x) - cx[r]) + (double(y) - cy[r]) * (double(y) - cy[r]);
        if (d < best) best = d, region[y * w + x] = r;
      }
    }
  // Region r emits code r with probability 0.7, each other code with 0.1.
  std::vector<CategoricalPdf> pdf;
  for (std::size_t r = 0; r < 4; ++r) {
    std::vector<double> p(4, 0.1);
    p[r] = 0.7;
    pdf.emplace_back(p);
  }
  const auto ordering = hilbert_curve(6);
  int good = 0;
  std::string accs;
  for (int run = 0; run < 10; ++run) {
    std::mt19937_64 gen(500 + run);
    Sequence seq;
    std::vector<std::size_t> truth;
    for (const auto& c : ordering.order) {
      const std::size_t r = region[c.y * w + c.x];
      truth.push_back(r);
      seq.push_back(Code(sample_index(pdf[r].probs, gen)));
    }
    TrainConfig cfg;
    cfg.seed = std::uint64_t(run);
    // Escaping the symmetric start crosses long plateaus; a loose tolerance stops on them.
    cfg.max_iters = 5000;
    cfg.rel_tol = 1e-10;
    const auto model = train(build_model(TopologySpec::ergodic(4, 4), cfg.seed), Corpus{seq}, cfg).model;
    const double acc = aligned_accuracy(truth, classify(posteriors(model, seq)), 4);
    good += acc >= 0.9 ? 1 : 0;
    accs += (accs.empty() ? "" : " ") + fmt("%.3f", acc);
  }
  const double secs = seconds_since(t0);
  return {good >= 8 && secs < 120.0,
          std::to_string(good) + "/10 runs >= 0.90 [" + accs + "], " + fmt("%.2f", secs) + " s"};
}

Hmm2Model sub_model(std::vector<double> a, std::vector<double> b) {
  Hmm2Model m = build_model(TopologySpec::ergodic(2, a.size()), 0);
  m.pi = {0.5, 0.5};
  m.a2 = {0.8, 0.2, 0.3, 0.7};
  m.a3 = {0.85, 0.15, 0.4, 0.6, 0.5, 0.5, 0.1, 0.9};
  m.emissions = {CategoricalPdf(std::move(a)), CategoricalPdf(std::move(b))};
  return m;
}

// 6. Master over sub-models against two-level enumeration.
Outcome hierarchical_oracle() {
  std::mt19937_64 gen(66);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto master = random_model(TopologySpec::ergodic(2, 1), gen);
    MasterModel mm;
    mm.master = master;
    mm.subs = {random_model(TopologySpec::ergodic(2, 3), gen), random_model(TopologySpec::ergodic(2, 3), gen)};
    Corpus vectors;
    for (int p = 0; p < 4; ++p) {
      Sequence v(3);
      for (auto& o : v) o = Code(gen() % 3);
      vectors.push_back(v);
    }
    const auto ps = hierarchical_posteriors(mm, vectors);
    const auto bf = oracle::brute_force_hierarchical(mm.master, mm.subs, vectors);
    worst = std::max(worst, std::abs(ps.loglik - bf.loglik) / std::abs(bf.loglik));
    for (std::size_t x = 0; x < ps.gamma.size(); ++x)
      worst = std::max(worst, std::abs(ps.gamma[x] - bf.gamma[x]) / std::max(std::abs(bf.gamma[x]), 1e-300));
  }
  return {worst <= 1e-8, "worst relative error " + fmt("%.2e", worst)};
}

// 7. Two regions of sites, each with its own temporal sub-model.
Outcome planted_spatiotemporal() {
  const auto t0 = Clock::now();
  const auto sub_a = sub_model({0.5, 0.35, 0.1, 0.05}, {0.35, 0.5, 0.05, 0.1});
  const auto sub_b = sub_model({0.05, 0.1, 0.5, 0.35}, {0.1, 0.05, 0.35, 0.5});
  const auto ordering = hilbert_curve(5);
  int good = 0;
  std::string accs;
  for (int run = 0; run < 10; ++run) {
    std::mt19937_64 gen(700 + run);
    DataMatrix raster;
    std::vector<std::size_t> region;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        const double dx = double(x) - 12.0, dy = double(y) - 18.0;
        region.push_back(dx * dx + dy * dy < 90.0 ? 1 : 0);
        raster.site_ids.push_back(std::to_string(raster.site_ids.size()));
        const auto obs = sample_sequence(region.back() ? sub_b : sub_a, 10, gen).observations;
        raster.cells.insert(raster.cells.end(), obs.begin(), obs.end());
      }
    for (int t = 0; t < 10; ++t) raster.slot_labels.push_back(std::to_string(t));
    for (int c = 0; c < 4; ++c) raster.codebook.add("c" + std::to_string(c));
    const auto data = apply_ordering(raster, ordering);
    std::vector<std::size_t> truth;
    for (const auto& c : ordering.order) truth.push_back(region[c.y * 32 + c.x]);
    TrainConfig cfg;
    cfg.seed = std::uint64_t(run);
    const auto rep = hierarchical_train(build_master(2, 2, 4, HierMode::SpatialMaster, cfg.seed), data, cfg);
    const double acc = aligned_accuracy(truth, segment_spatiotemporal(rep.model, data, true).labels, 2);
    good += acc >= 0.85 ? 1 : 0;
    accs += (accs.empty() ? "" : " ") + fmt("%.3f", acc);
  }
  const double secs = seconds_since(t0);
  return {good >= 8 && secs < 300.0,
          std::to_string(good) + "/10 runs >= 0.85 [" + accs + "], " + fmt("%.2f", secs) + " s"};
}

// 8. Wheat/beet rotation through Dirac states.
Outcome succession_mining() {
  const std::vector<std::string> labels{"wheat", "beet", "maize", "fallow"};
  std::mt19937_64 gen(88);
  Corpus corpus;
  for (int f = 0; f < 200; ++f) {
    Sequence s;
    for (int y = 0; y < 15; ++y) s.push_back(detail::unit_uniform(gen) < 0.9 ? Code(y % 2) : Code(2 + gen() % 2));
    corpus.push_back(std::move(s));
  }
  auto spec = TopologySpec::ergodic(3, 4);
  spec.kinds = {StateKind::dirac(0), StateKind::dirac(1), StateKind::container()};
  TrainConfig cfg;
  cfg.seed = 8;
  const auto model = train(build_model(spec, cfg.seed), corpus, cfg).model;
  const auto table = triple_probabilities(model, corpus, labels);
  const auto counts = oracle::count_trigrams(corpus);
  const auto it = counts.find({0, 1, 0});
  const double expected = it == counts.end() ? 0.0 : it->second;
  const auto& top = table.entries.front();
  const bool ok = top.codes == std::array<std::size_t, 3>{0, 1, 0} && std::abs(top.probability - expected) <= 0.02;
  return {ok, "top " + top.joined() + " " + fmt("%.4f", top.probability) + ", counting oracle " +
                  fmt("%.4f", expected)};
}

// 9. Merging four states down to the two planted ones.
Outcome merge_and_retrain() {
  const auto t0 = Clock::now();
  Hmm2Model truth = build_model(TopologySpec::ergodic(2, 6), 0);
  truth.pi = {0.5, 0.5};
  truth.a2 = {0.98, 0.02, 0.02, 0.98};
  truth.a3 = {0.98, 0.02, 0.02, 0.98, 0.98, 0.02, 0.02, 0.98};
  truth.emissions = {CategoricalPdf({0.5, 0.3, 0.2, 0.0, 0.0, 0.0}), CategoricalPdf({0.0, 0.0, 0.0, 0.2, 0.3, 0.5})};
  int good = 0;
  std::string finals;
  for (int run = 0; run < 10; ++run) {
    std::mt19937_64 gen(1000 + run);
    Corpus corpus;
    for (int s = 0; s < 200; ++s) corpus.push_back(sample_sequence(truth, 200, gen).observations);
    TrainConfig cfg;
    cfg.seed = std::uint64_t(run);
    cfg.merge_threshold = 0.1;
    const auto rep = train_with_merging(TopologySpec::ergodic(4, 6), corpus, cfg);
    good += (rep.model.n_states - rep.model.dirac_count()) == 2 ? 1 : 0;
    finals += std::to_string((rep.model.n_states - rep.model.dirac_count()));
  }
  return {good >= 8, std::to_string(good) + "/10 runs end with 2 containers [" + finals + "], " +
                         fmt("%.2f", seconds_since(t0)) + " s"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" HMM2_CLI_PATH "\" " + args + " --quiet > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 10. Every command twice with identical inputs.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("hmm2_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::mt19937_64 gen(10);
  {
    std::ofstream out(dir / "data.csv");
    out << "site_id";
    for (int y = 0; y < 10; ++y) out << ",y" << y;
    out << '\n';
    const char* names[] = {"wheat", "beet", "maize", "fallow"};
    for (int s = 0; s < 64; ++s) {
      out << 's' << s;
      for (int y = 0; y < 10; ++y) out << ',' << names[gen() % 10 < 8 ? y % 2 : 2 + gen() % 2];
      out << '\n';
    }
    std::ofstream(dir / "hier.json")
        << R"({"super_states":2,"sub_states":2,"mode":"spatial","grid":{"outer_k":1,"inner_w":4,"inner_h":4}})";
  }
  const std::string data = " --data \"" + (dir / "data.csv").string() + "\"";
  const auto out = [&](const std::string& name) { return " --out-dir \"" + (dir / name).string() + "\""; };
  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "train" + data + " --states 3 --seed 4 --threads 2"},
      {"train_dirac", "train" + data + " --dirac wheat,beet --states 1 --seed 4 --threads 2"},
      {"train_merge", "train" + data + " --states 4 --merge --seed 4 --threads 2"},
      {"hier", "hier" + data + " --config \"" + (dir / "hier.json").string() + "\" --seed 4 --threads 2"},
      {"curve", "curve-export --outer-k 2 --inner-w 3 --inner-h 3"},
  };
  bool ok = true;
  std::size_t files = 0;
  std::string detail;
  const auto compare = [&](const std::string& a, const std::string& b) {
    for (const auto& e : fs::directory_iterator(dir / a)) {
      ++files;
      if (slurp(e.path()) != slurp(dir / b / e.path().filename())) {
        ok = false;
        detail += " " + a + "/" + e.path().filename().string() + " differs;";
      }
    }
  };
  for (const auto& [name, args] : commands) {
    for (const char* suffix : {"_1", "_2"})
      if (run_cli(args + out(name + suffix)) != 0) {
        ok = false;
        detail += " " + name + " failed;";
      }
    compare(name + "_1", name + "_2");
  }
  const std::string model = " --model \"" + (dir / "train_1" / "model.json").string() + "\"";
  const std::string dirac = " --model \"" + (dir / "train_dirac_1" / "model.json").string() + "\"";
  const std::vector<std::pair<std::string, std::string>> followups{
      {"segment", "segment" + model + data + " --temporal --threads 2"},
      {"rotations", "rotations" + dirac + data + " --threads 2"},
  };
  for (const auto& [name, args] : followups) {
    for (const char* suffix : {"_1", "_2"})
      if (run_cli(args + out(name + suffix)) != 0) {
        ok = false;
        detail += " " + name + " failed;";
      }
    compare(name + "_1", name + "_2");
  }
  fs::remove_all(dir);
  return {ok && files > 0, std::to_string(files) + " files compared" + (detail.empty() ? "" : ":" + detail)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle equivalence (inference)", oracle_equivalence},
      {"EM monotonicity", em_monotonicity},
      {"planted temporal segmentation", planted_temporal},
      {"Hilbert and serpentine orderings", hilbert_properties},
      {"planted spatial segmentation", planted_spatial},
      {"hierarchical toy oracle", hierarchical_oracle},
      {"planted spatio-temporal recovery", planted_spatiotemporal},
      {"succession mining", succession_mining},
      {"merge-and-retrain", merge_and_retrain},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c + 1 << " " << criteria[c].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - std::size_t(failed)) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
