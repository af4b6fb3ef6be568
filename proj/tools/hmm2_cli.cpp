// hmm2: train, apply and mine second-order HMMs on categorical site x time grids.
//
// Exit codes: 0 success, 1 data/model error, 2 missing input file, 64 usage error.
// Every command that writes files also writes run_manifest.json to --out-dir.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "hmm2/hmm2.hpp"

namespace fs = std::filesystem;
using namespace hmm2;

namespace {

constexpr int kExitError = 1;
constexpr int kExitMissing = 2;
constexpr int kExitUsage = 64;

struct MissingInput : Error {
  using Error::Error;
};

struct UsageError : Error {
  using Error::Error;
};

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[std::size_t(i)] = digits[v & 0xf];
  return s;
}

/// State shared by every command: resolved options, hashed inputs, written outputs.
struct Run {
  std::string command;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool quiet = false;
  Json config = Json::object();
  Json inputs = Json::object();
  Json outputs = Json::object();

  std::string input(const std::string& path) {
    if (!fs::is_regular_file(path)) throw MissingInput("input file not found: " + path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInput("cannot open input file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    inputs[path] = {{"fnv1a64", hex64(fnv1a64(text))}, {"bytes", text.size()}};
    return text;
  }

  Json input_json(const std::string& path) {
    const std::string text = input(path);
    try {
      return Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ParseError(path + ": " + e.what());
    }
  }

  void begin() {
    if (out_dir.empty()) throw UsageError("--out-dir is required");
    fs::create_directories(out_dir);
  }

  void write(const std::string& name, const std::string& text) {
    write_text_file((fs::path(out_dir) / name).string(), text);
    outputs[name] = {{"fnv1a64", hex64(fnv1a64(text))}, {"bytes", text.size()}};
  }

  void finish() {
    Json m;
    m["command"] = command;
    m["config"] = config;
    m["inputs"] = inputs;
    m["seed"] = seed;
    m["threads"] = threads;
    m["tool_version"] = HMM2_VERSION;
    m["outputs"] = outputs;
    write_text_file((fs::path(out_dir) / "run_manifest.json").string(), dump_json(m));
  }

  ProgressFn progress(const std::string& tag) const {
    if (quiet) return {};
    return [tag](std::size_t iter, double ll, double delta) {
      std::cerr << '[' << tag << "] iter " << iter << " loglik " << format_double(ll) << " delta "
                << format_double(delta) << '\n';
    };
  }
};

struct GridFlags {
  CLI::Option* outer_opt = nullptr;
  CLI::Option* inner_w_opt = nullptr;
  CLI::Option* inner_h_opt = nullptr;
  unsigned outer_k = 0;
  std::size_t inner_w = 1;
  std::size_t inner_h = 1;

  void add(CLI::App* app) {
    outer_opt = app->add_option("--outer-k", outer_k, "Hilbert order of the outer grid (2^k x 2^k blocks)");
    inner_w_opt = app->add_option("--inner-w", inner_w, "width of each serpentine inner block");
    inner_h_opt = app->add_option("--inner-h", inner_h, "height of each serpentine inner block");
  }

  bool given() const { return outer_opt->count() || inner_w_opt->count() || inner_h_opt->count(); }

  SiteOrdering ordering() const { return compose_two_level(hilbert_curve(outer_k), serpentine_grid(inner_w, inner_h)); }

  Json to_json() const { return {{"outer_k", outer_k}, {"inner_w", inner_w}, {"inner_h", inner_h}}; }
};

struct TrainFlags {
  TrainConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--max-iters", cfg.max_iters, "maximum EM iterations")->capture_default_str();
    app->add_option("--rel-tol", cfg.rel_tol, "relative log-likelihood tolerance")->capture_default_str();
    app->add_option("--emission-floor", cfg.emission_floor, "lower bound on container emissions")
        ->capture_default_str();
  }

  Json to_json() const {
    return {{"max_iters", cfg.max_iters},
            {"rel_tol", cfg.rel_tol},
            {"emission_floor", cfg.emission_floor},
            {"merge_threshold", cfg.merge_threshold}};
  }
};

struct DataFlags {
  std::string data;
  std::string codebook;

  void add(CLI::App* app) {
    app->add_option("--data", data, "site x slot CSV")->required();
    app->add_option("--codebook", codebook, "code,label CSV fixing the modality codes");
  }

  DataMatrix load(Run& run, const std::optional<std::vector<std::string>>& model_labels = std::nullopt) const {
    CodebookPolicy policy;
    if (!codebook.empty()) {
      std::istringstream in(run.input(codebook));
      try {
        policy.codebook = load_codebook(in);
      } catch (const ParseError& e) {
        throw ParseError(codebook + ": " + e.what());
      }
    } else if (model_labels) {
      policy.codebook = Codebook(*model_labels);
    }
    std::istringstream in(run.input(data));
    try {
      return load_matrix(in, policy);
    } catch (const ParseError& e) {
      throw ParseError(data + ": " + e.what());
    }
  }
};

void add_common(CLI::App* app, Run& run, bool writes_files = true) {
  app->add_option("--seed", run.seed, "random seed (HMM2_SEED overrides)")->capture_default_str();
  app->add_option("--threads", run.threads, "worker threads (0 = all cores)")->capture_default_str();
  app->add_flag("--quiet", run.quiet, "suppress per-iteration progress");
  if (writes_files) app->add_option("--out-dir", run.out_dir, "output directory")->required();
}

void apply_seed_override(Run& run) {
  const char* env = std::getenv("HMM2_SEED");
  if (!env) return;
  const std::string s(env);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw UsageError("HMM2_SEED is not an unsigned integer: " + s);
  run.seed = v;
}

Hmm2Model load_valid_model(Run& run, const std::string& path, std::optional<std::vector<std::string>>& labels) {
  const Json j = run.input_json(path);
  Hmm2Model model;
  try {
    model = model_from_json(j);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
  labels = labels_from_json(j);
  const auto violations = validate(model);
  if (!violations.empty()) throw Error(path + ": invalid model: " + to_string(violations.front()));
  return model;
}

void check_alphabet(const Hmm2Model& model, const DataMatrix& data) {
  if (data.alphabet_size() > model.alphabet_size)
    throw Error("data uses " + std::to_string(data.alphabet_size()) + " modalities but the model has " +
                std::to_string(model.alphabet_size));
}

std::string labels_csv_header(bool spatial) { return spatial ? "slot,index,x,y,label\n" : "site_id,t,label\n"; }

// ---------------------------------------------------------------- train

struct TrainCmd {
  DataFlags data;
  TrainFlags train;
  GridFlags grid;
  std::size_t states = 0;
  std::string shape = "ergodic";
  std::string topology_file;
  std::size_t periods = 0;
  std::vector<std::string> dirac;
  bool merge = false;
  std::string init = "uniform";
  bool spatial = false;
  bool temporal = false;

  void add(CLI::App* app) {
    data.add(app);
    train.add(app);
    grid.add(app);
    app->add_option("--states", states, "number of container states");
    app->add_option("--topology", shape, "ergodic or left-right")
        ->check(CLI::IsMember({"ergodic", "left-right"}))
        ->capture_default_str();
    app->add_option("--topology-file", topology_file, "JSON topology (shape, n_states, kinds, mask)");
    app->add_option("--periods", periods, "period columns of one container plus the Dirac states each");
    app->add_option("--dirac", dirac, "modality labels that get a Dirac state")->delimiter(',');
    app->add_flag("--merge", merge, "merge close container states and retrain");
    app->add_option("--init", init, "uniform start, or segmental: container emissions from equal sequence segments")
        ->check(CLI::IsMember({"uniform", "segmental"}))
        ->capture_default_str();
    app->add_option("--merge-threshold", train.cfg.merge_threshold, "Jeffreys divergence below which states merge")
        ->capture_default_str();
    auto* sp = app->add_flag("--spatial", spatial, "sequences are the grid-ordered columns");
    app->add_flag("--temporal", temporal, "sequences are the rows (default)")->excludes(sp);
  }

  std::vector<std::size_t> dirac_codes(const DataMatrix& m) const {
    std::vector<std::size_t> out;
    for (const auto& label : dirac) {
      auto c = m.codebook.find(label);
      if (!c) throw Error("Dirac label '" + label + "' is not in the codebook");
      out.push_back(static_cast<std::size_t>(*c));
    }
    return out;
  }

  TopologySpec topology(Run& run, const DataMatrix& m) const {
    const std::size_t alphabet = m.alphabet_size();
    if (!topology_file.empty()) {
      const Json j = run.input_json(topology_file);
      try {
        const auto s = j.at("shape").get<std::string>();
        TopologySpec spec;
        spec.shape = s == "ergodic" ? Shape::Ergodic : s == "left-right" ? Shape::LeftRight : Shape::Custom;
        if (s != "ergodic" && s != "left-right" && s != "custom") throw Error("unknown shape '" + s + "'");
        spec.n_states = j.at("n_states").get<std::size_t>();
        spec.alphabet_size = alphabet;
        if (j.contains("kinds"))
          for (const auto& k : j.at("kinds")) {
            if (k.is_string() && k.get<std::string>() == "container") {
              spec.kinds.push_back(StateKind::container());
            } else if (k.is_object() && k.contains("dirac")) {
              auto c = m.codebook.find(k.at("dirac").get<std::string>());
              if (!c) throw Error("Dirac label '" + k.at("dirac").get<std::string>() + "' is not in the codebook");
              spec.kinds.push_back(StateKind::dirac(static_cast<std::size_t>(*c)));
            } else {
              throw Error("state kinds are \"container\" or {\"dirac\": label}");
            }
          }
        if (j.contains("mask")) spec.custom_mask = j.at("mask").get<std::vector<std::uint8_t>>();
        return spec;
      } catch (const Json::exception& e) {
        throw Error(topology_file + ": " + e.what());
      }
    }
    const auto codes = dirac_codes(m);
    if (periods) return period_dirac_topology(periods, codes, alphabet);
    if (states == 0 && codes.empty()) throw UsageError("train needs --states, --periods or --topology-file");
    TopologySpec spec = shape == "left-right" ? TopologySpec::left_right(codes.size() + states, alphabet)
                                              : TopologySpec::ergodic(codes.size() + states, alphabet);
    for (auto c : codes) spec.kinds.push_back(StateKind::dirac(c));
    spec.kinds.resize(spec.n_states, StateKind::container());
    return spec;
  }

  void run(Run& r) {
    if (spatial && !grid.given()) throw UsageError("--spatial needs grid flags (--outer-k, --inner-w, --inner-h)");
    if (merge && init == "segmental") throw UsageError("--init segmental cannot be combined with --merge");
    r.begin();
    train.cfg.seed = r.seed;
    train.cfg.threads = r.threads;
    const DataMatrix m = data.load(r);
    const Corpus corpus = spatial ? columns_as_sequences(apply_ordering(m, grid.ordering())) : rows_as_sequences(m);
    const TopologySpec spec = topology(r, m);

    r.config = {{"data", data.data},       {"codebook", data.codebook}, {"states", states},
                {"topology", shape},       {"topology_file", topology_file},
                {"periods", periods},      {"dirac", dirac},            {"merge", merge},
                {"init", init},            {"spatial", spatial},      {"train", train.to_json()}};
    if (spatial) r.config["grid"] = grid.to_json();

    Hmm2Model start = build_model(spec, r.seed);
    if (init == "segmental") start = segmental_init(std::move(start), corpus, train.cfg.emission_floor);
    const TrainReport rep = merge ? train_with_merging(spec, corpus, train.cfg, r.progress("train"))
                                  : hmm2::train(start, corpus, train.cfg, r.progress("train"));
    const auto& labels = m.codebook.labels();
    r.write("model.json", dump_json(model_to_json(rep.model, &labels)));
    r.write("train_report.json", dump_json(report_to_json(rep)));
    std::ostringstream dur;
    write_duration_csv(dur, duration_report(rep.model));
    r.write("durations.csv", dur.str());
    if (!r.quiet)
      std::cerr << "[train] " << rep.model.n_states << " states, final loglik " << format_double(rep.history.back())
                << ", " << rep.merges.size() << " merges\n";
  }
};

// ---------------------------------------------------------------- segment

struct SegmentCmd {
  std::string model_path;
  DataFlags data;
  GridFlags grid;
  bool spatial = false;
  bool temporal = false;

  void add(CLI::App* app) {
    app->add_option("--model", model_path, "model JSON")->required();
    data.add(app);
    grid.add(app);
    auto* sp = app->add_flag("--spatial", spatial, "classify each slot's grid-ordered image");
    app->add_flag("--temporal", temporal, "classify each site's time series")->excludes(sp);
  }

  void run(Run& r) {
    if (!spatial && !temporal) throw UsageError("segment needs --spatial or --temporal");
    if (spatial && !grid.given()) throw UsageError("--spatial needs grid flags (--outer-k, --inner-w, --inner-h)");
    r.begin();
    std::optional<std::vector<std::string>> labels;
    const Hmm2Model model = load_valid_model(r, model_path, labels);
    const DataMatrix raw = data.load(r, labels);
    check_alphabet(model, raw);
    r.config = {{"model", model_path}, {"data", data.data}, {"codebook", data.codebook},
                {"mode", spatial ? "spatial" : "temporal"}};

    std::ostringstream post, lab;
    if (spatial) {
      r.config["grid"] = grid.to_json();
      const DataMatrix m = apply_ordering(raw, grid.ordering());
      const SiteOrdering& ord = m.geometry->ordering;
      const Corpus cols = columns_as_sequences(m);
      post << "slot,t,state,gamma\n";
      lab << labels_csv_header(true);
      for (std::size_t s = 0; s < cols.size(); ++s) {
        PosteriorSet ps;
        try {
          ps = posteriors(model, cols[s]);
        } catch (const ImpossibleObservation& e) {
          throw Error("slot '" + m.slot_labels[s] + "': " + e.what());
        }
        for (std::size_t t = 0; t < ps.steps; ++t)
          for (std::size_t i = 0; i < ps.states; ++i)
            post << m.slot_labels[s] << ',' << t << ',' << i << ',' << format_double(ps.gamma_at(t, i)) << '\n';
        const auto cls = classify(ps);
        for (std::size_t t = 0; t < cls.size(); ++t)
          lab << m.slot_labels[s] << ',' << t << ',' << ord.order[t].x << ',' << ord.order[t].y << ',' << cls[t]
              << '\n';
        const LabelMap map = delinearize(cls, ord);
        char stem[32];
        std::snprintf(stem, sizeof stem, "map_%03zu", s);
        std::ostringstream pgm, csv;
        write_pgm(pgm, map, model.n_states);
        write_map_csv(csv, map);
        r.write(std::string(stem) + ".pgm", pgm.str());
        r.write(std::string(stem) + ".csv", csv.str());
      }
    } else {
      const Corpus rows = rows_as_sequences(raw);
      post << "site_id,t,state,gamma\n";
      lab << labels_csv_header(false);
      LabelMap map;
      for (std::size_t s = 0; s < rows.size(); ++s) {
        PosteriorSet ps;
        try {
          ps = posteriors(model, rows[s]);
        } catch (const ImpossibleObservation& e) {
          throw Error("site '" + raw.site_ids[s] + "': " + e.what());
        }
        for (std::size_t t = 0; t < ps.steps; ++t)
          for (std::size_t i = 0; i < ps.states; ++i)
            post << raw.site_ids[s] << ',' << t << ',' << i << ',' << format_double(ps.gamma_at(t, i)) << '\n';
        const auto cls = classify(ps);
        for (std::size_t t = 0; t < cls.size(); ++t) lab << raw.site_ids[s] << ',' << t << ',' << cls[t] << '\n';
        map.push_back(cls);
      }
      std::ostringstream pgm, csv;
      write_pgm(pgm, map, model.n_states);
      write_map_csv(csv, map);
      r.write("map.pgm", pgm.str());
      r.write("map.csv", csv.str());
    }
    r.write("posteriors.csv", post.str());
    r.write("labels.csv", lab.str());
  }
};

// ---------------------------------------------------------------- hier

struct HierCmd {
  DataFlags data;
  TrainFlags train;
  GridFlags grid;
  std::string config_path;
  std::size_t super_states = 0;
  std::size_t sub_states = 0;
  std::string mode = "spatial";
  bool grid_in_config = false;
  CLI::App* app = nullptr;

  void add(CLI::App* a) {
    app = a;
    data.add(app);
    train.add(app);
    grid.add(app);
    app->add_option("--config", config_path, "JSON run-config; explicit flags take precedence");
    app->add_option("--super-states", super_states, "master states");
    app->add_option("--sub-states", sub_states, "states of each sub-model");
    app->add_option("--mode", mode, "spatial (master over sites) or temporal (master over slots)")
        ->check(CLI::IsMember({"spatial", "temporal"}))
        ->capture_default_str();
  }

  template <typename T>
  void from_config(const Json& j, const char* key, const char* flag, T& value) {
    if (!j.contains(key) || app->get_option(flag)->count()) return;
    value = j.at(key).get<T>();
  }

  void apply_config(Run& r) {
    if (config_path.empty()) return;
    const Json j = r.input_json(config_path);
    try {
      from_config(j, "super_states", "--super-states", super_states);
      from_config(j, "sub_states", "--sub-states", sub_states);
      from_config(j, "mode", "--mode", mode);
      from_config(j, "max_iters", "--max-iters", train.cfg.max_iters);
      from_config(j, "rel_tol", "--rel-tol", train.cfg.rel_tol);
      from_config(j, "emission_floor", "--emission-floor", train.cfg.emission_floor);
      if (j.contains("grid")) {
        grid_in_config = true;
        const Json& g = j.at("grid");
        from_config(g, "outer_k", "--outer-k", grid.outer_k);
        from_config(g, "inner_w", "--inner-w", grid.inner_w);
        from_config(g, "inner_h", "--inner-h", grid.inner_h);
      }
      if (j.contains("seed") && !app->get_option("--seed")->count() && !std::getenv("HMM2_SEED"))
        r.seed = j.at("seed").get<std::uint64_t>();
    } catch (const Json::exception& e) {
      throw Error(config_path + ": " + e.what());
    }
    hier_mode_from_string(mode);
  }

  void run(Run& r) {
    apply_config(r);
    const bool with_grid = grid.given() || grid_in_config;
    const HierMode hm = hier_mode_from_string(mode);
    if (super_states == 0 || sub_states == 0) throw UsageError("hier needs --super-states and --sub-states");
    if (hm == HierMode::SpatialMaster && !with_grid)
      throw Error("spatial master mode needs grid geometry (--outer-k, --inner-w, --inner-h)");
    r.begin();
    train.cfg.seed = r.seed;
    train.cfg.threads = r.threads;

    const DataMatrix raw = data.load(r);
    const DataMatrix m = with_grid ? apply_ordering(raw, grid.ordering()) : raw;
    r.config = {{"data", data.data},     {"codebook", data.codebook}, {"config", config_path},
                {"super_states", super_states}, {"sub_states", sub_states}, {"mode", mode},
                {"train", train.to_json()}};
    if (with_grid) r.config["grid"] = grid.to_json();

    const MasterModel init = build_master(super_states, sub_states, m.alphabet_size(), hm, r.seed);
    const HierTrainReport rep = hierarchical_train(init, m, train.cfg, r.progress("hier"));
    const Segmentation seg = segment_spatiotemporal(rep.model, m, hm == HierMode::SpatialMaster, r.threads);

    Json mj = master_to_json(rep.model);
    mj["labels"] = m.codebook.labels();
    r.write("master_model.json", dump_json(mj));
    r.write("hier_report.json", dump_json(hier_report_to_json(rep)));

    const auto& ids = hm == HierMode::SpatialMaster ? m.site_ids : m.slot_labels;
    std::ostringstream post, lab;
    post << "position,state,gamma\n";
    for (std::size_t p = 0; p < seg.posteriors.steps; ++p)
      for (std::size_t s = 0; s < seg.posteriors.states; ++s)
        post << p << ',' << s << ',' << format_double(seg.posteriors.gamma_at(p, s)) << '\n';
    lab << "position,id,label\n";
    for (std::size_t p = 0; p < seg.labels.size(); ++p) lab << p << ',' << ids[p] << ',' << seg.labels[p] << '\n';
    r.write("posteriors.csv", post.str());
    r.write("labels.csv", lab.str());
    if (seg.map) {
      std::ostringstream pgm, csv;
      write_pgm(pgm, *seg.map, super_states);
      write_map_csv(csv, *seg.map);
      r.write("map.pgm", pgm.str());
      r.write("map.csv", csv.str());
    }
    if (!r.quiet)
      std::cerr << "[hier] final loglik " << format_double(rep.history.back()) << " after "
                << rep.history.size() - 1 << " iterations\n";
  }
};

// ---------------------------------------------------------------- rotations

struct RotationsCmd {
  std::string model_path;
  DataFlags data;
  std::size_t top = 10;
  std::string period;

  void add(CLI::App* app) {
    app->add_option("--model", model_path, "model JSON with Dirac states")->required();
    data.add(app);
    app->add_option("--top", top, "rows of the text table (0 = all)")->capture_default_str();
    app->add_option("--period", period, "annotation printed above the table");
  }

  void run(Run& r) {
    r.begin();
    std::optional<std::vector<std::string>> labels;
    const Hmm2Model model = load_valid_model(r, model_path, labels);
    const DataMatrix m = data.load(r, labels);
    check_alphabet(model, m);
    r.config = {{"model", model_path}, {"data", data.data}, {"codebook", data.codebook}, {"top", top},
                {"period", period}};
    const Corpus corpus = rows_as_sequences(m);
    const auto& names = m.codebook.labels();
    SuccessionTable table = triple_probabilities(model, corpus, names, r.threads);
    table.period = period;
    const AnnualTransitions at = annual_transitions(table);

    std::ostringstream csv, text, trans;
    write_succession_csv(csv, table);
    write_succession_text(text, table, top);
    write_transitions_csv(trans, at);
    r.write("succession.csv", csv.str());
    r.write("succession.txt", text.str());
    r.write("transitions.csv", trans.str());
    if (const auto containers = container_states(model); !containers.empty()) {
      std::ostringstream dist;
      write_distribution_csv(dist, period_distribution(model, corpus, containers, names, r.threads));
      r.write("distribution.csv", dist.str());
    }
    std::cout << text.str();
  }
};

// ---------------------------------------------------------------- curve-export

struct CurveCmd {
  GridFlags grid;

  void add(CLI::App* app) { grid.add(app); }

  void run(Run& r) {
    if (!grid.given()) throw UsageError("curve-export needs grid flags (--outer-k, --inner-w, --inner-h)");
    r.begin();
    r.config = {{"grid", grid.to_json()}};
    std::ostringstream out;
    write_ordering_csv(out, grid.ordering());
    r.write("ordering.csv", out.str());
  }
};

// ---------------------------------------------------------------- validate-model

struct ValidateCmd {
  std::string model_path;

  void add(CLI::App* app) { app->add_option("--model", model_path, "model or master model JSON")->required(); }

  int run(Run& r) {
    const Json j = r.input_json(model_path);
    std::vector<std::string> problems;
    auto check = [&](const Hmm2Model& m, const std::string& prefix) {
      for (const auto& v : validate(m)) problems.push_back(prefix + to_string(v));
    };
    try {
      if (j.contains("master")) {
        const MasterModel mm = master_from_json(j);
        check(mm.master, "master: ");
        for (std::size_t s = 0; s < mm.subs.size(); ++s) check(mm.subs[s], "subs[" + std::to_string(s) + "]: ");
      } else {
        check(model_from_json(j), "");
      }
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
    if (problems.empty()) {
      std::cout << model_path << ": valid\n";
      return 0;
    }
    for (const auto& p : problems) std::cout << model_path << ": " << p << '\n';
    return kExitError;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Second-order HMM segmentation of categorical site x time grids"};
  app.set_version_flag("--version", std::string(HMM2_VERSION));
  app.require_subcommand(1);

  Run run;
  TrainCmd train_cmd;
  SegmentCmd segment_cmd;
  HierCmd hier_cmd;
  RotationsCmd rotations_cmd;
  CurveCmd curve_cmd;
  ValidateCmd validate_cmd;

  auto* train = app.add_subcommand("train", "fit an HMM2 to the rows (or grid-ordered columns) of a data CSV");
  train_cmd.add(train);
  add_common(train, run);
  auto* segment = app.add_subcommand("segment", "posterior classification with a trained model");
  segment_cmd.add(segment);
  add_common(segment, run);
  auto* hier = app.add_subcommand("hier", "train and apply a master model over sub-HMM2s");
  hier_cmd.add(hier);
  add_common(hier, run);
  auto* rotations = app.add_subcommand("rotations", "succession tables from a Dirac/container model");
  rotations_cmd.add(rotations);
  add_common(rotations, run);
  auto* curve = app.add_subcommand("curve-export", "write a two-level Hilbert/serpentine site ordering");
  curve_cmd.add(curve);
  add_common(curve, run);
  auto* validate_app = app.add_subcommand("validate-model", "check a model file; exit 1 when invalid");
  validate_cmd.add(validate_app);
  add_common(validate_app, run, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    apply_seed_override(run);
    if (train->parsed()) {
      run.command = "train";
      train_cmd.run(run);
    } else if (segment->parsed()) {
      run.command = "segment";
      segment_cmd.run(run);
    } else if (hier->parsed()) {
      run.command = "hier";
      hier_cmd.run(run);
    } else if (rotations->parsed()) {
      run.command = "rotations";
      rotations_cmd.run(run);
    } else if (curve->parsed()) {
      run.command = "curve-export";
      curve_cmd.run(run);
    } else {
      run.command = "validate-model";
      return validate_cmd.run(run);
    }
    run.finish();
    return 0;
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissing;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}
