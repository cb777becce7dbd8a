// gazetail: batch driver for the step-length pipeline.
//
//   synth -> ingest -> trials -> gmm / features -> classify -> report
//
// Every stage reads the previous stage's files from --dir (or explicit
// paths) and writes its own atomically.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gazetail/classify.hpp"
#include "gazetail/features.hpp"
#include "gazetail/gmm.hpp"
#include "gazetail/ingest.hpp"
#include "gazetail/io.hpp"
#include "gazetail/report.hpp"
#include "gazetail/synth.hpp"
#include "gazetail/trace_store.hpp"
#include "gazetail/trials.hpp"

namespace fs = std::filesystem;
using namespace gazetail;
using io::json;

namespace {

constexpr const char* kTracesFile = "traces.jsonl";
constexpr const char* kSummaryFile = "summary.json";
constexpr const char* kTrialsFile = "trials.jsonl";
constexpr const char* kGmmFile = "gmm.json";
constexpr const char* kContoursFile = "gmm_contours.csv";
constexpr const char* kFeaturesFile = "features.csv";
constexpr const char* kClassifyFile = "classify.json";
constexpr const char* kSweepFile = "sweep.csv";

std::string or_default(const std::string& path, const std::string& dir, const char* name) {
  return path.empty() ? (fs::path(dir) / name).string() : path;
}

std::string read_stage(const std::string& path, const char* producer) {
  if (!fs::is_regular_file(path))
    throw Error("missing " + path + " (produced by `gazetail " + producer + "`)");
  return io::read_file(path);
}

std::string csv_header(std::string_view schema, const json& config) {
  return "# " + io::header_line(schema, config) + "\n";
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::size_t observers = 5;
  std::size_t images = 200;
  std::uint64_t seed = 0;
  double screen_w = 1280, screen_h = 1024, duration_ms = 3000;
  std::string out = "traces.csv";
};

void run_synth(const SynthArgs& a) {
  SynthConfig sc;
  sc.screen_w = a.screen_w;
  sc.screen_h = a.screen_h;
  sc.trace_duration_ms = a.duration_ms;
  const auto profiles = default_profiles(a.observers);
  const auto traces = generate_traces(profiles, a.images, a.seed, sc);
  json cfg{{"observers", a.observers}, {"images", a.images},       {"seed", a.seed},
           {"screen_w", a.screen_w},   {"screen_h", a.screen_h},   {"duration_ms", a.duration_ms}};
  json prof = json::array();
  for (const auto& p : profiles)
    prof.push_back({{"observer_id", p.observer_id},
                    {"theta", p.saccade_gpd.theta},
                    {"k", p.saccade_gpd.k},
                    {"sigma", p.saccade_gpd.sigma}});
  cfg["profiles"] = prof;
  std::ostringstream out;
  out << csv_header("gazetail.synth", cfg);
  write_traces_csv(out, traces);
  io::write_atomic(a.out, out.str());
}

// --- ingest ----------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string dir = ".";
  std::optional<double> screen_w, screen_h;
  std::string screen_file;
  SegmentationParams seg;
  std::uint64_t seed = 0;
};

void run_ingest(const IngestArgs& a) {
  IngestConfig cfg;
  if (!a.screen_file.empty()) cfg.screen = read_screen_sidecar(a.screen_file);
  if (a.screen_w || a.screen_h) {
    if (!a.screen_w || !a.screen_h) throw Error("--screen-w and --screen-h go together");
    cfg.screen = ScreenSize{*a.screen_w, *a.screen_h};
  }
  std::vector<std::string> files;
  if (fs::is_directory(a.input)) {
    for (const auto& e : fs::directory_iterator(a.input))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(a.input)) {
    files.push_back(a.input);
  } else {
    throw Error("input not found: " + a.input);
  }
  if (files.empty()) throw Error("no traces: " + a.input + " contains no .csv trace files");

  std::map<std::pair<std::string, std::string>, EyeTrace> by_key;
  for (const auto& f : files)
    for (auto& t : parse_trace_file(f, cfg)) {
      auto key = std::make_pair(t.observer_id, t.image_id);
      if (by_key.count(key))
        throw Error(f + ": trace (" + t.observer_id + ", " + t.image_id +
                    ") already present in an earlier file");
      by_key.emplace(key, segment_fixations(std::move(t), a.seg));
    }
  if (by_key.empty()) throw Error("no traces found in " + a.input);

  std::vector<EyeTrace> traces;
  for (auto& [k, t] : by_key) traces.push_back(std::move(t));

  json config{{"input", a.input},
              {"files", files.size()},
              {"screen_w", cfg.screen ? json(cfg.screen->w) : json(nullptr)},
              {"screen_h", cfg.screen ? json(cfg.screen->h) : json(nullptr)},
              {"dispersion_px", a.seg.dispersion_threshold_px},
              {"min_duration_ms", a.seg.min_duration_ms},
              {"respect_labels", a.seg.respect_labels},
              {"seed", a.seed}};

  std::set<std::string> images;
  json per_obs = json::object();
  std::size_t samples = 0, fixations = 0, out_of_range = 0;
  for (const auto& t : traces) {
    images.insert(t.image_id);
    auto& o = per_obs[t.observer_id];
    if (o.is_null()) o = {{"traces", 0}, {"samples", 0}, {"fixation_samples", 0}};
    o["traces"] = o["traces"].get<std::size_t>() + 1;
    o["samples"] = o["samples"].get<std::size_t>() + t.samples.size();
    o["fixation_samples"] = o["fixation_samples"].get<std::size_t>() + t.fixation_count();
    samples += t.samples.size();
    fixations += t.fixation_count();
    out_of_range += t.out_of_range;
  }
  json summary{{"schema", "gazetail.summary"},
               {"version", io::kSchemaVersion},
               {"config", config},
               {"observers", per_obs.size()},
               {"images", images.size()},
               {"traces", traces.size()},
               {"samples", samples},
               {"fixation_samples", fixations},
               {"out_of_range_samples", out_of_range},
               {"per_observer", per_obs}};
  io::write_atomic(fs::path(a.dir) / kTracesFile, traces_to_jsonl(traces, config));
  io::write_atomic(fs::path(a.dir) / kSummaryFile, summary.dump(2) + "\n");
}

// --- trials ----------------------------------------------------------------

struct TrialsArgs {
  std::string dir = ".";
  std::string traces, out;
  std::string metric = "euclidean";
  std::size_t trials = 5000;
  std::size_t images_per_trial = 50;
  unsigned threads = 0;
  double disc_margin = kDefaultDiscMargin;
  std::uint64_t seed = 0;
};

void run_trials_cmd(const TrialsArgs& a) {
  const Metric metric = parse_metric(a.metric);
  const auto traces_path = or_default(a.traces, a.dir, kTracesFile);
  const auto store = traces_from_jsonl(read_stage(traces_path, "ingest"), traces_path);
  if (store.traces.empty()) throw Error(traces_path + ": no traces");
  TrialPlan plan{a.trials, a.images_per_trial, metric, a.seed};
  TrialOptions opt;
  opt.threads = a.threads;
  opt.disc_margin = a.disc_margin;
  StepTable table(store.traces, metric, a.disc_margin);
  validate_plan(plan, table.images().size());
  const auto records = run_trials(table, plan, opt);
  json config{{"traces", traces_path},
              {"metric", to_string(metric)},
              {"trials", a.trials},
              {"images_per_trial", a.images_per_trial},
              {"disc_margin", a.disc_margin},
              {"seed", a.seed},
              {"observers", table.observers().size()},
              {"images", table.images().size()}};
  io::write_atomic(or_default(a.out, a.dir, kTrialsFile), trials_to_jsonl(records, config));
  std::size_t failed = 0;
  for (const auto& r : records) failed += !r.ok;
  if (failed) std::cerr << "trials: " << failed << " of " << records.size() << " fits failed\n";
}

TrialDatabase load_trials(const std::string& path) {
  return trials_from_jsonl(read_stage(path, "trials"), path);
}

// --- gmm -------------------------------------------------------------------

struct GmmArgs {
  std::string dir = ".";
  std::string trials, out, contours;
  std::size_t components = 0;
  GmmConfig gmm;
  std::uint64_t seed = 0;
};

void run_gmm(const GmmArgs& a) {
  const auto trials_path = or_default(a.trials, a.dir, kTrialsFile);
  const auto db = load_trials(trials_path);
  std::vector<Vec2> pts;
  std::set<std::string> observers;
  for (const auto& r : db.records)
    if (r.ok) {
      pts.push_back(shape_scale_point(r));
      observers.insert(r.observer_id);
    }
  const std::size_t K = a.components ? a.components : observers.size();
  const auto model = fit_gmm(pts, K, a.seed, a.gmm);
  const auto map = cluster_observer_map(model, db.records);
  json config{{"trials", trials_path},
              {"components", K},
              {"restarts", a.gmm.restarts},
              {"max_iterations", a.gmm.max_iterations},
              {"tolerance", a.gmm.tolerance},
              {"covariance_floor", a.gmm.covariance_floor},
              {"seed", a.seed},
              {"metric", db.config.value("metric", "")},
              {"images_per_trial", db.config.value("images_per_trial", 0)}};
  std::string csv = csv_header("gazetail.gmm_contours", config) + "component,level,point,k,sigma\n";
  for (std::size_t c = 0; c < K; ++c)
    for (double level : {1.0, 2.0}) {
      const auto e = ellipse(model, c, level);
      for (std::size_t i = 0; i < e.size(); ++i)
        csv += std::to_string(c) + "," + format_double(level) + "," + std::to_string(i) + "," +
               format_double(e[i][0]) + "," + format_double(e[i][1]) + "\n";
    }
  io::write_atomic(or_default(a.out, a.dir, kGmmFile), gmm_to_json(model, &map, config));
  io::write_atomic(or_default(a.contours, a.dir, kContoursFile), csv);
}

// --- features --------------------------------------------------------------

struct FeaturesArgs {
  std::string dir = ".";
  std::string trials, out;
  std::uint64_t seed = 0;
};

void run_features(const FeaturesArgs& a) {
  const auto trials_path = or_default(a.trials, a.dir, kTrialsFile);
  const auto db = load_trials(trials_path);
  FeatureMatrix fm;
  fm.rows = embed_records(db.records, &fm.grid);
  fm.config = {{"trials", trials_path},
               {"seed", a.seed},
               {"metric", db.config.value("metric", "")},
               {"images_per_trial", db.config.value("images_per_trial", 0)},
               {"n_trials", db.config.value("trials", 0)},
               {"grid_size", kGridSize},
               {"window", {kWindowLo, kWindowHi}},
               {"window_samples", kWindowSamples}};
  io::write_atomic(or_default(a.out, a.dir, kFeaturesFile), features_to_csv(fm));
}

FeatureMatrix load_features(const std::string& path) {
  return features_from_csv(read_stage(path, "features"), path);
}

// --- classify --------------------------------------------------------------

struct ClassifyArgs {
  std::string dir = ".";
  std::vector<std::string> features;
  std::vector<std::size_t> K{20};
  std::vector<std::size_t> M{50};
  std::size_t N = 5000;
  std::size_t repeats = 100;
  std::optional<double> lambda;
  std::size_t iterations = 100000;
  bool class_weights = true;
  FeatureScaling scaling = FeatureScaling::global;
  std::uint64_t seed = 0;
  std::string out, sweep_out;
};

std::string scaling_name(FeatureScaling s) {
  switch (s) {
    case FeatureScaling::none: return "none";
    case FeatureScaling::global: return "global";
    case FeatureScaling::per_feature: return "per-feature";
  }
  return "";
}

void run_classify(const ClassifyArgs& a) {
  std::vector<std::string> paths = a.features;
  if (paths.empty()) paths.push_back(or_default("", a.dir, kFeaturesFile));
  std::vector<FeatureMatrix> mats;
  for (const auto& p : paths) mats.push_back(load_features(p));

  std::vector<SweepCase> cases;
  std::vector<std::size_t> case_file;
  for (std::size_t f = 0; f < mats.size(); ++f)
    for (auto m : a.M)
      for (auto k : a.K) {
        EvalConfig c;
        c.M = m;
        c.K = k;
        c.N = a.N;
        c.repeats = a.repeats;
        c.lambda = a.lambda;
        c.seed = a.seed;
        c.svm.iterations = a.iterations;
        c.svm.class_weighted = a.class_weights;
        c.scaling = a.scaling;
        c.metric = mats[f].config.value("metric", "");
        c.images_per_trial = mats[f].config.value("images_per_trial", std::size_t{0});
        cases.push_back({c, mats[f].rows});
        case_file.push_back(f);
      }
  const auto result = sweep(cases);

  json config{{"features", paths},
              {"K", a.K},
              {"M", a.M},
              {"N", a.N},
              {"repeats", a.repeats},
              {"lambda", a.lambda ? json(*a.lambda) : json(nullptr)},
              {"iterations", a.iterations},
              {"class_weights", a.class_weights},
              {"scaling", scaling_name(a.scaling)},
              {"seed", a.seed}};
  std::string js = "{\"schema\":" + io::quote(kClassifySchema) +
                   ",\"version\":" + std::to_string(io::kSchemaVersion) +
                   ",\"config\":" + config.dump() + ",\"cases\":[";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i].config;
    js += std::string(i ? "," : "") + "{\"features\":" + io::quote(paths[case_file[i]]) +
          ",\"M\":" + std::to_string(c.M) + ",\"K\":" + std::to_string(c.K) + ",\"error\":" +
          (result.errors[i].empty() ? "null" : io::quote(result.errors[i])) + ",\"reports\":[";
    for (std::size_t r = 0; r < result.reports[i].size(); ++r)
      js += (r ? "," : "") + report_to_json(result.reports[i][r]);
    js += "]}";
  }
  js += "]}\n";
  io::write_atomic(or_default(a.out, a.dir, kClassifyFile), js);
  io::write_atomic(or_default(a.sweep_out, a.dir, kSweepFile),
                   csv_header("gazetail.sweep", config) + sweep_to_csv(result));
  std::size_t failed = 0;
  for (std::size_t i = 0; i < cases.size(); ++i)
    if (!result.errors[i].empty()) {
      ++failed;
      std::cerr << "classify: case M=" << cases[i].config.M << " K=" << cases[i].config.K << " ("
                << paths[case_file[i]] << "): " << result.errors[i] << "\n";
    }
  if (failed == cases.size()) throw Error("classify: every case failed");
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  std::string dir = ".";
  std::string traces, trials, gmm, classify, out_dir;
  std::string observer;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
};

void run_report(const ReportArgs& a) {
  const auto traces_path = or_default(a.traces, a.dir, kTracesFile);
  const auto trials_path = or_default(a.trials, a.dir, kTrialsFile);
  const auto gmm_path = or_default(a.gmm, a.dir, kGmmFile);
  const auto classify_path = or_default(a.classify, a.dir, kClassifyFile);
  const auto store = traces_from_jsonl(read_stage(traces_path, "ingest"), traces_path);
  const auto db = load_trials(trials_path);
  const auto gmm_json = json::parse(read_stage(gmm_path, "gmm"));
  const auto model = gmm_from_json(gmm_json, gmm_path);
  const auto cls = json::parse(read_stage(classify_path, "classify"));
  io::check_header(cls, kClassifySchema, classify_path);

  const Metric metric = parse_metric(db.config.at("metric").get<std::string>());
  const auto L = db.config.at("images_per_trial").get<std::size_t>();
  const auto trial_seed = db.config.at("seed").get<std::uint64_t>();
  const double margin = db.config.value("disc_margin", kDefaultDiscMargin);
  StepTable table(store.traces, metric, margin);
  const auto& obs = table.observers();
  const std::string observer = a.observer.empty() ? obs.front() : a.observer;
  const auto oit = std::find(obs.begin(), obs.end(), observer);
  if (oit == obs.end()) throw Error("report: unknown observer '" + observer + "'");
  if (a.trial >= db.config.at("trials").get<std::size_t>())
    throw Error("report: trial " + std::to_string(a.trial) + " is not in " + trials_path);
  const auto subset = draw_image_subset(table.images().size(), L, trial_seed, a.trial);
  const auto steps = table.pool(static_cast<std::size_t>(oit - obs.begin()), subset);
  const auto fit = fit_three_param(steps);

  json config{{"traces", traces_path},     {"trials", trials_path},
              {"gmm", gmm_path},           {"classify", classify_path},
              {"observer", observer},      {"trial", a.trial},
              {"metric", to_string(metric)}, {"images_per_trial", L},
              {"seed", a.seed}};
  const fs::path out = a.out_dir.empty() ? fs::path(a.dir) / "report" : fs::path(a.out_dir);

  const auto hist = freedman_diaconis(steps);
  json hcfg = config;
  hcfg["binning"] = "freedman-diaconis";
  hcfg["clip_quantile"] = kHistogramClip;
  hcfg["clip_value"] = hist.clip;
  hcfg["n_steps"] = steps.size();
  hcfg["overflow_row"] = "values above clip_value";
  std::string h = csv_header("gazetail.histogram", hcfg) + "bin_lo,bin_hi,count,density\n";
  const double nd = static_cast<double>(steps.size());
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    const double lo = hist.edge(i), hi = hist.edge(i + 1);
    h += format_double(lo) + "," + format_double(hi) + "," + std::to_string(hist.counts[i]) + "," +
         format_double(static_cast<double>(hist.counts[i]) / (nd * (hi - lo))) + "\n";
  }
  h += format_double(hist.clip) + ",inf," + std::to_string(hist.overflow) + ",nan\n";
  io::write_atomic(out / "histogram.csv", h);

  json pcfg = config;
  pcfg["theta"] = fit.params.theta;
  pcfg["k"] = fit.params.k;
  pcfg["sigma"] = fit.params.sigma;
  pcfg["r_squared_adj"] = fit.gof.r_squared_adj;
  std::string pc = csv_header("gazetail.pdf_curve", pcfg) + "x,pdf\n";
  for (std::size_t i = 0; i < 200; ++i) {
    const double x = hist.lo + (hist.clip - hist.lo) * static_cast<double>(i) / 199.0;
    pc += format_double(x) + "," + format_double(pdf(x, fit.params)) + "\n";
  }
  io::write_atomic(out / "pdf_curve.csv", pc);

  std::string qq = csv_header("gazetail.qq", pcfg) + "empirical,model\n";
  for (const auto& [e, m] : fit.gof.qq_points) qq += format_double(e) + "," + format_double(m) + "\n";
  io::write_atomic(out / "qq.csv", qq);

  std::string ecdf = csv_header("gazetail.r2_ecdf", config) + "observer,r_squared_adj,ecdf\n";
  std::set<std::string> with_ok;
  for (const auto& r : db.records)
    if (r.ok) with_ok.insert(r.observer_id);
  for (const auto& o : with_ok)
    for (const auto& [v, f] : ecdf_of_r2(db.records, o))
      ecdf += o + "," + format_double(v) + "," + format_double(f) + "\n";
  io::write_atomic(out / "r2_ecdf.csv", ecdf);

  std::string pts = csv_header("gazetail.shape_scale", config) + "trial_index,observer,k,sigma\n";
  for (const auto& r : db.records)
    if (r.ok)
      pts += std::to_string(r.trial_index) + "," + r.observer_id + "," + format_double(r.params.k) +
             "," + format_double(r.params.sigma) + "\n";
  io::write_atomic(out / "shape_scale_points.csv", pts);

  std::string med = csv_header("gazetail.shape_scale_medians", config) + "observer,k,sigma,n\n";
  for (const auto& m : shape_scale_medians(db.records))
    med += m.observer_id + "," + format_double(m.k) + "," + format_double(m.sigma) + "," +
           std::to_string(m.n) + "\n";
  io::write_atomic(out / "shape_scale_medians.csv", med);

  std::string ell = csv_header("gazetail.gmm_ellipses", config) + "component,level,point,k,sigma\n";
  for (std::size_t c = 0; c < model.n_components; ++c)
    for (double level : {1.0, 2.0}) {
      const auto e = ellipse(model, c, level);
      for (std::size_t i = 0; i < e.size(); ++i)
        ell += std::to_string(c) + "," + format_double(level) + "," + std::to_string(i) + "," +
               format_double(e[i][0]) + "," + format_double(e[i][1]) + "\n";
    }
  io::write_atomic(out / "gmm_ellipses.csv", ell);

  std::string rates = csv_header("gazetail.rates", config) +
                      "features,M,K,N,repeats,metric,images_per_trial,observer,mean_rate,"
                      "true_positive_rate,true_negative_rate\n";
  for (const auto& c : cls.at("cases")) {
    for (const auto& rj : c.at("reports")) {
      const auto r = report_from_json(rj);
      rates += c.at("features").get<std::string>() + "," + config_fields_csv(r.config) + "," +
               r.observer_id + "," + format_double(r.mean_recognition_rate) + "," +
               format_double(r.mean_true_positive_rate) + "," +
               format_double(r.mean_true_negative_rate) + "\n";
    }
  }
  io::write_atomic(out / "rates.csv", rates);
}

// --- argument handling -----------------------------------------------------

/// Splices key=value lines from --config into the argument list as
/// --key=value, skipping keys the command line already sets.
std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  auto given = [&](const std::string& key) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
    });
  };
  std::vector<std::string> extra;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto v = detail::trim(line);
    if (v.empty() || v.front() == '#') continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) throw ParseError(path, lineno, "expected key=value");
    std::string key(detail::trim(v.substr(0, eq)));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    const std::string value(detail::trim(v.substr(eq + 1)));
    if (key.empty()) throw ParseError(path, lineno, "empty key");
    if (!given(key)) extra.push_back("--" + key + "=" + value);
  }
  // Subcommand name stays first so the spliced options bind to it.
  const auto at = args.empty() ? args.begin() : args.begin() + 1;
  args.insert(at, extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gazetail: generalized-Pareto step-length analysis of gaze traces"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");
  app.add_option("--config", "key=value file; command-line flags take precedence");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Generate synthetic traces (trace CSV)");
  synth->add_option("--observers", sy.observers, "Observer count")->check(CLI::PositiveNumber);
  synth->add_option("--images", sy.images, "Images per observer")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sy.seed);
  synth->add_option("--screen-w", sy.screen_w)->check(CLI::PositiveNumber);
  synth->add_option("--screen-h", sy.screen_h)->check(CLI::PositiveNumber);
  synth->add_option("--duration-ms", sy.duration_ms, "Trace length")->check(CLI::PositiveNumber);
  synth->add_option("--out", sy.out, "Trace CSV to write");

  IngestArgs in;
  auto* ingest = app.add_subcommand("ingest", "Parse and segment trace CSVs into traces.jsonl");
  ingest->add_option("--input", in.input, "Trace CSV file or directory of .csv files")->required();
  ingest->add_option("--dir", in.dir, "Output directory");
  ingest->add_option("--screen-w", in.screen_w)->check(CLI::PositiveNumber);
  ingest->add_option("--screen-h", in.screen_h)->check(CLI::PositiveNumber);
  ingest->add_option("--screen-file", in.screen_file, "Sidecar with 'width height'");
  ingest->add_option("--dispersion", in.seg.dispersion_threshold_px, "I-DT width+height, px")
      ->check(CLI::PositiveNumber);
  ingest->add_option("--min-duration-ms", in.seg.min_duration_ms)->check(CLI::PositiveNumber);
  ingest->add_option("--respect-labels", in.seg.respect_labels, "Keep complete file labels");
  ingest->add_option("--seed", in.seed);

  TrialsArgs tr;
  auto* trials = app.add_subcommand("trials", "Bootstrap GPD fits per observer into trials.jsonl");
  trials->add_option("--dir", tr.dir, "Working directory");
  trials->add_option("--traces", tr.traces, "Trace store (default <dir>/traces.jsonl)");
  trials->add_option("--out", tr.out, "Trial database (default <dir>/trials.jsonl)");
  trials->add_option("--metric", tr.metric)->check(CLI::IsMember({"euclidean", "hyperbolic"}));
  trials->add_option("--trials", tr.trials, "Trial count")->check(CLI::PositiveNumber);
  trials->add_option("--images-per-trial", tr.images_per_trial)->check(CLI::PositiveNumber);
  trials->add_option("--threads", tr.threads, "Worker threads, 0 = all cores");
  trials->add_option("--disc-margin", tr.disc_margin)->check(CLI::Range(1e-6, 1.0));
  trials->add_option("--seed", tr.seed);

  GmmArgs gm;
  auto* gmm = app.add_subcommand("gmm", "Gaussian mixture over the (k, sigma) records");
  gmm->add_option("--dir", gm.dir);
  gmm->add_option("--trials", gm.trials);
  gmm->add_option("--out", gm.out);
  gmm->add_option("--contours", gm.contours);
  gmm->add_option("--components", gm.components, "0 = one per observer");
  gmm->add_option("--restarts", gm.gmm.restarts)->check(CLI::PositiveNumber);
  gmm->add_option("--max-iterations", gm.gmm.max_iterations)->check(CLI::PositiveNumber);
  gmm->add_option("--tolerance", gm.gmm.tolerance)->check(CLI::PositiveNumber);
  gmm->add_option("--seed", gm.seed);

  FeaturesArgs fe;
  auto* features = app.add_subcommand("features", "Hellinger embedding of every fitted pdf");
  features->add_option("--dir", fe.dir);
  features->add_option("--trials", fe.trials);
  features->add_option("--out", fe.out);
  features->add_option("--seed", fe.seed);

  ClassifyArgs cl;
  auto* classify = app.add_subcommand("classify", "One-vs-rest SVM recognition rates");
  classify->add_option("--dir", cl.dir);
  classify->add_option("--features", cl.features, "Feature files (comma separated)")
      ->delimiter(',');
  classify->add_option("--K", cl.K, "Selected pdf samples (comma separated)")
      ->delimiter(',')
      ->check(CLI::Range(std::size_t{1}, kGridSize));
  classify->add_option("--M", cl.M, "Training trials (comma separated)")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  classify->add_option("--N", cl.N, "Evaluation vectors per repeat")->check(CLI::PositiveNumber);
  classify->add_option("--repeats", cl.repeats)->check(CLI::PositiveNumber);
  classify->add_option("--lambda", cl.lambda, "Default 1/(M x observers)")
      ->check(CLI::PositiveNumber);
  classify->add_option("--iterations", cl.iterations)->check(CLI::PositiveNumber);
  classify->add_option("--class-weights", cl.class_weights);
  classify->add_option("--scaling", cl.scaling, "Feature scaling: none, global or per-feature")
      ->transform(CLI::CheckedTransformer(std::map<std::string, FeatureScaling>{
          {"none", FeatureScaling::none},
          {"global", FeatureScaling::global},
          {"per-feature", FeatureScaling::per_feature}}))
      ->option_text("none|global|per-feature");
  classify->add_option("--seed", cl.seed);
  classify->add_option("--out", cl.out);
  classify->add_option("--sweep", cl.sweep_out);

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Plot-ready CSVs from every stage");
  report->add_option("--dir", rp.dir);
  report->add_option("--traces", rp.traces);
  report->add_option("--trials", rp.trials);
  report->add_option("--gmm", rp.gmm);
  report->add_option("--classify", rp.classify);
  report->add_option("--out-dir", rp.out_dir, "Default <dir>/report");
  report->add_option("--observer", rp.observer, "Histogram/QQ observer (default first)");
  report->add_option("--trial", rp.trial, "Histogram/QQ trial index");
  report->add_option("--seed", rp.seed);

  try {
    auto args = apply_config_file(std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth) run_synth(sy);
    if (*ingest) run_ingest(in);
    if (*trials) run_trials_cmd(tr);
    if (*gmm) run_gmm(gm);
    if (*features) run_features(fe);
    if (*classify) run_classify(cl);
    if (*report) run_report(rp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
