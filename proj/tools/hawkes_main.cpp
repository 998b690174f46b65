// hawkes: simulation, estimation (MLE and LSTM), volatility, tick ingestion
// and sliding-window streaming for the bivariate symmetric Hawkes model of
// tick-level price moves.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "hawkesnn/core.hpp"
#include "hawkesnn/dataset.hpp"
#include "hawkesnn/ingest.hpp"
#include "hawkesnn/mle.hpp"
#include "hawkesnn/nn.hpp"
#include "hawkesnn/rng.hpp"
#include "hawkesnn/simulate.hpp"
#include "hawkesnn/volatility.hpp"
#include "json.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hawkes;
using cli::RunManifest;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = ".";
};

std::string out_path(const GlobalOpts& g, const std::string& p) {
  if (p.empty() || p == "-") return p;
  fs::path fp(p);
  if (fp.is_absolute()) return p;
  return (fs::path(g.out_dir) / fp).string();
}

void ensure_out_dir(const GlobalOpts& g) {
  if (g.out_dir != "." && !g.out_dir.empty()) fs::create_directories(g.out_dir);
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// FitResult fields as decimal strings with 17 significant digits: parsing
// them back recovers the doubles bit-exactly.
void write_fit_json(const std::string& path, const std::string& method,
                    const HawkesParams& p, double loglik, int iterations,
                    bool converged, double wall_time, double grad_inf_norm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << "{\n";
  out << "  \"method\": \"" << method << "\",\n";
  out << "  \"mu\": " << fmt17(p.mu) << ",\n";
  out << "  \"alpha1\": " << fmt17(p.alpha1) << ",\n";
  out << "  \"alpha2\": " << fmt17(p.alpha2) << ",\n";
  out << "  \"beta\": " << fmt17(p.beta) << ",\n";
  out << "  \"branching_ratio\": " << fmt17(branching_ratio(p)) << ",\n";
  out << "  \"loglik\": " << fmt17(loglik) << ",\n";
  out << "  \"iterations\": " << iterations << ",\n";
  out << "  \"converged\": " << (converged ? "true" : "false") << ",\n";
  out << "  \"wall_time\": " << fmt17(wall_time) << ",\n";
  // null for estimators without a gradient-based convergence measure
  if (std::isfinite(grad_inf_norm))
    out << "  \"grad_inf_norm\": " << fmt17(grad_inf_norm) << "\n";
  else
    out << "  \"grad_inf_norm\": null\n";
  out << "}\n";
}

HawkesParams params_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json doc = json::parse(in);
  return HawkesParams{
      doc.at("mu").get<double>(), doc.at("alpha1").get<double>(),
      doc.at("alpha2").get<double>(), doc.at("beta").get<double>()};
}

HawkesParams parse_params_csv(const std::string& text) {
  std::istringstream ss(text);
  std::string tok;
  std::vector<double> v;
  while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
  if (v.size() != 4)
    throw std::invalid_argument("expected mu,alpha1,alpha2,beta");
  return HawkesParams{v[0], v[1], v[2], v[3]};
}

MarkLaw parse_mark_law(const std::string& name, int value, double p) {
  if (name == "constant") {
    if (value < 1) throw std::invalid_argument("--mark-value must be >= 1");
    MarkLaw law;
    law.kind = MarkLaw::Kind::Constant;
    law.constant = static_cast<std::uint32_t>(value);
    return law;
  }
  if (name == "geometric") {
    if (!(p > 0.0 && p <= 1.0))
      throw std::invalid_argument("--mark-p must be in (0, 1]");
    return MarkLaw::geometric(p);
  }
  throw std::invalid_argument("unknown mark law: " + name);
}

EventSequence sequence_from_features(const FeatureSequence& f) {
  EventSequence s;
  double t = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    t += f.inter_arrivals[k];
    s.events.push_back(MarkedEvent{t, f.directions[k], 1});
  }
  s.horizon = t;
  return s;
}

struct SamplerFlags {
  void attach(CLI::App* cmd) {
    cmd->add_option("--mu-range", mu_range_, "mu range lo:hi");
    cmd->add_option("--beta-range", beta_range_, "beta range lo:hi");
    cmd->add_option("--branching-range", branching_range_,
                    "branching-ratio range lo:hi");
  }
  SamplerRanges resolve() const {
    SamplerRanges r;
    parse_into(mu_range_, r.mu_lo, r.mu_hi);
    parse_into(beta_range_, r.beta_lo, r.beta_hi);
    parse_into(branching_range_, r.branching_lo, r.branching_hi);
    return r;
  }
  json to_json() const {
    const SamplerRanges r = resolve();
    return json{{"mu", {r.mu_lo, r.mu_hi}},
                {"beta", {r.beta_lo, r.beta_hi}},
                {"branching", {r.branching_lo, r.branching_hi}}};
  }

 private:
  static void parse_into(const std::string& s, double& lo, double& hi) {
    if (s.empty()) return;
    const auto colon = s.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("range must be lo:hi");
    lo = std::stod(s.substr(0, colon));
    hi = std::stod(s.substr(colon + 1));
    if (!(lo < hi)) throw std::invalid_argument("range must have lo < hi");
  }
  std::string mu_range_, beta_range_, branching_range_;
};

struct StudyMethodReport {
  std::array<double, 4> mean{};
  std::array<double, 4> sd{};
  bool has_sd = false;
  std::array<double, 4> mse_per_param{};
  double mse = 0.0;
  double mean_path_seconds = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
};

json report_to_json(const StudyMethodReport& r) {
  const char* names[4] = {"mu", "alpha1", "alpha2", "beta"};
  json mean, sd, msep;
  for (int i = 0; i < 4; ++i) {
    mean[names[i]] = r.mean[i];
    msep[names[i]] = r.mse_per_param[i];
    if (r.has_sd)
      sd[names[i]] = r.sd[i];
    else
      sd[names[i]] = nullptr;
  }
  return json{{"mean", mean},
              {"sd", sd},
              {"mse", r.mse},
              {"mse_per_param", msep},
              {"mean_path_seconds", r.mean_path_seconds},
              {"paths_used", r.used},
              {"non_converged_excluded", r.excluded}};
}

StudyMethodReport summarize(const std::vector<HawkesParams>& estimates,
                            const HawkesParams& truth, double total_seconds,
                            std::size_t excluded) {
  StudyMethodReport r;
  r.used = estimates.size();
  r.excluded = excluded;
  if (estimates.empty()) return r;
  auto field = [](const HawkesParams& p, int i) {
    switch (i) {
      case 0: return p.mu;
      case 1: return p.alpha1;
      case 2: return p.alpha2;
      default: return p.beta;
    }
  };
  for (int i = 0; i < 4; ++i) {
    double sum = 0.0, sumsq = 0.0, err = 0.0;
    for (const auto& e : estimates) {
      const double v = field(e, i);
      sum += v;
      sumsq += v * v;
      const double d = v - field(truth, i);
      err += d * d;
    }
    const double n = static_cast<double>(estimates.size());
    r.mean[i] = sum / n;
    r.mse_per_param[i] = err / n;
    r.mse += err / n / 4.0;
    if (estimates.size() > 1) {
      r.has_sd = true;
      const double var =
          std::max((sumsq - n * r.mean[i] * r.mean[i]) / (n - 1.0), 0.0);
      r.sd[i] = std::sqrt(var);
    }
  }
  r.mean_path_seconds =
      total_seconds / static_cast<double>(estimates.size() + excluded);
  return r;
}

double parse_grid_seconds(std::string s) {
  if (s.empty()) return 1.0;
  if (s.back() == 's') s.pop_back();
  const double v = std::stod(s);
  if (!(v > 0.0)) throw std::invalid_argument("--grid must be positive");
  return v;
}

// Index-parallel loop with stable result placement (callers write to slots).
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const int workers = static_cast<int>(std::min<std::size_t>(
      static_cast<std::size_t>(threads), n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
        fn(i);
    });
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------

int cmd_simulate(const GlobalOpts& g, const HawkesParams& params,
                 std::optional<double> horizon,
                 std::optional<std::size_t> events, const std::string& law_name,
                 int mark_value, double mark_p, const std::string& out) {
  if (horizon.has_value() == events.has_value())
    throw std::invalid_argument(
        "exactly one of --horizon / --events must be given");
  RunManifest manifest("simulate", g.seed, g.threads);
  SimConfig cfg;
  cfg.params = params;
  if (horizon)
    cfg.stop = StopAtHorizon{*horizon};
  else
    cfg.stop = StopAtCount{*events};
  cfg.mark_law_up = cfg.mark_law_down =
      parse_mark_law(law_name, mark_value, mark_p);
  cfg.seed = g.seed;
  const auto seq = simulate(cfg);
  const std::string path = out_path(g, out);
  write_events_csv(seq, path);
  manifest.set_config(json{{"mu", params.mu},
                           {"alpha1", params.alpha1},
                           {"alpha2", params.alpha2},
                           {"beta", params.beta},
                           {"horizon", horizon ? json(*horizon) : json()},
                           {"events", events ? json(*events) : json()},
                           {"mark_law", law_name}});
  manifest.set_extra("n_events", seq.size());
  manifest.add_output(path);
  manifest.write(path, g.out_dir);
  std::fprintf(stderr, "simulate: %zu events -> %s\n", seq.size(),
               path.c_str());
  return 0;
}

int cmd_make_dataset(const GlobalOpts& g, std::size_t n_paths,
                     std::size_t length, const SamplerFlags& sampler_flags,
                     const std::string& out, bool csv) {
  RunManifest manifest("make-dataset", g.seed, g.threads);
  const auto ds = make_dataset(n_paths, length,
                               param_sampler(sampler_flags.resolve()), g.seed,
                               g.threads);
  const std::string path = out_path(g, out);
  write_dataset(ds, path);
  if (csv) export_dataset_csv(ds, path);
  manifest.set_config(json{{"n_paths", n_paths},
                           {"length", length},
                           {"sampler", sampler_flags.to_json()}});
  manifest.add_output(path);
  manifest.write(path, g.out_dir);
  std::fprintf(stderr, "make-dataset: %zu paths x %zu -> %s\n", n_paths,
               length, path.c_str());
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& dataset_path,
              TrainConfig cfg, const std::string& out,
              const std::string& log_path) {
  RunManifest manifest("train", g.seed, g.threads);
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  manifest.add_input(dataset_path);
  const auto ds = read_dataset(dataset_path);
  const auto result = train(ds, cfg);
  const std::string path = out_path(g, out);
  save_model(result.model, path);
  manifest.add_output(path);

  if (!log_path.empty()) {
    const std::string lp = out_path(g, log_path);
    std::ofstream log(lp);
    if (!log) throw std::runtime_error("cannot write: " + lp);
    log << "epoch,train_mse,val_mse\n";
    for (std::size_t e = 0; e < result.log.epochs.size(); ++e)
      log << e + 1 << ',' << fmt17(result.log.epochs[e].train_mse) << ','
          << fmt17(result.log.epochs[e].val_mse) << '\n';
    manifest.add_output(lp);
  }

  manifest.set_config(json{{"dataset", dataset_path},
                           {"epochs", cfg.epochs},
                           {"batch_size", cfg.batch_size},
                           {"learning_rate", cfg.learning_rate},
                           {"validation_fraction", cfg.validation_fraction}});
  // Tie the model to its training data for later overlap checks.
  json train_ds{{"path", dataset_path},
                {"fnv1a64", cli::file_fingerprint(dataset_path)},
                {"n_paths", ds.size()},
                {"length", ds.length}};
  const std::string ds_manifest = dataset_path + ".manifest.json";
  if (fs::exists(ds_manifest)) {
    std::ifstream in(ds_manifest);
    json m = json::parse(in);
    train_ds["seed"] = m.value("seed", json());
    if (m.contains("config") && m["config"].contains("sampler"))
      train_ds["sampler"] = m["config"]["sampler"];
  }
  manifest.set_extra("train_dataset", train_ds);
  manifest.set_extra("final_val_mse", result.log.epochs.back().val_mse);
  manifest.write(path, g.out_dir);
  std::fprintf(stderr, "train: final val_mse %.6f -> %s\n",
               result.log.epochs.back().val_mse, path.c_str());
  return 0;
}

int cmd_train_empirical(const GlobalOpts& g, const std::string& events_path,
                        std::size_t window, std::size_t stride,
                        TrainConfig cfg, EmpiricalTrainOptions opt,
                        const SamplerFlags& sampler_flags,
                        const std::string& out) {
  RunManifest manifest("train-empirical", g.seed, g.threads);
  manifest.add_input(events_path);
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  opt.sampler = param_sampler(sampler_flags.resolve());
  const auto seq = read_events_csv(events_path);
  if (stride == 0) stride = window;
  const auto windows = window_segments(seq, window, stride);
  std::vector<EventSequence> segments;
  segments.reserve(windows.size());
  for (const auto& w : windows) segments.push_back(w.events);
  const auto result = train_on_empirical(segments, cfg, opt);
  const std::string path = out_path(g, out);
  save_model(result.model, path);
  manifest.add_output(path);
  manifest.set_config(json{{"events", events_path},
                           {"window", window},
                           {"stride", stride},
                           {"empirical_fraction", opt.empirical_fraction},
                           {"sim_paths", opt.sim_paths},
                           {"epochs", cfg.epochs}});
  manifest.set_extra("segments_used", result.segments_used);
  manifest.set_extra("segments_skipped", result.segments_skipped);
  manifest.write(path, g.out_dir);
  std::fprintf(stderr, "train-empirical: %zu segments (%zu skipped) -> %s\n",
               result.segments_used, result.segments_skipped, path.c_str());
  return 0;
}

int cmd_estimate(const GlobalOpts& g, const std::string& method,
                 const std::string& input, const std::string& init_csv,
                 const std::string& model_path, std::optional<double> horizon,
                 const std::string& out) {
  RunManifest manifest("estimate", g.seed, g.threads);
  manifest.add_input(input);
  auto seq = read_events_csv(input);
  if (horizon) {
    if (*horizon < seq.horizon)
      throw std::invalid_argument("--horizon shorter than the last event");
    seq.horizon = *horizon;
  }
  const std::string path = out_path(g, out);

  if (method == "mle") {
    std::optional<HawkesParams> init;
    if (!init_csv.empty()) init = parse_params_csv(init_csv);
    const auto fit = fit_mle(seq, init);
    if (!fit.converged)
      std::fprintf(stderr,
                   "estimate: warning: not converged after %d iterations "
                   "(grad inf-norm %.3e)\n",
                   fit.iterations, fit.grad_inf_norm);
    write_fit_json(path, "mle", fit.params, fit.loglik, fit.iterations,
                   fit.converged, fit.wall_time, fit.grad_inf_norm);
  } else if (method == "nn") {
    if (model_path.empty())
      throw std::invalid_argument("--model is required with --method nn");
    manifest.add_input(model_path);
    const auto model = load_model(model_path);
    const auto t0 = std::chrono::steady_clock::now();
    const auto params = forward(model, features_from_events(seq));
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_fit_json(path, "nn", params, log_likelihood(params, seq), 0, true,
                   wall, std::numeric_limits<double>::quiet_NaN());
  } else {
    throw std::invalid_argument("--method must be mle or nn");
  }
  manifest.set_config(json{{"method", method},
                           {"input", input},
                           {"init", init_csv},
                           {"model", model_path}});
  manifest.add_output(path);
  manifest.write(path, g.out_dir);
  return 0;
}

int cmd_vol(const GlobalOpts& g, const std::string& params_path,
            const std::string& marks_path, double tick_size, double horizon_t,
            double annualization, const std::string& out) {
  RunManifest manifest("vol", g.seed, g.threads);
  manifest.add_input(params_path);
  const auto params = params_from_json_file(params_path);
  MarkMoments moments = unit_marks();
  if (!marks_path.empty()) {
    manifest.add_input(marks_path);
    moments = estimate_mark_moments(read_events_csv(marks_path));
  }
  VolConfig cfg;
  cfg.tick_size = tick_size;
  cfg.horizon_t = horizon_t;
  cfg.annualization = annualization;
  json doc{{"hawkes_vol_per_sec_sqrt",
            hawkes_volatility(params, moments,
                              VolConfig{tick_size, 1.0, annualization})},
           {"hawkes_vol_annualized",
            hawkes_volatility_annualized(params, moments, cfg)},
           {"hawkes_vol_horizon", hawkes_volatility(params, moments, cfg)},
           {"horizon_t", horizon_t},
           {"tick_size", tick_size},
           {"annualization", annualization},
           {"net_variance_rate_per_sec", net_variance_rate(params, moments)},
           {"mark_moments",
            {{"z1_mean", moments.z1_mean},
             {"z2_mean", moments.z2_mean},
             {"z1_sq", moments.z1_sq},
             {"z2_sq", moments.z2_sq}}}};
  const std::string path = out_path(g, out);
  if (path.empty() || path == "-") {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::ofstream fout(path);
    if (!fout) throw std::runtime_error("cannot write: " + path);
    fout << doc.dump(2) << "\n";
    manifest.add_output(path);
  }
  manifest.set_config(json{{"params", params_path},
                           {"marks", marks_path},
                           {"tick_size", tick_size},
                           {"horizon_t", horizon_t},
                           {"annualization", annualization}});
  manifest.write(path == "-" ? "" : path, g.out_dir);
  return 0;
}

int cmd_rv(const GlobalOpts& g, const std::string& prices_path,
           const std::string& grid, double annualization,
           const std::string& out) {
  RunManifest manifest("rv", g.seed, g.threads);
  manifest.add_input(prices_path);
  const double grid_s = parse_grid_seconds(grid);

  std::ifstream in(prices_path);
  if (!in) throw std::runtime_error("cannot open: " + prices_path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("timestamp", 0) != 0)
    throw std::runtime_error("prices CSV needs a 'timestamp,price' header");
  std::vector<std::pair<double, double>> raw;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string t, p;
    if (!std::getline(ss, t, ',') || !std::getline(ss, p, ','))
      throw std::runtime_error("bad prices row: " + line);
    raw.emplace_back(std::stod(t), std::stod(p));
  }
  if (raw.size() < 2)
    throw std::invalid_argument("need at least two price records");

  // Sample the prevailing price on the grid.
  std::vector<double> sampled;
  std::size_t next = 0;
  double current = raw.front().second;
  const double t_end = raw.back().first;
  for (double t = raw.front().first; t <= t_end + 1e-12; t += grid_s) {
    while (next < raw.size() && raw[next].first <= t) {
      current = raw[next].second;
      ++next;
    }
    sampled.push_back(current);
  }
  const double window = grid_s * static_cast<double>(sampled.size() - 1);
  VolConfig cfg;
  cfg.annualization = annualization;
  const double rv = realized_volatility(sampled, window, cfg);

  json doc{{"realized_vol_annualized", rv},
           {"n_samples", sampled.size()},
           {"grid_seconds", grid_s},
           {"window_seconds", window},
           {"annualization", annualization}};
  const std::string path = out_path(g, out);
  if (path.empty() || path == "-") {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::ofstream fout(path);
    if (!fout) throw std::runtime_error("cannot write: " + path);
    fout << doc.dump(2) << "\n";
    manifest.add_output(path);
  }
  manifest.set_config(
      json{{"prices", prices_path}, {"grid", grid}, {"annualization", annualization}});
  manifest.write(path == "-" ? "" : path, g.out_dir);
  return 0;
}

int cmd_ingest(const GlobalOpts& g, const std::string& quotes_path, double dt,
               double tick_size, const std::string& out) {
  RunManifest manifest("ingest", g.seed, g.threads);
  manifest.add_input(quotes_path);
  const auto ticks = read_quotes_csv(quotes_path);
  const auto result = filter_events(ticks, IngestConfig{dt, tick_size});
  for (const auto& w : result.warnings)
    std::fprintf(stderr, "ingest: warning: %s\n", w.c_str());
  const std::string path = out_path(g, out);
  write_events_csv(result.events, path);
  manifest.set_config(
      json{{"quotes", quotes_path}, {"dt", dt}, {"tick_size", tick_size}});
  manifest.set_extra("n_events", result.events.size());
  manifest.set_extra("n_warnings", result.warnings.size());
  manifest.add_output(path);
  manifest.write(path, g.out_dir);
  std::fprintf(stderr, "ingest: %zu events (%zu warnings) -> %s\n",
               result.events.size(), result.warnings.size(), path.c_str());
  return 0;
}

int cmd_study(const GlobalOpts& g, const HawkesParams& truth,
              std::size_t n_paths, std::size_t length,
              const std::string& methods_csv, const std::string& model_path,
              const std::string& init_mode, const std::string& out) {
  RunManifest manifest("study", g.seed, g.threads);
  const bool want_mle = methods_csv.find("mle") != std::string::npos;
  const bool want_nn = methods_csv.find("nn") != std::string::npos;
  if (!want_mle && !want_nn)
    throw std::invalid_argument("--methods must name mle and/or nn");
  if (want_nn && model_path.empty())
    throw std::invalid_argument("--model is required when methods include nn");
  if (init_mode != "truth" && init_mode != "auto")
    throw std::invalid_argument("--init must be truth or auto");
  if (!validate(truth).ok())
    throw std::invalid_argument("study: invalid parameters");

  std::vector<EventSequence> paths(n_paths);
  std::vector<FeatureSequence> features(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    SimConfig cfg;
    cfg.params = truth;
    cfg.stop = StopAtCount{length};
    cfg.seed = Rng::for_stream(g.seed, i).next_u64();
    paths[i] = simulate(cfg);
    features[i] = features_from_events(paths[i]);
  }

  json methods = json::object();
  if (want_mle) {
    std::vector<FitResult> fits(n_paths);
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(n_paths, g.threads, [&](std::size_t i) {
      fits[i] = fit_mle(paths[i], init_mode == "truth"
                                      ? std::optional<HawkesParams>(truth)
                                      : std::nullopt);
    });
    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::vector<HawkesParams> estimates;
    std::size_t excluded = 0;
    for (const auto& fit : fits) {
      if (fit.converged)
        estimates.push_back(fit.params);
      else
        ++excluded;
    }
    methods["mle"] =
        report_to_json(summarize(estimates, truth, total, excluded));
  }
  if (want_nn) {
    manifest.add_input(model_path);
    const auto model = load_model(model_path);
    const auto pred = predict_batch(model, features, g.threads);
    methods["nn"] =
        report_to_json(summarize(pred.params, truth, pred.wall_time, 0));
  }

  json doc{{"true_params",
            {{"mu", truth.mu},
             {"alpha1", truth.alpha1},
             {"alpha2", truth.alpha2},
             {"beta", truth.beta}}},
           {"n_paths", n_paths},
           {"length", length},
           {"init", init_mode},
           {"methods", methods}};
  const std::string path = out_path(g, out);
  if (path.empty() || path == "-") {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::ofstream fout(path);
    if (!fout) throw std::runtime_error("cannot write: " + path);
    fout << doc.dump(2) << "\n";
    manifest.add_output(path);
  }
  manifest.set_config(json{{"n_paths", n_paths},
                           {"length", length},
                           {"methods", methods_csv},
                           {"init", init_mode}});
  manifest.write(path == "-" ? "" : path, g.out_dir);
  return 0;
}

int cmd_compare(const GlobalOpts& g, const std::string& dataset_path,
                const std::string& model_path, bool no_manifest_check,
                const std::string& out) {
  RunManifest manifest("compare", g.seed, g.threads);
  manifest.add_input(dataset_path);
  manifest.add_input(model_path);

  // Training/test overlap detection via the manifests.
  if (!no_manifest_check) {
    const std::string model_manifest_path = model_path + ".manifest.json";
    if (!fs::exists(model_manifest_path))
      throw std::invalid_argument(
          "missing model manifest " + model_manifest_path +
          " (needed for the train/test overlap check; pass "
          "--no-manifest-check to skip)");
    std::ifstream in(model_manifest_path);
    json mm = json::parse(in);
    if (mm.contains("train_dataset")) {
      const auto& td = mm["train_dataset"];
      const std::string test_hash = cli::file_fingerprint(dataset_path);
      if (td.value("fnv1a64", "") == test_hash)
        throw std::invalid_argument(
            "test dataset is byte-identical to the training dataset");
      const std::string test_manifest_path = dataset_path + ".manifest.json";
      if (fs::exists(test_manifest_path) && td.contains("seed") &&
          !td["seed"].is_null()) {
        std::ifstream tin(test_manifest_path);
        json tm = json::parse(tin);
        const json td_sampler = td.value("sampler", json(nullptr));
        const json tm_sampler =
            tm.contains("config") ? tm["config"].value("sampler", json(nullptr))
                                  : json(nullptr);
        const auto tm_length =
            tm.contains("config") ? tm["config"].value("length", std::size_t(0))
                                  : std::size_t(0);
        if (tm.contains("seed") && td["seed"] == tm["seed"] &&
            td.value("length", std::size_t(0)) == tm_length &&
            td_sampler == tm_sampler)
          throw std::invalid_argument(
              "test dataset was generated with the training dataset's seed "
              "and sampler: paths overlap");
      }
    }
  }

  const auto ds = read_dataset(dataset_path);
  const auto model = load_model(model_path);

  const auto pred = predict_batch(model, ds.features, g.threads);
  double nn_mse = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& t = ds.targets[i];
    const auto& e = pred.params[i];
    nn_mse += (std::pow(e.mu - t.mu, 2) + std::pow(e.alpha1 - t.alpha1, 2) +
               std::pow(e.alpha2 - t.alpha2, 2) +
               std::pow(e.beta - t.beta, 2)) /
              4.0;
  }
  nn_mse /= static_cast<double>(ds.size());

  std::vector<double> mle_err(ds.size());
  std::vector<char> mle_conv(ds.size(), 1);
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(ds.size(), g.threads, [&](std::size_t i) {
    const auto seq = sequence_from_features(ds.features[i]);
    const auto fit = fit_mle(seq);
    mle_conv[i] = fit.converged ? 1 : 0;
    const auto& t = ds.targets[i];
    const auto& e = fit.params;
    mle_err[i] = (std::pow(e.mu - t.mu, 2) + std::pow(e.alpha1 - t.alpha1, 2) +
                  std::pow(e.alpha2 - t.alpha2, 2) +
                  std::pow(e.beta - t.beta, 2)) /
                 4.0;
  });
  const double mle_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  double mle_mse = 0.0;
  std::size_t non_converged = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    mle_mse += mle_err[i];
    if (!mle_conv[i]) ++non_converged;
  }
  mle_mse /= static_cast<double>(ds.size());

  json doc{{"n_paths", ds.size()},
           {"length", ds.length},
           {"mse", {{"nn", nn_mse}, {"mle", mle_mse}}},
           {"time_per_path_seconds",
            {{"nn", pred.per_path_seconds},
             {"mle", mle_seconds / static_cast<double>(ds.size())}}},
           {"mse_ratio_nn_over_mle", nn_mse / mle_mse},
           {"time_ratio_nn_over_mle",
            pred.per_path_seconds /
                (mle_seconds / static_cast<double>(ds.size()))},
           {"mle_non_converged", non_converged}};
  const std::string path = out_path(g, out);
  if (path.empty() || path == "-") {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::ofstream fout(path);
    if (!fout) throw std::runtime_error("cannot write: " + path);
    fout << doc.dump(2) << "\n";
    manifest.add_output(path);
  }
  manifest.set_config(json{{"dataset", dataset_path},
                           {"model", model_path},
                           {"manifest_check", !no_manifest_check}});
  manifest.write(path == "-" ? "" : path, g.out_dir);
  return 0;
}

int cmd_stream(const GlobalOpts& g, const std::string& quotes_path,
               const std::string& method, const std::string& model_path,
               std::size_t window, std::size_t stride, double dt,
               double tick_size, bool with_rv, double annualization,
               const std::string& out) {
  if (method != "mle" && method != "nn")
    throw std::invalid_argument("--method must be mle or nn");
  if (method == "nn" && model_path.empty())
    throw std::invalid_argument("--model is required with --method nn");
  if (stride == 0) stride = std::max<std::size_t>(1, window / 10);

  RunManifest manifest("stream", g.seed, g.threads);
  std::optional<LstmEstimator> model;
  if (method == "nn") {
    manifest.add_input(model_path);
    model = load_model(model_path);
  }

  std::ifstream file;
  std::istream* in = &std::cin;
  if (quotes_path != "-") {
    file.open(quotes_path);
    if (!file) throw std::runtime_error("cannot open: " + quotes_path);
    in = &file;
    manifest.add_input(quotes_path);
  }

  const std::string path = out_path(g, out);
  std::ofstream fout;
  std::ostream* os = &std::cout;
  if (!path.empty() && path != "-") {
    fout.open(path);
    if (!fout) throw std::runtime_error("cannot write: " + path);
    os = &fout;
  }
  *os << "end_time,mu,alpha1,alpha2,beta,branching,hawkes_vol_per_sec,"
         "hawkes_vol_annual,hawkes_vol_annual_rel,realized_vol_annual\n";

  MidPriceFilter filter(IngestConfig{dt, tick_size});
  std::vector<MarkedEvent> events;
  std::vector<std::string> warnings;
  std::size_t next_emit = window;
  std::size_t rows = 0;
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  double last_end_time = -1.0;

  // Estimation for one completed window; everything it needs is snapshotted
  // at enqueue time, so it can run on a pool thread.
  const VolConfig vc{tick_size, 1.0, annualization};
  auto make_row = [&, method](EventSequence win, double end_wall,
                              double mid_now,
                              std::vector<double> prices) -> std::string {
    HawkesParams params;
    if (method == "mle")
      params = fit_mle(win).params;
    else
      params = forward(*model, features_from_events(win));

    MarkMoments moments = unit_marks();
    try {
      moments = estimate_mark_moments(win);
    } catch (const std::exception&) {
      std::fprintf(stderr,
                   "stream: window ending %.3f has one-sided moves; using "
                   "unit marks\n",
                   end_wall);
    }
    const double vol_sec = hawkes_volatility(params, moments, vc);
    const double vol_ann = hawkes_volatility_annualized(params, moments, vc);
    const double vol_ann_rel = mid_now > 0.0 ? vol_ann / mid_now : 0.0;

    std::string rv_text;
    if (with_rv && prices.size() >= 2) {
      VolConfig rc;
      rc.annualization = annualization;
      rv_text = fmt17(realized_volatility(
          prices, static_cast<double>(prices.size() - 1), rc));
    }
    char row[512];
    std::snprintf(row, sizeof(row),
                  "%.9f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%s\n",
                  end_wall, params.mu, params.alpha1, params.alpha2,
                  params.beta, branching_ratio(params), vol_sec, vol_ann,
                  vol_ann_rel, rv_text.c_str());
    return row;
  };

  auto emit = [&](const std::string& row) {
    *os << row;
    os->flush();
    const double end_wall = std::stod(row.substr(0, row.find(',')));
    if (end_wall <= last_end_time)
      throw NumericalError("stream: non-increasing window end time");
    last_end_time = end_wall;
    ++rows;
  };

  // Opt-in estimator pool: jobs complete out of order, rows emit in order.
  std::deque<std::future<std::string>> inflight;
  auto drain_inflight = [&](std::size_t keep) {
    while (inflight.size() > keep) {
      emit(inflight.front().get());
      inflight.pop_front();
    }
  };

  auto on_window_complete = [&](std::size_t end) {
    const std::size_t start = end - window;
    const double base = start > 0 ? events[start - 1].time : 0.0;
    EventSequence win;
    win.events.reserve(window);
    for (std::size_t i = start; i < end; ++i) {
      MarkedEvent e = events[i];
      e.time -= base;
      win.events.push_back(e);
    }
    win.horizon = win.events.back().time;
    const double end_wall = events[end - 1].time;
    const double mid_now = filter.mid_at(end_wall);
    std::vector<double> prices;
    if (with_rv)
      for (double t = base; t <= end_wall + 1e-12; t += 1.0) {
        const double m = filter.mid_at(t);
        if (m > 0.0) prices.push_back(m);
      }
    if (g.threads <= 1) {
      emit(make_row(std::move(win), end_wall, mid_now, std::move(prices)));
    } else {
      inflight.push_back(std::async(std::launch::async, make_row,
                                    std::move(win), end_wall, mid_now,
                                    std::move(prices)));
      drain_inflight(static_cast<std::size_t>(g.threads) - 1);
    }
  };

  while (std::getline(*in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!header_seen && line.rfind("timestamp", 0) == 0) {
      header_seen = true;
      continue;
    }
    header_seen = true;
    try {
      std::istringstream ss(line);
      std::string t, b, a;
      if (!std::getline(ss, t, ',') || !std::getline(ss, b, ',') ||
          !std::getline(ss, a, ','))
        throw std::runtime_error("expected timestamp,bid,ask");
      const TickRecord rec{std::stod(t), std::stod(b), std::stod(a)};
      filter.push(rec, events, warnings);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "stream: skipping line %zu: %s\n", lineno,
                   e.what());
      continue;
    }
    for (const auto& w : warnings)
      std::fprintf(stderr, "stream: warning: %s\n", w.c_str());
    warnings.clear();

    while (events.size() >= next_emit) {
      on_window_complete(next_emit);
      next_emit += stride;
    }
  }
  drain_inflight(0);

  manifest.set_config(json{{"quotes", quotes_path},
                           {"method", method},
                           {"model", model_path},
                           {"window", window},
                           {"stride", stride},
                           {"dt", dt},
                           {"tick_size", tick_size},
                           {"rv", with_rv},
                           {"annualization", annualization}});
  manifest.set_extra("rows", rows);
  manifest.set_extra("events_seen", events.size());
  if (!path.empty() && path != "-") manifest.add_output(path);
  manifest.write(path == "-" ? "" : path, g.out_dir);
  std::fprintf(stderr, "stream: %zu windows emitted\n", rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Bivariate symmetric Hawkes model of tick-level price moves: "
      "simulation, MLE and LSTM estimation, closed-form volatility, tick "
      "ingestion, and sliding-window streaming."};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags override");

  GlobalOpts g;
  app.add_option("--seed", g.seed, "base RNG seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads")
      ->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "directory for relative output paths")
      ->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "simulate one event sequence");
  HawkesParams sim_params;
  std::optional<double> sim_horizon;
  std::optional<std::size_t> sim_events;
  std::string sim_law = "constant", sim_out = "events.csv";
  int sim_mark_value = 1;
  double sim_mark_p = 0.5;
  sim->add_option("--mu", sim_params.mu)->required();
  sim->add_option("--alpha1", sim_params.alpha1)->required();
  sim->add_option("--alpha2", sim_params.alpha2)->required();
  sim->add_option("--beta", sim_params.beta)->required();
  sim->add_option("--horizon", sim_horizon, "stop at T seconds");
  sim->add_option("--events", sim_events, "stop after K events");
  sim->add_option("--mark-law", sim_law, "constant | geometric");
  sim->add_option("--mark-value", sim_mark_value, "constant mark size");
  sim->add_option("--mark-p", sim_mark_p, "geometric success probability");
  sim->add_option("--out", sim_out, "event CSV path");

  auto* mk =
      app.add_subcommand("make-dataset", "generate a labeled training dataset");
  std::size_t mk_paths = 1000, mk_length = 2000;
  std::string mk_out = "data.hwkd";
  bool mk_csv = false;
  SamplerFlags mk_sampler;
  mk->add_option("--n-paths", mk_paths)->required();
  mk->add_option("--length", mk_length, "events per path (L)")
      ->capture_default_str();
  mk->add_option("--out", mk_out)->capture_default_str();
  mk->add_flag("--csv", mk_csv, "also export debug CSVs");
  mk_sampler.attach(mk);

  auto* tr = app.add_subcommand("train", "train the LSTM estimator");
  std::string tr_dataset, tr_out = "model.hwkn", tr_log;
  TrainConfig tr_cfg;
  tr->add_option("--dataset", tr_dataset)->required();
  tr->add_option("--epochs", tr_cfg.epochs)->capture_default_str();
  tr->add_option("--batch", tr_cfg.batch_size)->capture_default_str();
  tr->add_option("--lr", tr_cfg.learning_rate)->capture_default_str();
  tr->add_option("--val-fraction", tr_cfg.validation_fraction)
      ->capture_default_str();
  tr->add_flag("--verbose", tr_cfg.verbose, "per-epoch progress on stderr");
  tr->add_option("--out", tr_out)->capture_default_str();
  tr->add_option("--log", tr_log, "per-epoch CSV log path");

  auto* te = app.add_subcommand(
      "train-empirical", "train on real segments labeled by their MLE fits");
  std::string te_events, te_out = "model.hwkn";
  std::size_t te_window = 2000, te_stride = 0;
  TrainConfig te_cfg;
  EmpiricalTrainOptions te_opt;
  SamplerFlags te_sampler;
  te->add_option("--events", te_events)->required();
  te->add_option("--window", te_window, "events per segment (L)")
      ->capture_default_str();
  te->add_option("--stride", te_stride, "segment stride (default window)");
  te->add_option("--empirical-fraction", te_opt.empirical_fraction,
                 "fraction of the training set from real segments")
      ->capture_default_str();
  te->add_option("--sim-paths", te_opt.sim_paths,
                 "simulated paths when the fraction is 0");
  te->add_option("--sim-seed", te_opt.sim_seed)->capture_default_str();
  te->add_option("--min-segments", te_opt.min_segments)->capture_default_str();
  te->add_option("--epochs", te_cfg.epochs)->capture_default_str();
  te->add_option("--batch", te_cfg.batch_size)->capture_default_str();
  te->add_option("--lr", te_cfg.learning_rate)->capture_default_str();
  te->add_option("--val-fraction", te_cfg.validation_fraction)
      ->capture_default_str();
  te->add_flag("--verbose", te_cfg.verbose);
  te->add_option("--out", te_out)->capture_default_str();
  te_sampler.attach(te);

  auto* est =
      app.add_subcommand("estimate", "estimate parameters from an event CSV");
  std::string est_method = "mle", est_input, est_init, est_model,
              est_out = "fit.json";
  std::optional<double> est_horizon;
  est->add_option("--method", est_method, "mle | nn")->capture_default_str();
  est->add_option("--input", est_input)->required();
  est->add_option("--init", est_init, "mu,alpha1,alpha2,beta");
  est->add_option("--model", est_model, "model file for --method nn");
  est->add_option("--horizon", est_horizon,
                  "window length T (default: last event time)");
  est->add_option("--out", est_out)->capture_default_str();

  auto* vol = app.add_subcommand("vol", "closed-form volatility from a fit");
  std::string vol_params, vol_marks, vol_out = "-";
  double vol_tick = 0.01, vol_horizon = 1.0, vol_annual = kSecondsPerTradingYear;
  vol->add_option("--params", vol_params, "fit JSON")->required();
  vol->add_option("--marks", vol_marks,
                  "event CSV for empirical mark moments (default unit)");
  vol->add_option("--tick-size", vol_tick)->capture_default_str();
  vol->add_option("--horizon", vol_horizon, "accrual horizon seconds")
      ->capture_default_str();
  vol->add_option("--annualization", vol_annual, "seconds per trading year")
      ->capture_default_str();
  vol->add_option("--out", vol_out, "JSON path or - for stdout")
      ->capture_default_str();

  auto* rv = app.add_subcommand("rv", "realized volatility benchmark");
  std::string rv_prices, rv_grid = "1s", rv_out = "-";
  double rv_annual = kSecondsPerTradingYear;
  rv->add_option("--prices", rv_prices, "CSV: timestamp,price")->required();
  rv->add_option("--grid", rv_grid, "sampling grid, e.g. 1s")
      ->capture_default_str();
  rv->add_option("--annualization", rv_annual)->capture_default_str();
  rv->add_option("--out", rv_out)->capture_default_str();

  auto* ing =
      app.add_subcommand("ingest", "filter a quote stream into events");
  std::string ing_quotes, ing_out = "events.csv";
  double ing_dt = 0.1, ing_tick = 0.01;
  ing->add_option("--quotes", ing_quotes)->required();
  ing->add_option("--dt", ing_dt, "mid sampling interval seconds")
      ->capture_default_str();
  ing->add_option("--tick-size", ing_tick)->capture_default_str();
  ing->add_option("--out", ing_out)->capture_default_str();

  auto* st = app.add_subcommand(
      "study", "sampling distribution of the estimators at fixed parameters");
  HawkesParams st_params{0.3, 0.4, 0.7, 1.5};
  std::size_t st_paths = 100, st_length = 2000;
  std::string st_methods = "mle", st_model, st_init = "truth",
              st_out = "study.json";
  st->add_option("--mu", st_params.mu)->capture_default_str();
  st->add_option("--alpha1", st_params.alpha1)->capture_default_str();
  st->add_option("--alpha2", st_params.alpha2)->capture_default_str();
  st->add_option("--beta", st_params.beta)->capture_default_str();
  st->add_option("--n-paths", st_paths)->capture_default_str();
  st->add_option("--length", st_length)->capture_default_str();
  st->add_option("--methods", st_methods, "comma list: mle,nn")
      ->capture_default_str();
  st->add_option("--model", st_model);
  st->add_option("--init", st_init, "truth | auto")->capture_default_str();
  st->add_option("--out", st_out)->capture_default_str();

  auto* cp = app.add_subcommand(
      "compare", "MSE and timing of NN vs MLE on a held-out dataset");
  std::string cp_dataset, cp_model, cp_out = "-";
  bool cp_nocheck = false;
  cp->add_option("--dataset", cp_dataset)->required();
  cp->add_option("--model", cp_model)->required();
  cp->add_flag("--no-manifest-check", cp_nocheck,
               "skip the train/test overlap check");
  cp->add_option("--out", cp_out)->capture_default_str();

  auto* sm = app.add_subcommand(
      "stream", "sliding-window estimation over a quote stream");
  std::string sm_quotes, sm_method = "nn", sm_model, sm_out = "-";
  std::size_t sm_window = 2000, sm_stride = 0;
  double sm_dt = 0.1, sm_tick = 0.01, sm_annual = kSecondsPerTradingYear;
  bool sm_rv = false;
  sm->add_option("--quotes", sm_quotes, "quote CSV path or - for stdin")
      ->required();
  sm->add_option("--method", sm_method, "nn | mle")->capture_default_str();
  sm->add_option("--model", sm_model);
  sm->add_option("--window", sm_window, "events per window (L)")
      ->capture_default_str();
  sm->add_option("--stride", sm_stride,
                 "events between windows (default L/10)");
  sm->add_option("--dt", sm_dt)->capture_default_str();
  sm->add_option("--tick-size", sm_tick)->capture_default_str();
  sm->add_flag("--rv", sm_rv, "also emit realized volatility per window");
  sm->add_option("--annualization", sm_annual)->capture_default_str();
  sm->add_option("--out", sm_out, "CSV path or - for stdout")
      ->capture_default_str();

  // Let --seed/--threads/--out-dir appear after the subcommand name too.
  for (auto* s : app.get_subcommands([](const CLI::App*) { return true; }))
    s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ensure_out_dir(g);
    if (sim->parsed())
      return cmd_simulate(g, sim_params, sim_horizon, sim_events, sim_law,
                          sim_mark_value, sim_mark_p, sim_out);
    if (mk->parsed())
      return cmd_make_dataset(g, mk_paths, mk_length, mk_sampler, mk_out,
                              mk_csv);
    if (tr->parsed()) return cmd_train(g, tr_dataset, tr_cfg, tr_out, tr_log);
    if (te->parsed())
      return cmd_train_empirical(g, te_events, te_window, te_stride, te_cfg,
                                 te_opt, te_sampler, te_out);
    if (est->parsed())
      return cmd_estimate(g, est_method, est_input, est_init, est_model,
                          est_horizon, est_out);
    if (vol->parsed())
      return cmd_vol(g, vol_params, vol_marks, vol_tick, vol_horizon,
                     vol_annual, vol_out);
    if (rv->parsed()) return cmd_rv(g, rv_prices, rv_grid, rv_annual, rv_out);
    if (ing->parsed())
      return cmd_ingest(g, ing_quotes, ing_dt, ing_tick, ing_out);
    if (st->parsed())
      return cmd_study(g, st_params, st_paths, st_length, st_methods, st_model,
                       st_init, st_out);
    if (cp->parsed())
      return cmd_compare(g, cp_dataset, cp_model, cp_nocheck, cp_out);
    if (sm->parsed())
      return cmd_stream(g, sm_quotes, sm_method, sm_model, sm_window,
                        sm_stride, sm_dt, sm_tick, sm_rv, sm_annual, sm_out);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error (numerical): %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
