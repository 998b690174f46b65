// End-to-end checks of the hawkes binary: pipelines, manifests, exit codes,
// determinism, config files.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

#ifndef HAWKES_CLI_PATH
#error "HAWKES_CLI_PATH must point at the built binary"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hawkes_cli_test_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

int run(const std::string& args) {
  const std::string cmd = std::string(HAWKES_CLI_PATH) + " " + args +
                          " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("simulate -> estimate -> vol pipeline with manifests") {
  TempDir dir;
  const auto events = dir.file("events.csv");
  const auto fit = dir.file("fit.json");
  const auto vol = dir.file("vol.json");

  REQUIRE(run("simulate --mu 0.3 --alpha1 0.4 --alpha2 0.7 --beta 1.5 "
              "--events 2000 --seed 42 --out " + events) == 0);
  REQUIRE(fs::exists(events));
  REQUIRE(fs::exists(events + ".manifest.json"));

  REQUIRE(run("estimate --method mle --input " + events + " --out " + fit) ==
          0);
  json fit_doc = json::parse(slurp(fit));
  CHECK(fit_doc["method"] == "mle");
  CHECK(fit_doc["converged"] == true);
  // sane recovery on a 2000-event path from the fixed parameters
  CHECK(std::abs(fit_doc["mu"].get<double>() - 0.3) < 0.2);
  CHECK(std::abs(fit_doc["beta"].get<double>() - 1.5) < 0.8);

  REQUIRE(run("vol --params " + fit + " --marks " + events +
              " --tick-size 0.01 --out " + vol) == 0);
  json vol_doc = json::parse(slurp(vol));
  CHECK(vol_doc["hawkes_vol_per_sec_sqrt"].get<double>() > 0.0);
  CHECK(vol_doc["hawkes_vol_annualized"].get<double>() >
        vol_doc["hawkes_vol_per_sec_sqrt"].get<double>());

  const json manifest = json::parse(slurp(fit + ".manifest.json"));
  CHECK(manifest["command"] == "estimate");
  CHECK(manifest["inputs"][0]["path"] == events);
}

TEST_CASE("fit JSON round-trips the parameters bit-exactly") {
  TempDir dir;
  const auto events = dir.file("events.csv");
  const auto fit1 = dir.file("fit1.json");
  const auto fit2 = dir.file("fit2.json");
  REQUIRE(run("simulate --mu 0.4 --alpha1 0.3 --alpha2 0.2 --beta 2.0 "
              "--events 800 --seed 7 --out " + events) == 0);
  REQUIRE(run("estimate --method mle --input " + events + " --out " + fit1) ==
          0);
  // Re-estimating with the parsed parameters as init must parse them back
  // bit-exactly; the decimal strings carry 17 significant digits.
  json a = json::parse(slurp(fit1));
  char init[256];
  std::snprintf(init, sizeof(init), "%.17g,%.17g,%.17g,%.17g",
                a["mu"].get<double>(), a["alpha1"].get<double>(),
                a["alpha2"].get<double>(), a["beta"].get<double>());
  REQUIRE(run("estimate --method mle --input " + events + " --init " + init +
              " --out " + fit2) == 0);
  json b = json::parse(slurp(fit2));
  CHECK(a["mu"].get<double>() == b["mu"].get<double>());
  CHECK(a["beta"].get<double>() == b["beta"].get<double>());
}

TEST_CASE("simulate is deterministic given the seed") {
  TempDir dir;
  const auto a = dir.file("a.csv");
  const auto b = dir.file("b.csv");
  REQUIRE(run("simulate --mu 0.3 --alpha1 0.4 --alpha2 0.7 --beta 1.5 "
              "--events 500 --seed 99 --out " + a) == 0);
  REQUIRE(run("simulate --mu 0.3 --alpha1 0.4 --alpha2 0.7 --beta 1.5 "
              "--events 500 --seed 99 --out " + b) == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("exit codes: input errors are 2") {
  TempDir dir;
  CHECK(run("estimate --method mle --input " + dir.file("missing.csv")) == 2);
  CHECK(run("simulate --mu 0.3 --alpha1 0.9 --alpha2 0.7 --beta 1.5 "
            "--horizon 10 --out " + dir.file("x.csv")) == 2);  // non-stationary
  CHECK(run("nonsense-subcommand") == 2);
}

TEST_CASE("config file sets flags; explicit flags override") {
  TempDir dir;
  const auto cfg = dir.file("run.cfg");
  {
    std::ofstream out(cfg);
    out << "seed=5\n";
  }
  const auto a = dir.file("a.csv");
  const auto b = dir.file("b.csv");
  const auto c = dir.file("c.csv");
  REQUIRE(run("--config " + cfg +
              " simulate --mu 0.3 --alpha1 0.1 --alpha2 0.1 --beta 1.0 "
              "--events 100 --out " + a) == 0);
  REQUIRE(run("--seed 5 simulate --mu 0.3 --alpha1 0.1 --alpha2 0.1 "
              "--beta 1.0 --events 100 --out " + b) == 0);
  CHECK(slurp(a) == slurp(b));
  // flag wins over config
  REQUIRE(run("--config " + cfg +
              " --seed 6 simulate --mu 0.3 --alpha1 0.1 --alpha2 0.1 "
              "--beta 1.0 --events 100 --out " + c) == 0);
  CHECK(slurp(a) != slurp(c));
}

TEST_CASE("dataset, training, compare and overlap detection") {
  TempDir dir;
  const auto train_ds = dir.file("train.hwkd");
  const auto test_ds = dir.file("test.hwkd");
  const auto model = dir.file("model.hwkn");
  const auto cmp = dir.file("cmp.json");

  REQUIRE(run("make-dataset --n-paths 120 --length 80 --seed 301 --out " +
              train_ds) == 0);
  REQUIRE(run("make-dataset --n-paths 40 --length 80 --seed 302 --out " +
              test_ds) == 0);
  REQUIRE(run("train --dataset " + train_ds +
              " --epochs 3 --batch 32 --seed 1 --out " + model + " --log " +
              dir.file("log.csv")) == 0);
  REQUIRE(fs::exists(model + ".manifest.json"));
  {
    std::ifstream log(dir.file("log.csv"));
    std::string header;
    REQUIRE(std::getline(log, header));
    CHECK(header == "epoch,train_mse,val_mse");
    int epochs = 0;
    std::string row;
    while (std::getline(log, row)) ++epochs;
    CHECK(epochs == 3);
  }

  REQUIRE(run("compare --dataset " + test_ds + " --model " + model +
              " --out " + cmp) == 0);
  json doc = json::parse(slurp(cmp));
  CHECK(doc["n_paths"] == 40);
  CHECK(doc["mse"]["nn"].get<double>() > 0.0);
  CHECK(doc["mse"]["mle"].get<double>() > 0.0);

  // nn estimation through the CLI produces valid, admissible output
  const auto events = dir.file("ev.csv");
  const auto nn_fit = dir.file("nn_fit.json");
  REQUIRE(run("simulate --mu 0.3 --alpha1 0.4 --alpha2 0.7 --beta 1.5 "
              "--events 80 --seed 9 --out " + events) == 0);
  REQUIRE(run("estimate --method nn --model " + model + " --input " + events +
              " --out " + nn_fit) == 0);
  json nn_doc = json::parse(slurp(nn_fit));
  CHECK(nn_doc["method"] == "nn");
  CHECK(nn_doc["mu"].get<double>() > 0.0);
  CHECK(nn_doc["branching_ratio"].get<double>() < 1.0);
  CHECK(nn_doc["grad_inf_norm"].is_null());

  // overlap: identical file and identical generation seed both refuse
  CHECK(run("compare --dataset " + train_ds + " --model " + model) == 2);
  const auto clone = dir.file("clone.hwkd");
  REQUIRE(run("make-dataset --n-paths 120 --length 80 --seed 301 --out " +
              clone) == 0);
  CHECK(run("compare --dataset " + clone + " --model " + model) == 2);
  CHECK(run("compare --dataset " + clone + " --model " + model +
            " --no-manifest-check --out " + dir.file("c2.json")) == 0);
}

TEST_CASE("study emits both method tables") {
  TempDir dir;
  const auto train_ds = dir.file("train.hwkd");
  const auto model = dir.file("model.hwkn");
  const auto study = dir.file("study.json");
  REQUIRE(run("make-dataset --n-paths 60 --length 60 --seed 303 --out " +
              train_ds) == 0);
  REQUIRE(run("train --dataset " + train_ds +
              " --epochs 2 --batch 32 --seed 1 --out " + model) == 0);
  REQUIRE(run("study --n-paths 8 --length 200 --methods mle,nn --model " +
              model + " --seed 304 --out " + study) == 0);
  json doc = json::parse(slurp(study));
  CHECK(doc["methods"]["mle"]["mean"]["mu"].get<double>() > 0.0);
  CHECK(doc["methods"]["nn"]["mean"]["mu"].get<double>() > 0.0);
  CHECK(doc["methods"]["mle"]["non_converged_excluded"].get<int>() >= 0);

  // n = 1: the SD column is marked absent
  const auto study1 = dir.file("study1.json");
  REQUIRE(run("study --n-paths 1 --length 120 --methods mle --seed 305 "
              "--out " + study1) == 0);
  json one = json::parse(slurp(study1));
  CHECK(one["methods"]["mle"]["sd"]["mu"].is_null());
}

TEST_CASE("ingest and stream work end to end") {
  TempDir dir;
  const auto events = dir.file("events.csv");
  const auto quotes = dir.file("quotes.csv");
  const auto recovered = dir.file("recovered.csv");
  const auto stream_out = dir.file("stream.csv");

  REQUIRE(run("simulate --mu 0.25 --alpha1 0.15 --alpha2 0.2 --beta 1.2 "
              "--horizon 2500 --seed 401 --out " + events) == 0);

  // synthesize quotes: one record per event plus open/close
  {
    std::ifstream in(events);
    std::string line;
    std::getline(in, line);
    std::ofstream out(quotes);
    out << "timestamp,bid,ask\n";
    out << "0.000000000,99.990000000,100.010000000\n";
    double price = 100.0;
    double last_t = 0.0;
    while (std::getline(in, line)) {
      std::istringstream ss(line);
      std::string t, d, m;
      std::getline(ss, t, ',');
      std::getline(ss, d, ',');
      std::getline(ss, m, ',');
      price += (d == "1" ? 1.0 : -1.0) * 0.01 * std::stod(m);
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9f\n", std::stod(t),
                    price - 0.01, price + 0.01);
      out << buf;
      last_t = std::stod(t);
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9f\n", last_t + 2.0,
                  price - 0.01, price + 0.01);
    out << buf;
  }

  REQUIRE(run("ingest --quotes " + quotes +
              " --dt 0.1 --tick-size 0.01 --out " + recovered) == 0);
  REQUIRE(fs::exists(recovered));

  REQUIRE(run("stream --quotes " + quotes +
              " --method mle --window 150 --stride 150 --rv --out " +
              stream_out) == 0);
  std::ifstream in(stream_out);
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header.rfind("end_time,mu,alpha1,alpha2,beta", 0) == 0);
  double prev_end = -1.0;
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    const double end_time = std::stod(line.substr(0, line.find(',')));
    CHECK(end_time > prev_end);
    prev_end = end_time;
    ++rows;
  }
  CHECK(rows >= 2);

  // empty quote stream: no rows, exit 0
  const auto empty = dir.file("empty.csv");
  {
    std::ofstream out(empty);
    out << "timestamp,bid,ask\n";
  }
  const auto empty_out = dir.file("empty_stream.csv");
  CHECK(run("stream --quotes " + empty + " --method mle --window 100 --out " +
            empty_out) == 0);
  std::ifstream ein(empty_out);
  int lines = 0;
  while (std::getline(ein, line)) ++lines;
  CHECK(lines == 1);  // header only
}

TEST_CASE("stream thread pool: identical output, order preserved") {
  TempDir dir;
  const auto quotes = dir.file("quotes.csv");
  {
    // simple mid-price walk, ~1 move per second for 900 s
    std::srand(77);
    std::ofstream out(quotes);
    out << "timestamp,bid,ask\n";
    double price = 100.0, t = 0.0;
    out << "0.000000000,99.990000000,100.010000000\n";
    while (t < 900.0) {
      t += 0.3 + (std::rand() % 1000) / 500.0;
      price += (std::rand() % 2 ? 0.01 : -0.01);
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9f\n", t, price - 0.01,
                    price + 0.01);
      out << buf;
    }
  }
  const auto a = dir.file("a.csv");
  const auto b = dir.file("b.csv");
  REQUIRE(run("stream --quotes " + quotes +
              " --method mle --window 120 --stride 60 --out " + a) == 0);
  REQUIRE(run("--threads 3 stream --quotes " + quotes +
              " --method mle --window 120 --stride 60 --out " + b) == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("rv command") {
  TempDir dir;
  const auto prices = dir.file("prices.csv");
  {
    std::ofstream out(prices);
    out << "timestamp,price\n";
    for (int i = 0; i <= 600; ++i)
      out << i << "," << 100.0 * std::exp(0.0001 * (i % 2)) << "\n";
  }
  const auto rv = dir.file("rv.json");
  REQUIRE(run("rv --prices " + prices + " --grid 1s --out " + rv) == 0);
  json doc = json::parse(slurp(rv));
  CHECK(doc["realized_vol_annualized"].get<double>() > 0.0);
  CHECK(doc["grid_seconds"] == 1.0);
}
