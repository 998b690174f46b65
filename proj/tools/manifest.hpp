#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace hawkes::cli {

inline constexpr const char* kVersion = "0.1.0";

// FNV-1a over the file bytes, as a hex string. Used to tie models to the
// dataset they were trained on.
std::string file_fingerprint(const std::string& path);

// One manifest per run, written next to the primary output.
class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed, int threads);

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void add_input(const std::string& path);
  void add_output(const std::string& path) { outputs_.push_back(path); }
  void set_extra(const std::string& key, nlohmann::json value);

  // Writes <primary_output>.manifest.json, or <fallback> when the command
  // has no file output. Records wall time since construction.
  std::string write(const std::string& primary_output,
                    const std::string& fallback_dir) const;

 private:
  std::string command_;
  std::uint64_t seed_;
  int threads_;
  nlohmann::json config_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
  nlohmann::json extra_ = nlohmann::json::object();
  std::int64_t started_at_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace hawkes::cli
