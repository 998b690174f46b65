#include "manifest.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace hawkes::cli {

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001B3ULL;
    }
  }
  char out[19];
  std::snprintf(out, sizeof(out), "0x%016llx",
                static_cast<unsigned long long>(hash));
  return out;
}

RunManifest::RunManifest(std::string command, std::uint64_t seed, int threads)
    : command_(std::move(command)),
      seed_(seed),
      threads_(threads),
      started_at_(std::chrono::duration_cast<std::chrono::seconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count()),
      t0_(std::chrono::steady_clock::now()) {}

void RunManifest::add_input(const std::string& path) {
  inputs_.push_back({{"path", path}, {"fnv1a64", file_fingerprint(path)}});
}

void RunManifest::set_extra(const std::string& key, nlohmann::json value) {
  extra_[key] = std::move(value);
}

std::string RunManifest::write(const std::string& primary_output,
                               const std::string& fallback_dir) const {
  nlohmann::json doc;
  doc["command"] = command_;
  doc["version"] = kVersion;
  doc["seed"] = seed_;
  doc["threads"] = threads_;
  doc["config"] = config_;
  doc["inputs"] = inputs_;
  doc["outputs"] = outputs_;
  for (auto it = extra_.begin(); it != extra_.end(); ++it)
    doc[it.key()] = it.value();
  doc["started_at_unix"] = started_at_;
  doc["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
          .count();

  std::string path;
  if (!primary_output.empty()) {
    path = primary_output + ".manifest.json";
  } else {
    path = (std::filesystem::path(fallback_dir) /
            (command_ + ".manifest.json"))
               .string();
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << doc.dump(2) << "\n";
  return path;
}

}  // namespace hawkes::cli
