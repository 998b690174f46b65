#include "hawkesnn/dataset.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hawkes {

namespace {

constexpr char kMagic[4] = {'H', 'W', 'K', 'D'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "dataset container assumes a little-endian host");

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated or corrupt dataset: " + path);
  return v;
}

}  // namespace

void LabeledDataset::check() const {
  if (features.size() != targets.size())
    throw std::invalid_argument("feature/target cardinality mismatch");
  for (const auto& f : features) {
    if (f.inter_arrivals.size() != length ||
        f.directions.size() != length)
      throw std::invalid_argument("sequence length differs from L");
    for (double ia : f.inter_arrivals)
      if (!(ia >= 0.0))
        throw std::invalid_argument("negative inter-arrival");
  }
  for (const auto& t : targets)
    if (!validate(t).ok())
      throw std::invalid_argument("dataset target fails validation");
}

FeatureSequence features_from_events(const EventSequence& seq) {
  FeatureSequence f;
  f.inter_arrivals.reserve(seq.size());
  f.directions.reserve(seq.size());
  double prev = 0.0;
  for (const auto& e : seq.events) {
    f.inter_arrivals.push_back(e.time - prev);
    f.directions.push_back(e.direction);
    prev = e.time;
  }
  return f;
}

void write_dataset(const LabeledDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint64_t>(dataset.size()));
  write_raw(out, static_cast<std::uint64_t>(dataset.length));
  std::vector<std::uint8_t> dirs(dataset.length);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& f = dataset.features[i];
    out.write(reinterpret_cast<const char*>(f.inter_arrivals.data()),
              static_cast<std::streamsize>(sizeof(double) * dataset.length));
    for (std::size_t k = 0; k < dataset.length; ++k)
      dirs[k] = static_cast<std::uint8_t>(f.directions[k]);
    out.write(reinterpret_cast<const char*>(dirs.data()),
              static_cast<std::streamsize>(dataset.length));
    const auto& t = dataset.targets[i];
    const double target[4] = {t.mu, t.alpha1, t.alpha2, t.beta};
    out.write(reinterpret_cast<const char*>(target), sizeof(target));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

LabeledDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a HWKD dataset: " + path);
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error("unsupported dataset version " +
                             std::to_string(version) + ": " + path);
  const auto n_paths = read_raw<std::uint64_t>(in, path);
  const auto length = read_raw<std::uint64_t>(in, path);

  LabeledDataset d;
  d.length = static_cast<std::size_t>(length);
  d.features.resize(n_paths);
  d.targets.resize(n_paths);
  std::vector<std::uint8_t> dirs(d.length);
  for (std::uint64_t i = 0; i < n_paths; ++i) {
    auto& f = d.features[i];
    f.inter_arrivals.resize(d.length);
    in.read(reinterpret_cast<char*>(f.inter_arrivals.data()),
            static_cast<std::streamsize>(sizeof(double) * d.length));
    in.read(reinterpret_cast<char*>(dirs.data()),
            static_cast<std::streamsize>(d.length));
    if (!in) throw std::runtime_error("truncated or corrupt dataset: " + path);
    f.directions.resize(d.length);
    for (std::size_t k = 0; k < d.length; ++k) {
      if (dirs[k] != 1 && dirs[k] != 2)
        throw std::runtime_error("corrupt direction byte in: " + path);
      f.directions[k] = static_cast<Direction>(dirs[k]);
    }
    double target[4];
    in.read(reinterpret_cast<char*>(target), sizeof(target));
    if (!in) throw std::runtime_error("truncated or corrupt dataset: " + path);
    d.targets[i] = HawkesParams{target[0], target[1], target[2], target[3]};
  }
  d.check();
  return d;
}

void export_dataset_csv(const LabeledDataset& dataset,
                        const std::string& stem) {
  {
    std::ofstream out(stem + ".features.csv");
    if (!out) throw std::runtime_error("cannot open: " + stem);
    out << "path,step,inter_arrival,direction\n";
    char buf[64];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& f = dataset.features[i];
      for (std::size_t k = 0; k < dataset.length; ++k) {
        std::snprintf(buf, sizeof(buf), "%.9f", f.inter_arrivals[k]);
        out << i << ',' << k << ',' << buf << ','
            << static_cast<int>(f.directions[k]) << '\n';
      }
    }
  }
  std::ofstream out(stem + ".targets.csv");
  if (!out) throw std::runtime_error("cannot open: " + stem);
  out << "path,mu,alpha1,alpha2,beta\n";
  char buf[256];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& t = dataset.targets[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g", i, t.mu,
                  t.alpha1, t.alpha2, t.beta);
    out << buf << '\n';
  }
}

}  // namespace hawkes
