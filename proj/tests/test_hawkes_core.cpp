#include "hawkesnn/core.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"

using namespace hawkes;

namespace {
const HawkesParams kStudyParams{0.3, 0.4, 0.7, 1.5};
}

TEST_CASE("intensity of an empty sequence is the baseline") {
  EventSequence seq;
  seq.horizon = 10.0;
  const auto [l1, l2] = intensity_at(kStudyParams, seq, 5.0);
  CHECK(l1 == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(l2 == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("single event kernel, mark ignored") {
  EventSequence seq;
  seq.events.push_back(MarkedEvent{1.0, Direction::Up, 3});
  seq.horizon = 10.0;
  const double decay = std::exp(-1.5);
  const auto [l1, l2] = intensity_at(kStudyParams, seq, 2.0);
  CHECK(l1 == doctest::Approx(0.3 + 0.4 * decay).epsilon(1e-14));
  CHECK(l2 == doctest::Approx(0.3 + 0.7 * decay).epsilon(1e-14));
}

TEST_CASE("left limit: event at exactly t excluded") {
  EventSequence seq;
  seq.events.push_back(MarkedEvent{1.0, Direction::Up, 1});
  seq.horizon = 2.0;
  const auto [l1, l2] = intensity_at(kStudyParams, seq, 1.0);
  CHECK(l1 == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(l2 == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("recursive evaluation matches the direct double sum") {
  Rng rng(7001);
  for (int rep = 0; rep < 40; ++rep) {
    const auto params = oracle::random_stationary_params(rng);
    const std::size_t n = 2 + rng.uniform_index(999);
    const auto seq = oracle::random_sequence(rng, n);
    const double t = rng.uniform(0.0, seq.horizon);
    const auto [r1, r2] = intensity_at(params, seq, t);
    const auto [d1, d2] = oracle::intensity_direct(params, seq, t);
    CHECK(std::abs(r1 - d1) <= 1e-12 * std::max(1.0, std::abs(d1)));
    CHECK(std::abs(r2 - d2) <= 1e-12 * std::max(1.0, std::abs(d2)));
  }
}

TEST_CASE("intensity is invariant under mark values") {
  Rng rng(7002);
  const auto params = oracle::random_stationary_params(rng);
  auto seq = oracle::random_sequence(rng, 50);
  const double t = seq.horizon * 0.7;
  const auto before = intensity_at(params, seq, t);
  for (auto& e : seq.events) e.mark = 1 + (e.mark * 7) % 13;
  const auto after = intensity_at(params, seq, t);
  CHECK(before.first == after.first);
  CHECK(before.second == after.second);
}

TEST_CASE("branching ratio") {
  CHECK(branching_ratio(kStudyParams) == doctest::Approx(1.1 / 1.5));
  CHECK(branching_ratio({0.4, 0.0, 0.0, 2.0}) == 0.0);
  const HawkesParams boundary{0.4, 0.5, 0.5, 1.0};
  CHECK(branching_ratio(boundary) == doctest::Approx(1.0));
  CHECK_FALSE(validate(boundary).ok());
}

TEST_CASE("branching ratio is symmetric in alpha1 <-> alpha2") {
  Rng rng(7003);
  for (int rep = 0; rep < 100; ++rep) {
    auto p = oracle::random_stationary_params(rng);
    auto q = p;
    std::swap(q.alpha1, q.alpha2);
    CHECK(branching_ratio(p) == branching_ratio(q));
  }
}

TEST_CASE("validate") {
  CHECK(validate(kStudyParams).ok());
  CHECK_FALSE(validate({-0.1, 0.4, 0.7, 1.5}).ok());
  CHECK_FALSE(validate({0.3, 0.9, 0.7, 1.5}).ok());  // branching > 1
  CHECK_FALSE(validate({0.3, -0.4, 0.7, 1.5}).ok());
  CHECK_FALSE(validate({0.3, 0.4, 0.7, 0.0}).ok());
  // Poisson boundary is admissible.
  CHECK(validate({0.3, 0.0, 0.0, 1.5}).ok());
}

TEST_CASE("event sequences reject ties and disorder") {
  EventSequence seq;
  seq.events.push_back(MarkedEvent{1.0, Direction::Up, 1});
  seq.events.push_back(MarkedEvent{1.0, Direction::Down, 1});
  seq.horizon = 2.0;
  CHECK_THROWS_AS(seq.check(), std::invalid_argument);
  seq.events[1].time = 0.5;
  CHECK_THROWS_AS(seq.check(), std::invalid_argument);
  seq.events[1].time = 1.5;
  CHECK_NOTHROW(seq.check());
  seq.horizon = 1.0;  // behind the last event
  CHECK_THROWS_AS(seq.check(), std::invalid_argument);
}

TEST_CASE("event CSV round trip") {
  Rng rng(7004);
  const auto seq = oracle::random_sequence(rng, 64);
  const auto path = std::filesystem::temp_directory_path() / "events_rt.csv";
  write_events_csv(seq, path.string());
  const auto back = read_events_csv(path.string());
  REQUIRE(back.size() == seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK(back.events[i].time ==
          doctest::Approx(seq.events[i].time).epsilon(1e-9));
    CHECK(back.events[i].direction == seq.events[i].direction);
    CHECK(back.events[i].mark == seq.events[i].mark);
  }
  std::filesystem::remove(path);
}

TEST_CASE("event CSV rejects malformed input") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "events_bad.csv";
  {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    std::fputs("time,direction,mark\n0.5,3,1\n", f);
    std::fclose(f);
  }
  CHECK_THROWS(read_events_csv(path.string()));
  fs::remove(path);
}
