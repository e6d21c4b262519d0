#pragma once

// Synthetic benchmark: binary attributes, a DNF target and uniform label
// noise. Used by the pruning and ensemble acceptance checks and exposed
// through `mdt synth`.
//
//   target(x) = (b0 and b1 and b2) or (b3 and b4 and b5)
//
// b6 and b7 are irrelevant. Each label is flipped independently with
// probability `noise`. The class is `pos` when the target holds.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/error.hpp"

namespace mdt::synthetic {

/// Seeds used by the acceptance suite; fixed so results are reproducible.
inline constexpr std::array<std::uint64_t, 10> kBenchmarkSeeds = {1, 2, 3, 4, 5,
                                                                   6, 7, 8, 9, 10};

struct DnfConfig {
  std::size_t attributes = 8;
  double noise = 0.15;
  std::vector<std::vector<std::size_t>> terms = {{0, 1, 2}, {3, 4, 5}};
};

inline std::shared_ptr<const Schema> dnf_schema(std::size_t attributes = 8) {
  Schema s;
  s.class_labels = {"pos", "neg"};
  for (std::size_t a = 0; a < attributes; ++a)
    s.attributes.push_back({"b" + std::to_string(a), false, {"0", "1"}});
  return std::make_shared<const Schema>(std::move(s));
}

inline bool dnf_target(const Instance& inst,
                       const std::vector<std::vector<std::size_t>>& terms) {
  auto bit = [&](std::size_t a) { return std::get<Category>(inst.values[a]).index == 1; };
  return std::any_of(terms.begin(), terms.end(), [&](const auto& term) {
    return std::all_of(term.begin(), term.end(), bit);
  });
}

/// Appends `n` instances drawn from `rng`.
inline void draw_dnf(Dataset& out, std::size_t n, std::mt19937_64& rng, const DnfConfig& config) {
  const std::size_t attrs = out.schema->attribute_count();
  for (const auto& term : config.terms)
    for (const auto a : term)
      if (a >= attrs) throw Error(ErrorKind::BadCount, "DNF term uses a missing attribute");
  for (std::size_t i = 0; i < n; ++i) {
    Instance inst;
    inst.values.reserve(attrs);
    for (std::size_t a = 0; a < attrs; ++a) inst.values.emplace_back(Category{rng() >> 63});
    bool positive = dnf_target(inst, config.terms);
    if (uniform_unit(rng) < config.noise) positive = !positive;
    inst.label = positive ? 0 : 1;
    out.instances.push_back(std::move(inst));
  }
}

inline Dataset generate_dnf(std::size_t n, std::uint64_t seed, const DnfConfig& config = {}) {
  Dataset d{dnf_schema(config.attributes), {}};
  std::mt19937_64 rng(seed);
  draw_dnf(d, n, rng, config);
  return d;
}

/// 300 training and 1000 test instances from one seeded stream.
inline TrainTestSplit benchmark(std::uint64_t seed, std::size_t train = 300,
                                std::size_t test = 1000, const DnfConfig& config = {}) {
  TrainTestSplit out{Dataset{dnf_schema(config.attributes), {}}, Dataset{}};
  out.test.schema = out.train.schema;
  std::mt19937_64 rng(seed);
  draw_dnf(out.train, train, rng, config);
  draw_dnf(out.test, test, rng, config);
  return out;
}

}  // namespace mdt::synthetic
