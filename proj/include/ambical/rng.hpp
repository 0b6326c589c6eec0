#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ambical {

// Every random draw in the library flows through a named stream created
// here. Stream identity is (seed, purpose, index), so changing how many
// draws one consumer makes never perturbs another consumer. Sampling uses
// explicit arithmetic rather than std:: distributions, whose output is
// implementation defined; this keeps results byte-identical across
// compilers and thread counts.

namespace stream {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kMcDraw = 2;
inline constexpr std::uint64_t kAnnotation = 3;
inline constexpr std::uint64_t kMcSample = 4;
inline constexpr std::uint64_t kSubsample = 5;
inline constexpr std::uint64_t kToyData = 6;
inline constexpr std::uint64_t kToyLabel = 7;
inline constexpr std::uint64_t kToyTrain = 8;
inline constexpr std::uint64_t kGeneric = 9;
}  // namespace stream

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t purpose,
                                   std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Uniform in [0, 1) with 53 random bits.
inline double next_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). The modulo bias of a 64-bit draw is far below
// anything observable at the sample sizes used here.
inline int next_index(std::mt19937_64& rng, int n) {
  return static_cast<int>(rng() % static_cast<std::uint64_t>(n));
}

// Standard normal via Box-Muller; always consumes two uniforms.
inline double next_normal(std::mt19937_64& rng) {
  double u1 = 0.0;
  do {
    u1 = next_unit(rng);
  } while (u1 <= 0.0);
  const double u2 = next_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(6.283185307179586476925287 * u2);
}

// Inverse CDF draw from a probability vector. A one-hot vector always
// returns its hot index, independent of the uniform.
inline int sample_categorical(std::mt19937_64& rng,
                              const std::vector<double>& probs) {
  const double u = next_unit(rng);
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int k = 0; k + 1 < n; ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return n - 1;
}

// In-place Fisher-Yates shuffle driven by a named stream.
template <typename T>
void shuffle_stream(std::vector<T>& items, std::mt19937_64& rng) {
  for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
    const int j = next_index(rng, i + 1);
    std::swap(items[i], items[static_cast<std::size_t>(j)]);
  }
}

}  // namespace ambical
