#pragma once

// Shared generators and brute-force oracles for the test suites. Everything
// here is seeded through the library's own stream helper so tests stay
// deterministic across platforms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ambical/core.hpp"
#include "ambical/rng.hpp"

namespace testutil {

inline std::vector<ambical::LogitVector> random_logits(int n, int k,
                                                       double scale,
                                                       std::uint64_t seed) {
  auto rng = ambical::make_stream(seed, ambical::stream::kGeneric, 0);
  std::vector<ambical::LogitVector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> z(static_cast<std::size_t>(k));
    for (auto& v : z) v = scale * ambical::next_normal(rng);
    out.emplace_back(std::move(z));
  }
  return out;
}

inline std::vector<ambical::Distribution> soften(
    const std::vector<ambical::LogitVector>& logits, double t) {
  std::vector<ambical::Distribution> out;
  out.reserve(logits.size());
  for (const auto& z : logits) out.push_back(ambical::softmax_t(z, t));
  return out;
}

/// One label per example drawn from the matching distribution.
inline std::vector<int> sample_labels(const std::vector<ambical::Distribution>& pi,
                                      std::uint64_t seed) {
  auto rng = ambical::make_stream(seed, ambical::stream::kGeneric, 1);
  std::vector<int> out;
  out.reserve(pi.size());
  for (const auto& p : pi) out.push_back(ambical::sample_categorical(rng, p.probs()));
  return out;
}

inline std::vector<int> voted_of(const std::vector<ambical::Distribution>& pi) {
  std::vector<int> out;
  out.reserve(pi.size());
  for (const auto& p : pi) out.push_back(ambical::voted_label(p));
  return out;
}

/// Random interior point of the K-simplex with every coordinate >= floor.
inline ambical::Distribution random_simplex(int k, std::mt19937_64& rng,
                                            double floor = 0.0) {
  for (;;) {
    std::vector<double> e(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (auto& v : e) {
      v = -std::log(std::max(1e-300, ambical::next_unit(rng)));
      sum += v;
    }
    for (auto& v : e) v /= sum;
    double lo = 1.0;
    for (double v : e) lo = std::min(lo, v);
    if (lo >= floor) return ambical::Distribution(std::move(e));
  }
}

/// Exhaustive weighted isotonic least squares over contiguous block
/// partitions. Only valid for small n (2^(n-1) partitions).
inline std::vector<double> brute_force_isotonic(const std::vector<double>& v,
                                                const std::vector<double>& w) {
  const int n = static_cast<int>(v.size());
  std::vector<double> best;
  double best_sse = ambical::kInf;
  const int masks = 1 << (n - 1);
  for (int mask = 0; mask < masks; ++mask) {
    std::vector<double> fit(static_cast<std::size_t>(n));
    int start = 0;
    double prev = -ambical::kInf;
    bool monotone = true;
    for (int i = 0; i < n; ++i) {
      const bool cut = (i == n - 1) || ((mask >> i) & 1);
      if (!cut) continue;
      double num = 0.0, den = 0.0;
      for (int j = start; j <= i; ++j) {
        num += w[static_cast<std::size_t>(j)] * v[static_cast<std::size_t>(j)];
        den += w[static_cast<std::size_t>(j)];
      }
      const double mean = num / den;
      if (mean < prev) {
        monotone = false;
        break;
      }
      for (int j = start; j <= i; ++j) fit[static_cast<std::size_t>(j)] = mean;
      prev = mean;
      start = i + 1;
    }
    if (!monotone) continue;
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = fit[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i)];
      sse += w[static_cast<std::size_t>(i)] * d * d;
    }
    if (sse < best_sse) {
      best_sse = sse;
      best = fit;
    }
  }
  return best;
}

struct TwoCluster {
  std::vector<ambical::LogitVector> logits;
  std::vector<ambical::Distribution> pi;
};

/// One unambiguous cluster (one-hot targets) plus one ambiguous cluster
/// where the annotators put mass q < 1 on the voted class while the model
/// is more confident than q. The construction under which temperature
/// scaling picks a strictly lower temperature than the soft-label fit.
inline TwoCluster two_cluster(std::uint64_t seed, int k = 3, double q = 0.7) {
  auto rng = ambical::make_stream(seed, ambical::stream::kGeneric, 2);
  TwoCluster out;
  const int n_clear = 120 + ambical::next_index(rng, 120);
  const int n_amb = 120 + ambical::next_index(rng, 120);

  auto logit_with_conf = [&](int top, double conf) {
    // Top logit a over k-1 zeros: softmax top = e^a / (e^a + k - 1).
    const double a = std::log(conf * (k - 1) / (1.0 - conf));
    std::vector<double> z(static_cast<std::size_t>(k), 0.0);
    z[static_cast<std::size_t>(top)] = a;
    return ambical::LogitVector(std::move(z));
  };

  for (int i = 0; i < n_clear; ++i) {
    const int c = ambical::next_index(rng, k);
    const double conf = 0.80 + 0.19 * ambical::next_unit(rng);
    out.logits.push_back(logit_with_conf(c, conf));
    out.pi.push_back(ambical::Distribution::one_hot(k, c));
  }
  for (int i = 0; i < n_amb; ++i) {
    const int c = ambical::next_index(rng, k);
    const double conf = q + 0.02 + (0.97 - q - 0.02) * ambical::next_unit(rng);
    out.logits.push_back(logit_with_conf(c, conf));
    std::vector<double> p(static_cast<std::size_t>(k), (1.0 - q) / (k - 1));
    p[static_cast<std::size_t>(c)] = q;
    out.pi.push_back(ambical::Distribution(std::move(p)));
  }
  return out;
}

/// Examples whose annotator distributions sweep normalized entropy from
/// near 0 to near 0.9 while the model scores are sharper than the targets
/// by a global factor t_star (the targets equal softmax(z / t_star)).
inline TwoCluster entropy_span(int n, int k, double t_star, std::uint64_t seed) {
  auto rng = ambical::make_stream(seed, ambical::stream::kGeneric, 3);
  TwoCluster out;
  for (int i = 0; i < n; ++i) {
    const int c = ambical::next_index(rng, k);
    const double a = 0.02 + 0.95 * (static_cast<double>(i) + 0.5) / n;
    std::vector<double> p(static_cast<std::size_t>(k), a / k);
    p[static_cast<std::size_t>(c)] += 1.0 - a;
    std::vector<double> z(static_cast<std::size_t>(k));
    for (int b = 0; b < k; ++b)
      z[static_cast<std::size_t>(b)] = t_star * std::log(p[static_cast<std::size_t>(b)]);
    out.logits.emplace_back(std::move(z));
    out.pi.emplace_back(std::move(p));
  }
  return out;
}

/// Serialized dataset built from logits plus exact annotator distributions.
inline std::string dataset_text(const std::vector<ambical::LogitVector>& logits,
                                const std::vector<ambical::Distribution>& pi) {
  const int k = logits.front().size();
  std::string text = "{\"format\":\"ambical.dataset\",\"version\":1,\"k\":" +
                     std::to_string(k) + "}\n";
  char buf[64];
  for (std::size_t i = 0; i < logits.size(); ++i) {
    text += "{\"id\":\"e" + std::to_string(i) + "\",\"logits\":[";
    for (int b = 0; b < k; ++b) {
      std::snprintf(buf, sizeof buf, "%.17g", logits[i][b]);
      text += buf;
      if (b + 1 < k) text += ",";
    }
    text += "],\"pi\":[";
    for (int b = 0; b < k; ++b) {
      std::snprintf(buf, sizeof buf, "%.17g", pi[i][b]);
      text += buf;
      if (b + 1 < k) text += ",";
    }
    text += "]}\n";
  }
  return text;
}

}  // namespace testutil
