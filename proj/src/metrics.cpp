#include "ambical/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ambical/errors.hpp"
#include "ambical/rng.hpp"

namespace ambical {
namespace metrics {

namespace {

void check_conf(const std::vector<double>& conf) {
  for (std::size_t i = 0; i < conf.size(); ++i) {
    if (!(conf[i] >= 0.0 && conf[i] <= 1.0)) {
      throw InputError("confidence out of [0, 1] at index " + std::to_string(i));
    }
  }
}

// Equal-width assignment; confidence 1.0 lands in the last bin.
std::vector<int> width_assignment(const std::vector<double>& conf, int bins) {
  std::vector<int> idx(conf.size());
  for (std::size_t i = 0; i < conf.size(); ++i) {
    int b = static_cast<int>(conf[i] * bins);
    if (b >= bins) b = bins - 1;
    idx[i] = b;
  }
  return idx;
}

std::vector<double> width_edges(int bins) {
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int j = 0; j <= bins; ++j) {
    edges[static_cast<std::size_t>(j)] = static_cast<double>(j) / bins;
  }
  return edges;
}

// Equal-mass assignment: sort stably by (confidence, index), then hand out
// n / bins per bin with the remainder going to the first bins.
std::vector<int> mass_assignment(const std::vector<double>& conf, int bins,
                                 std::vector<double>* edges_out) {
  const std::size_t n = conf.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return conf[a] < conf[b];
  });

  std::vector<int> idx(n, 0);
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1, 0.0);
  edges[0] = 0.0;
  edges[static_cast<std::size_t>(bins)] = 1.0;

  const std::size_t base = n / static_cast<std::size_t>(bins);
  const std::size_t rem = n % static_cast<std::size_t>(bins);
  std::size_t cur = 0;
  double prev_last = 0.0;
  for (int j = 0; j < bins; ++j) {
    const std::size_t size = base + (static_cast<std::size_t>(j) < rem ? 1 : 0);
    if (j > 0) {
      edges[static_cast<std::size_t>(j)] =
          size > 0 && cur > 0
              ? 0.5 * (prev_last + conf[order[cur]])
              : edges[static_cast<std::size_t>(j) - 1];
    }
    for (std::size_t t = 0; t < size; ++t, ++cur) idx[order[cur]] = j;
    if (size > 0) prev_last = conf[order[cur - 1]];
  }
  if (edges_out) *edges_out = std::move(edges);
  return idx;
}

std::vector<int> assignment(const std::vector<double>& conf, int bins,
                            BinScheme scheme, std::vector<double>* edges_out) {
  if (scheme == BinScheme::equal_width) {
    if (edges_out) *edges_out = width_edges(bins);
    return width_assignment(conf, bins);
  }
  return mass_assignment(conf, bins, edges_out);
}

struct ConfPred {
  std::vector<double> conf;
  std::vector<int> pred;
};

ConfPred top_of(const std::vector<Distribution>& probs) {
  ConfPred out;
  out.conf.resize(probs.size());
  out.pred.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out.pred[i] = voted_label(probs[i]);
    out.conf[i] = probs[i][out.pred[i]];
  }
  return out;
}

void check_probs_pi(const std::vector<Distribution>& probs,
                    const std::vector<Distribution>& pi) {
  if (probs.empty()) throw InputError("metrics: no examples");
  if (probs.size() != pi.size()) {
    throw InputError("metrics: probs / pi size mismatch");
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != pi[i].size()) {
      throw InputError("metrics: class count mismatch at example " +
                       std::to_string(i));
    }
  }
}

}  // namespace

BinnedEce ece_binned(const std::vector<double>& confidence,
                     const std::vector<int>& correct, int bins,
                     BinScheme scheme) {
  const std::size_t n = confidence.size();
  if (n == 0) throw InputError("ece_binned: no examples");
  if (correct.size() != n) throw InputError("ece_binned: size mismatch");
  if (bins < 1) throw InputError("ece_binned: bins must be >= 1");
  check_conf(confidence);
  for (int c : correct) {
    if (c != 0 && c != 1) throw InputError("ece_binned: outcomes must be 0/1");
  }

  std::vector<double> edges;
  const std::vector<int> idx = assignment(confidence, bins, scheme, &edges);

  std::vector<double> cnt(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> sum_conf(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> sum_acc(static_cast<std::size_t>(bins), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = static_cast<std::size_t>(idx[i]);
    cnt[b] += 1.0;
    sum_conf[b] += confidence[i];
    sum_acc[b] += correct[i];
  }

  BinnedEce out;
  out.bins.scheme = scheme;
  out.bins.edges = std::move(edges);
  out.bins.count = cnt;
  out.bins.mean_conf.assign(static_cast<std::size_t>(bins), 0.0);
  out.bins.mean_acc.assign(static_cast<std::size_t>(bins), 0.0);
  out.bins.gap.assign(static_cast<std::size_t>(bins), 0.0);
  for (int b = 0; b < bins; ++b) {
    const auto bb = static_cast<std::size_t>(b);
    if (cnt[bb] == 0.0) continue;
    out.bins.mean_conf[bb] = sum_conf[bb] / cnt[bb];
    out.bins.mean_acc[bb] = sum_acc[bb] / cnt[bb];
    out.bins.gap[bb] = std::abs(out.bins.mean_conf[bb] - out.bins.mean_acc[bb]);
    out.ece += cnt[bb] / static_cast<double>(n) * out.bins.gap[bb];
  }
  return out;
}

std::vector<std::vector<int>> make_draw_table(
    const std::vector<Distribution>& pi, int s_total, std::uint64_t seed) {
  if (pi.empty()) throw InputError("make_draw_table: no examples");
  if (s_total < 1) throw InputError("make_draw_table: need at least 1 draw");
  std::vector<std::vector<int>> draws(static_cast<std::size_t>(s_total));
  for (int s = 0; s < s_total; ++s) {
    auto rng = make_stream(seed, stream::kMcDraw, static_cast<std::uint64_t>(s));
    auto& row = draws[static_cast<std::size_t>(s)];
    row.resize(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) {
      row[i] = sample_categorical(rng, pi[i].probs());
    }
  }
  return draws;
}

McEce ece_true_with_table(const std::vector<Distribution>& probs,
                          const std::vector<std::vector<int>>& draws, int bins,
                          BinScheme scheme) {
  const std::size_t n = probs.size();
  if (n == 0) throw InputError("ece_true: no examples");
  if (draws.empty()) throw InputError("ece_true: empty draw table");
  if (bins < 1) throw InputError("ece_true: bins must be >= 1");
  for (const auto& row : draws) {
    if (row.size() != n) throw InputError("ece_true: draw table shape mismatch");
  }

  const ConfPred cp = top_of(probs);
  check_conf(cp.conf);
  std::vector<double> edges;
  const std::vector<int> idx = assignment(cp.conf, bins, scheme, &edges);

  std::vector<double> cnt(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> sum_conf(static_cast<std::size_t>(bins), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cnt[static_cast<std::size_t>(idx[i])] += 1.0;
    sum_conf[static_cast<std::size_t>(idx[i])] += cp.conf[i];
  }

  McEce out;
  out.per_draw.reserve(draws.size());
  std::vector<double> acc(static_cast<std::size_t>(bins));
  std::vector<double> pooled_acc(static_cast<std::size_t>(bins), 0.0);
  for (const auto& row : draws) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (row[i] == cp.pred[i]) acc[static_cast<std::size_t>(idx[i])] += 1.0;
    }
    double ece = 0.0;
    for (int b = 0; b < bins; ++b) {
      const auto bb = static_cast<std::size_t>(b);
      if (cnt[bb] == 0.0) continue;
      ece += cnt[bb] / static_cast<double>(n) *
             std::abs(sum_conf[bb] / cnt[bb] - acc[bb] / cnt[bb]);
      pooled_acc[bb] += acc[bb];
    }
    out.per_draw.push_back(ece);
  }
  const auto [dmin, dmax] =
      std::minmax_element(out.per_draw.begin(), out.per_draw.end());
  if (*dmin == *dmax) {
    // Degenerate pi (one-hot everywhere) makes every draw identical; averaging
    // would still wobble in the last ulp, so keep the common value as-is.
    out.mean = *dmin;
  } else {
    out.mean = std::accumulate(out.per_draw.begin(), out.per_draw.end(), 0.0) /
               static_cast<double>(out.per_draw.size());
  }

  out.pooled_bins.scheme = scheme;
  out.pooled_bins.edges = std::move(edges);
  out.pooled_bins.count = cnt;
  out.pooled_bins.mean_conf.assign(static_cast<std::size_t>(bins), 0.0);
  out.pooled_bins.mean_acc.assign(static_cast<std::size_t>(bins), 0.0);
  out.pooled_bins.gap.assign(static_cast<std::size_t>(bins), 0.0);
  const double s_total = static_cast<double>(draws.size());
  for (int b = 0; b < bins; ++b) {
    const auto bb = static_cast<std::size_t>(b);
    if (cnt[bb] == 0.0) continue;
    out.pooled_bins.mean_conf[bb] = sum_conf[bb] / cnt[bb];
    out.pooled_bins.mean_acc[bb] = pooled_acc[bb] / (cnt[bb] * s_total);
    out.pooled_bins.gap[bb] =
        std::abs(out.pooled_bins.mean_conf[bb] - out.pooled_bins.mean_acc[bb]);
  }
  return out;
}

McEce ece_true(const std::vector<Distribution>& probs,
               const std::vector<Distribution>& pi, int s, std::uint64_t seed,
               int bins, BinScheme scheme) {
  check_probs_pi(probs, pi);
  return ece_true_with_table(probs, make_draw_table(pi, s, seed), bins, scheme);
}

double cwece_true_with_table(const std::vector<Distribution>& probs,
                             const std::vector<std::vector<int>>& draws,
                             int bins) {
  const std::size_t n = probs.size();
  if (n == 0) throw InputError("cwece_true: no examples");
  if (draws.empty()) throw InputError("cwece_true: empty draw table");
  if (bins < 1) throw InputError("cwece_true: bins must be >= 1");
  const int k = probs[0].size();
  for (const auto& row : draws) {
    if (row.size() != n) throw InputError("cwece_true: draw table shape mismatch");
  }

  // Bin structure depends only on the predicted probabilities, so set it up
  // once per class and reuse it for every draw.
  std::vector<std::vector<int>> idx(static_cast<std::size_t>(k));
  std::vector<std::vector<double>> cnt(static_cast<std::size_t>(k));
  std::vector<std::vector<double>> sum_p(static_cast<std::size_t>(k));
  std::vector<double> column(n);
  for (int c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = probs[i][c];
    check_conf(column);
    idx[static_cast<std::size_t>(c)] = width_assignment(column, bins);
    auto& cc = cnt[static_cast<std::size_t>(c)];
    auto& sp = sum_p[static_cast<std::size_t>(c)];
    cc.assign(static_cast<std::size_t>(bins), 0.0);
    sp.assign(static_cast<std::size_t>(bins), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = static_cast<std::size_t>(idx[static_cast<std::size_t>(c)][i]);
      cc[b] += 1.0;
      sp[b] += column[i];
    }
  }

  double total = 0.0;
  std::vector<double> hit(static_cast<std::size_t>(bins));
  for (const auto& row : draws) {
    double per_draw = 0.0;
    for (int c = 0; c < k; ++c) {
      const auto cc = static_cast<std::size_t>(c);
      std::fill(hit.begin(), hit.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (row[i] == c) hit[static_cast<std::size_t>(idx[cc][i])] += 1.0;
      }
      double class_ece = 0.0;
      for (int b = 0; b < bins; ++b) {
        const auto bb = static_cast<std::size_t>(b);
        if (cnt[cc][bb] == 0.0) continue;
        class_ece += cnt[cc][bb] / static_cast<double>(n) *
                     std::abs(sum_p[cc][bb] / cnt[cc][bb] - hit[bb] / cnt[cc][bb]);
      }
      per_draw += class_ece;
    }
    total += per_draw / static_cast<double>(k);
  }
  return total / static_cast<double>(draws.size());
}

double cwece_true(const std::vector<Distribution>& probs,
                  const std::vector<Distribution>& pi, int s,
                  std::uint64_t seed, int bins) {
  check_probs_pi(probs, pi);
  return cwece_true_with_table(probs, make_draw_table(pi, s, seed), bins);
}

double brier_soft(const Distribution& p, const Distribution& pi) {
  if (p.size() != pi.size()) throw InputError("brier_soft: size mismatch");
  double d = 0.0;
  for (int c = 0; c < p.size(); ++c) {
    const double diff = p[c] - pi[c];
    d += diff * diff;
  }
  return d;
}

double nll_soft(const Distribution& p, const Distribution& pi) {
  if (p.size() != pi.size()) throw InputError("nll_soft: size mismatch");
  double nll = 0.0;
  for (int c = 0; c < p.size(); ++c) {
    if (pi[c] > 0.0) nll -= pi[c] * std::log(clamp_prob(p[c]));
  }
  return nll;
}

double mean_brier(const std::vector<Distribution>& probs,
                  const std::vector<Distribution>& pi) {
  check_probs_pi(probs, pi);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) acc += brier_soft(probs[i], pi[i]);
  return acc / static_cast<double>(probs.size());
}

double mean_nll(const std::vector<Distribution>& probs,
                const std::vector<Distribution>& pi) {
  check_probs_pi(probs, pi);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) acc += nll_soft(probs[i], pi[i]);
  return acc / static_cast<double>(probs.size());
}

double pointwise_true_error(const Distribution& p, const Distribution& pi) {
  if (p.size() != pi.size()) {
    throw InputError("pointwise_true_error: size mismatch");
  }
  const int c = voted_label(p);
  return std::abs(p[c] - pi[c]);
}

EntropyProfile entropy_profile(const std::vector<Distribution>& probs,
                               const std::vector<Distribution>& pi,
                               int n_bins) {
  check_probs_pi(probs, pi);
  if (n_bins < 1) throw InputError("entropy_profile: bins must be >= 1");
  const std::size_t n = probs.size();
  if (n < static_cast<std::size_t>(n_bins)) {
    throw InputError("entropy_profile: fewer examples than bins");
  }

  std::vector<double> h(n), err(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = entropy(pi[i]) / std::log(static_cast<double>(pi[i].size()));
    err[i] = pointwise_true_error(probs[i], pi[i]);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return h[a] < h[b]; });

  EntropyProfile out;
  const std::size_t base = n / static_cast<std::size_t>(n_bins);
  const std::size_t rem = n % static_cast<std::size_t>(n_bins);
  std::size_t cur = 0;
  for (int j = 0; j < n_bins; ++j) {
    const std::size_t size = base + (static_cast<std::size_t>(j) < rem ? 1 : 0);
    double sh = 0.0, se = 0.0, se2 = 0.0;
    for (std::size_t t = 0; t < size; ++t) {
      const std::size_t i = order[cur + t];
      sh += h[i];
      se += err[i];
      se2 += err[i] * err[i];
    }
    cur += size;
    const double cntd = static_cast<double>(size);
    out.count.push_back(cntd);
    out.bin_center.push_back(size > 0 ? sh / cntd : 0.0);
    out.mean_error.push_back(size > 0 ? se / cntd : 0.0);
    if (size >= 2) {
      const double var = std::max(0.0, (se2 - se * se / cntd) / (cntd - 1.0));
      out.std_error.push_back(std::sqrt(var / cntd));
    } else {
      out.std_error.push_back(0.0);
    }
  }
  return out;
}

namespace {

std::vector<double> ranks_of(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InputError("spearman: size mismatch");
  if (a.size() < 2) throw InputError("spearman: need at least 2 points");
  const std::vector<double> ra = ranks_of(a);
  const std::vector<double> rb = ranks_of(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return num / std::sqrt(va * vb);
}

MetricsReport compute_report(const std::vector<Distribution>& probs,
                             const std::vector<Distribution>& pi,
                             const std::vector<int>& voted,
                             const McConfig& mc) {
  check_probs_pi(probs, pi);
  if (voted.size() != probs.size()) {
    throw InputError("compute_report: voted label count mismatch");
  }
  if (mc.s < 1 || mc.bins < 1) {
    throw InputError("compute_report: bad Monte Carlo config");
  }

  const ConfPred cp = top_of(probs);
  std::vector<int> correct(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    correct[i] = cp.pred[i] == voted[i] ? 1 : 0;
  }

  MetricsReport rep;
  rep.mc = mc;
  rep.ece_voted =
      ece_binned(cp.conf, correct, mc.bins, BinScheme::equal_width).ece;

  const auto table = make_draw_table(pi, mc.s, mc.seed);
  const McEce et =
      ece_true_with_table(probs, table, mc.bins, BinScheme::equal_width);
  const McEce ea =
      ece_true_with_table(probs, table, mc.bins, BinScheme::equal_mass);
  rep.ece_true = et.mean;
  rep.aece_true = ea.mean;
  rep.cwece_true = cwece_true_with_table(probs, table, mc.bins);
  rep.brier = mean_brier(probs, pi);
  rep.nll = mean_nll(probs, pi);
  rep.reliability = et.pooled_bins;

  if (et.per_draw.size() >= 2) {
    double m = rep.ece_true, s2 = 0.0;
    for (double x : et.per_draw) s2 += (x - m) * (x - m);
    s2 /= static_cast<double>(et.per_draw.size() - 1);
    rep.ece_true_stderr =
        std::sqrt(s2 / static_cast<double>(et.per_draw.size()));
  }
  return rep;
}

}  // namespace metrics
}  // namespace ambical
