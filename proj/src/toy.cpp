#include "ambical/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "ambical/calibrators.hpp"
#include "ambical/errors.hpp"
#include "ambical/rng.hpp"

namespace ambical {
namespace toy {

namespace {

struct Cluster {
  double mean0, mean1, var0, var1;
  std::vector<double> pi;
};

const Cluster kClusters[3] = {
    {-3.2, 1.1, 0.60, 0.45, {1.0, 0.0, 0.0}},
    {0.0, 0.0, 1.15, 0.75, {0.0, 0.70, 0.30}},
    {3.2, -1.1, 0.60, 0.45, {0.0, 0.0, 1.0}},
};

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

void check_config(const ToyConfig& cfg) {
  if (cfg.n_per_cluster < 10) {
    throw InputError("toy: n_per_cluster must be at least 10");
  }
  if (!(cfg.train_fraction > 0.0) || !(cfg.cal_fraction > 0.0) ||
      cfg.train_fraction + cfg.cal_fraction >= 1.0) {
    throw InputError("toy: split fractions must be positive and leave a test share");
  }
  if (cfg.hidden < 1 || cfg.epochs < 1 || !(cfg.learning_rate > 0.0)) {
    throw InputError("toy: bad network settings");
  }
}

}  // namespace

ToyData generate_toy(const ToyConfig& cfg) {
  check_config(cfg);
  ToyData data;
  data.points.reserve(static_cast<std::size_t>(cfg.n_per_cluster) * 3);

  for (int c = 0; c < 3; ++c) {
    const Cluster& cl = kClusters[c];
    const double s0 = std::sqrt(cl.var0), s1 = std::sqrt(cl.var1);
    const Distribution pi{std::vector<double>(cl.pi)};
    const int vote = voted_label(pi);

    auto rng_x = make_stream(cfg.data_seed, stream::kToyData, static_cast<std::uint64_t>(c));
    auto rng_y = make_stream(cfg.label_seed, stream::kToyLabel, static_cast<std::uint64_t>(c));
    for (int i = 0; i < cfg.n_per_cluster; ++i) {
      ToyPoint p{cl.mean0 + s0 * next_normal(rng_x),
                 cl.mean1 + s1 * next_normal(rng_x),
                 c,
                 pi,
                 sample_categorical(rng_y, cl.pi),
                 vote,
                 2};
      data.points.push_back(std::move(p));
    }

    // Per-cluster split so every cluster appears in every role.
    std::vector<int> order(static_cast<std::size_t>(cfg.n_per_cluster));
    std::iota(order.begin(), order.end(), c * cfg.n_per_cluster);
    auto rng_s = make_stream(cfg.data_seed, stream::kToyData,
                             100 + static_cast<std::uint64_t>(c));
    shuffle_stream(order, rng_s);
    const int n_train = round_half_up(cfg.train_fraction * cfg.n_per_cluster);
    const int n_cal = round_half_up(cfg.cal_fraction * cfg.n_per_cluster);
    if (n_train < 1 || n_cal < 1 || n_train + n_cal >= cfg.n_per_cluster) {
      throw InputError("toy: split leaves an empty subset");
    }
    for (int i = 0; i < cfg.n_per_cluster; ++i) {
      const int split = i < n_train ? 0 : (i < n_train + n_cal ? 1 : 2);
      data.points[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]
          .split = split;
    }
  }
  return data;
}

LogitVector Mlp::forward(double x0, double x1) const {
  std::vector<double> h1(static_cast<std::size_t>(hidden));
  std::vector<double> h2(static_cast<std::size_t>(hidden));
  for (int h = 0; h < hidden; ++h) {
    h1[static_cast<std::size_t>(h)] = std::tanh(
        w1[static_cast<std::size_t>(h) * 2] * x0 +
        w1[static_cast<std::size_t>(h) * 2 + 1] * x1 + b1[static_cast<std::size_t>(h)]);
  }
  for (int h = 0; h < hidden; ++h) {
    double acc = b2[static_cast<std::size_t>(h)];
    const double* wrow = &w2[static_cast<std::size_t>(h) * static_cast<std::size_t>(hidden)];
    for (int g = 0; g < hidden; ++g) acc += wrow[g] * h1[static_cast<std::size_t>(g)];
    h2[static_cast<std::size_t>(h)] = std::tanh(acc);
  }
  std::vector<double> z(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    double acc = b3[static_cast<std::size_t>(o)];
    const double* wrow = &w3[static_cast<std::size_t>(o) * static_cast<std::size_t>(hidden)];
    for (int g = 0; g < hidden; ++g) acc += wrow[g] * h2[static_cast<std::size_t>(g)];
    z[static_cast<std::size_t>(o)] = acc;
  }
  return LogitVector(std::move(z));
}

Mlp train_toy_mlp(const ToyData& data, const ToyConfig& cfg) {
  check_config(cfg);
  const int H = cfg.hidden;
  const int K = data.k;
  Mlp net;
  net.hidden = H;
  net.out = K;
  net.w1.resize(static_cast<std::size_t>(H) * 2);
  net.b1.assign(static_cast<std::size_t>(H), 0.0);
  net.w2.resize(static_cast<std::size_t>(H) * static_cast<std::size_t>(H));
  net.b2.assign(static_cast<std::size_t>(H), 0.0);
  net.w3.resize(static_cast<std::size_t>(K) * static_cast<std::size_t>(H));
  net.b3.assign(static_cast<std::size_t>(K), 0.0);

  auto rng = make_stream(cfg.train_seed, stream::kToyTrain, 0);
  const double s1 = std::sqrt(1.0 / 2.0);
  const double s2 = std::sqrt(1.0 / H);
  for (double& w : net.w1) w = s1 * next_normal(rng);
  for (double& w : net.w2) w = s2 * next_normal(rng);
  for (double& w : net.w3) w = s2 * next_normal(rng);

  std::vector<const ToyPoint*> train;
  for (const auto& p : data.points) {
    if (p.split == 0) train.push_back(&p);
  }
  if (train.empty()) throw InputError("toy: empty training split");
  const double inv_n = 1.0 / static_cast<double>(train.size());

  std::vector<double> gw1(net.w1.size()), gb1(net.b1.size());
  std::vector<double> gw2(net.w2.size()), gb2(net.b2.size());
  std::vector<double> gw3(net.w3.size()), gb3(net.b3.size());
  std::vector<double> h1(static_cast<std::size_t>(H)), h2(static_cast<std::size_t>(H));
  std::vector<double> q(static_cast<std::size_t>(K));
  std::vector<double> d2(static_cast<std::size_t>(H)), d1(static_cast<std::size_t>(H));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(gw1.begin(), gw1.end(), 0.0);
    std::fill(gb1.begin(), gb1.end(), 0.0);
    std::fill(gw2.begin(), gw2.end(), 0.0);
    std::fill(gb2.begin(), gb2.end(), 0.0);
    std::fill(gw3.begin(), gw3.end(), 0.0);
    std::fill(gb3.begin(), gb3.end(), 0.0);

    for (const ToyPoint* p : train) {
      for (int h = 0; h < H; ++h) {
        h1[static_cast<std::size_t>(h)] = std::tanh(
            net.w1[static_cast<std::size_t>(h) * 2] * p->x0 +
            net.w1[static_cast<std::size_t>(h) * 2 + 1] * p->x1 +
            net.b1[static_cast<std::size_t>(h)]);
      }
      for (int h = 0; h < H; ++h) {
        double acc = net.b2[static_cast<std::size_t>(h)];
        const double* wrow = &net.w2[static_cast<std::size_t>(h) * static_cast<std::size_t>(H)];
        for (int g = 0; g < H; ++g) acc += wrow[g] * h1[static_cast<std::size_t>(g)];
        h2[static_cast<std::size_t>(h)] = std::tanh(acc);
      }
      double zmax = -1e300;
      for (int o = 0; o < K; ++o) {
        double acc = net.b3[static_cast<std::size_t>(o)];
        const double* wrow = &net.w3[static_cast<std::size_t>(o) * static_cast<std::size_t>(H)];
        for (int g = 0; g < H; ++g) acc += wrow[g] * h2[static_cast<std::size_t>(g)];
        q[static_cast<std::size_t>(o)] = acc;
        zmax = std::max(zmax, acc);
      }
      double zsum = 0.0;
      for (int o = 0; o < K; ++o) {
        q[static_cast<std::size_t>(o)] = std::exp(q[static_cast<std::size_t>(o)] - zmax);
        zsum += q[static_cast<std::size_t>(o)];
      }
      for (int o = 0; o < K; ++o) q[static_cast<std::size_t>(o)] /= zsum;
      q[static_cast<std::size_t>(p->voted)] -= 1.0;  // dLoss/dz

      std::fill(d2.begin(), d2.end(), 0.0);
      for (int o = 0; o < K; ++o) {
        const double go = q[static_cast<std::size_t>(o)];
        double* wrow = &gw3[static_cast<std::size_t>(o) * static_cast<std::size_t>(H)];
        const double* w = &net.w3[static_cast<std::size_t>(o) * static_cast<std::size_t>(H)];
        for (int g = 0; g < H; ++g) {
          wrow[g] += go * h2[static_cast<std::size_t>(g)];
          d2[static_cast<std::size_t>(g)] += go * w[g];
        }
        gb3[static_cast<std::size_t>(o)] += go;
      }
      for (int h = 0; h < H; ++h) {
        d2[static_cast<std::size_t>(h)] *=
            1.0 - h2[static_cast<std::size_t>(h)] * h2[static_cast<std::size_t>(h)];
      }
      std::fill(d1.begin(), d1.end(), 0.0);
      for (int h = 0; h < H; ++h) {
        const double gh = d2[static_cast<std::size_t>(h)];
        double* wrow = &gw2[static_cast<std::size_t>(h) * static_cast<std::size_t>(H)];
        const double* w = &net.w2[static_cast<std::size_t>(h) * static_cast<std::size_t>(H)];
        for (int g = 0; g < H; ++g) {
          wrow[g] += gh * h1[static_cast<std::size_t>(g)];
          d1[static_cast<std::size_t>(g)] += gh * w[g];
        }
        gb2[static_cast<std::size_t>(h)] += gh;
      }
      for (int h = 0; h < H; ++h) {
        const double gh = d1[static_cast<std::size_t>(h)] *
                          (1.0 - h1[static_cast<std::size_t>(h)] * h1[static_cast<std::size_t>(h)]);
        gw1[static_cast<std::size_t>(h) * 2] += gh * p->x0;
        gw1[static_cast<std::size_t>(h) * 2 + 1] += gh * p->x1;
        gb1[static_cast<std::size_t>(h)] += gh;
      }
    }

    const double step = cfg.learning_rate * inv_n;
    for (std::size_t i = 0; i < net.w1.size(); ++i) net.w1[i] -= step * gw1[i];
    for (std::size_t i = 0; i < net.b1.size(); ++i) net.b1[i] -= step * gb1[i];
    for (std::size_t i = 0; i < net.w2.size(); ++i) net.w2[i] -= step * gw2[i];
    for (std::size_t i = 0; i < net.b2.size(); ++i) net.b2[i] -= step * gb2[i];
    for (std::size_t i = 0; i < net.w3.size(); ++i) net.w3[i] -= step * gw3[i];
    for (std::size_t i = 0; i < net.b3.size(); ++i) net.b3[i] -= step * gb3[i];
  }
  return net;
}

HistogramBinning fit_histogram_binning(const std::vector<double>& confidence,
                                       const std::vector<int>& correct,
                                       int bins) {
  if (confidence.empty()) throw InputError("histogram binning: no examples");
  if (correct.size() != confidence.size()) {
    throw InputError("histogram binning: size mismatch");
  }
  if (bins < 1) throw InputError("histogram binning: bins must be >= 1");
  HistogramBinning hb;
  hb.bins = bins;
  std::vector<double> cnt(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> acc(static_cast<std::size_t>(bins), 0.0);
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    const double c = confidence[i];
    if (!(c >= 0.0 && c <= 1.0)) {
      throw InputError("histogram binning: confidence out of [0, 1]");
    }
    int b = static_cast<int>(c * bins);
    if (b >= bins) b = bins - 1;
    cnt[static_cast<std::size_t>(b)] += 1.0;
    acc[static_cast<std::size_t>(b)] += correct[i];
  }
  hb.value.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    hb.value[static_cast<std::size_t>(b)] =
        cnt[static_cast<std::size_t>(b)] > 0.0
            ? acc[static_cast<std::size_t>(b)] / cnt[static_cast<std::size_t>(b)]
            : (b + 0.5) / bins;
  }
  return hb;
}

Distribution apply_histogram_binning(const HistogramBinning& hb,
                                     const Distribution& p) {
  const int k = p.size();
  const int top = voted_label(p);
  const double c = p[top];
  int b = static_cast<int>(c * hb.bins);
  if (b >= hb.bins) b = hb.bins - 1;
  double mapped = hb.value[static_cast<std::size_t>(b)];
  mapped = std::min(1.0, std::max(0.0, mapped));

  std::vector<double> out(static_cast<std::size_t>(k), 0.0);
  const double residual = 1.0 - c;
  if (residual < 1e-15) {
    const double fill = (1.0 - mapped) / static_cast<double>(k - 1);
    for (int a = 0; a < k; ++a) out[static_cast<std::size_t>(a)] = fill;
  } else {
    const double scale = (1.0 - mapped) / residual;
    for (int a = 0; a < k; ++a) out[static_cast<std::size_t>(a)] = p[a] * scale;
  }
  out[static_cast<std::size_t>(top)] = mapped;
  return Distribution(std::move(out));
}

namespace {

struct EvalSet {
  std::vector<Distribution> probs;
  std::vector<Distribution> pi;
  std::vector<int> voted;
  std::vector<int> cluster;
};

double subset_ece_true(const EvalSet& s, const std::vector<std::size_t>& idx,
                       const metrics::McConfig& mc) {
  std::vector<Distribution> probs, pi;
  probs.reserve(idx.size());
  pi.reserve(idx.size());
  for (std::size_t i : idx) {
    probs.push_back(s.probs[i]);
    pi.push_back(s.pi[i]);
  }
  return metrics::ece_true(probs, pi, mc.s, mc.seed, mc.bins).mean;
}

}  // namespace

ToyReport run_toy_experiment(const ToyConfig& cfg) {
  const ToyData data = generate_toy(cfg);
  const Mlp net = train_toy_mlp(data, cfg);

  std::vector<LogitVector> cal_logits, test_logits;
  std::vector<Distribution> cal_pi, test_pi;
  std::vector<int> cal_voted, test_voted, test_cluster;
  for (const auto& p : data.points) {
    if (p.split == 1) {
      cal_logits.push_back(net.forward(p.x0, p.x1));
      cal_pi.push_back(p.pi);
      cal_voted.push_back(p.voted);
    } else if (p.split == 2) {
      test_logits.push_back(net.forward(p.x0, p.x1));
      test_pi.push_back(p.pi);
      test_voted.push_back(p.voted);
      test_cluster.push_back(p.cluster);
    }
  }

  // Raw confidences on the calibration split feed temperature-free methods.
  std::vector<double> cal_conf(cal_logits.size());
  std::vector<int> cal_correct(cal_logits.size());
  for (std::size_t i = 0; i < cal_logits.size(); ++i) {
    const Distribution p = softmax_t(cal_logits[i], 1.0);
    const int pred = voted_label(p);
    cal_conf[i] = p[pred];
    cal_correct[i] = pred == cal_voted[i] ? 1 : 0;
  }

  const auto ts = cal::fit_temperature(
      cal_logits, cal::voted_targets(cal_voted, data.k));
  const auto platt = cal::fit_diag_affine(
      cal_logits, cal::voted_targets(cal_voted, data.k));
  const auto hb = fit_histogram_binning(cal_conf, cal_correct, cfg.mc.bins);
  const auto slts = cal::fit_temperature(
      cal_logits, cal::annotator_targets(cal_pi));

  ToyReport rep;
  rep.cfg = cfg;

  EvalSet base;
  base.pi = test_pi;
  base.voted = test_voted;
  base.cluster = test_cluster;

  std::vector<std::size_t> ambiguous, clear;
  for (std::size_t i = 0; i < test_cluster.size(); ++i) {
    (test_cluster[i] == 1 ? ambiguous : clear).push_back(i);
  }

  double acc = 0.0, acc_clear = 0.0, conf_amb = 0.0;
  for (std::size_t i = 0; i < test_logits.size(); ++i) {
    const Distribution p = softmax_t(test_logits[i], 1.0);
    const int pred = voted_label(p);
    if (pred == test_voted[i]) acc += 1.0;
    if (test_cluster[i] != 1 && pred == test_voted[i]) acc_clear += 1.0;
    if (test_cluster[i] == 1) conf_amb += p[pred];
  }
  rep.test_accuracy_voted = acc / static_cast<double>(test_logits.size());
  rep.test_accuracy_clear =
      clear.empty() ? 0.0 : acc_clear / static_cast<double>(clear.size());
  rep.mean_conf_ambiguous =
      ambiguous.empty() ? 0.0 : conf_amb / static_cast<double>(ambiguous.size());

  const char* names[] = {"uncal", "ts", "platt", "hb", "slts"};
  for (const char* name : names) {
    EvalSet s = base;
    s.probs.reserve(test_logits.size());
    for (const auto& z : test_logits) {
      const std::string method(name);
      if (method == "uncal") {
        s.probs.push_back(softmax_t(z, 1.0));
      } else if (method == "ts") {
        s.probs.push_back(cal::apply(ts, z));
      } else if (method == "platt") {
        s.probs.push_back(cal::apply(platt, z));
      } else if (method == "hb") {
        s.probs.push_back(apply_histogram_binning(hb, softmax_t(z, 1.0)));
      } else {
        s.probs.push_back(cal::apply(slts, z));
      }
    }

    std::vector<double> conf(s.probs.size());
    std::vector<int> correct(s.probs.size());
    for (std::size_t i = 0; i < s.probs.size(); ++i) {
      const int pred = voted_label(s.probs[i]);
      conf[i] = s.probs[i][pred];
      correct[i] = pred == s.voted[i] ? 1 : 0;
    }

    ToyMethodResult r;
    r.method = name;
    r.ece_voted = metrics::ece_binned(conf, correct, cfg.mc.bins,
                                      metrics::BinScheme::equal_width)
                      .ece;
    r.ece_true =
        metrics::ece_true(s.probs, s.pi, cfg.mc.s, cfg.mc.seed, cfg.mc.bins).mean;
    r.ece_true_ambiguous = subset_ece_true(s, ambiguous, cfg.mc);
    r.ece_true_clear = subset_ece_true(s, clear, cfg.mc);
    if (r.method == "ts") {
      r.t_fitted = std::get<cal::TemperatureParams>(ts.params).t;
    } else if (r.method == "slts") {
      r.t_fitted = std::get<cal::TemperatureParams>(slts.params).t;
    }
    rep.methods.push_back(std::move(r));
  }
  return rep;
}

std::string toy_report_to_json(const ToyReport& report) {
  nlohmann::ordered_json j;
  j["format"] = "ambical.toy_report";
  j["version"] = 1;
  j["config"] = {
      {"n_per_cluster", report.cfg.n_per_cluster},
      {"train_fraction", report.cfg.train_fraction},
      {"cal_fraction", report.cfg.cal_fraction},
      {"hidden", report.cfg.hidden},
      {"epochs", report.cfg.epochs},
      {"learning_rate", report.cfg.learning_rate},
      {"data_seed", report.cfg.data_seed},
      {"label_seed", report.cfg.label_seed},
      {"train_seed", report.cfg.train_seed},
      {"mc", {{"s", report.cfg.mc.s}, {"seed", report.cfg.mc.seed}, {"bins", report.cfg.mc.bins}}},
  };
  j["test_accuracy_voted"] = report.test_accuracy_voted;
  j["test_accuracy_clear"] = report.test_accuracy_clear;
  j["mean_conf_ambiguous"] = report.mean_conf_ambiguous;
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (const auto& m : report.methods) {
    nlohmann::ordered_json e;
    e["method"] = m.method;
    e["ece_voted_pct"] = 100.0 * m.ece_voted;
    e["ece_true_pct"] = 100.0 * m.ece_true;
    e["ece_true_ambiguous_pct"] = 100.0 * m.ece_true_ambiguous;
    e["ece_true_clear_pct"] = 100.0 * m.ece_true_clear;
    if (m.t_fitted) {
      e["t"] = *m.t_fitted;
    } else {
      e["t"] = nullptr;
    }
    methods.push_back(std::move(e));
  }
  j["methods"] = std::move(methods);
  return j.dump(2) + "\n";
}

std::string toy_report_to_markdown(const ToyReport& report) {
  std::string out;
  char buf[160];
  out += "| method | T | ECE_voted % | ECE_true % | ambiguous % | clear % |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const auto& m : report.methods) {
    std::string t = "-";
    if (m.t_fitted) {
      std::snprintf(buf, sizeof(buf), "%.3f", *m.t_fitted);
      t = buf;
    }
    std::snprintf(buf, sizeof(buf), "| %s | %s | %.4f | %.4f | %.4f | %.4f |\n",
                  m.method.c_str(), t.c_str(), 100.0 * m.ece_voted,
                  100.0 * m.ece_true, 100.0 * m.ece_true_ambiguous,
                  100.0 * m.ece_true_clear);
    out += buf;
  }
  return out;
}

}  // namespace toy
}  // namespace ambical
