#include "ambical/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ambical/digest.hpp"
#include "ambical/errors.hpp"
#include "ambical/rng.hpp"
#include "ambical/version.hpp"

namespace ambical {
namespace cal {

namespace {

// Shared shape validation for (logits, targets) pairs.
int check_pair(const std::vector<LogitVector>& logits,
               const SoftTargetSet& targets) {
  if (logits.empty()) throw InputError("fit: no examples");
  if (targets.targets.size() != logits.size()) {
    throw InputError("fit: " + std::to_string(logits.size()) + " logits vs " +
                     std::to_string(targets.targets.size()) + " targets");
  }
  const int k = logits[0].size();
  if (k < 2) throw InputError("fit: need at least 2 classes");
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i].size() != k || targets.targets[i].size() != k) {
      throw InputError("fit: inconsistent class count at example " +
                       std::to_string(i));
    }
  }
  return k;
}

FittedOn fitted_on_for(TargetSource source) {
  switch (source) {
    case TargetSource::voted: return FittedOn::voted;
    case TargetSource::annotator: return FittedOn::soft;
    case TargetSource::mc_samples: return FittedOn::mc_samples;
    case TargetSource::label_smooth: return FittedOn::pseudo_soft;
  }
  return FittedOn::none;
}

const char* source_name(TargetSource s) {
  switch (s) {
    case TargetSource::voted: return "voted";
    case TargetSource::annotator: return "annotator";
    case TargetSource::mc_samples: return "mc_samples";
    case TargetSource::label_smooth: return "label_smooth";
  }
  return "?";
}

std::string scalar_digest(const char* kind, TargetSource src,
                          const optim::ScalarConfig& cfg,
                          const std::string& extra = "") {
  std::ostringstream os;
  os << kind << '|' << source_name(src) << '|' << cfg.lower << '|' << cfg.upper
     << '|' << cfg.tol << '|' << cfg.max_iters << '|' << extra;
  return digest_hex(os.str());
}

std::string vector_digest(const char* kind, TargetSource src,
                          const optim::VectorConfig& cfg,
                          const std::string& extra = "") {
  std::ostringstream os;
  os << kind << '|' << source_name(src) << '|' << cfg.learning_rate << '|'
     << cfg.max_steps << '|' << cfg.weight_decay << '|' << cfg.grad_tol << '|'
     << cfg.loss_tol << '|' << extra;
  return digest_hex(os.str());
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Cross entropy of softmax(l) against target t, accumulating d(loss)/d(l)
// into grad_l as (q - t). Returns the per-example loss.
double ce_from_logits(const std::vector<double>& l, const Distribution& t,
                      std::vector<double>* q_out) {
  const double m = *std::max_element(l.begin(), l.end());
  double s = 0.0;
  const std::size_t k = l.size();
  std::vector<double>& q = *q_out;
  q.resize(k);
  for (std::size_t a = 0; a < k; ++a) {
    q[a] = std::exp(l[a] - m);
    s += q[a];
  }
  double dot = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    q[a] /= s;
    dot += t[static_cast<int>(a)] * l[a];
  }
  return m + std::log(s) - dot;
}

}  // namespace

SoftTargetSet voted_targets(const std::vector<int>& voted, int k) {
  if (voted.empty()) throw InputError("voted_targets: no labels");
  SoftTargetSet out;
  out.source = TargetSource::voted;
  out.targets.reserve(voted.size());
  for (int y : voted) out.targets.push_back(Distribution::one_hot(k, y));
  return out;
}

SoftTargetSet annotator_targets(std::vector<Distribution> pi) {
  if (pi.empty()) throw InputError("annotator_targets: no distributions");
  SoftTargetSet out;
  out.source = TargetSource::annotator;
  out.targets = std::move(pi);
  return out;
}

SoftTargetSet label_smoothing_targets(const std::vector<LogitVector>& logits,
                                      const std::vector<int>& voted, int k,
                                      const SmoothingSpec& spec) {
  const std::size_t n = logits.size();
  if (n == 0) throw InputError("label_smoothing_targets: no examples");
  if (voted.size() != n) {
    throw InputError("label_smoothing_targets: label count mismatch");
  }
  if (spec.mode == SmoothingSpec::Mode::fixed &&
      !(spec.eps >= 0.0 && spec.eps < 1.0)) {
    throw InputError("label_smoothing_targets: fixed eps must be in [0, 1)");
  }

  std::vector<double> conf(n), norm_entropy(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (voted[i] < 0 || voted[i] >= k) {
      throw InputError("label_smoothing_targets: label out of range at " +
                       std::to_string(i));
    }
    Distribution p = softmax_t(logits[i], 1.0);
    if (p.size() != k) {
      throw InputError("label_smoothing_targets: class count mismatch at " +
                       std::to_string(i));
    }
    conf[i] = p[voted[i]];
    norm_entropy[i] = entropy(p) / std::log(static_cast<double>(k));
  }

  SoftTargetSet out;
  out.source = TargetSource::label_smooth;
  out.eps_bar = 0.0;
  for (std::size_t i = 0; i < n; ++i) out.eps_bar += 1.0 - conf[i];
  out.eps_bar /= static_cast<double>(n);

  out.eps.resize(n);
  switch (spec.mode) {
    case SmoothingSpec::Mode::global:
      out.smoothing = "global";
      std::fill(out.eps.begin(), out.eps.end(), out.eps_bar);
      break;
    case SmoothingSpec::Mode::fixed:
      out.smoothing = "fixed";
      std::fill(out.eps.begin(), out.eps.end(), spec.eps);
      break;
    case SmoothingSpec::Mode::entropy:
      out.smoothing = "entropy";
      out.eps = norm_entropy;
      break;
    case SmoothingSpec::Mode::classwise: {
      out.smoothing = "classwise";
      std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
      std::vector<int> count(static_cast<std::size_t>(k), 0);
      for (std::size_t i = 0; i < n; ++i) {
        sum[static_cast<std::size_t>(voted[i])] += 1.0 - conf[i];
        ++count[static_cast<std::size_t>(voted[i])];
      }
      out.eps_class.resize(static_cast<std::size_t>(k));
      for (int c = 0; c < k; ++c) {
        // Classes absent from the calibration set fall back to the global
        // mean rather than an undefined ratio.
        out.eps_class[static_cast<std::size_t>(c)] =
            count[static_cast<std::size_t>(c)] > 0
                ? sum[static_cast<std::size_t>(c)] /
                      count[static_cast<std::size_t>(c)]
                : out.eps_bar;
      }
      for (std::size_t i = 0; i < n; ++i) {
        out.eps[i] = out.eps_class[static_cast<std::size_t>(voted[i])];
      }
      break;
    }
  }

  out.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> t(static_cast<std::size_t>(k), out.eps[i] / k);
    t[static_cast<std::size_t>(voted[i])] += 1.0 - out.eps[i];
    out.targets.emplace_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

double temperature_ce(const std::vector<LogitVector>& logits,
                      const SoftTargetSet& targets, double t) {
  if (!(t > 0.0)) throw DomainError("temperature must be positive");
  check_pair(logits, targets);
  const std::size_t n = logits.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = logits[i].values();
    const Distribution& tt = targets.targets[i];
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0, dot = 0.0;
    for (std::size_t a = 0; a < z.size(); ++a) {
      s += std::exp((z[a] - m) / t);
      dot += tt[static_cast<int>(a)] * z[a];
    }
    loss += m / t + std::log(s) - dot / t;
  }
  return loss / static_cast<double>(n);
}

double temperature_ce_grad(const std::vector<LogitVector>& logits,
                           const SoftTargetSet& targets, double t) {
  if (!(t > 0.0)) throw DomainError("temperature must be positive");
  check_pair(logits, targets);
  const std::size_t n = logits.size();
  double g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = logits[i].values();
    const Distribution& tt = targets.targets[i];
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    double ez_q = 0.0, ez_t = 0.0;
    for (std::size_t a = 0; a < z.size(); ++a) {
      const double e = std::exp((z[a] - m) / t);
      s += e;
      ez_q += e * z[a];
      ez_t += tt[static_cast<int>(a)] * z[a];
    }
    g += (ez_t - ez_q / s) / (t * t);
  }
  return g / static_cast<double>(n);
}

LossGrad diag_affine_ce(const std::vector<LogitVector>& logits,
                        const SoftTargetSet& targets,
                        const std::vector<double>& params) {
  const int k = check_pair(logits, targets);
  if (params.size() != 2 * static_cast<std::size_t>(k)) {
    throw InputError("diag_affine_ce: expected 2k parameters");
  }
  const std::size_t n = logits.size();
  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  std::vector<double> l(static_cast<std::size_t>(k)), q;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = logits[i].values();
    for (int a = 0; a < k; ++a) {
      l[static_cast<std::size_t>(a)] =
          params[static_cast<std::size_t>(a)] * z[static_cast<std::size_t>(a)] +
          params[static_cast<std::size_t>(k + a)];
    }
    out.value += ce_from_logits(l, targets.targets[i], &q);
    for (int a = 0; a < k; ++a) {
      const double d = q[static_cast<std::size_t>(a)] - targets.targets[i][a];
      out.grad[static_cast<std::size_t>(a)] += d * z[static_cast<std::size_t>(a)];
      out.grad[static_cast<std::size_t>(k + a)] += d;
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.value *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

LossGrad vector_scaling_ce(const std::vector<LogitVector>& logits,
                           const SoftTargetSet& targets,
                           const std::vector<double>& params) {
  const int k = check_pair(logits, targets);
  if (params.size() != static_cast<std::size_t>(k)) {
    throw InputError("vector_scaling_ce: expected k parameters");
  }
  const std::size_t n = logits.size();
  std::vector<double> inv_t(params.size());
  for (std::size_t a = 0; a < params.size(); ++a) inv_t[a] = std::exp(-params[a]);

  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  std::vector<double> l(static_cast<std::size_t>(k)), q;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = logits[i].values();
    for (int a = 0; a < k; ++a) {
      l[static_cast<std::size_t>(a)] = z[static_cast<std::size_t>(a)] * inv_t[static_cast<std::size_t>(a)];
    }
    out.value += ce_from_logits(l, targets.targets[i], &q);
    for (int a = 0; a < k; ++a) {
      const double d = q[static_cast<std::size_t>(a)] - targets.targets[i][a];
      out.grad[static_cast<std::size_t>(a)] -= d * l[static_cast<std::size_t>(a)];
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.value *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

LossGrad dirichlet_ce(const std::vector<LogitVector>& logits,
                      const SoftTargetSet& targets,
                      const std::vector<double>& params, double lambda) {
  const int k = check_pair(logits, targets);
  const std::size_t kk = static_cast<std::size_t>(k);
  if (params.size() != kk * kk + kk) {
    throw InputError("dirichlet_ce: expected k*k + k parameters");
  }
  const std::size_t n = logits.size();
  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  std::vector<double> l(kk), q;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = logits[i].values();
    for (std::size_t a = 0; a < kk; ++a) {
      double acc = params[kk * kk + a];
      for (std::size_t b = 0; b < kk; ++b) acc += params[a * kk + b] * z[b];
      l[a] = acc;
    }
    out.value += ce_from_logits(l, targets.targets[i], &q);
    for (std::size_t a = 0; a < kk; ++a) {
      const double d = q[a] - targets.targets[i][static_cast<int>(a)];
      for (std::size_t b = 0; b < kk; ++b) out.grad[a * kk + b] += d * z[b];
      out.grad[kk * kk + a] += d;
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.value *= inv;
  for (double& g : out.grad) g *= inv;

  if (lambda != 0.0) {
    const double off_norm = lambda / (static_cast<double>(k) * (k - 1));
    const double bias_norm = lambda / static_cast<double>(k);
    double pen = 0.0;
    for (std::size_t a = 0; a < kk; ++a) {
      for (std::size_t b = 0; b < kk; ++b) {
        if (a == b) continue;
        const double w = params[a * kk + b];
        pen += off_norm * w * w;
        out.grad[a * kk + b] += 2.0 * off_norm * w;
      }
      const double bb = params[kk * kk + a];
      pen += bias_norm * bb * bb;
      out.grad[kk * kk + a] += 2.0 * bias_norm * bb;
    }
    out.value += pen;
  }
  return out;
}

std::vector<double> ats_features(const LogitVector& z) {
  const auto& v = z.values();
  const int k = z.size();
  if (k < 2) throw InputError("ats_features: need at least 2 classes");
  const double zmax = *std::max_element(v.begin(), v.end());
  Distribution p = softmax_t(z, 1.0);
  double p1 = 0.0, p2 = 0.0;
  for (int a = 0; a < k; ++a) {
    const double x = p[a];
    if (x > p1) {
      p2 = p1;
      p1 = x;
    } else if (x > p2) {
      p2 = x;
    }
  }
  const double h = entropy(p) / std::log(static_cast<double>(k));
  return {zmax, h, p1 - p2, p1};
}

double ats_temperature(const AdaptiveTemperatureParams& p, const LogitVector& z) {
  const std::vector<double> phi = ats_features(z);
  if (p.w.size() != phi.size()) {
    throw InputError("ats_temperature: expected " + std::to_string(phi.size()) +
                     " weights");
  }
  double pre = p.b;
  for (std::size_t j = 0; j < phi.size(); ++j) pre += p.w[j] * phi[j];
  return softplus(pre) + 0.1;
}

LossGrad ats_nll(const std::vector<LogitVector>& logits,
                 const std::vector<int>& voted,
                 const std::vector<double>& params, double lambda) {
  const std::size_t n = logits.size();
  if (n == 0) throw InputError("ats_nll: no examples");
  if (voted.size() != n) throw InputError("ats_nll: label count mismatch");
  if (params.size() != 5) throw InputError("ats_nll: expected 5 parameters");

  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = logits[i].values();
    const int k = logits[i].size();
    if (voted[i] < 0 || voted[i] >= k) {
      throw InputError("ats_nll: label out of range at " + std::to_string(i));
    }
    const std::vector<double> phi = ats_features(logits[i]);
    double pre = params[4];
    for (std::size_t j = 0; j < 4; ++j) pre += params[j] * phi[j];
    const double t = softplus(pre) + 0.1;

    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0, ez = 0.0;
    for (int a = 0; a < k; ++a) {
      const double e = std::exp((z[static_cast<std::size_t>(a)] - m) / t);
      s += e;
      ez += e * z[static_cast<std::size_t>(a)];
    }
    const double zy = z[static_cast<std::size_t>(voted[i])];
    out.value += m / t + std::log(s) - zy / t;

    const double dnll_dt = (zy - ez / s) / (t * t);
    const double dt_dpre = sigmoid(pre);
    for (std::size_t j = 0; j < 4; ++j) {
      out.grad[j] += dnll_dt * dt_dpre * phi[j];
    }
    out.grad[4] += dnll_dt * dt_dpre;
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.value *= inv;
  for (double& g : out.grad) g *= inv;

  for (std::size_t j = 0; j < 4; ++j) {
    out.value += lambda * params[j] * params[j];
    out.grad[j] += 2.0 * lambda * params[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fitting

CalibratorModel identity_model(int k) {
  CalibratorModel m;
  m.kind = CalibratorKind::identity;
  m.k = k;
  m.fitted_on = FittedOn::none;
  m.config_digest = digest_hex(std::string("identity"));
  m.params = TemperatureParams{1.0};
  return m;
}

CalibratorModel fit_temperature(const std::vector<LogitVector>& logits,
                                const SoftTargetSet& targets,
                                const optim::ScalarConfig& cfg) {
  const int k = check_pair(logits, targets);
  auto res = optim::minimize_scalar(
      [&](double t) { return temperature_ce(logits, targets, t); }, cfg);
  CalibratorModel m;
  m.kind = CalibratorKind::temperature;
  m.k = k;
  m.fitted_on = fitted_on_for(targets.source);
  m.config_digest = scalar_digest("temperature", targets.source, cfg,
                                  targets.smoothing.empty() ? "" : targets.smoothing);
  m.params = TemperatureParams{res.x};
  return m;
}

CalibratorModel fit_mcts(const std::vector<LogitVector>& logits,
                         const std::vector<AnnotationSet>& annotations, int k,
                         int s, std::uint64_t seed,
                         const optim::ScalarConfig& cfg) {
  if (logits.empty()) throw InputError("fit_mcts: no examples");
  if (annotations.size() != logits.size()) {
    throw InputError("fit_mcts: annotation count mismatch");
  }
  if (s < 1) throw InputError("fit_mcts: sample count must be >= 1");

  SoftTargetSet targets;
  targets.source = TargetSource::mc_samples;
  targets.targets.reserve(logits.size());
  std::vector<double> counts(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& labels = annotations[i].labels;
    if (labels.empty()) {
      throw InputError("fit_mcts: example " + std::to_string(i) +
                       " has no annotations");
    }
    std::fill(counts.begin(), counts.end(), 0.0);
    auto rng = make_stream(seed, stream::kMcSample, i);
    for (int draw = 0; draw < s; ++draw) {
      const int label = labels[static_cast<std::size_t>(
          next_index(rng, static_cast<int>(labels.size())))];
      if (label < 0 || label >= k) {
        throw InputError("fit_mcts: annotation out of range at example " +
                         std::to_string(i));
      }
      counts[static_cast<std::size_t>(label)] += 1.0;
    }
    std::vector<double> t(counts);
    for (double& c : t) c /= static_cast<double>(s);
    targets.targets.emplace_back(std::move(t));
  }

  CalibratorModel m = fit_temperature(logits, targets, cfg);
  m.config_digest = scalar_digest("mcts", targets.source, cfg,
                                  std::to_string(s) + "|" + std::to_string(seed));
  return m;
}

optim::VectorConfig affine_fit_config() {
  optim::VectorConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_steps = 2000;
  cfg.weight_decay = 1e-4;
  return cfg;
}

optim::VectorConfig vector_scaling_fit_config() {
  optim::VectorConfig cfg = affine_fit_config();
  cfg.learning_rate = 0.05;
  return cfg;
}

CalibratorModel fit_diag_affine(const std::vector<LogitVector>& logits,
                                const SoftTargetSet& targets,
                                const optim::VectorConfig& cfg) {
  const int k = check_pair(logits, targets);
  std::vector<double> init(2 * static_cast<std::size_t>(k), 0.0);
  std::fill(init.begin(), init.begin() + k, 1.0);
  auto res = optim::minimize_vector(
      [&](const std::vector<double>& p) {
        return diag_affine_ce(logits, targets, p).value;
      },
      [&](const std::vector<double>& p) {
        return diag_affine_ce(logits, targets, p).grad;
      },
      std::move(init), cfg);
  CalibratorModel m;
  m.kind = CalibratorKind::diag_affine;
  m.k = k;
  m.fitted_on = fitted_on_for(targets.source);
  m.config_digest = vector_digest("diag_affine", targets.source, cfg);
  DiagAffineParams p;
  p.w.assign(res.x.begin(), res.x.begin() + k);
  p.b.assign(res.x.begin() + k, res.x.end());
  m.params = std::move(p);
  return m;
}

CalibratorModel fit_vector_scaling(const std::vector<LogitVector>& logits,
                                   const SoftTargetSet& targets,
                                   const optim::VectorConfig& cfg) {
  const int k = check_pair(logits, targets);
  auto res = optim::minimize_vector(
      [&](const std::vector<double>& p) {
        return vector_scaling_ce(logits, targets, p).value;
      },
      [&](const std::vector<double>& p) {
        return vector_scaling_ce(logits, targets, p).grad;
      },
      std::vector<double>(static_cast<std::size_t>(k), 0.0), cfg);
  CalibratorModel m;
  m.kind = CalibratorKind::vector_temperature;
  m.k = k;
  m.fitted_on = fitted_on_for(targets.source);
  m.config_digest = vector_digest("vector_temperature", targets.source, cfg);
  m.params = VectorTemperatureParams{res.x};
  return m;
}

CalibratorModel fit_dirichlet(const std::vector<LogitVector>& logits,
                              const SoftTargetSet& targets, double lambda,
                              const optim::VectorConfig& cfg) {
  const int k = check_pair(logits, targets);
  const std::size_t kk = static_cast<std::size_t>(k);
  std::vector<double> init(kk * kk + kk, 0.0);
  for (std::size_t a = 0; a < kk; ++a) init[a * kk + a] = 1.0;
  auto res = optim::minimize_vector(
      [&](const std::vector<double>& p) {
        return dirichlet_ce(logits, targets, p, lambda).value;
      },
      [&](const std::vector<double>& p) {
        return dirichlet_ce(logits, targets, p, lambda).grad;
      },
      std::move(init), cfg);
  CalibratorModel m;
  m.kind = CalibratorKind::full_affine;
  m.k = k;
  m.fitted_on = fitted_on_for(targets.source);
  m.config_digest = vector_digest("full_affine", targets.source, cfg,
                                  std::to_string(lambda));
  FullAffineParams p;
  p.w.assign(res.x.begin(), res.x.begin() + static_cast<long>(kk * kk));
  p.b.assign(res.x.begin() + static_cast<long>(kk * kk), res.x.end());
  m.params = std::move(p);
  return m;
}

CalibratorModel fit_isotonic_confidence(const std::vector<double>& confidence,
                                        const std::vector<double>& target_top) {
  const std::size_t n = confidence.size();
  if (n < 2) throw InputError("fit_isotonic_confidence: need at least 2 points");
  if (target_top.size() != n) {
    throw InputError("fit_isotonic_confidence: size mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(confidence[i] >= 0.0 && confidence[i] <= 1.0) ||
        !(target_top[i] >= 0.0 && target_top[i] <= 1.0)) {
      throw InputError("fit_isotonic_confidence: entries must lie in [0, 1]");
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return confidence[a] < confidence[b];
                   });
  IsotonicParams p;
  p.thresholds.resize(n);
  std::vector<double> sorted_targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.thresholds[i] = confidence[order[i]];
    sorted_targets[i] = target_top[order[i]];
  }
  p.values = optim::pava(sorted_targets);

  CalibratorModel m;
  m.kind = CalibratorKind::isotonic;
  m.k = 0;
  m.fitted_on = FittedOn::soft;
  m.config_digest = digest_hex(std::string("isotonic|") + std::to_string(n));
  m.params = std::move(p);
  return m;
}

CalibratorModel fit_ats(const std::vector<LogitVector>& logits,
                        const std::vector<int>& voted, double lambda,
                        const optim::VectorConfig& cfg) {
  if (logits.empty()) throw InputError("fit_ats: no examples");
  const int k = logits[0].size();
  // Start at the identity temperature: softplus(b) + 0.1 = 1.
  std::vector<double> init(5, 0.0);
  init[4] = std::log(std::expm1(0.9));
  auto res = optim::minimize_vector(
      [&](const std::vector<double>& p) {
        return ats_nll(logits, voted, p, lambda).value;
      },
      [&](const std::vector<double>& p) {
        return ats_nll(logits, voted, p, lambda).grad;
      },
      std::move(init), cfg);
  CalibratorModel m;
  m.kind = CalibratorKind::adaptive_temperature;
  m.k = k;
  m.fitted_on = FittedOn::voted;
  m.config_digest = vector_digest("adaptive_temperature", TargetSource::voted,
                                  cfg, std::to_string(lambda));
  AdaptiveTemperatureParams p;
  p.w.assign(res.x.begin(), res.x.begin() + 4);
  p.b = res.x[4];
  m.params = std::move(p);
  return m;
}

// ---------------------------------------------------------------------------
// Application

namespace {

Distribution apply_isotonic(const IsotonicParams& p, const LogitVector& z) {
  const Distribution raw = softmax_t(z, 1.0);
  const int k = raw.size();
  const int top = voted_label(raw);
  const double c = raw[top];

  const auto it = std::upper_bound(p.thresholds.begin(), p.thresholds.end(), c);
  double mapped;
  if (it == p.thresholds.begin()) {
    mapped = p.values.front();
  } else {
    mapped = p.values[static_cast<std::size_t>(it - p.thresholds.begin()) - 1];
  }
  mapped = std::min(1.0, std::max(0.0, mapped));

  std::vector<double> out(static_cast<std::size_t>(k), 0.0);
  const double residual = 1.0 - c;
  if (residual < 1e-15) {
    const double fill = (1.0 - mapped) / static_cast<double>(k - 1);
    for (int a = 0; a < k; ++a) out[static_cast<std::size_t>(a)] = fill;
  } else {
    const double scale = (1.0 - mapped) / residual;
    for (int a = 0; a < k; ++a) out[static_cast<std::size_t>(a)] = raw[a] * scale;
  }
  out[static_cast<std::size_t>(top)] = mapped;
  return Distribution(std::move(out));
}

}  // namespace

Distribution apply(const CalibratorModel& model, const LogitVector& z) {
  if (model.k > 0 && model.k != z.size()) {
    throw InputError("apply: model expects " + std::to_string(model.k) +
                     " classes, got " + std::to_string(z.size()));
  }
  switch (model.kind) {
    case CalibratorKind::identity:
      return softmax_t(z, 1.0);
    case CalibratorKind::temperature:
      return softmax_t(z, std::get<TemperatureParams>(model.params).t);
    case CalibratorKind::vector_temperature: {
      const auto& p = std::get<VectorTemperatureParams>(model.params);
      std::vector<double> l(p.u.size());
      for (std::size_t a = 0; a < p.u.size(); ++a) {
        l[a] = z[static_cast<int>(a)] * std::exp(-p.u[a]);
      }
      return softmax_t(LogitVector(std::move(l)), 1.0);
    }
    case CalibratorKind::diag_affine: {
      const auto& p = std::get<DiagAffineParams>(model.params);
      std::vector<double> l(p.w.size());
      for (std::size_t a = 0; a < p.w.size(); ++a) {
        l[a] = p.w[a] * z[static_cast<int>(a)] + p.b[a];
      }
      return softmax_t(LogitVector(std::move(l)), 1.0);
    }
    case CalibratorKind::full_affine: {
      const auto& p = std::get<FullAffineParams>(model.params);
      const std::size_t kk = p.b.size();
      std::vector<double> l(kk);
      for (std::size_t a = 0; a < kk; ++a) {
        double acc = p.b[a];
        for (std::size_t b = 0; b < kk; ++b) {
          acc += p.w[a * kk + b] * z[static_cast<int>(b)];
        }
        l[a] = acc;
      }
      return softmax_t(LogitVector(std::move(l)), 1.0);
    }
    case CalibratorKind::isotonic:
      return apply_isotonic(std::get<IsotonicParams>(model.params), z);
    case CalibratorKind::adaptive_temperature: {
      const auto& p = std::get<AdaptiveTemperatureParams>(model.params);
      return softmax_t(z, ats_temperature(p, z));
    }
  }
  throw InputError("apply: unknown calibrator kind");
}

// ---------------------------------------------------------------------------
// Serialization

const char* kind_name(CalibratorKind kind) {
  switch (kind) {
    case CalibratorKind::identity: return "identity";
    case CalibratorKind::temperature: return "temperature";
    case CalibratorKind::vector_temperature: return "vector_temperature";
    case CalibratorKind::diag_affine: return "diag_affine";
    case CalibratorKind::full_affine: return "full_affine";
    case CalibratorKind::isotonic: return "isotonic";
    case CalibratorKind::adaptive_temperature: return "adaptive_temperature";
  }
  return "?";
}

const char* fitted_on_name(FittedOn f) {
  switch (f) {
    case FittedOn::none: return "none";
    case FittedOn::voted: return "voted";
    case FittedOn::soft: return "soft";
    case FittedOn::mc_samples: return "mc_samples";
    case FittedOn::pseudo_soft: return "pseudo_soft";
  }
  return "?";
}

namespace {

using json = nlohmann::ordered_json;

std::string hex_double(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", x);
  return std::string(buf);
}

double parse_double(const nlohmann::json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
      throw LoadError("model: cannot parse float at " + where);
    }
    return x;
  }
  throw LoadError("model: expected a float at " + where);
}

json hex_array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(hex_double(x));
  return a;
}

std::vector<double> parse_array(const nlohmann::json& v, std::size_t expect,
                                const std::string& where) {
  if (!v.is_array()) throw LoadError("model: expected an array at " + where);
  if (expect != 0 && v.size() != expect) {
    throw LoadError("model: expected " + std::to_string(expect) +
                    " entries at " + where + ", got " + std::to_string(v.size()));
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(parse_double(v[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

}  // namespace

std::string model_to_json(const CalibratorModel& model) {
  json j;
  j["format"] = "ambical.model";
  j["version"] = kModelFormatVersion;
  j["kind"] = kind_name(model.kind);
  j["k"] = model.k;
  j["fitted_on"] = fitted_on_name(model.fitted_on);
  j["config_digest"] = model.config_digest;
  json p = json::object();
  switch (model.kind) {
    case CalibratorKind::identity:
      break;
    case CalibratorKind::temperature:
      p["t"] = hex_double(std::get<TemperatureParams>(model.params).t);
      break;
    case CalibratorKind::vector_temperature:
      p["u"] = hex_array(std::get<VectorTemperatureParams>(model.params).u);
      break;
    case CalibratorKind::diag_affine: {
      const auto& dp = std::get<DiagAffineParams>(model.params);
      p["w"] = hex_array(dp.w);
      p["b"] = hex_array(dp.b);
      break;
    }
    case CalibratorKind::full_affine: {
      const auto& fp = std::get<FullAffineParams>(model.params);
      p["w"] = hex_array(fp.w);
      p["b"] = hex_array(fp.b);
      break;
    }
    case CalibratorKind::isotonic: {
      const auto& ip = std::get<IsotonicParams>(model.params);
      p["thresholds"] = hex_array(ip.thresholds);
      p["values"] = hex_array(ip.values);
      break;
    }
    case CalibratorKind::adaptive_temperature: {
      const auto& ap = std::get<AdaptiveTemperatureParams>(model.params);
      p["w"] = hex_array(ap.w);
      p["b"] = hex_double(ap.b);
      break;
    }
  }
  j["params"] = std::move(p);
  return j.dump(2) + "\n";
}

CalibratorModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(std::string("model: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "ambical.model") {
    throw LoadError("model: missing or wrong format tag");
  }
  if (j.value("version", -1) != kModelFormatVersion) {
    throw LoadError("model: unsupported format version");
  }

  static const std::map<std::string, CalibratorKind> kinds = {
      {"identity", CalibratorKind::identity},
      {"temperature", CalibratorKind::temperature},
      {"vector_temperature", CalibratorKind::vector_temperature},
      {"diag_affine", CalibratorKind::diag_affine},
      {"full_affine", CalibratorKind::full_affine},
      {"isotonic", CalibratorKind::isotonic},
      {"adaptive_temperature", CalibratorKind::adaptive_temperature},
  };
  static const std::map<std::string, FittedOn> fits = {
      {"none", FittedOn::none},           {"voted", FittedOn::voted},
      {"soft", FittedOn::soft},           {"mc_samples", FittedOn::mc_samples},
      {"pseudo_soft", FittedOn::pseudo_soft},
  };

  const std::string kind_str = j.value("kind", "");
  const auto kit = kinds.find(kind_str);
  if (kit == kinds.end()) throw LoadError("model: unknown kind '" + kind_str + "'");

  const std::string fit_str = j.value("fitted_on", "none");
  const auto fit = fits.find(fit_str);
  if (fit == fits.end()) {
    throw LoadError("model: unknown fitted_on '" + fit_str + "'");
  }

  CalibratorModel m;
  m.kind = kit->second;
  m.k = j.value("k", 0);
  if (m.k < 0) throw LoadError("model: negative class count");
  m.fitted_on = fit->second;
  m.config_digest = j.value("config_digest", "");

  if (!j.contains("params") || !j["params"].is_object()) {
    throw LoadError("model: missing params object");
  }
  const auto& p = j["params"];
  const std::size_t kk = static_cast<std::size_t>(m.k);
  switch (m.kind) {
    case CalibratorKind::identity:
      m.params = TemperatureParams{1.0};
      break;
    case CalibratorKind::temperature: {
      if (!p.contains("t")) throw LoadError("model: temperature needs params.t");
      const double t = parse_double(p["t"], "params.t");
      if (!(t > 0.0) || !std::isfinite(t)) {
        throw LoadError("model: temperature must be positive and finite");
      }
      m.params = TemperatureParams{t};
      break;
    }
    case CalibratorKind::vector_temperature:
      if (m.k < 2) throw LoadError("model: vector_temperature needs k >= 2");
      m.params = VectorTemperatureParams{
          parse_array(p.value("u", nlohmann::json()), kk, "params.u")};
      break;
    case CalibratorKind::diag_affine: {
      if (m.k < 2) throw LoadError("model: diag_affine needs k >= 2");
      DiagAffineParams dp;
      dp.w = parse_array(p.value("w", nlohmann::json()), kk, "params.w");
      dp.b = parse_array(p.value("b", nlohmann::json()), kk, "params.b");
      m.params = std::move(dp);
      break;
    }
    case CalibratorKind::full_affine: {
      if (m.k < 2) throw LoadError("model: full_affine needs k >= 2");
      FullAffineParams fp;
      fp.w = parse_array(p.value("w", nlohmann::json()), kk * kk, "params.w");
      fp.b = parse_array(p.value("b", nlohmann::json()), kk, "params.b");
      m.params = std::move(fp);
      break;
    }
    case CalibratorKind::isotonic: {
      IsotonicParams ip;
      ip.thresholds =
          parse_array(p.value("thresholds", nlohmann::json()), 0, "params.thresholds");
      ip.values = parse_array(p.value("values", nlohmann::json()), 0, "params.values");
      if (ip.thresholds.empty() || ip.thresholds.size() != ip.values.size()) {
        throw LoadError("model: isotonic knot arrays are empty or mismatched");
      }
      if (!std::is_sorted(ip.thresholds.begin(), ip.thresholds.end()) ||
          !std::is_sorted(ip.values.begin(), ip.values.end())) {
        throw LoadError("model: isotonic knots must be sorted");
      }
      m.params = std::move(ip);
      break;
    }
    case CalibratorKind::adaptive_temperature: {
      AdaptiveTemperatureParams ap;
      ap.w = parse_array(p.value("w", nlohmann::json()), 4, "params.w");
      if (!p.contains("b")) throw LoadError("model: adaptive_temperature needs params.b");
      ap.b = parse_double(p["b"], "params.b");
      m.params = std::move(ap);
      break;
    }
  }
  return m;
}

}  // namespace cal
}  // namespace ambical
