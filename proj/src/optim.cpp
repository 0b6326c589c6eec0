#include "ambical/optim.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ambical/errors.hpp"

namespace ambical {
namespace optim {

ScalarResult minimize_scalar(const std::function<double(double)>& objective,
                             const ScalarConfig& cfg) {
  if (!(cfg.lower > 0.0) || !(cfg.upper > cfg.lower)) {
    throw InputError("minimize_scalar: need 0 < lower < upper");
  }
  if (!(cfg.tol > 0.0) || cfg.max_iters < 1) {
    throw InputError("minimize_scalar: tol and max_iters must be positive");
  }

  ScalarResult best;
  best.value = std::numeric_limits<double>::infinity();
  int evals = 0;
  auto eval = [&](double u) {
    const double t = std::exp(u);
    const double v = objective(t);
    ++evals;
    if (!std::isfinite(v)) {
      throw OptimError("objective not finite at t=" + std::to_string(t));
    }
    if (v < best.value || evals == 1) {
      best.x = t;
      best.value = v;
    }
    return v;
  };

  double a = std::log(cfg.lower);
  double b = std::log(cfg.upper);
  const double invphi = 0.6180339887498949;  // (sqrt(5) - 1) / 2

  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  for (int it = 0; it < cfg.max_iters && (b - a) > cfg.tol; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = eval(d);
    }
  }
  best.evaluations = evals;
  return best;
}

VectorResult minimize_vector(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::function<std::vector<double>(const std::vector<double>&)>& gradient,
    std::vector<double> init, const VectorConfig& cfg) {
  if (init.empty()) throw InputError("minimize_vector: empty initial point");
  if (!(cfg.learning_rate > 0.0) || cfg.max_steps < 1) {
    throw InputError("minimize_vector: bad learning rate or step budget");
  }
  const std::size_t n = init.size();
  const double wd = cfg.weight_decay;

  auto full_loss = [&](const std::vector<double>& p) {
    double value = objective(p);
    if (wd != 0.0) {
      double sq = 0.0;
      for (double xi : p) sq += xi * xi;
      value += wd * sq;
    }
    return value;
  };

  std::vector<double> x = std::move(init);
  std::vector<double> m(n, 0.0), v(n, 0.0), g(n, 0.0);

  VectorResult out;
  out.x = x;
  out.value = full_loss(x);
  if (!std::isfinite(out.value)) {
    throw OptimError("objective not finite at the initial point");
  }
  double prev = out.value;

  double b1t = 1.0, b2t = 1.0;
  for (int step = 1; step <= cfg.max_steps; ++step) {
    g = gradient(x);
    if (g.size() != n) {
      throw InputError("minimize_vector: gradient size mismatch");
    }
    double gmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] += 2.0 * wd * x[i];
      if (!std::isfinite(g[i])) {
        throw OptimError("gradient not finite at step " + std::to_string(step));
      }
      gmax = std::max(gmax, std::abs(g[i]));
    }
    out.steps = step;
    if (gmax < cfg.grad_tol) break;

    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - b1t);
      const double vhat = v[i] / (1.0 - b2t);
      x[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
    }

    const double value = full_loss(x);
    if (!std::isfinite(value)) {
      throw OptimError("objective not finite at step " + std::to_string(step));
    }
    if (value < out.value) {
      out.value = value;
      out.x = x;
    }
    if (std::abs(prev - value) < cfg.loss_tol) break;
    prev = value;
  }
  return out;
}

std::vector<double> pava(const std::vector<double>& values,
                         const std::vector<double>& weights) {
  const std::size_t n = values.size();
  if (n == 0) throw InputError("pava: empty input");
  if (weights.size() != n) throw InputError("pava: weight size mismatch");
  for (double w : weights) {
    if (!(w > 0.0)) throw InputError("pava: weights must be positive");
  }

  // Stack of merged blocks: running weighted mean, total weight, length.
  std::vector<double> mean(n), weight(n);
  std::vector<std::size_t> len(n);
  std::size_t top = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mean[top] = values[i];
    weight[top] = weights[i];
    len[top] = 1;
    ++top;
    while (top >= 2 && mean[top - 2] > mean[top - 1]) {
      const double w = weight[top - 2] + weight[top - 1];
      mean[top - 2] =
          (mean[top - 2] * weight[top - 2] + mean[top - 1] * weight[top - 1]) / w;
      weight[top - 2] = w;
      len[top - 2] += len[top - 1];
      --top;
    }
  }

  std::vector<double> out;
  out.reserve(n);
  for (std::size_t b = 0; b < top; ++b) {
    out.insert(out.end(), len[b], mean[b]);
  }
  return out;
}

std::vector<double> pava(const std::vector<double>& values) {
  return pava(values, std::vector<double>(values.size(), 1.0));
}

double check_gradient(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::function<std::vector<double>(const std::vector<double>&)>& gradient,
    const std::vector<double>& point, double eps) {
  if (point.empty()) throw InputError("check_gradient: empty point");
  if (!(eps > 0.0)) throw InputError("check_gradient: eps must be positive");
  const std::vector<double> g = gradient(point);
  if (g.size() != point.size()) {
    throw InputError("check_gradient: gradient size mismatch");
  }
  double worst = 0.0;
  std::vector<double> p = point;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + eps;
    const double hi = objective(p);
    p[i] = saved - eps;
    const double lo = objective(p);
    p[i] = saved;
    const double fd = (hi - lo) / (2.0 * eps);
    const double rel = std::abs(g[i] - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace optim
}  // namespace ambical
