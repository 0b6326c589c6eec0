#pragma once

#include <functional>
#include <vector>

namespace ambical {
namespace optim {

/// Golden-section search for a positive scalar (a temperature). The search
/// runs on log(t), the scale on which these objectives are close to
/// unimodal. tol is the final bracket width in log space, so it acts as a
/// relative tolerance on t.
struct ScalarConfig {
  double lower = 0.05;
  double upper = 100.0;
  double tol = 1e-12;
  int max_iters = 200;
};

struct ScalarResult {
  double x = 1.0;
  double value = 0.0;
  int evaluations = 0;
};

ScalarResult minimize_scalar(const std::function<double(double)>& objective,
                             const ScalarConfig& cfg = {});

/// Full-gradient Adam with optional decoupled L2: weight_decay adds
/// wd * ||x||^2 to the objective (2 * wd * x to the gradient). Stops early
/// when the max-abs gradient entry falls below grad_tol or the objective
/// improves by less than loss_tol between steps. Returns the best iterate
/// seen. Non-finite losses or gradients raise an optimization error naming
/// the step at which they appeared.
struct VectorConfig {
  double learning_rate = 0.01;
  int max_steps = 2000;
  double weight_decay = 0.0;
  double grad_tol = 1e-9;
  double loss_tol = 1e-11;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct VectorResult {
  std::vector<double> x;
  double value = 0.0;  // includes the weight decay penalty
  int steps = 0;
};

VectorResult minimize_vector(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::function<std::vector<double>(const std::vector<double>&)>& gradient,
    std::vector<double> init, const VectorConfig& cfg = {});

/// Weighted least-squares isotonic regression by pool-adjacent-violators.
/// Returns the non-decreasing vector minimizing sum_i w_i (out_i - v_i)^2.
/// Weights must be strictly positive.
std::vector<double> pava(const std::vector<double>& values,
                         const std::vector<double>& weights);

std::vector<double> pava(const std::vector<double>& values);

/// Central-difference gradient check. Returns the worst relative error
/// max_i |g_i - fd_i| / max(1, |fd_i|), which stays comparable whether the
/// gradient is near zero or large.
double check_gradient(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::function<std::vector<double>(const std::vector<double>&)>& gradient,
    const std::vector<double>& point, double eps = 1e-5);

}  // namespace optim
}  // namespace ambical
