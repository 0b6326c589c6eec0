#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ambical/core.hpp"
#include "ambical/optim.hpp"

namespace ambical {
namespace cal {

// ---------------------------------------------------------------------------
// Fitting targets

enum class TargetSource { voted, annotator, mc_samples, label_smooth };

/// Per-example fitting targets plus bookkeeping about where they came from.
/// The label-smoothing fields stay empty for the other sources.
struct SoftTargetSet {
  std::vector<Distribution> targets;
  TargetSource source = TargetSource::voted;
  std::string smoothing;          // "global" | "fixed" | "entropy" | "classwise"
  double eps_bar = 0.0;           // mean complement of top-class confidence
  std::vector<double> eps;        // effective smoothing mass per example
  std::vector<double> eps_class;  // classwise variant only
};

SoftTargetSet voted_targets(const std::vector<int>& voted, int k);
SoftTargetSet annotator_targets(std::vector<Distribution> pi);

/// Pseudo-soft targets (1 - eps_i) * onehot(voted_i) + eps_i / k. The mode
/// decides where eps_i comes from; every mode derives its statistics from
/// the uncalibrated softmax of the raw logits.
struct SmoothingSpec {
  enum class Mode { global, fixed, entropy, classwise };
  Mode mode = Mode::global;
  double eps = 0.1;  // fixed mode only
};

SoftTargetSet label_smoothing_targets(const std::vector<LogitVector>& logits,
                                      const std::vector<int>& voted, int k,
                                      const SmoothingSpec& spec);

// ---------------------------------------------------------------------------
// Models

enum class CalibratorKind {
  identity,
  temperature,
  vector_temperature,
  diag_affine,
  full_affine,
  isotonic,
  adaptive_temperature,
};

enum class FittedOn { none, voted, soft, mc_samples, pseudo_soft };

struct TemperatureParams {
  double t = 1.0;
};
struct VectorTemperatureParams {
  std::vector<double> u;  // per-class temperature exp(u_k)
};
struct DiagAffineParams {
  std::vector<double> w, b;  // logits become w * z + b elementwise
};
struct FullAffineParams {
  std::vector<double> w;  // k x k, row major
  std::vector<double> b;
};
struct IsotonicParams {
  std::vector<double> thresholds;  // ascending confidence knots
  std::vector<double> values;      // non-decreasing replacement confidences
};
struct AdaptiveTemperatureParams {
  std::vector<double> w;  // one weight per input feature
  double b = 0.0;         // temperature = softplus(w . phi + b) + 0.1
};

struct CalibratorModel {
  CalibratorKind kind = CalibratorKind::identity;
  int k = 0;  // 0 = works for any class count (identity, isotonic)
  FittedOn fitted_on = FittedOn::none;
  std::string config_digest;
  std::variant<TemperatureParams, VectorTemperatureParams, DiagAffineParams,
               FullAffineParams, IsotonicParams, AdaptiveTemperatureParams>
      params = TemperatureParams{1.0};
};

/// Calibrated probabilities for one example.
Distribution apply(const CalibratorModel& model, const LogitVector& z);

const char* kind_name(CalibratorKind kind);
const char* fitted_on_name(FittedOn f);

// ---------------------------------------------------------------------------
// Fitting

CalibratorModel identity_model(int k);

/// One shared temperature minimizing the mean cross entropy between
/// softmax(z / t) and the targets. With voted targets this is classic
/// temperature scaling; with annotator targets it matches the soft labels
/// instead; with sampled targets it is the Monte Carlo variant.
CalibratorModel fit_temperature(const std::vector<LogitVector>& logits,
                                const SoftTargetSet& targets,
                                const optim::ScalarConfig& cfg = {});

/// Temperature fit against s annotations sampled per example (uniformly,
/// with replacement, from each example's own annotation pool). s = 1 uses
/// a single random annotator per example.
CalibratorModel fit_mcts(const std::vector<LogitVector>& logits,
                         const std::vector<AnnotationSet>& annotations, int k,
                         int s, std::uint64_t seed,
                         const optim::ScalarConfig& cfg = {});

// Optimizer presets for the multi-parameter fits.
optim::VectorConfig affine_fit_config();          // lr 0.01
optim::VectorConfig vector_scaling_fit_config();  // lr 0.05

CalibratorModel fit_diag_affine(const std::vector<LogitVector>& logits,
                                const SoftTargetSet& targets,
                                const optim::VectorConfig& cfg = affine_fit_config());

CalibratorModel fit_vector_scaling(
    const std::vector<LogitVector>& logits, const SoftTargetSet& targets,
    const optim::VectorConfig& cfg = vector_scaling_fit_config());

/// Full affine map with the off-diagonal / bias regularizer. lambda scales
/// mean-squared off-diagonal weights plus mean-squared biases.
CalibratorModel fit_dirichlet(const std::vector<LogitVector>& logits,
                              const SoftTargetSet& targets,
                              double lambda = 1e-3,
                              const optim::VectorConfig& cfg = affine_fit_config());

/// Isotonic regression of annotator mass at the predicted class onto model
/// confidence. Inputs are parallel arrays over calibration examples.
CalibratorModel fit_isotonic_confidence(const std::vector<double>& confidence,
                                        const std::vector<double>& target_top);

/// Per-example temperature from summary features of the raw logits,
/// fit against voted labels. lambda is an L2 penalty on the feature
/// weights only.
CalibratorModel fit_ats(const std::vector<LogitVector>& logits,
                        const std::vector<int>& voted, double lambda = 1e-3,
                        const optim::VectorConfig& cfg = affine_fit_config());

// ---------------------------------------------------------------------------
// Losses, exposed for optimizer-free verification.

struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// Mean cross entropy of softmax(z / t) against the targets.
double temperature_ce(const std::vector<LogitVector>& logits,
                      const SoftTargetSet& targets, double t);
double temperature_ce_grad(const std::vector<LogitVector>& logits,
                           const SoftTargetSet& targets, double t);

/// params = [w(k), b(k)].
LossGrad diag_affine_ce(const std::vector<LogitVector>& logits,
                        const SoftTargetSet& targets,
                        const std::vector<double>& params);

/// params = [u(k)].
LossGrad vector_scaling_ce(const std::vector<LogitVector>& logits,
                           const SoftTargetSet& targets,
                           const std::vector<double>& params);

/// params = [w(k*k) row major, b(k)]; lambda adds the off-diagonal / bias
/// penalty described at fit_dirichlet.
LossGrad dirichlet_ce(const std::vector<LogitVector>& logits,
                      const SoftTargetSet& targets,
                      const std::vector<double>& params, double lambda);

/// params = [w(4), b]; lambda penalizes w only.
LossGrad ats_nll(const std::vector<LogitVector>& logits,
                 const std::vector<int>& voted,
                 const std::vector<double>& params, double lambda);

/// Feature vector the adaptive-temperature model sees: max logit,
/// normalized entropy of the raw softmax, top-two probability gap, top
/// probability.
std::vector<double> ats_features(const LogitVector& z);

/// Temperature the adaptive model assigns to one example.
double ats_temperature(const AdaptiveTemperatureParams& p, const LogitVector& z);

// ---------------------------------------------------------------------------
// Serialization. Parameters round-trip bit exactly (hex float encoding).

std::string model_to_json(const CalibratorModel& model);
CalibratorModel model_from_json(const std::string& text);

}  // namespace cal
}  // namespace ambical
