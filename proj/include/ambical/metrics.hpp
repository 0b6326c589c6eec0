#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ambical/core.hpp"

namespace ambical {
namespace metrics {

enum class BinScheme { equal_width, equal_mass };

struct ReliabilityBins {
  BinScheme scheme = BinScheme::equal_width;
  std::vector<double> edges;      // bins + 1 entries
  std::vector<double> count;      // examples per bin
  std::vector<double> mean_conf;  // 0 for empty bins
  std::vector<double> mean_acc;
  std::vector<double> gap;        // |mean_conf - mean_acc|, 0 for empty bins
};

struct BinnedEce {
  double ece = 0.0;
  ReliabilityBins bins;
};

/// Binned calibration error of scalar confidences against binary outcomes:
/// sum over bins of (bin weight) * |mean confidence - accuracy|. Empty bins
/// contribute nothing. equal_mass assigns n/bins examples per bin after a
/// stable sort by (confidence, index), spreading the remainder over the
/// first bins.
BinnedEce ece_binned(const std::vector<double>& confidence,
                     const std::vector<int>& correct, int bins,
                     BinScheme scheme);

/// draws[s][i] = label of example i in Monte Carlo draw s, sampled from
/// pi[i]. Row s comes from stream (seed, s), so tables for the same seed
/// agree on their common prefix of draws regardless of s_total.
std::vector<std::vector<int>> make_draw_table(const std::vector<Distribution>& pi,
                                              int s_total, std::uint64_t seed);

struct McEce {
  double mean = 0.0;              // average of the per-draw binned ECEs
  std::vector<double> per_draw;
  ReliabilityBins pooled_bins;    // accuracies pooled over all draws
};

/// Calibration error against labels drawn from the annotator distribution,
/// averaged over s draws.
McEce ece_true(const std::vector<Distribution>& probs,
               const std::vector<Distribution>& pi, int s, std::uint64_t seed,
               int bins, BinScheme scheme = BinScheme::equal_width);

McEce ece_true_with_table(const std::vector<Distribution>& probs,
                          const std::vector<std::vector<int>>& draws, int bins,
                          BinScheme scheme);

/// Classwise variant: per draw, per class, equal-width bins of that class's
/// predicted probability, averaged over classes then draws.
double cwece_true(const std::vector<Distribution>& probs,
                  const std::vector<Distribution>& pi, int s,
                  std::uint64_t seed, int bins);

double cwece_true_with_table(const std::vector<Distribution>& probs,
                             const std::vector<std::vector<int>>& draws,
                             int bins);

/// Squared distance to the annotator distribution for one example.
double brier_soft(const Distribution& p, const Distribution& pi);

/// Cross entropy against the annotator distribution, probabilities floored
/// at 1e-12 under the log.
double nll_soft(const Distribution& p, const Distribution& pi);

double mean_brier(const std::vector<Distribution>& probs,
                  const std::vector<Distribution>& pi);
double mean_nll(const std::vector<Distribution>& probs,
                const std::vector<Distribution>& pi);

/// |p_c - pi_c| at the model's predicted class c.
double pointwise_true_error(const Distribution& p, const Distribution& pi);

/// Pointwise error profiled over equal-frequency bins of normalized
/// annotator entropy.
struct EntropyProfile {
  std::vector<double> bin_center;  // mean normalized entropy per bin
  std::vector<double> mean_error;
  std::vector<double> std_error;   // sample std / sqrt(count), 0 for count < 2
  std::vector<double> count;
};

EntropyProfile entropy_profile(const std::vector<Distribution>& probs,
                               const std::vector<Distribution>& pi,
                               int n_bins);

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------

struct McConfig {
  int s = 100;
  std::uint64_t seed = 42;
  int bins = 15;
};

/// Everything the reports need for one (method, split) cell.
struct MetricsReport {
  double ece_true = 0.0;
  double aece_true = 0.0;
  double cwece_true = 0.0;
  double ece_voted = 0.0;
  double brier = 0.0;
  double nll = 0.0;
  double ece_true_stderr = 0.0;  // across-draw standard error
  std::optional<double> t_fitted;
  ReliabilityBins reliability;   // pooled equal-width bins
  McConfig mc;
};

MetricsReport compute_report(const std::vector<Distribution>& probs,
                             const std::vector<Distribution>& pi,
                             const std::vector<int>& voted,
                             const McConfig& mc);

}  // namespace metrics
}  // namespace ambical
