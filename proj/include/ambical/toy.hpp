#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ambical/core.hpp"
#include "ambical/metrics.hpp"

namespace ambical {
namespace toy {

/// Three Gaussian clusters in the plane. The outer two are unambiguous
/// (one-hot annotator distribution); the middle one splits 70/30 between
/// two classes. A small net trained on the voted labels becomes the
/// "model" whose calibration the experiment studies; the per-point sampled
/// labels are kept for inspection and the points export.
struct ToyConfig {
  int n_per_cluster = 2000;
  double train_fraction = 0.6;
  double cal_fraction = 0.2;  // test gets the remainder
  int hidden = 64;
  int epochs = 200;
  double learning_rate = 0.1;
  std::uint64_t data_seed = 1;
  std::uint64_t label_seed = 2;
  std::uint64_t train_seed = 3;
  metrics::McConfig mc;  // s=100, seed=42, 15 bins
};

struct ToyPoint {
  double x0 = 0.0, x1 = 0.0;
  int cluster = 0;
  Distribution pi;      // exact annotator distribution at this point
  int sampled_label = 0;  // single draw from pi
  int voted = 0;          // argmax of pi; the training target
  int split = 0;          // 0 train, 1 cal, 2 test
};

struct ToyData {
  int k = 3;
  std::vector<ToyPoint> points;
};

ToyData generate_toy(const ToyConfig& cfg);

/// 2 -> hidden -> hidden -> 3 dense net with tanh activations, trained by
/// full-batch gradient descent on cross entropy against the voted labels.
struct Mlp {
  int in = 2, hidden = 64, out = 3;
  std::vector<double> w1, b1;  // hidden x in
  std::vector<double> w2, b2;  // hidden x hidden
  std::vector<double> w3, b3;  // out x hidden

  LogitVector forward(double x0, double x1) const;
};

Mlp train_toy_mlp(const ToyData& data, const ToyConfig& cfg);

/// Histogram binning on top-class confidence: each equal-width bin maps to
/// its observed accuracy on the calibration set; empty bins keep their
/// center.
struct HistogramBinning {
  int bins = 15;
  std::vector<double> value;
};

HistogramBinning fit_histogram_binning(const std::vector<double>& confidence,
                                       const std::vector<int>& correct,
                                       int bins);
Distribution apply_histogram_binning(const HistogramBinning& hb,
                                     const Distribution& p);

struct ToyMethodResult {
  std::string method;  // uncal | ts | platt | hb | slts
  double ece_voted = 0.0;
  double ece_true = 0.0;
  double ece_true_ambiguous = 0.0;
  double ece_true_clear = 0.0;
  std::optional<double> t_fitted;
};

struct ToyReport {
  ToyConfig cfg;
  double test_accuracy_voted = 0.0;
  double test_accuracy_clear = 0.0;
  double mean_conf_ambiguous = 0.0;  // raw net confidence, middle cluster
  std::vector<ToyMethodResult> methods;
};

ToyReport run_toy_experiment(const ToyConfig& cfg);

std::string toy_report_to_json(const ToyReport& report);
std::string toy_report_to_markdown(const ToyReport& report);

}  // namespace toy
}  // namespace ambical
