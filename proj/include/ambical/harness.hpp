#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ambical/annotators.hpp"
#include "ambical/calibrators.hpp"
#include "ambical/core.hpp"
#include "ambical/metrics.hpp"

namespace ambical {
namespace harness {

// ---------------------------------------------------------------------------
// Dataset IO. Line-delimited JSON: a header object {version, k, class_names}
// followed by one record per line {id, logits, annotations?, pi?}.

LogitDataset load_dataset(const std::string& path);
LogitDataset dataset_from_string(const std::string& text);
void save_dataset(const LogitDataset& ds, const std::string& path);
std::string dataset_to_string(const LogitDataset& ds);

// ---------------------------------------------------------------------------
// Splits

struct SplitIndices {
  std::vector<int> cal, test;
};

/// Stratified by voted label: each class is shuffled on its own stream and
/// cut at round-half-up(cal_fraction * class size), calibration side first.
SplitIndices split_stratified(const LogitDataset& ds, double cal_fraction,
                              std::uint64_t seed, bool stratify = true);

// ---------------------------------------------------------------------------
// Methods

enum class Method {
  uncal,
  ts,
  ats,
  platt,
  dirichlet_hard,
  slts,
  mcts,
  softplatt,
  vs,
  ir_soft,
  dirichlet_soft,
  lsts,
  lsts_fixed,
  lsts_entropy,
  lsts_classwise,
  oracle_ts,
};

const char* method_name(Method m);
Method method_from_name(const std::string& name);
std::vector<Method> default_methods();

struct MethodParams {
  int mcts_s = 1;
  double lsts_fixed_eps = 0.1;
  double dirichlet_lambda = 1e-3;
  double ats_lambda = 1e-3;
};

/// Fits one method on the calibration slice (oracle_ts uses the test slice
/// instead; that is its point). The seed drives Monte Carlo target sampling
/// where the method needs it.
cal::CalibratorModel fit_method(Method m, const LogitDataset& ds,
                                const std::vector<int>& cal_idx,
                                const std::vector<int>& test_idx,
                                const MethodParams& params, std::uint64_t seed);

/// "isic" or a path to a confusion-matrix JSON file.
annotators::ConfusionMatrix resolve_confusion(const std::string& spec);

/// Replaces every example's annotations with m fresh draws from the
/// confusion row of its voted label, then recomputes pi and voted.
LogitDataset resample_annotations(const LogitDataset& ds,
                                  const annotators::ConfusionMatrix& cm, int m,
                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiment configuration

struct SplitConfig {
  double cal_fraction = 0.5;
  bool stratify = true;
  std::uint64_t seed = 42;
};

/// When present, the run-seed axis regenerates all annotations from the
/// voted labels through a confusion matrix instead of varying the split.
struct AnnotationResample {
  std::string confusion;  // "isic" or a file path
  int m = 9;
};

struct AblationSettings {
  std::vector<double> cal_fractions = {0.05, 0.1, 0.25, 0.5, 1.0};
  std::vector<int> annotation_counts;
  std::vector<int> mcts_s_values = {1, 5, 25, 50};
  bool nested_annotations = false;  // default: fresh resample per m
};

struct ExperimentConfig {
  std::string dataset_path;
  std::vector<Method> methods = default_methods();
  std::vector<std::uint64_t> seeds = {42};
  SplitConfig split;
  metrics::McConfig mc;  // s=100, seed=42, bins=15
  MethodParams params;
  bool allow_oracle = false;
  std::optional<AnnotationResample> annotation_resample;
  AblationSettings ablation;
  std::string reference;  // optional reference table name
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);  // canonical echo
std::string config_digest(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Benchmark grid

struct CellResult {
  Method method = Method::uncal;
  std::uint64_t seed = 0;
  double axis_value = 0.0;  // ablations only
  bool oracle = false;
  std::string error;       // empty = success
  std::string error_kind;
  metrics::MetricsReport metrics;
};

struct BenchmarkReport {
  ExperimentConfig cfg;
  std::string digest;          // of the canonical config
  std::string dataset_digest;  // of the dataset file bytes
  std::vector<CellResult> cells;
};

BenchmarkReport run_benchmark(const LogitDataset& ds,
                              const ExperimentConfig& cfg, int threads = 1);

enum class AblationAxis { cal_size, annotation_count, mcts_s };

struct AblationReport {
  ExperimentConfig cfg;
  AblationAxis axis = AblationAxis::cal_size;
  std::string digest;
  std::string dataset_digest;
  std::vector<CellResult> cells;
};

AblationReport run_ablation(const LogitDataset& ds, const ExperimentConfig& cfg,
                            AblationAxis axis, int threads = 1);

// ---------------------------------------------------------------------------
// Theory checks

struct TheoryCheck {
  bool has_cells = false;
  bool degenerate = false;   // all annotator distributions one-hot
  double t_ts = 0.0;
  double t_slts = 0.0;
  bool ordering_holds = false;
  double spearman = 0.0;
  double spearman_threshold = 0.9;
  bool monotone_holds = false;
  metrics::EntropyProfile profile;
  std::string note;
};

/// Prop-1 ordering (TS temperature below the soft-label temperature) and
/// Prop-2 monotonicity (TS pointwise error rising with annotator entropy),
/// recomputed from the report's first seed that has clean ts and slts cells.
TheoryCheck check_propositions(const BenchmarkReport& report,
                               const LogitDataset& ds,
                               int profile_bins = 10,
                               double spearman_threshold = 0.9);

// ---------------------------------------------------------------------------
// Emission

std::string benchmark_to_json(const BenchmarkReport& report);
std::string benchmark_to_csv(const BenchmarkReport& report);
std::string benchmark_to_markdown(const BenchmarkReport& report);

std::string ablation_to_json(const AblationReport& report);
std::string ablation_to_csv(const AblationReport& report);

std::string theory_to_json(const TheoryCheck& check);
std::string theory_to_text(const TheoryCheck& check);

/// Single-model evaluation artifact (the `eval` subcommand).
std::string eval_report_to_json(const metrics::MetricsReport& rep,
                                const std::string& model_path,
                                const std::string& model_digest,
                                const std::string& dataset_path,
                                const std::string& dataset_digest);
std::string eval_report_to_text(const metrics::MetricsReport& rep);

/// Published cells from the original study, for side-by-side comparison
/// when the user supplies matching logits. Informational output only; no
/// values are asserted.
std::vector<std::string> reference_names();
std::string compare_with_reference(const BenchmarkReport& report,
                                   const std::string& name);

// File helpers shared by the CLI.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::string file_digest(const std::string& path);

}  // namespace harness
}  // namespace ambical
