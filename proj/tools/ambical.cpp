#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ambical/calibrators.hpp"
#include "ambical/digest.hpp"
#include "ambical/errors.hpp"
#include "ambical/harness.hpp"
#include "ambical/toy.hpp"
#include "ambical/version.hpp"

namespace fs = std::filesystem;
using ambical::harness::read_file;
using ambical::harness::write_file;

namespace {

// Flag combinations CLI11 cannot express; reported like parse errors.
struct UsageFailure {
  std::string message;
};

std::string out_dir_default() {
  const char* env = std::getenv("AMBICAL_OUT");
  return env && *env ? env : ".";
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

void ensure_parent(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

struct FitOptions {
  std::string dataset, method, target, out;
  int mc_s = 1;
  std::uint64_t seed = 42;
  double lsts_eps = 0.1;
  double dirichlet_lambda = 1e-3;
  double ats_lambda = 1e-3;
};

ambical::harness::Method resolve_fit_method(const std::string& method,
                                            const std::string& target) {
  using M = ambical::harness::Method;
  if (target.empty()) {
    M m;
    try {
      m = ambical::harness::method_from_name(method);
    } catch (const ambical::Error& e) {
      throw UsageFailure{e.what()};
    }
    if (m == M::oracle_ts)
      throw UsageFailure{
          "oracle_ts only exists inside bench grids (enable with --oracle "
          "there); fitting it standalone is just slts"};
    return m;
  }
  struct Row {
    const char* method;
    const char* target;
    M resolved;
  };
  static const Row rows[] = {
      {"ts", "voted", M::ts},         {"ts", "soft", M::slts},
      {"ts", "mc", M::mcts},          {"platt", "voted", M::platt},
      {"platt", "soft", M::softplatt}, {"dirichlet", "voted", M::dirichlet_hard},
      {"dirichlet", "soft", M::dirichlet_soft}, {"vs", "soft", M::vs},
      {"slts", "soft", M::slts},      {"softplatt", "soft", M::softplatt},
      {"mcts", "mc", M::mcts},
  };
  for (const Row& r : rows)
    if (method == r.method && target == r.target) return r.resolved;
  throw UsageFailure{"method '" + method + "' does not take --target '" +
                     target + "'"};
}

void run_fit(const FitOptions& opt) {
  ambical::harness::Method m = resolve_fit_method(opt.method, opt.target);
  ambical::LogitDataset ds = ambical::harness::load_dataset(opt.dataset);
  std::vector<int> all(ds.examples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  ambical::harness::MethodParams params;
  params.mcts_s = opt.mc_s;
  params.lsts_fixed_eps = opt.lsts_eps;
  params.dirichlet_lambda = opt.dirichlet_lambda;
  params.ats_lambda = opt.ats_lambda;

  auto model = ambical::harness::fit_method(m, ds, all, all, params, opt.seed);
  std::string out = opt.out.empty() ? join_path(out_dir_default(), "model.json")
                                    : opt.out;
  ensure_parent(out);
  write_file(out, ambical::cal::model_to_json(model));

  std::string line = std::string("wrote ") + ambical::cal::kind_name(model.kind) +
                     " model (fitted on " +
                     ambical::cal::fitted_on_name(model.fitted_on) + ") to " + out;
  if (model.kind == ambical::cal::CalibratorKind::temperature) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g",
                  std::get<ambical::cal::TemperatureParams>(model.params).t);
    line += std::string("; t = ") + buf;
  }
  std::cout << line << "\n";
}

struct EvalOptions {
  std::string dataset, model, out;
  int mc_s = 100;
  std::uint64_t mc_seed = 42;
  int bins = 15;
};

void run_eval(const EvalOptions& opt) {
  ambical::LogitDataset ds = ambical::harness::load_dataset(opt.dataset);
  std::string model_text = read_file(opt.model);
  auto model = ambical::cal::model_from_json(model_text);

  std::vector<ambical::Distribution> probs, pis;
  std::vector<int> voteds;
  probs.reserve(ds.examples.size());
  for (const auto& ex : ds.examples) {
    probs.push_back(ambical::cal::apply(model, ex.logits));
    pis.push_back(ex.pi_hat);
    voteds.push_back(ex.voted);
  }
  ambical::metrics::McConfig mc{opt.mc_s, opt.mc_seed, opt.bins};
  auto rep = ambical::metrics::compute_report(probs, pis, voteds, mc);
  if (model.kind == ambical::cal::CalibratorKind::temperature)
    rep.t_fitted = std::get<ambical::cal::TemperatureParams>(model.params).t;

  std::string out = opt.out.empty() ? join_path(out_dir_default(), "eval.json")
                                    : opt.out;
  ensure_parent(out);
  write_file(out, ambical::harness::eval_report_to_json(
                      rep, opt.model, ambical::digest_hex(model_text),
                      opt.dataset,
                      ambical::harness::file_digest(opt.dataset)));
  std::cout << ambical::harness::eval_report_to_text(rep);
  std::cout << "wrote " << out << "\n";
}

struct GridOptions {
  std::string config, dataset, out, axis;
  int threads = 1;
  bool oracle = false;
};

ambical::harness::ExperimentConfig load_grid_config(const GridOptions& opt) {
  auto cfg = ambical::harness::config_from_json(read_file(opt.config));
  if (!opt.dataset.empty()) cfg.dataset_path = opt.dataset;
  if (cfg.dataset_path.empty())
    throw UsageFailure{"the config names no dataset; pass --dataset"};
  if (opt.oracle) cfg.allow_oracle = true;
  return cfg;
}

int count_failures(const std::vector<ambical::harness::CellResult>& cells) {
  int n = 0;
  for (const auto& c : cells)
    if (!c.error.empty()) ++n;
  return n;
}

void run_bench(const GridOptions& opt) {
  auto cfg = load_grid_config(opt);
  auto ds = ambical::harness::load_dataset(cfg.dataset_path);
  auto report = ambical::harness::run_benchmark(ds, cfg, opt.threads);

  std::string dir = opt.out.empty() ? out_dir_default() : opt.out;
  ensure_dir(dir);
  write_file(join_path(dir, "bench.json"),
             ambical::harness::benchmark_to_json(report));
  write_file(join_path(dir, "bench.csv"),
             ambical::harness::benchmark_to_csv(report));
  std::string md = ambical::harness::benchmark_to_markdown(report);
  write_file(join_path(dir, "bench.md"), md);
  std::cout << md;
  if (!cfg.reference.empty()) {
    std::string ref =
        ambical::harness::compare_with_reference(report, cfg.reference);
    write_file(join_path(dir, "reference.md"), ref);
    std::cout << ref;
  }
  int failed = count_failures(report.cells);
  std::cout << report.cells.size() << " cells";
  if (failed > 0) std::cout << ", " << failed << " failed (see bench.json)";
  std::cout << "; reports in " << dir << "\n";
}

void run_ablate(const GridOptions& opt) {
  using Axis = ambical::harness::AblationAxis;
  Axis axis = Axis::cal_size;
  std::string tag = "calsize";
  if (opt.axis == "annotations") {
    axis = Axis::annotation_count;
    tag = "annotations";
  } else if (opt.axis == "mcts-s") {
    axis = Axis::mcts_s;
    tag = "mcts_s";
  }

  auto cfg = load_grid_config(opt);
  auto ds = ambical::harness::load_dataset(cfg.dataset_path);
  auto report = ambical::harness::run_ablation(ds, cfg, axis, opt.threads);

  std::string dir = opt.out.empty() ? out_dir_default() : opt.out;
  ensure_dir(dir);
  write_file(join_path(dir, "ablate_" + tag + ".json"),
             ambical::harness::ablation_to_json(report));
  write_file(join_path(dir, "ablate_" + tag + ".csv"),
             ambical::harness::ablation_to_csv(report));
  int failed = count_failures(report.cells);
  std::cout << "axis " << opt.axis << ": " << report.cells.size() << " cells";
  if (failed > 0) std::cout << ", " << failed << " failed";
  std::cout << "; reports in " << dir << "\n";
}

struct SimulateOptions {
  std::string dataset, confusion, preset, out;
  int m = 9;
  std::uint64_t seed = 42;
};

void run_simulate(const SimulateOptions& opt) {
  if (opt.confusion.empty() == opt.preset.empty())
    throw UsageFailure{"pass exactly one of --confusion or --preset"};
  auto ds = ambical::harness::load_dataset(opt.dataset);
  auto cm = ambical::harness::resolve_confusion(
      opt.preset.empty() ? opt.confusion : opt.preset);
  auto out_ds = ambical::harness::resample_annotations(ds, cm, opt.m, opt.seed);
  std::string out = opt.out.empty()
                        ? join_path(out_dir_default(), "simulated.jsonl")
                        : opt.out;
  ensure_parent(out);
  ambical::harness::save_dataset(out_ds, out);
  std::cout << "wrote " << out_ds.examples.size() << " examples with " << opt.m
            << " annotations each to " << out << "\n";
}

struct ToyOptions {
  std::uint64_t seed = 1;
  int n_per_cluster = 2000;
  int hidden = 64;
  int epochs = 200;
  double lr = 0.1;
  int mc_s = 100;
  std::uint64_t mc_seed = 42;
  int bins = 15;
  std::string out;
};

void run_toy(const ToyOptions& opt) {
  ambical::toy::ToyConfig cfg;
  cfg.data_seed = opt.seed;
  cfg.label_seed = opt.seed + 1;
  cfg.train_seed = opt.seed + 2;
  cfg.n_per_cluster = opt.n_per_cluster;
  cfg.hidden = opt.hidden;
  cfg.epochs = opt.epochs;
  cfg.learning_rate = opt.lr;
  cfg.mc = ambical::metrics::McConfig{opt.mc_s, opt.mc_seed, opt.bins};

  auto report = ambical::toy::run_toy_experiment(cfg);
  std::string dir = opt.out.empty() ? out_dir_default() : opt.out;
  ensure_dir(dir);
  write_file(join_path(dir, "toy.json"),
             ambical::toy::toy_report_to_json(report));
  std::string md = ambical::toy::toy_report_to_markdown(report);
  write_file(join_path(dir, "toy.md"), md);

  auto data = ambical::toy::generate_toy(cfg);
  std::string csv = "x0,x1,cluster,sampled_label,voted,split\n";
  for (const auto& p : data.points) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d,%d,%d,%d\n", p.x0, p.x1,
                  p.cluster, p.sampled_label, p.voted, p.split);
    csv += buf;
  }
  write_file(join_path(dir, "toy_points.csv"), csv);
  std::cout << md;
  std::cout << "reports in " << dir << "\n";
}

struct TheoryOptions {
  std::string config, dataset, out;
  int threads = 1;
  int bins = 10;
  double threshold = 0.9;
};

void run_check_theory(const TheoryOptions& opt) {
  GridOptions grid;
  grid.config = opt.config;
  grid.dataset = opt.dataset;
  auto cfg = load_grid_config(grid);
  cfg.methods = {ambical::harness::Method::ts, ambical::harness::Method::slts};
  auto ds = ambical::harness::load_dataset(cfg.dataset_path);
  auto report = ambical::harness::run_benchmark(ds, cfg, opt.threads);
  auto check = ambical::harness::check_propositions(report, ds, opt.bins,
                                                    opt.threshold);
  std::string dir = opt.out.empty() ? out_dir_default() : opt.out;
  ensure_dir(dir);
  write_file(join_path(dir, "theory.json"),
             ambical::harness::theory_to_json(check));
  std::cout << ambical::harness::theory_to_text(check);
  std::cout << "wrote " << join_path(dir, "theory.json") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ambiguity-aware confidence calibration"};
  app.set_version_flag("--version", std::string(ambical::kVersion));
  app.require_subcommand(1);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand(
      "fit", "fit a calibrator on a logit dataset and write model JSON");
  fit_cmd->add_option("--dataset", fit.dataset, "logit dataset (JSONL)")
      ->required();
  fit_cmd->add_option("--method", fit.method, "calibration method")->required();
  fit_cmd->add_option("--target", fit.target, "fitting target")
      ->check(CLI::IsMember({"voted", "soft", "mc"}));
  fit_cmd->add_option("--mc-s", fit.mc_s, "annotation samples per example")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit.seed, "sampling seed");
  fit_cmd->add_option("--lsts-eps", fit.lsts_eps,
                      "smoothing mass for lsts_fixed");
  fit_cmd->add_option("--dirichlet-lambda", fit.dirichlet_lambda,
                      "regularizer for the dirichlet fits");
  fit_cmd->add_option("--ats-lambda", fit.ats_lambda,
                      "weight penalty for ats");
  fit_cmd->add_option("--out", fit.out, "model output path");
  fit_cmd->callback([&]() { run_fit(fit); });

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand(
      "eval", "evaluate a fitted model against annotator distributions");
  eval_cmd->add_option("--dataset", eval.dataset, "logit dataset (JSONL)")
      ->required();
  eval_cmd->add_option("--model", eval.model, "model JSON")->required();
  eval_cmd->add_option("--mc-s", eval.mc_s, "Monte Carlo draws")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--mc-seed", eval.mc_seed, "Monte Carlo seed");
  eval_cmd->add_option("--bins", eval.bins, "reliability bins")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval.out, "report output path");
  eval_cmd->callback([&]() { run_eval(eval); });

  GridOptions bench;
  auto* bench_cmd = app.add_subcommand(
      "bench", "run the method-by-seed benchmark grid from a config");
  bench_cmd->add_option("--config", bench.config, "experiment config JSON")
      ->required();
  bench_cmd->add_option("--dataset", bench.dataset,
                        "override the config's dataset path");
  bench_cmd->add_option("--threads", bench.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_flag("--oracle", bench.oracle,
                      "allow the test-fitted oracle baseline");
  bench_cmd->add_option("--out", bench.out, "output directory");
  bench_cmd->callback([&]() { run_bench(bench); });

  GridOptions ablate;
  auto* ablate_cmd =
      app.add_subcommand("ablate", "sweep one experimental axis");
  ablate_cmd->add_option("--axis", ablate.axis, "which axis to sweep")
      ->required()
      ->check(CLI::IsMember({"calsize", "annotations", "mcts-s"}));
  ablate_cmd->add_option("--config", ablate.config, "experiment config JSON")
      ->required();
  ablate_cmd->add_option("--dataset", ablate.dataset,
                         "override the config's dataset path");
  ablate_cmd->add_option("--threads", ablate.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  ablate_cmd->add_flag("--oracle", ablate.oracle,
                       "allow the test-fitted oracle baseline");
  ablate_cmd->add_option("--out", ablate.out, "output directory");
  ablate_cmd->callback([&]() { run_ablate(ablate); });

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand(
      "simulate", "replace annotations with confusion-matrix draws");
  sim_cmd->add_option("--dataset", sim.dataset, "logit dataset (JSONL)")
      ->required();
  sim_cmd->add_option("--confusion", sim.confusion, "confusion matrix JSON");
  sim_cmd->add_option("--preset", sim.preset, "built-in confusion matrix")
      ->check(CLI::IsMember({"isic"}));
  sim_cmd->add_option("--m", sim.m, "annotators per example")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim.seed, "sampling seed");
  sim_cmd->add_option("--out", sim.out, "dataset output path");
  sim_cmd->callback([&]() { run_simulate(sim); });

  ToyOptions toy;
  auto* toy_cmd = app.add_subcommand(
      "toy", "train the three-cluster toy model and calibrate it");
  toy_cmd->add_option("--seed", toy.seed, "base seed for data/labels/training");
  toy_cmd->add_option("--n-per-cluster", toy.n_per_cluster, "points per cluster")
      ->check(CLI::PositiveNumber);
  toy_cmd->add_option("--hidden", toy.hidden, "hidden width")
      ->check(CLI::PositiveNumber);
  toy_cmd->add_option("--epochs", toy.epochs, "training epochs")
      ->check(CLI::PositiveNumber);
  toy_cmd->add_option("--lr", toy.lr, "learning rate");
  toy_cmd->add_option("--mc-s", toy.mc_s, "Monte Carlo draws")
      ->check(CLI::PositiveNumber);
  toy_cmd->add_option("--mc-seed", toy.mc_seed, "Monte Carlo seed");
  toy_cmd->add_option("--bins", toy.bins, "reliability bins")
      ->check(CLI::PositiveNumber);
  toy_cmd->add_option("--out", toy.out, "output directory");
  toy_cmd->callback([&]() { run_toy(toy); });

  TheoryOptions theory;
  auto* theory_cmd = app.add_subcommand(
      "check-theory", "test the temperature ordering and the error-entropy "
                      "monotonicity on a dataset");
  theory_cmd->add_option("--config", theory.config, "experiment config JSON")
      ->required();
  theory_cmd->add_option("--dataset", theory.dataset,
                         "override the config's dataset path");
  theory_cmd->add_option("--threads", theory.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  theory_cmd->add_option("--bins", theory.bins, "entropy profile bins")
      ->check(CLI::PositiveNumber);
  theory_cmd->add_option("--spearman-threshold", theory.threshold,
                         "monotonicity pass threshold");
  theory_cmd->add_option("--out", theory.out, "output directory");
  theory_cmd->callback([&]() { run_check_theory(theory); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageFailure& e) {
    std::cerr << e.message << "\n";
    return 2;
  } catch (const ambical::Error& e) {
    nlohmann::ordered_json err{{"kind", e.kind()}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    nlohmann::ordered_json err{{"kind", "internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
