#include "ambical/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ambical/digest.hpp"
#include "ambical/errors.hpp"
#include "ambical/rng.hpp"
#include "ambical/version.hpp"

namespace ambical {
namespace harness {

using njson = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write failed on '" + path + "'");
}

std::string file_digest(const std::string& path) {
  return digest_hex(read_file(path));
}

// ---------------------------------------------------------------------------
// Dataset IO

namespace {

std::vector<double> number_array(const njson& v, const char* field) {
  if (!v.is_array()) throw LoadError(std::string(field) + " must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) throw LoadError(std::string(field) + " must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<int> int_array(const njson& v, const char* field) {
  if (!v.is_array()) throw LoadError(std::string(field) + " must be an array");
  std::vector<int> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number_integer())
      throw LoadError(std::string(field) + " must hold integers");
    out.push_back(e.get<int>());
  }
  return out;
}

void reject_unknown_keys(const njson& obj,
                         std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (item.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) throw LoadError("unknown key '" + item.key() + "' in " + where);
  }
}

}  // namespace

LogitDataset dataset_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  LogitDataset ds;
  bool have_header = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    njson obj;
    try {
      obj = njson::parse(line);
    } catch (const njson::exception& e) {
      throw LoadError("dataset line " + std::to_string(line_no) +
                      ": invalid JSON: " + e.what());
    }
    if (!obj.is_object())
      throw LoadError("dataset line " + std::to_string(line_no) +
                      ": expected an object");

    if (!have_header) {
      try {
        reject_unknown_keys(obj, {"format", "version", "k", "class_names"},
                            "dataset header");
        if (obj.contains("format") && obj["format"] != "ambical.dataset")
          throw LoadError("header format tag is not 'ambical.dataset'");
        if (!obj.contains("version") || !obj["version"].is_number_integer())
          throw LoadError("header needs an integer 'version'");
        if (obj["version"].get<int>() != kDatasetFormatVersion)
          throw LoadError("unsupported dataset version " +
                          obj["version"].dump());
        if (!obj.contains("k") || !obj["k"].is_number_integer())
          throw LoadError("header needs an integer 'k'");
        ds.k = obj["k"].get<int>();
        if (ds.k < 2) throw LoadError("header k must be at least 2");
        if (obj.contains("class_names")) {
          for (const auto& n : obj["class_names"]) {
            if (!n.is_string())
              throw LoadError("class_names must hold strings");
            ds.class_names.push_back(n.get<std::string>());
          }
          if (!ds.class_names.empty() &&
              static_cast<int>(ds.class_names.size()) != ds.k)
            throw LoadError("class_names has " +
                            std::to_string(ds.class_names.size()) +
                            " entries but k = " + std::to_string(ds.k));
        }
      } catch (const Error& e) {
        throw LoadError("dataset line " + std::to_string(line_no) + ": " +
                        e.what());
      }
      have_header = true;
      continue;
    }

    std::string id;
    try {
      reject_unknown_keys(obj, {"id", "logits", "annotations", "pi"},
                          "dataset record");
      if (!obj.contains("id") || !obj["id"].is_string())
        throw LoadError("record needs a string 'id'");
      id = obj["id"].get<std::string>();
      if (id.empty()) throw LoadError("record id must be non-empty");
      if (!obj.contains("logits")) throw LoadError("record needs 'logits'");
      LogitVector z(number_array(obj["logits"], "logits"));

      std::optional<AnnotationSet> ann;
      if (obj.contains("annotations"))
        ann = AnnotationSet{int_array(obj["annotations"], "annotations")};
      std::optional<Distribution> pi;
      if (obj.contains("pi"))
        pi = Distribution(number_array(obj["pi"], "pi"));
      if (!ann && !pi)
        throw LoadError("record needs 'annotations' or 'pi' (or both)");

      ds.examples.push_back(
          make_example(id, std::move(z), std::move(ann), std::move(pi), ds.k));
    } catch (const Error& e) {
      std::string tag = id.empty() ? "" : " (record '" + id + "')";
      throw LoadError("dataset line " + std::to_string(line_no) + tag + ": " +
                      e.what());
    }
  }

  if (!have_header) throw LoadError("dataset is empty: no header line");
  if (ds.examples.empty()) throw LoadError("dataset has a header but no records");
  return ds;
}

LogitDataset load_dataset(const std::string& path) {
  std::string text = read_file(path);
  try {
    return dataset_from_string(text);
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

std::string dataset_to_string(const LogitDataset& ds) {
  std::ostringstream out;
  ojson header;
  header["format"] = "ambical.dataset";
  header["version"] = kDatasetFormatVersion;
  header["k"] = ds.k;
  header["class_names"] = ds.class_names;
  out << header.dump() << "\n";
  for (const auto& ex : ds.examples) {
    ojson rec;
    rec["id"] = ex.id;
    rec["logits"] = ex.logits.values();
    if (ex.annotations)
      rec["annotations"] = ex.annotations->labels;
    else
      rec["pi"] = ex.pi_hat.probs();
    out << rec.dump() << "\n";
  }
  return out.str();
}

void save_dataset(const LogitDataset& ds, const std::string& path) {
  write_file(path, dataset_to_string(ds));
}

// ---------------------------------------------------------------------------
// Splits

namespace {

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

}  // namespace

SplitIndices split_stratified(const LogitDataset& ds, double cal_fraction,
                              std::uint64_t seed, bool stratify) {
  if (!(cal_fraction > 0.0 && cal_fraction < 1.0))
    throw InputError("cal_fraction must lie strictly between 0 and 1");
  if (ds.examples.empty()) throw InputError("cannot split an empty dataset");

  SplitIndices out;
  if (!stratify) {
    std::vector<int> idx(ds.examples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    auto gen = make_stream(seed, stream::kSplit, 0);
    shuffle_stream(idx, gen);
    std::size_t n_cal = round_half_up(cal_fraction * static_cast<double>(idx.size()));
    out.cal.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(
                                    std::min(n_cal, idx.size())));
    out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(
                        std::min(n_cal, idx.size())),
                    idx.end());
  } else {
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.k));
    for (std::size_t i = 0; i < ds.examples.size(); ++i)
      by_class[static_cast<std::size_t>(ds.examples[i].voted)].push_back(
          static_cast<int>(i));
    for (int c = 0; c < ds.k; ++c) {
      auto& group = by_class[static_cast<std::size_t>(c)];
      if (group.empty()) continue;
      if (group.size() < 2)
        throw InputError("voted class " + std::to_string(c) +
                         " has a single example; stratified splitting needs "
                         "at least 2 per class");
      auto gen = make_stream(seed, stream::kSplit, static_cast<std::uint64_t>(c));
      shuffle_stream(group, gen);
      std::size_t n_cal =
          round_half_up(cal_fraction * static_cast<double>(group.size()));
      n_cal = std::min(n_cal, group.size());
      out.cal.insert(out.cal.end(), group.begin(),
                     group.begin() + static_cast<std::ptrdiff_t>(n_cal));
      out.test.insert(out.test.end(),
                      group.begin() + static_cast<std::ptrdiff_t>(n_cal),
                      group.end());
    }
  }

  if (out.cal.empty() || out.test.empty())
    throw InputError("split leaves one side empty at cal_fraction " +
                     std::to_string(cal_fraction));
  return out;
}

// ---------------------------------------------------------------------------
// Methods

namespace {

const std::pair<Method, const char*> kMethodNames[] = {
    {Method::uncal, "uncal"},
    {Method::ts, "ts"},
    {Method::ats, "ats"},
    {Method::platt, "platt"},
    {Method::dirichlet_hard, "dirichlet_hard"},
    {Method::slts, "slts"},
    {Method::mcts, "mcts"},
    {Method::softplatt, "softplatt"},
    {Method::vs, "vs"},
    {Method::ir_soft, "ir_soft"},
    {Method::dirichlet_soft, "dirichlet_soft"},
    {Method::lsts, "lsts"},
    {Method::lsts_fixed, "lsts_fixed"},
    {Method::lsts_entropy, "lsts_entropy"},
    {Method::lsts_classwise, "lsts_classwise"},
    {Method::oracle_ts, "oracle_ts"},
};

}  // namespace

const char* method_name(Method m) {
  for (const auto& [method, name] : kMethodNames)
    if (method == m) return name;
  return "unknown";
}

Method method_from_name(const std::string& name) {
  for (const auto& [method, n] : kMethodNames)
    if (name == n) return method;
  throw InputError("unknown method '" + name + "'");
}

std::vector<Method> default_methods() {
  return {Method::uncal,     Method::ts,
          Method::ats,       Method::platt,
          Method::dirichlet_hard, Method::slts,
          Method::mcts,      Method::softplatt,
          Method::vs,        Method::ir_soft,
          Method::dirichlet_soft, Method::lsts};
}

namespace {

struct Slice {
  std::vector<LogitVector> logits;
  std::vector<int> voted;
  std::vector<Distribution> pi;
};

Slice gather(const LogitDataset& ds, const std::vector<int>& idx) {
  Slice s;
  s.logits.reserve(idx.size());
  s.voted.reserve(idx.size());
  s.pi.reserve(idx.size());
  for (int i : idx) {
    const auto& ex = ds.examples[static_cast<std::size_t>(i)];
    s.logits.push_back(ex.logits);
    s.voted.push_back(ex.voted);
    s.pi.push_back(ex.pi_hat);
  }
  return s;
}

}  // namespace

cal::CalibratorModel fit_method(Method m, const LogitDataset& ds,
                                const std::vector<int>& cal_idx,
                                const std::vector<int>& test_idx,
                                const MethodParams& params,
                                std::uint64_t seed) {
  const int k = ds.k;
  if (m == Method::uncal) return cal::identity_model(k);

  if (m == Method::oracle_ts) {
    Slice t = gather(ds, test_idx);
    return cal::fit_temperature(t.logits, cal::annotator_targets(t.pi));
  }

  Slice c = gather(ds, cal_idx);
  switch (m) {
    case Method::ts:
      return cal::fit_temperature(c.logits, cal::voted_targets(c.voted, k));
    case Method::slts:
      return cal::fit_temperature(c.logits, cal::annotator_targets(c.pi));
    case Method::mcts: {
      std::vector<AnnotationSet> anns;
      anns.reserve(cal_idx.size());
      for (int i : cal_idx) {
        const auto& ex = ds.examples[static_cast<std::size_t>(i)];
        if (!ex.annotations)
          throw InputError("method mcts needs raw annotations on every "
                           "calibration example; '" +
                           ex.id + "' has none");
        anns.push_back(*ex.annotations);
      }
      return cal::fit_mcts(c.logits, anns, k, params.mcts_s, seed);
    }
    case Method::lsts:
    case Method::lsts_fixed:
    case Method::lsts_entropy:
    case Method::lsts_classwise: {
      cal::SmoothingSpec spec;
      if (m == Method::lsts) spec.mode = cal::SmoothingSpec::Mode::global;
      if (m == Method::lsts_fixed) {
        spec.mode = cal::SmoothingSpec::Mode::fixed;
        spec.eps = params.lsts_fixed_eps;
      }
      if (m == Method::lsts_entropy)
        spec.mode = cal::SmoothingSpec::Mode::entropy;
      if (m == Method::lsts_classwise)
        spec.mode = cal::SmoothingSpec::Mode::classwise;
      auto targets = cal::label_smoothing_targets(c.logits, c.voted, k, spec);
      return cal::fit_temperature(c.logits, targets);
    }
    case Method::platt:
      return cal::fit_diag_affine(c.logits, cal::voted_targets(c.voted, k));
    case Method::softplatt:
      return cal::fit_diag_affine(c.logits, cal::annotator_targets(c.pi));
    case Method::vs:
      return cal::fit_vector_scaling(c.logits, cal::annotator_targets(c.pi));
    case Method::dirichlet_hard:
      return cal::fit_dirichlet(c.logits, cal::voted_targets(c.voted, k),
                                params.dirichlet_lambda);
    case Method::dirichlet_soft:
      return cal::fit_dirichlet(c.logits, cal::annotator_targets(c.pi),
                                params.dirichlet_lambda);
    case Method::ir_soft: {
      std::vector<double> conf, target;
      conf.reserve(cal_idx.size());
      target.reserve(cal_idx.size());
      for (std::size_t i = 0; i < c.logits.size(); ++i) {
        Distribution p = softmax_t(c.logits[i], 1.0);
        int top = voted_label(p);
        conf.push_back(p[top]);
        target.push_back(c.pi[i][top]);
      }
      return cal::fit_isotonic_confidence(conf, target);
    }
    case Method::ats:
      return cal::fit_ats(c.logits, c.voted, params.ats_lambda);
    default:
      throw InputError("method dispatch fell through");
  }
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::uint64_t seed_from_json(const njson& v, const char* field) {
  if (!v.is_number_integer())
    throw LoadError(std::string(field) + " must be an integer");
  if (v.is_number_integer() && !v.is_number_unsigned() &&
      v.get<long long>() < 0)
    throw LoadError(std::string(field) + " must be non-negative");
  return v.get<std::uint64_t>();
}

ojson config_to_ojson(const ExperimentConfig& cfg) {
  ojson o;
  o["dataset"] = cfg.dataset_path;
  ojson methods = ojson::array();
  for (Method m : cfg.methods) methods.push_back(method_name(m));
  o["methods"] = methods;
  o["seeds"] = cfg.seeds;
  o["split"] = ojson{{"cal_fraction", cfg.split.cal_fraction},
                     {"stratify", cfg.split.stratify},
                     {"seed", cfg.split.seed}};
  o["mc"] = ojson{{"s", cfg.mc.s}, {"seed", cfg.mc.seed}, {"bins", cfg.mc.bins}};
  o["params"] = ojson{{"mcts_s", cfg.params.mcts_s},
                      {"lsts_fixed_eps", cfg.params.lsts_fixed_eps},
                      {"dirichlet_lambda", cfg.params.dirichlet_lambda},
                      {"ats_lambda", cfg.params.ats_lambda}};
  o["allow_oracle"] = cfg.allow_oracle;
  if (cfg.annotation_resample)
    o["annotation_resample"] =
        ojson{{"confusion", cfg.annotation_resample->confusion},
              {"m", cfg.annotation_resample->m}};
  else
    o["annotation_resample"] = nullptr;
  o["ablation"] = ojson{{"cal_fractions", cfg.ablation.cal_fractions},
                        {"annotation_counts", cfg.ablation.annotation_counts},
                        {"mcts_s_values", cfg.ablation.mcts_s_values},
                        {"nested_annotations", cfg.ablation.nested_annotations}};
  o["reference"] = cfg.reference;
  return o;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  njson obj;
  try {
    obj = njson::parse(text);
  } catch (const njson::exception& e) {
    throw LoadError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw LoadError("config: expected a JSON object");

  // A full report is accepted too: its provenance block carries the exact
  // configuration that produced it.
  if (obj.contains("format") && obj["format"] == "ambical.report") {
    if (!obj.contains("provenance") || !obj["provenance"].contains("config"))
      throw LoadError("config: report lacks a provenance.config block");
    obj = obj["provenance"]["config"];
  }

  try {
    reject_unknown_keys(obj,
                        {"dataset", "methods", "seeds", "split", "mc", "params",
                         "allow_oracle", "annotation_resample", "ablation",
                         "reference"},
                        "config");
    ExperimentConfig cfg;
    if (obj.contains("dataset")) {
      if (!obj["dataset"].is_string())
        throw LoadError("dataset must be a string path");
      cfg.dataset_path = obj["dataset"].get<std::string>();
    }
    if (obj.contains("methods")) {
      if (!obj["methods"].is_array() || obj["methods"].empty())
        throw LoadError("methods must be a non-empty array");
      cfg.methods.clear();
      for (const auto& m : obj["methods"]) {
        if (!m.is_string()) throw LoadError("methods must hold strings");
        cfg.methods.push_back(method_from_name(m.get<std::string>()));
      }
    }
    if (obj.contains("split")) {
      const auto& s = obj["split"];
      reject_unknown_keys(s, {"cal_fraction", "stratify", "seed"}, "split");
      if (s.contains("cal_fraction")) {
        if (!s["cal_fraction"].is_number())
          throw LoadError("split.cal_fraction must be a number");
        cfg.split.cal_fraction = s["cal_fraction"].get<double>();
      }
      if (s.contains("stratify")) {
        if (!s["stratify"].is_boolean())
          throw LoadError("split.stratify must be a boolean");
        cfg.split.stratify = s["stratify"].get<bool>();
      }
      if (s.contains("seed")) cfg.split.seed = seed_from_json(s["seed"], "split.seed");
    }
    if (obj.contains("seeds")) {
      if (!obj["seeds"].is_array() || obj["seeds"].empty())
        throw LoadError("seeds must be a non-empty array");
      cfg.seeds.clear();
      for (const auto& s : obj["seeds"])
        cfg.seeds.push_back(seed_from_json(s, "seeds[]"));
    } else {
      cfg.seeds = {cfg.split.seed};
    }
    if (obj.contains("mc")) {
      const auto& m = obj["mc"];
      reject_unknown_keys(m, {"s", "seed", "bins"}, "mc");
      if (m.contains("s")) {
        if (!m["s"].is_number_integer()) throw LoadError("mc.s must be an integer");
        cfg.mc.s = m["s"].get<int>();
      }
      if (m.contains("seed")) cfg.mc.seed = seed_from_json(m["seed"], "mc.seed");
      if (m.contains("bins")) {
        if (!m["bins"].is_number_integer())
          throw LoadError("mc.bins must be an integer");
        cfg.mc.bins = m["bins"].get<int>();
      }
    }
    if (obj.contains("params")) {
      const auto& p = obj["params"];
      reject_unknown_keys(
          p, {"mcts_s", "lsts_fixed_eps", "dirichlet_lambda", "ats_lambda"},
          "params");
      if (p.contains("mcts_s")) cfg.params.mcts_s = p["mcts_s"].get<int>();
      if (p.contains("lsts_fixed_eps"))
        cfg.params.lsts_fixed_eps = p["lsts_fixed_eps"].get<double>();
      if (p.contains("dirichlet_lambda"))
        cfg.params.dirichlet_lambda = p["dirichlet_lambda"].get<double>();
      if (p.contains("ats_lambda"))
        cfg.params.ats_lambda = p["ats_lambda"].get<double>();
    }
    if (obj.contains("allow_oracle")) {
      if (!obj["allow_oracle"].is_boolean())
        throw LoadError("allow_oracle must be a boolean");
      cfg.allow_oracle = obj["allow_oracle"].get<bool>();
    }
    if (obj.contains("annotation_resample") &&
        !obj["annotation_resample"].is_null()) {
      const auto& a = obj["annotation_resample"];
      reject_unknown_keys(a, {"confusion", "m"}, "annotation_resample");
      AnnotationResample ar;
      if (!a.contains("confusion") || !a["confusion"].is_string())
        throw LoadError("annotation_resample needs a string 'confusion'");
      ar.confusion = a["confusion"].get<std::string>();
      if (!a.contains("m") || !a["m"].is_number_integer())
        throw LoadError("annotation_resample needs an integer 'm'");
      ar.m = a["m"].get<int>();
      cfg.annotation_resample = ar;
    }
    if (obj.contains("ablation")) {
      const auto& a = obj["ablation"];
      reject_unknown_keys(a,
                          {"cal_fractions", "annotation_counts",
                           "mcts_s_values", "nested_annotations"},
                          "ablation");
      if (a.contains("cal_fractions"))
        cfg.ablation.cal_fractions =
            number_array(a["cal_fractions"], "ablation.cal_fractions");
      if (a.contains("annotation_counts"))
        cfg.ablation.annotation_counts =
            int_array(a["annotation_counts"], "ablation.annotation_counts");
      if (a.contains("mcts_s_values"))
        cfg.ablation.mcts_s_values =
            int_array(a["mcts_s_values"], "ablation.mcts_s_values");
      if (a.contains("nested_annotations")) {
        if (!a["nested_annotations"].is_boolean())
          throw LoadError("ablation.nested_annotations must be a boolean");
        cfg.ablation.nested_annotations = a["nested_annotations"].get<bool>();
      }
    }
    if (obj.contains("reference")) {
      if (!obj["reference"].is_string())
        throw LoadError("reference must be a string");
      cfg.reference = obj["reference"].get<std::string>();
    }

    if (!(cfg.split.cal_fraction > 0.0 && cfg.split.cal_fraction < 1.0))
      throw LoadError("split.cal_fraction must lie strictly between 0 and 1");
    if (cfg.mc.s < 1) throw LoadError("mc.s must be at least 1");
    if (cfg.mc.bins < 1) throw LoadError("mc.bins must be at least 1");
    if (cfg.params.mcts_s < 1) throw LoadError("params.mcts_s must be at least 1");
    if (!(cfg.params.lsts_fixed_eps >= 0.0 && cfg.params.lsts_fixed_eps < 1.0))
      throw LoadError("params.lsts_fixed_eps must lie in [0, 1)");
    if (cfg.params.dirichlet_lambda < 0.0)
      throw LoadError("params.dirichlet_lambda must be non-negative");
    if (cfg.params.ats_lambda < 0.0)
      throw LoadError("params.ats_lambda must be non-negative");
    if (cfg.annotation_resample && cfg.annotation_resample->m < 1)
      throw LoadError("annotation_resample.m must be at least 1");
    for (double f : cfg.ablation.cal_fractions)
      if (!(f > 0.0 && f <= 1.0))
        throw LoadError("ablation.cal_fractions entries must lie in (0, 1]");
    for (int m : cfg.ablation.annotation_counts)
      if (m < 1) throw LoadError("ablation.annotation_counts entries must be >= 1");
    for (int s : cfg.ablation.mcts_s_values)
      if (s < 1) throw LoadError("ablation.mcts_s_values entries must be >= 1");
    return cfg;
  } catch (const Error& e) {
    if (std::string(e.kind()) == "load") throw;
    throw LoadError(std::string("config: ") + e.what());
  }
}

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_to_ojson(cfg).dump(2) + "\n";
}

std::string config_digest(const ExperimentConfig& cfg) {
  return digest_hex(config_to_json(cfg));
}

// ---------------------------------------------------------------------------
// Cell execution

namespace {

struct CellSpec {
  Method method = Method::uncal;
  std::uint64_t seed = 0;
  double axis_value = 0.0;
  double cal_scale = -1.0;   // cal-size axis: per-class prefix fraction
  int annotation_m = -1;     // annotation-count axis
  int mcts_s_override = -1;  // sample-count axis
  bool fixed_split = false;  // seed drives something other than the split
};

}  // namespace

annotators::ConfusionMatrix resolve_confusion(const std::string& spec) {
  if (spec == "isic") return annotators::isic_confusion();
  return annotators::confusion_from_json(read_file(spec));
}

LogitDataset resample_annotations(const LogitDataset& ds,
                                  const annotators::ConfusionMatrix& cm, int m,
                                  std::uint64_t seed) {
  if (cm.k != ds.k)
    throw InputError("confusion matrix is " + std::to_string(cm.k) + "x" +
                     std::to_string(cm.k) + " but the dataset has " +
                     std::to_string(ds.k) + " classes");
  std::vector<int> consensus;
  consensus.reserve(ds.examples.size());
  for (const auto& ex : ds.examples) consensus.push_back(ex.voted);
  auto anns = annotators::sample_annotations(consensus, cm, m, seed);
  LogitDataset out;
  out.k = ds.k;
  out.class_names = ds.class_names;
  out.examples.reserve(ds.examples.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const auto& ex = ds.examples[i];
    out.examples.push_back(make_example(ex.id, ex.logits, std::move(anns[i]),
                                        std::nullopt, ds.k));
  }
  return out;
}

namespace {

/// Prefix of the calibration indices at the given fraction. Stratified cal
/// lists are class-contiguous, so per-group prefixes stay nested across
/// fractions; unstratified lists take a flat prefix.
std::vector<int> shrink_cal(const LogitDataset& ds, const std::vector<int>& cal,
                            double fraction, bool stratified) {
  if (fraction >= 1.0) return cal;
  std::vector<int> out;
  if (!stratified) {
    std::size_t take =
        round_half_up(fraction * static_cast<double>(cal.size()));
    out.assign(cal.begin(),
               cal.begin() + static_cast<std::ptrdiff_t>(std::min(take, cal.size())));
  } else {
    std::size_t i = 0;
    while (i < cal.size()) {
      std::size_t j = i;
      int c = ds.examples[static_cast<std::size_t>(cal[i])].voted;
      while (j < cal.size() &&
             ds.examples[static_cast<std::size_t>(cal[j])].voted == c)
        ++j;
      std::size_t take =
          round_half_up(fraction * static_cast<double>(j - i));
      take = std::min(take, j - i);
      for (std::size_t t = 0; t < take; ++t) out.push_back(cal[i + t]);
      i = j;
    }
  }
  if (out.empty())
    throw InputError("calibration subset is empty at fraction " +
                     std::to_string(fraction));
  return out;
}

CellResult run_cell(const LogitDataset& ds, const ExperimentConfig& cfg,
                    const std::optional<annotators::ConfusionMatrix>& cm,
                    const CellSpec& spec) {
  CellResult cell;
  cell.method = spec.method;
  cell.seed = spec.seed;
  cell.axis_value = spec.axis_value;
  cell.oracle = spec.method == Method::oracle_ts;
  try {
    const LogitDataset* base = &ds;
    LogitDataset resampled;
    std::uint64_t split_seed = spec.fixed_split ? cfg.split.seed : spec.seed;
    if (cfg.annotation_resample) {
      resampled = resample_annotations(ds, *cm, cfg.annotation_resample->m,
                                   spec.seed);
      base = &resampled;
      split_seed = cfg.split.seed;
    }

    SplitIndices sp = split_stratified(*base, cfg.split.cal_fraction,
                                       split_seed, cfg.split.stratify);
    if (spec.cal_scale >= 0.0)
      sp.cal = shrink_cal(*base, sp.cal, spec.cal_scale, cfg.split.stratify);

    LogitDataset subsampled;
    if (spec.annotation_m > 0) {
      subsampled = *base;
      std::uint64_t sub_seed =
          cfg.ablation.nested_annotations
              ? cfg.split.seed
              : spec.seed ^ (0x9e3779b97f4a7c15ull *
                             static_cast<std::uint64_t>(spec.annotation_m));
      for (int i : sp.cal) {
        auto& ex = subsampled.examples[static_cast<std::size_t>(i)];
        if (!ex.annotations)
          throw InputError("annotation-count ablation needs raw annotations; '" +
                           ex.id + "' has none");
        AnnotationSet sub = annotators::subsample_annotations(
            *ex.annotations, spec.annotation_m, sub_seed,
            static_cast<std::uint64_t>(i));
        ex = make_example(ex.id, ex.logits, std::move(sub), std::nullopt,
                          subsampled.k);
      }
      base = &subsampled;
    }

    MethodParams params = cfg.params;
    if (spec.mcts_s_override > 0) params.mcts_s = spec.mcts_s_override;

    cal::CalibratorModel model =
        fit_method(spec.method, *base, sp.cal, sp.test, params, spec.seed);

    std::vector<Distribution> probs, pis;
    std::vector<int> voteds;
    probs.reserve(sp.test.size());
    pis.reserve(sp.test.size());
    voteds.reserve(sp.test.size());
    for (int i : sp.test) {
      const auto& ex = base->examples[static_cast<std::size_t>(i)];
      probs.push_back(cal::apply(model, ex.logits));
      pis.push_back(ex.pi_hat);
      voteds.push_back(ex.voted);
    }
    cell.metrics = metrics::compute_report(probs, pis, voteds, cfg.mc);
    if (model.kind == cal::CalibratorKind::temperature)
      cell.metrics.t_fitted = std::get<cal::TemperatureParams>(model.params).t;
  } catch (const Error& e) {
    cell.error = e.what();
    cell.error_kind = e.kind();
  } catch (const std::exception& e) {
    cell.error = e.what();
    cell.error_kind = "internal";
  }
  return cell;
}

std::vector<CellResult> run_cells(const LogitDataset& ds,
                                  const ExperimentConfig& cfg,
                                  const std::optional<annotators::ConfusionMatrix>& cm,
                                  const std::vector<CellSpec>& specs,
                                  int threads) {
  if (threads < 1) throw InputError("threads must be at least 1");
  std::vector<CellResult> out(specs.size());
  if (threads == 1 || specs.size() <= 1) {
    for (std::size_t i = 0; i < specs.size(); ++i)
      out[i] = run_cell(ds, cfg, cm, specs[i]);
    return out;
  }
  int n_threads = std::min<int>(threads, static_cast<int>(specs.size()));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t]() {
      for (std::size_t i = static_cast<std::size_t>(t); i < specs.size();
           i += static_cast<std::size_t>(n_threads))
        out[i] = run_cell(ds, cfg, cm, specs[i]);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

void validate_grid(const ExperimentConfig& cfg) {
  if (cfg.methods.empty()) throw InputError("no methods configured");
  if (cfg.seeds.empty()) throw InputError("no seeds configured");
  for (Method m : cfg.methods)
    if (m == Method::oracle_ts && !cfg.allow_oracle)
      throw InputError(
          "oracle_ts fits on the evaluation split and must be enabled "
          "explicitly (--oracle)");
}

std::optional<annotators::ConfusionMatrix> resolve_resample(
    const ExperimentConfig& cfg) {
  if (!cfg.annotation_resample) return std::nullopt;
  return resolve_confusion(cfg.annotation_resample->confusion);
}

}  // namespace

BenchmarkReport run_benchmark(const LogitDataset& ds,
                              const ExperimentConfig& cfg, int threads) {
  validate_grid(cfg);
  auto cm = resolve_resample(cfg);
  std::vector<CellSpec> specs;
  for (Method m : cfg.methods)
    for (std::uint64_t seed : cfg.seeds)
      specs.push_back(CellSpec{m, seed, 0.0, -1.0, -1, -1, false});

  BenchmarkReport report;
  report.cfg = cfg;
  report.digest = config_digest(cfg);
  report.dataset_digest = digest_hex(dataset_to_string(ds));
  report.cells = run_cells(ds, cfg, cm, specs, threads);
  return report;
}

AblationReport run_ablation(const LogitDataset& ds, const ExperimentConfig& cfg,
                            AblationAxis axis, int threads) {
  validate_grid(cfg);
  auto cm = resolve_resample(cfg);
  std::vector<CellSpec> specs;

  if (axis == AblationAxis::cal_size) {
    if (cfg.ablation.cal_fractions.empty())
      throw InputError("ablation.cal_fractions is empty");
    for (double f : cfg.ablation.cal_fractions)
      for (Method m : cfg.methods)
        for (std::uint64_t seed : cfg.seeds)
          specs.push_back(CellSpec{m, seed, f, f, -1, -1, false});
  } else if (axis == AblationAxis::annotation_count) {
    if (cfg.ablation.annotation_counts.empty())
      throw InputError("ablation.annotation_counts is empty");
    int min_pool = std::numeric_limits<int>::max();
    std::string min_id;
    for (const auto& ex : ds.examples) {
      if (!ex.annotations)
        throw InputError(
            "the annotation-count ablation needs raw annotations; '" + ex.id +
            "' has none");
      int pool = static_cast<int>(ex.annotations->labels.size());
      if (pool < min_pool) {
        min_pool = pool;
        min_id = ex.id;
      }
    }
    for (int m_count : cfg.ablation.annotation_counts)
      if (m_count > min_pool)
        throw InputError("annotation count " + std::to_string(m_count) +
                         " exceeds the smallest pool (" +
                         std::to_string(min_pool) + " labels on '" + min_id +
                         "')");
    for (int m_count : cfg.ablation.annotation_counts)
      for (Method m : cfg.methods)
        for (std::uint64_t seed : cfg.seeds)
          specs.push_back(CellSpec{m, seed, static_cast<double>(m_count), -1.0,
                                   m_count, -1, false});
  } else {
    if (cfg.ablation.mcts_s_values.empty())
      throw InputError("ablation.mcts_s_values is empty");
    for (int s : cfg.ablation.mcts_s_values)
      for (std::uint64_t seed : cfg.seeds)
        specs.push_back(CellSpec{Method::mcts, seed, static_cast<double>(s),
                                 -1.0, -1, s, true});
    // One soft-label anchor cell on the same fixed split.
    specs.push_back(
        CellSpec{Method::slts, cfg.split.seed, 0.0, -1.0, -1, -1, true});
  }

  AblationReport report;
  report.cfg = cfg;
  report.axis = axis;
  report.digest = config_digest(cfg);
  report.dataset_digest = digest_hex(dataset_to_string(ds));
  report.cells = run_cells(ds, cfg, cm, specs, threads);
  return report;
}

// ---------------------------------------------------------------------------
// Theory checks

TheoryCheck check_propositions(const BenchmarkReport& report,
                               const LogitDataset& ds, int profile_bins,
                               double spearman_threshold) {
  TheoryCheck out;
  out.spearman_threshold = spearman_threshold;

  const CellResult* ts_cell = nullptr;
  const CellResult* slts_cell = nullptr;
  for (std::uint64_t seed : report.cfg.seeds) {
    ts_cell = slts_cell = nullptr;
    for (const auto& c : report.cells) {
      if (c.seed != seed || !c.error.empty() || !c.metrics.t_fitted) continue;
      if (c.method == Method::ts) ts_cell = &c;
      if (c.method == Method::slts) slts_cell = &c;
    }
    if (ts_cell && slts_cell) break;
  }
  if (!ts_cell || !slts_cell) {
    out.note = "no seed has clean ts and slts cells; run both methods first";
    return out;
  }
  out.has_cells = true;
  out.t_ts = *ts_cell->metrics.t_fitted;
  out.t_slts = *slts_cell->metrics.t_fitted;

  // Rebuild the exact evaluation slice that produced those cells.
  const ExperimentConfig& cfg = report.cfg;
  const LogitDataset* base = &ds;
  LogitDataset resampled;
  std::uint64_t split_seed = ts_cell->seed;
  if (cfg.annotation_resample) {
    auto cm = resolve_confusion(cfg.annotation_resample->confusion);
    resampled = resample_annotations(ds, cm, cfg.annotation_resample->m, ts_cell->seed);
    base = &resampled;
    split_seed = cfg.split.seed;
  }
  SplitIndices sp = split_stratified(*base, cfg.split.cal_fraction, split_seed,
                                     cfg.split.stratify);

  bool all_onehot = true;
  for (int i : sp.test) {
    const auto& pi = base->examples[static_cast<std::size_t>(i)].pi_hat;
    double top = 0.0;
    for (int c = 0; c < pi.size(); ++c) top = std::max(top, pi[c]);
    if (top < 1.0 - 1e-9) {
      all_onehot = false;
      break;
    }
  }
  out.degenerate = all_onehot;
  if (out.degenerate) {
    out.note = "degenerate: no ambiguity (every annotator distribution is "
               "one-hot, the two temperatures coincide)";
    out.ordering_holds =
        out.t_ts < out.t_slts || std::abs(out.t_slts - out.t_ts) < 1e-6;
    out.monotone_holds = true;
    return out;
  }
  out.ordering_holds = out.t_ts < out.t_slts;

  try {
    cal::CalibratorModel model = fit_method(Method::ts, *base, sp.cal, sp.test,
                                            cfg.params, ts_cell->seed);
    std::vector<Distribution> probs, pis;
    for (int i : sp.test) {
      const auto& ex = base->examples[static_cast<std::size_t>(i)];
      probs.push_back(cal::apply(model, ex.logits));
      pis.push_back(ex.pi_hat);
    }
    out.profile = metrics::entropy_profile(probs, pis, profile_bins);
    out.spearman = metrics::spearman(out.profile.bin_center, out.profile.mean_error);
    out.monotone_holds = out.spearman >= spearman_threshold;
  } catch (const Error& e) {
    out.note = std::string("entropy profile unavailable: ") + e.what();
    out.monotone_holds = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string pm(double mean, double sd, int n, const char* f) {
  if (n <= 1) return fmt(f, mean);
  return fmt(f, mean) + " ± " + fmt(f, sd);
}

double vec_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double vec_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = vec_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

ojson reliability_to_ojson(const metrics::ReliabilityBins& r) {
  ojson o;
  o["edges"] = r.edges;
  o["count"] = r.count;
  o["conf"] = r.mean_conf;
  o["acc"] = r.mean_acc;
  o["gap"] = r.gap;
  return o;
}

ojson metrics_to_ojson(const metrics::MetricsReport& m) {
  ojson mm;
  mm["ece_true_pct"] = m.ece_true * 100.0;
  mm["aece_true_pct"] = m.aece_true * 100.0;
  mm["cwece_true_pct"] = m.cwece_true * 100.0;
  mm["ece_voted_pct"] = m.ece_voted * 100.0;
  mm["brier"] = m.brier;
  mm["nll"] = m.nll;
  mm["ece_true_stderr_pct"] = m.ece_true_stderr * 100.0;
  mm["mc"] = ojson{{"s", m.mc.s}, {"seed", m.mc.seed}, {"bins", m.mc.bins}};
  mm["reliability"] = reliability_to_ojson(m.reliability);
  return mm;
}

ojson cell_to_ojson(const CellResult& cell, bool with_axis,
                    const char* axis_key) {
  ojson o;
  o["method"] = method_name(cell.method);
  o["seed"] = cell.seed;
  if (with_axis) o[axis_key] = cell.axis_value;
  o["oracle"] = cell.oracle;
  if (!cell.error.empty()) {
    o["error"] = ojson{{"kind", cell.error_kind}, {"message", cell.error}};
    o["t"] = nullptr;
    o["metrics"] = nullptr;
    return o;
  }
  o["error"] = nullptr;
  if (cell.metrics.t_fitted)
    o["t"] = *cell.metrics.t_fitted;
  else
    o["t"] = nullptr;
  o["metrics"] = metrics_to_ojson(cell.metrics);
  return o;
}

struct MethodStats {
  int n = 0;
  std::vector<double> t, ece, aece, cw, voted, brier, nll;
  bool all_have_t = true;
};

std::vector<std::pair<Method, MethodStats>> collect_stats(
    const std::vector<Method>& order, const std::vector<CellResult>& cells) {
  std::vector<std::pair<Method, MethodStats>> out;
  for (Method m : order) {
    bool seen = false;
    for (const auto& [em, es] : out)
      if (em == m) seen = true;
    if (seen) continue;
    MethodStats st;
    for (const auto& c : cells) {
      if (c.method != m || !c.error.empty()) continue;
      ++st.n;
      st.ece.push_back(c.metrics.ece_true * 100.0);
      st.aece.push_back(c.metrics.aece_true * 100.0);
      st.cw.push_back(c.metrics.cwece_true * 100.0);
      st.voted.push_back(c.metrics.ece_voted * 100.0);
      st.brier.push_back(c.metrics.brier);
      st.nll.push_back(c.metrics.nll);
      if (c.metrics.t_fitted)
        st.t.push_back(*c.metrics.t_fitted);
      else
        st.all_have_t = false;
    }
    out.emplace_back(m, std::move(st));
  }
  return out;
}

ojson mean_std_ojson(const std::vector<double>& v) {
  return ojson{{"mean", vec_mean(v)}, {"std", vec_std(v)}};
}

ojson provenance_ojson(const ExperimentConfig& cfg, const std::string& digest,
                       const std::string& dataset_digest) {
  ojson p;
  p["artifact_version"] = kVersion;
  p["config"] = config_to_ojson(cfg);
  p["config_digest"] = digest;
  p["dataset_path"] = cfg.dataset_path;
  p["dataset_digest"] = dataset_digest;
  return p;
}

const char* axis_name(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::cal_size:
      return "cal_size";
    case AblationAxis::annotation_count:
      return "annotation_count";
    default:
      return "mcts_s";
  }
}

}  // namespace

std::string benchmark_to_json(const BenchmarkReport& report) {
  ojson o;
  o["format"] = "ambical.report";
  o["version"] = kReportFormatVersion;
  o["kind"] = "benchmark";
  o["provenance"] =
      provenance_ojson(report.cfg, report.digest, report.dataset_digest);
  ojson cells = ojson::array();
  for (const auto& c : report.cells)
    cells.push_back(cell_to_ojson(c, false, ""));
  o["cells"] = cells;
  ojson agg = ojson::array();
  for (const auto& [m, st] : collect_stats(report.cfg.methods, report.cells)) {
    ojson a;
    a["method"] = method_name(m);
    a["cells"] = st.n;
    if (st.n > 0) {
      if (st.all_have_t && !st.t.empty())
        a["t"] = mean_std_ojson(st.t);
      else
        a["t"] = nullptr;
      a["ece_true_pct"] = mean_std_ojson(st.ece);
      a["aece_true_pct"] = mean_std_ojson(st.aece);
      a["cwece_true_pct"] = mean_std_ojson(st.cw);
      a["ece_voted_pct"] = mean_std_ojson(st.voted);
      a["brier"] = mean_std_ojson(st.brier);
      a["nll"] = mean_std_ojson(st.nll);
    }
    agg.push_back(a);
  }
  o["aggregate"] = agg;
  return o.dump(2) + "\n";
}

namespace {

std::string cell_csv_row(const CellResult& c, const std::string& axis_prefix) {
  std::string row = axis_prefix + std::string(method_name(c.method)) + "," +
                    std::to_string(c.seed) + "," +
                    (c.oracle ? "true" : "false") + ",";
  if (c.error.empty()) {
    row += c.metrics.t_fitted ? fmt("%.3f", *c.metrics.t_fitted) : "";
    row += "," + fmt("%.4f", c.metrics.ece_true * 100.0);
    row += "," + fmt("%.4f", c.metrics.aece_true * 100.0);
    row += "," + fmt("%.4f", c.metrics.cwece_true * 100.0);
    row += "," + fmt("%.4f", c.metrics.ece_voted * 100.0);
    row += "," + fmt("%.3f", c.metrics.brier);
    row += "," + fmt("%.3f", c.metrics.nll);
    row += ",";
  } else {
    row += ",,,,,,," + c.error_kind;
  }
  return row + "\n";
}

}  // namespace

std::string benchmark_to_csv(const BenchmarkReport& report) {
  std::string out =
      "method,seed,oracle,t,ece_true_pct,aece_true_pct,cwece_true_pct,"
      "ece_voted_pct,brier,nll,error_kind\n";
  for (const auto& c : report.cells) out += cell_csv_row(c, "");
  return out;
}

std::string benchmark_to_markdown(const BenchmarkReport& report) {
  std::string out =
      "| method | T | ECE_true % | aECE % | cwECE % | ECE_voted % | Brier | "
      "NLL |\n|---|---|---|---|---|---|---|---|\n";
  for (const auto& [m, st] : collect_stats(report.cfg.methods, report.cells)) {
    std::string name = method_name(m);
    if (m == Method::oracle_ts) name += " (oracle)";
    if (st.n == 0) {
      out += "| " + name + " | - | - | - | - | - | - | - |\n";
      continue;
    }
    std::string t_col = (st.all_have_t && !st.t.empty())
                            ? pm(vec_mean(st.t), vec_std(st.t), st.n, "%.3f")
                            : "-";
    out += "| " + name + " | " + t_col + " | " +
           pm(vec_mean(st.ece), vec_std(st.ece), st.n, "%.4f") + " | " +
           pm(vec_mean(st.aece), vec_std(st.aece), st.n, "%.4f") + " | " +
           pm(vec_mean(st.cw), vec_std(st.cw), st.n, "%.4f") + " | " +
           pm(vec_mean(st.voted), vec_std(st.voted), st.n, "%.4f") + " | " +
           pm(vec_mean(st.brier), vec_std(st.brier), st.n, "%.3f") + " | " +
           pm(vec_mean(st.nll), vec_std(st.nll), st.n, "%.3f") + " |\n";
  }
  return out;
}

std::string ablation_to_json(const AblationReport& report) {
  ojson o;
  o["format"] = "ambical.report";
  o["version"] = kReportFormatVersion;
  o["kind"] = "ablation";
  o["axis"] = axis_name(report.axis);
  o["provenance"] =
      provenance_ojson(report.cfg, report.digest, report.dataset_digest);
  ojson cells = ojson::array();
  for (const auto& c : report.cells)
    cells.push_back(cell_to_ojson(c, true, "axis_value"));
  o["cells"] = cells;
  return o.dump(2) + "\n";
}

std::string ablation_to_csv(const AblationReport& report) {
  std::string out = std::string("axis,axis_value,method,seed,oracle,t,") +
                    "ece_true_pct,aece_true_pct,cwece_true_pct,ece_voted_pct,"
                    "brier,nll,error_kind\n";
  for (const auto& c : report.cells) {
    std::string prefix = std::string(axis_name(report.axis)) + "," +
                         fmt("%g", c.axis_value) + ",";
    out += cell_csv_row(c, prefix);
  }
  return out;
}

std::string theory_to_json(const TheoryCheck& check) {
  ojson o;
  o["format"] = "ambical.theory";
  o["version"] = kReportFormatVersion;
  o["has_cells"] = check.has_cells;
  o["degenerate"] = check.degenerate;
  o["t_ts"] = check.t_ts;
  o["t_slts"] = check.t_slts;
  o["ordering_holds"] = check.ordering_holds;
  o["spearman"] = check.spearman;
  o["spearman_threshold"] = check.spearman_threshold;
  o["monotone_holds"] = check.monotone_holds;
  ojson p;
  p["bin_center"] = check.profile.bin_center;
  p["mean_error"] = check.profile.mean_error;
  p["std_error"] = check.profile.std_error;
  p["count"] = check.profile.count;
  o["profile"] = p;
  o["note"] = check.note;
  return o.dump(2) + "\n";
}

std::string theory_to_text(const TheoryCheck& check) {
  if (!check.has_cells) return "theory: SKIP (" + check.note + ")\n";
  std::string out;
  out += std::string("ordering: ") + (check.ordering_holds ? "PASS" : "FAIL") +
         " (t_ts=" + fmt("%.3f", check.t_ts) +
         (check.t_ts < check.t_slts ? " < " : " >= ") +
         "t_slts=" + fmt("%.3f", check.t_slts) + ")\n";
  if (check.degenerate) {
    out += "monotone: PASS (vacuous)\n";
  } else {
    out += std::string("monotone: ") + (check.monotone_holds ? "PASS" : "FAIL") +
           " (spearman=" + fmt("%.3f", check.spearman) +
           (check.monotone_holds ? " >= " : " < ") +
           fmt("%.2f", check.spearman_threshold) + ")\n";
  }
  if (!check.note.empty()) out += "note: " + check.note + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Published reference cells

namespace {

struct RefRow {
  const char* method;
  double t;  // NaN when the method has no single temperature
  double ece, aece, cw, brier, nll;
};

constexpr double kNoT = std::numeric_limits<double>::quiet_NaN();

const RefRow kCifar10hResnet50[] = {
    {"uncal", kNoT, 4.97, 5.71, 1.09, 0.120, 0.692},
    {"ts", 2.03, 4.29, 4.25, 0.91, 0.112, 0.363},
    {"ats", kNoT, 4.40, 4.37, 0.94, 0.113, 0.350},
    {"platt", kNoT, 4.29, 4.23, 0.91, 0.112, 0.372},
    {"dirichlet_hard", kNoT, 4.46, 4.44, 0.95, 0.114, 0.395},
    {"slts", 3.18, 1.51, 1.39, 0.45, 0.110, 0.293},
    {"mcts", 3.14, 1.45, 1.44, 0.45, 0.111, 0.296},
    {"softplatt", kNoT, 1.52, 1.31, 0.35, 0.110, 0.288},
    {"vs", kNoT, 1.35, 1.26, 0.39, 0.109, 0.289},
    {"ir_soft", kNoT, 0.72, 0.83, 0.45, 0.115, 0.340},
    {"dirichlet_soft", kNoT, 1.25, 1.06, 0.35, 0.109, 0.271},
    {"lsts", 3.08, 1.57, 1.31, 0.46, 0.109, 0.293},
    {"oracle_ts", 3.17, 1.50, 1.52, 0.45, 0.111, 0.296},
};

std::string ref_line(const std::string& method, const std::string& metric,
                     double observed, double ref, const char* f) {
  return "| " + method + " | " + metric + " | " + fmt(f, observed) + " | " +
         fmt(f, ref) + " | " + fmt(f, observed - ref) + " |\n";
}

}  // namespace

std::string eval_report_to_json(const metrics::MetricsReport& rep,
                                const std::string& model_path,
                                const std::string& model_digest,
                                const std::string& dataset_path,
                                const std::string& dataset_digest) {
  ojson o;
  o["format"] = "ambical.report";
  o["version"] = kReportFormatVersion;
  o["kind"] = "eval";
  ojson p;
  p["artifact_version"] = kVersion;
  p["model_path"] = model_path;
  p["model_digest"] = model_digest;
  p["dataset_path"] = dataset_path;
  p["dataset_digest"] = dataset_digest;
  o["provenance"] = p;
  if (rep.t_fitted)
    o["t"] = *rep.t_fitted;
  else
    o["t"] = nullptr;
  o["metrics"] = metrics_to_ojson(rep);
  return o.dump(2) + "\n";
}

std::string eval_report_to_text(const metrics::MetricsReport& rep) {
  std::string out;
  if (rep.t_fitted) out += "T           : " + fmt("%.3f", *rep.t_fitted) + "\n";
  out += "ECE_true %  : " + fmt("%.4f", rep.ece_true * 100.0) + " (stderr " +
         fmt("%.4f", rep.ece_true_stderr * 100.0) + ")\n";
  out += "aECE %      : " + fmt("%.4f", rep.aece_true * 100.0) + "\n";
  out += "cwECE %     : " + fmt("%.4f", rep.cwece_true * 100.0) + "\n";
  out += "ECE_voted % : " + fmt("%.4f", rep.ece_voted * 100.0) + "\n";
  out += "Brier       : " + fmt("%.3f", rep.brier) + "\n";
  out += "NLL         : " + fmt("%.3f", rep.nll) + "\n";
  return out;
}

std::vector<std::string> reference_names() { return {"cifar10h_resnet50"}; }

std::string compare_with_reference(const BenchmarkReport& report,
                                   const std::string& name) {
  if (name != "cifar10h_resnet50") {
    std::string known;
    for (const auto& n : reference_names()) known += " " + n;
    throw InputError("unknown reference '" + name + "'; available:" + known);
  }
  std::string out;
  out += "reference: " + name + " (published run, informational only; "
         "deviations are expected unless these are the original logits)\n";
  out += "| method | metric | observed | reference | delta |\n";
  out += "|---|---|---|---|---|\n";
  auto stats = collect_stats(report.cfg.methods, report.cells);
  int rows = 0;
  for (const RefRow& ref : kCifar10hResnet50) {
    for (const auto& [m, st] : stats) {
      if (std::string(method_name(m)) != ref.method || st.n == 0) continue;
      std::string mn = ref.method;
      if (!std::isnan(ref.t) && st.all_have_t && !st.t.empty())
        out += ref_line(mn, "T", vec_mean(st.t), ref.t, "%.3f");
      out += ref_line(mn, "ECE_true %", vec_mean(st.ece), ref.ece, "%.4f");
      out += ref_line(mn, "aECE %", vec_mean(st.aece), ref.aece, "%.4f");
      out += ref_line(mn, "cwECE %", vec_mean(st.cw), ref.cw, "%.4f");
      out += ref_line(mn, "Brier", vec_mean(st.brier), ref.brier, "%.3f");
      out += ref_line(mn, "NLL", vec_mean(st.nll), ref.nll, "%.3f");
      ++rows;
    }
  }
  if (rows == 0)
    out += "| (no overlapping methods with clean cells) | | | | |\n";
  return out;
}

}  // namespace harness
}  // namespace ambical
