#include "ambical/annotators.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ambical/errors.hpp"
#include "ambical/rng.hpp"

namespace ambical {
namespace annotators {

ConfusionMatrix make_confusion(int k, std::vector<double> rows,
                               std::vector<std::string> class_names) {
  if (k < 2) throw InputError("confusion matrix needs k >= 2");
  if (rows.size() != static_cast<std::size_t>(k) * static_cast<std::size_t>(k)) {
    throw InputError("confusion matrix needs k*k entries");
  }
  if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(k)) {
    throw InputError("confusion matrix class name count mismatch");
  }
  for (int r = 0; r < k; ++r) {
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      const double p = rows[static_cast<std::size_t>(r) * k + c];
      if (!std::isfinite(p) || p < 0.0) {
        throw InputError("confusion row " + std::to_string(r) +
                         " has a negative or non-finite entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSimplexTol) {
      throw InputError("confusion row " + std::to_string(r) + " sums to " +
                       std::to_string(sum) + ", expected 1 within 1e-9");
    }
  }
  ConfusionMatrix out;
  out.k = k;
  out.rows = std::move(rows);
  out.class_names = std::move(class_names);
  return out;
}

ConfusionMatrix isic_confusion() {
  // Dermatologist label distributions per consensus class.
  return make_confusion(
      8,
      {
          0.73, 0.14, 0.02, 0.03, 0.08, 0.00, 0.00, 0.00,  // MEL
          0.15, 0.76, 0.01, 0.01, 0.06, 0.01, 0.00, 0.00,  // NV
          0.02, 0.01, 0.81, 0.05, 0.07, 0.01, 0.01, 0.02,  // BCC
          0.03, 0.01, 0.04, 0.65, 0.11, 0.00, 0.00, 0.16,  // AK
          0.12, 0.05, 0.03, 0.10, 0.62, 0.00, 0.00, 0.08,  // BKL
          0.01, 0.02, 0.02, 0.01, 0.02, 0.87, 0.03, 0.02,  // DF
          0.00, 0.01, 0.02, 0.01, 0.01, 0.02, 0.91, 0.02,  // VL
          0.01, 0.01, 0.03, 0.18, 0.09, 0.00, 0.01, 0.67,  // SCC
      },
      {"MEL", "NV", "BCC", "AK", "BKL", "DF", "VL", "SCC"});
}

std::vector<AnnotationSet> sample_annotations(const std::vector<int>& consensus,
                                              const ConfusionMatrix& c, int m,
                                              std::uint64_t seed) {
  if (consensus.empty()) throw InputError("sample_annotations: no examples");
  if (m < 1) throw InputError("sample_annotations: m must be >= 1");
  std::vector<AnnotationSet> out(consensus.size());
  for (std::size_t i = 0; i < consensus.size(); ++i) {
    const int truth = consensus[i];
    if (truth < 0 || truth >= c.k) {
      throw InputError("sample_annotations: consensus label out of range at " +
                       std::to_string(i));
    }
    const std::vector<double> row = c.row(truth);
    auto rng = make_stream(seed, stream::kAnnotation, i);
    auto& labels = out[i].labels;
    labels.resize(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      labels[static_cast<std::size_t>(j)] = sample_categorical(rng, row);
    }
  }
  return out;
}

AnnotationSet subsample_annotations(const AnnotationSet& a, int m_new,
                                    std::uint64_t seed, std::uint64_t index) {
  const int m = static_cast<int>(a.labels.size());
  if (m_new < 1 || m_new > m) {
    throw InputError("subsample_annotations: m_new must be in [1, " +
                     std::to_string(m) + "], got " + std::to_string(m_new));
  }
  std::vector<int> pick(a.labels.begin(), a.labels.end());
  auto rng = make_stream(seed, stream::kSubsample, index);
  // Partial Fisher-Yates: the first m_new slots form a uniform subset and
  // extend the subset chosen for any smaller m_new.
  for (int i = 0; i < m_new; ++i) {
    const int j = i + next_index(rng, m - i);
    std::swap(pick[static_cast<std::size_t>(i)], pick[static_cast<std::size_t>(j)]);
  }
  AnnotationSet out;
  out.labels.assign(pick.begin(), pick.begin() + m_new);
  return out;
}

ConfusionMatrix confusion_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(std::string("confusion: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "ambical.confusion") {
    throw LoadError("confusion: missing or wrong format tag");
  }
  const int k = j.value("k", 0);
  if (k < 2) throw LoadError("confusion: bad class count");
  if (!j.contains("rows") || !j["rows"].is_array() ||
      j["rows"].size() != static_cast<std::size_t>(k)) {
    throw LoadError("confusion: rows must be a k-length array of rows");
  }
  std::vector<double> rows;
  rows.reserve(static_cast<std::size_t>(k) * k);
  for (int r = 0; r < k; ++r) {
    const auto& row = j["rows"][static_cast<std::size_t>(r)];
    if (!row.is_array() || row.size() != static_cast<std::size_t>(k)) {
      throw LoadError("confusion: row " + std::to_string(r) +
                      " must have k entries");
    }
    for (int c = 0; c < k; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) {
        throw LoadError("confusion: non-numeric entry in row " +
                        std::to_string(r));
      }
      rows.push_back(v.get<double>());
    }
  }
  std::vector<std::string> names;
  if (j.contains("class_names")) {
    for (const auto& n : j["class_names"]) names.push_back(n.get<std::string>());
  }
  try {
    return make_confusion(k, std::move(rows), std::move(names));
  } catch (const Error& e) {
    throw LoadError(std::string("confusion: ") + e.what());
  }
}

std::string confusion_to_json(const ConfusionMatrix& c) {
  nlohmann::ordered_json j;
  j["format"] = "ambical.confusion";
  j["k"] = c.k;
  if (!c.class_names.empty()) j["class_names"] = c.class_names;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int r = 0; r < c.k; ++r) rows.push_back(c.row(r));
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

}  // namespace annotators
}  // namespace ambical
