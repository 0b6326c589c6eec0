#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ambical/core.hpp"

namespace ambical {
namespace annotators {

/// Class-conditional annotator model. Row r is the label distribution an
/// annotator produces when the consensus class is r. Rows must sum to one
/// within 1e-9.
struct ConfusionMatrix {
  int k = 0;
  std::vector<double> rows;  // k x k, row major
  std::vector<std::string> class_names;

  double at(int truth, int label) const {
    return rows[static_cast<std::size_t>(truth) * static_cast<std::size_t>(k) +
                static_cast<std::size_t>(label)];
  }
  std::vector<double> row(int truth) const {
    const auto off = static_cast<std::size_t>(truth) * static_cast<std::size_t>(k);
    return std::vector<double>(rows.begin() + static_cast<long>(off),
                               rows.begin() + static_cast<long>(off + k));
  }
};

ConfusionMatrix make_confusion(int k, std::vector<double> rows,
                               std::vector<std::string> class_names = {});

/// Eight-class skin lesion annotator model (dermatologist agreement rates).
ConfusionMatrix isic_confusion();

/// m annotator labels per example, drawn from the confusion row of that
/// example's consensus class. Example i draws from stream (seed, i), so
/// other examples' annotations never change when one example is edited.
std::vector<AnnotationSet> sample_annotations(const std::vector<int>& consensus,
                                              const ConfusionMatrix& c, int m,
                                              std::uint64_t seed);

/// m_new annotations chosen without replacement. Deterministic in
/// (seed, index); prefixes are nested, so the result for m_new is always a
/// subset of the result for m_new + 1 at the same seed.
AnnotationSet subsample_annotations(const AnnotationSet& a, int m_new,
                                    std::uint64_t seed, std::uint64_t index = 0);

ConfusionMatrix confusion_from_json(const std::string& text);
std::string confusion_to_json(const ConfusionMatrix& c);

}  // namespace annotators
}  // namespace ambical
