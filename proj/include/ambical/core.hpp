#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ambical {

// Smallest probability fed to a logarithm anywhere in the library.
inline constexpr double kProbFloor = 1e-12;

// Tolerance for "sums to one" checks on probability vectors.
inline constexpr double kSimplexTol = 1e-9;

// Tolerance for agreement between raw annotations and a stored label
// distribution on the same example.
inline constexpr double kConsistencyTol = 1e-9;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// A point on the probability simplex. Construction validates shape:
/// at least two entries, all finite and non-negative, summing to one
/// within kSimplexTol.
class Distribution {
 public:
  explicit Distribution(std::vector<double> probs);

  static Distribution uniform(int k);
  static Distribution one_hot(int k, int index);

  int size() const { return static_cast<int>(probs_.size()); }
  double operator[](int k) const { return probs_[static_cast<std::size_t>(k)]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

/// Raw model scores for one example. Entries must be finite.
class LogitVector {
 public:
  explicit LogitVector(std::vector<double> z);

  int size() const { return static_cast<int>(z_.size()); }
  double operator[](int k) const { return z_[static_cast<std::size_t>(k)]; }
  const std::vector<double>& values() const { return z_; }

 private:
  std::vector<double> z_;
};

/// Individual annotator labels for one example, unordered, one class
/// index per annotator. Must be non-empty; indices are validated against
/// the class count wherever that count is known.
struct AnnotationSet {
  std::vector<int> labels;
};

/// One dataset record. After construction pi_hat is always populated:
/// either taken verbatim from the source or computed from annotations.
struct LabeledExample {
  std::string id;
  LogitVector logits;
  std::optional<AnnotationSet> annotations;
  Distribution pi_hat;
  int voted = 0;
};

struct LogitDataset {
  int k = 0;
  std::vector<std::string> class_names;  // may be empty
  std::vector<LabeledExample> examples;

  int size() const { return static_cast<int>(examples.size()); }
};

/// Temperature-scaled softmax: softmax(z / t). Computed with max
/// subtraction so arbitrary shifts of z do not change the result.
/// Requires t > 0.
Distribution softmax_t(const LogitVector& z, double t);

/// Normalized label frequencies over k classes from raw annotations.
Distribution empirical_distribution(const AnnotationSet& a, int k);

/// Argmax of a distribution; ties break toward the lowest class index.
int voted_label(const Distribution& p);

/// Shannon entropy in nats, with 0 log 0 = 0.
double entropy(const Distribution& p);

/// KL(p || q) in nats. Returns +infinity when q has zero mass somewhere
/// p does not.
double kl_divergence(const Distribution& p, const Distribution& q);

/// Validates the mutual-consistency invariant and fills in pi_hat and the
/// voted label. Exactly the semantics used by the dataset loader; exposed
/// so in-memory construction goes through the same checks.
LabeledExample make_example(std::string id, LogitVector logits,
                            std::optional<AnnotationSet> annotations,
                            std::optional<Distribution> pi, int k);

// Small shared helpers.
std::vector<double> one_hot(int k, int index);
double clamp_prob(double p);

}  // namespace ambical
