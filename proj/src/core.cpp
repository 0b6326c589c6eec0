#include "ambical/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ambical/errors.hpp"

namespace ambical {

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw InputError("distribution needs at least 2 classes, got " +
                     std::to_string(probs_.size()));
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < probs_.size(); ++k) {
    const double p = probs_[k];
    if (!std::isfinite(p) || p < 0.0) {
      throw InputError("distribution entry " + std::to_string(k) +
                       " is negative or non-finite");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSimplexTol) {
    throw InputError("distribution sums to " + std::to_string(sum) +
                     ", expected 1 within 1e-9");
  }
}

Distribution Distribution::uniform(int k) {
  if (k < 2) throw InputError("uniform distribution needs k >= 2");
  return Distribution(std::vector<double>(static_cast<std::size_t>(k), 1.0 / k));
}

Distribution Distribution::one_hot(int k, int index) {
  return Distribution(ambical::one_hot(k, index));
}

LogitVector::LogitVector(std::vector<double> z) : z_(std::move(z)) {
  if (z_.empty()) throw InputError("logit vector is empty");
  for (std::size_t k = 0; k < z_.size(); ++k) {
    if (!std::isfinite(z_[k])) {
      throw InputError("logit entry " + std::to_string(k) + " is not finite");
    }
  }
}

std::vector<double> one_hot(int k, int index) {
  if (k < 2 || index < 0 || index >= k) {
    throw InputError("one_hot: index " + std::to_string(index) +
                     " out of range for k=" + std::to_string(k));
  }
  std::vector<double> v(static_cast<std::size_t>(k), 0.0);
  v[static_cast<std::size_t>(index)] = 1.0;
  return v;
}

double clamp_prob(double p) { return p < kProbFloor ? kProbFloor : p; }

Distribution softmax_t(const LogitVector& z, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw DomainError("temperature must be positive and finite, got " +
                      std::to_string(t));
  }
  const auto& v = z.values();
  const double m = *std::max_element(v.begin(), v.end());
  std::vector<double> p(v.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    p[k] = std::exp((v[k] - m) / t);
    sum += p[k];
  }
  for (double& x : p) x /= sum;
  return Distribution(std::move(p));
}

Distribution empirical_distribution(const AnnotationSet& a, int k) {
  if (k < 2) throw InputError("empirical_distribution needs k >= 2");
  if (a.labels.empty()) throw InputError("annotation set is empty");
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (int label : a.labels) {
    if (label < 0 || label >= k) {
      throw InputError("annotation label " + std::to_string(label) +
                       " out of range for k=" + std::to_string(k));
    }
    counts[static_cast<std::size_t>(label)] += 1.0;
  }
  const double m = static_cast<double>(a.labels.size());
  for (double& c : counts) c /= m;
  return Distribution(std::move(counts));
}

int voted_label(const Distribution& p) {
  // max_element keeps the first of equal keys, which is the tie rule here.
  const auto& v = p.probs();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double entropy(const Distribution& p) {
  double h = 0.0;
  for (double x : p.probs()) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

double kl_divergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) {
    throw InputError("kl_divergence: size mismatch " + std::to_string(p.size()) +
                     " vs " + std::to_string(q.size()));
  }
  double kl = 0.0;
  for (int k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) {
      if (q[k] <= 0.0) return kInf;
      kl += p[k] * std::log(p[k] / q[k]);
    }
  }
  return kl;
}

LabeledExample make_example(std::string id, LogitVector logits,
                            std::optional<AnnotationSet> annotations,
                            std::optional<Distribution> pi, int k) {
  if (logits.size() != k) {
    throw InputError("example '" + id + "': expected " + std::to_string(k) +
                     " logits, got " + std::to_string(logits.size()));
  }
  if (!annotations && !pi) {
    throw InputError("example '" + id +
                     "': needs annotations or a label distribution");
  }
  if (annotations) {
    // Range check against k happens inside empirical_distribution.
    Distribution emp = empirical_distribution(*annotations, k);
    if (pi) {
      if (pi->size() != k) {
        throw InputError("example '" + id + "': pi has wrong length");
      }
      for (int c = 0; c < k; ++c) {
        if (std::abs(emp[c] - (*pi)[c]) > kConsistencyTol) {
          throw InputError(
              "example '" + id + "': annotations disagree with pi at class " +
              std::to_string(c));
        }
      }
    } else {
      pi = emp;
    }
  } else if (pi->size() != k) {
    throw InputError("example '" + id + "': pi has wrong length");
  }
  LabeledExample ex{std::move(id), std::move(logits), std::move(annotations),
                    std::move(*pi), 0};
  ex.voted = voted_label(ex.pi_hat);
  return ex;
}

}  // namespace ambical
