#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ambical/core.hpp"
#include "ambical/errors.hpp"
#include "ambical/rng.hpp"
#include "helpers.hpp"

using ambical::AnnotationSet;
using ambical::Distribution;
using ambical::LogitVector;

TEST_CASE("softmax_t basics") {
  auto u = ambical::softmax_t(LogitVector({0.0, 0.0, 0.0}), 1.0);
  for (int k = 0; k < 3; ++k) CHECK(u[k] == doctest::Approx(1.0 / 3).epsilon(1e-14));

  auto p = ambical::softmax_t(LogitVector({std::log(2.0), 0.0}), 1.0);
  CHECK(p[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto flat = ambical::softmax_t(LogitVector({1.0, 0.0}), 1e6);
  CHECK(std::abs(flat[0] - 0.5) < 1e-5);
  CHECK(std::abs(flat[1] - 0.5) < 1e-5);
}

TEST_CASE("softmax_t sums to one and ignores logit shifts") {
  auto rng = ambical::make_stream(7, ambical::stream::kGeneric);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(4);
    for (auto& v : z) v = 5.0 * ambical::next_normal(rng);
    const double shift = 100.0 * ambical::next_normal(rng);
    std::vector<double> zs = z;
    for (auto& v : zs) v += shift;
    const double t = std::exp(2.0 * ambical::next_normal(rng));

    auto a = ambical::softmax_t(LogitVector(z), t);
    auto b = ambical::softmax_t(LogitVector(zs), t);
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
      sum += a[k];
      CHECK(std::abs(a[k] - b[k]) < 1e-12);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax_t entropy grows with temperature") {
  auto rng = ambical::make_stream(8, ambical::stream::kGeneric);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(5);
    for (auto& v : z) v = 3.0 * ambical::next_normal(rng);
    const LogitVector lv(z);
    double prev = -1.0;
    for (double t : {0.2, 0.5, 1.0, 2.0, 8.0}) {
      const double h = ambical::entropy(ambical::softmax_t(lv, t));
      CHECK(h >= prev - 1e-12);
      prev = h;
    }
  }
}

TEST_CASE("softmax_t rejects bad input") {
  CHECK_THROWS_AS(ambical::softmax_t(LogitVector({1.0, 2.0}), 0.0),
                  ambical::DomainError);
  CHECK_THROWS_AS(ambical::softmax_t(LogitVector({1.0, 2.0}), -3.0),
                  ambical::DomainError);
  CHECK_THROWS_AS(LogitVector({1.0, std::nan("")}), ambical::InputError);
  CHECK_THROWS_AS(LogitVector({1.0, ambical::kInf}), ambical::InputError);
}

TEST_CASE("empirical_distribution counts labels") {
  auto p = ambical::empirical_distribution(AnnotationSet{{1, 1, 2}}, 3);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(1.0 / 3).epsilon(1e-14));

  auto single = ambical::empirical_distribution(AnnotationSet{{0}}, 2);
  CHECK(single[0] == 1.0);
  CHECK(single[1] == 0.0);

  auto half = ambical::empirical_distribution(AnnotationSet{{0, 1, 0, 1}}, 2);
  CHECK(half[0] == 0.5);
  CHECK(half[1] == 0.5);

  CHECK_THROWS_AS(ambical::empirical_distribution(AnnotationSet{{3}}, 3),
                  ambical::InputError);
  CHECK_THROWS_AS(ambical::empirical_distribution(AnnotationSet{{}}, 3),
                  ambical::InputError);
}

TEST_CASE("voted_label picks the argmax with low-index ties") {
  CHECK(ambical::voted_label(Distribution({0.0, 0.70, 0.30})) == 1);
  CHECK(ambical::voted_label(Distribution({1.0, 0.0, 0.0})) == 0);
  CHECK(ambical::voted_label(Distribution({0.5, 0.5})) == 0);
}

TEST_CASE("voted label of empirical counts equals the annotation mode") {
  auto rng = ambical::make_stream(9, ambical::stream::kGeneric);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + ambical::next_index(rng, 5);
    const int m = 1 + ambical::next_index(rng, 12);
    std::vector<int> labels(static_cast<std::size_t>(m));
    for (auto& l : labels) l = ambical::next_index(rng, k);

    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) counts[static_cast<std::size_t>(l)]++;
    int mode = 0;
    for (int c = 1; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(mode)])
        mode = c;

    auto p = ambical::empirical_distribution(AnnotationSet{labels}, k);
    CHECK(ambical::voted_label(p) == mode);
  }
}

TEST_CASE("entropy values") {
  CHECK(ambical::entropy(Distribution({1.0, 0.0, 0.0})) == 0.0);
  CHECK(ambical::entropy(Distribution::uniform(10)) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(ambical::entropy(Distribution({0.7, 0.3})) ==
        doctest::Approx(0.610864).epsilon(1e-5));
}

TEST_CASE("kl_divergence values and sign") {
  const Distribution p({0.2, 0.5, 0.3});
  CHECK(ambical::kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-14));

  CHECK(ambical::kl_divergence(Distribution({1.0, 0.0}), Distribution({0.5, 0.5})) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  CHECK(ambical::kl_divergence(Distribution({0.5, 0.5}), Distribution({1.0, 0.0})) ==
        ambical::kInf);

  auto rng = ambical::make_stream(10, ambical::stream::kGeneric);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = testutil::random_simplex(3, rng, 1e-4);
    auto b = testutil::random_simplex(3, rng, 1e-4);
    const double d = ambical::kl_divergence(a, b);
    CHECK(d >= 0.0);
    double gap = 0.0;
    for (int k = 0; k < 3; ++k) gap = std::max(gap, std::abs(a[k] - b[k]));
    if (d < 1e-12) CHECK(gap < 1e-5);
  }
}

TEST_CASE("distribution and logit validation") {
  CHECK_THROWS_AS(Distribution({1.0}), ambical::InputError);
  CHECK_THROWS_AS(Distribution({0.5, 0.6}), ambical::InputError);
  CHECK_THROWS_AS(Distribution({-0.1, 1.1}), ambical::InputError);
  CHECK_THROWS_AS(LogitVector({}), ambical::InputError);
}

TEST_CASE("make_example fills pi and voted from annotations") {
  auto ex = ambical::make_example("a", LogitVector({0.0, 1.0, 0.0}),
                                  AnnotationSet{{1, 1, 2}}, std::nullopt, 3);
  CHECK(ex.pi_hat[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(ex.voted == 1);

  auto tie = ambical::make_example("b", LogitVector({0.0, 0.0}), std::nullopt,
                                   Distribution({0.5, 0.5}), 2);
  CHECK(tie.voted == 0);
}

TEST_CASE("make_example rejects inconsistent or missing supervision") {
  CHECK_THROWS_AS(ambical::make_example("c", LogitVector({0.0, 0.0, 0.0}),
                                        AnnotationSet{{1, 1, 2}},
                                        Distribution({0.5, 0.5, 0.0}), 3),
                  ambical::InputError);
  CHECK_THROWS_AS(ambical::make_example("d", LogitVector({0.0, 0.0}), std::nullopt,
                                        std::nullopt, 2),
                  ambical::InputError);
  CHECK_THROWS_AS(ambical::make_example("e", LogitVector({0.0, 0.0}),
                                        AnnotationSet{{0}}, std::nullopt, 3),
                  ambical::InputError);

  // Agreement within tolerance is accepted.
  auto ok = ambical::make_example("f", LogitVector({0.0, 0.0, 0.0}),
                                  AnnotationSet{{1, 1, 2}},
                                  Distribution({0.0, 2.0 / 3, 1.0 / 3}), 3);
  CHECK(ok.voted == 1);
}
