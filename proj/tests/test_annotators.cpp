#include <doctest.h>

#include <cmath>
#include <vector>

#include "ambical/annotators.hpp"
#include "ambical/core.hpp"
#include "ambical/errors.hpp"
#include "helpers.hpp"

namespace ann = ambical::annotators;

TEST_CASE("the dermatology confusion preset matches its published values") {
  auto c = ann::isic_confusion();
  REQUIRE(c.k == 8);
  REQUIRE(c.class_names.size() == 8);
  CHECK(c.class_names[0] == "MEL");
  CHECK(c.class_names[1] == "NV");

  const std::vector<double> mel_row = {0.73, 0.14, 0.02, 0.03, 0.08, 0.0, 0.0, 0.0};
  for (int j = 0; j < 8; ++j) CHECK(c.at(0, j) == mel_row[static_cast<std::size_t>(j)]);
  CHECK(c.at(0, 1) == 0.14);
  CHECK(c.at(1, 0) == 0.15);

  double diag = 0.0;
  for (int i = 0; i < 8; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < 8; ++j) row_sum += c.at(i, j);
    CHECK(std::abs(row_sum - 1.0) < 1e-12);
    diag += c.at(i, i);
  }
  CHECK(std::abs(diag / 8.0 - 0.7525) < 1e-12);
}

TEST_CASE("make_confusion validates row stochasticity") {
  CHECK_THROWS_AS(ann::make_confusion(2, {0.5, 0.4, 0.3, 0.7}), ambical::InputError);
  CHECK_THROWS_AS(ann::make_confusion(2, {1.1, -0.1, 0.3, 0.7}), ambical::InputError);
  auto ok = ann::make_confusion(2, {0.9, 0.1, 0.2, 0.8});
  CHECK(ok.at(1, 0) == 0.2);
}

TEST_CASE("an identity confusion copies the consensus label") {
  auto c = ann::make_confusion(3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto sets = ann::sample_annotations({0, 1, 2, 1, 0}, c, 7, 5);
  REQUIRE(sets.size() == 5);
  const std::vector<int> consensus = {0, 1, 2, 1, 0};
  for (std::size_t i = 0; i < sets.size(); ++i) {
    CHECK(sets[i].labels.size() == 7);
    for (int l : sets[i].labels) CHECK(l == consensus[i]);
  }
}

TEST_CASE("large samples reproduce the confusion row") {
  auto c = ann::isic_confusion();
  auto sets = ann::sample_annotations({0}, c, 100000, 99);
  auto freq = ambical::empirical_distribution(sets[0], 8);
  // NV probability for melanoma consensus is 0.14; 3 sigma at 1e5 draws.
  const double sigma = std::sqrt(0.14 * 0.86 / 100000.0);
  CHECK(std::abs(freq[1] - 0.14) < 3.0 * sigma);

  // Every row within total-variation 0.01 of its target at m = 1e5.
  for (int truth = 0; truth < 8; ++truth) {
    auto s = ann::sample_annotations({truth}, c, 100000, 7);
    auto f = ambical::empirical_distribution(s[0], 8);
    double tv = 0.0;
    for (int j = 0; j < 8; ++j) tv += std::abs(f[j] - c.at(truth, j));
    CHECK(tv / 2.0 < 0.01);
  }
}

TEST_CASE("annotation sampling is deterministic and stream local") {
  auto c = ann::isic_confusion();
  const std::vector<int> consensus = {3, 1, 4, 1, 5};
  auto a = ann::sample_annotations(consensus, c, 9, 42);
  auto b = ann::sample_annotations(consensus, c, 9, 42);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].labels == b[i].labels);

  // Raising m extends each example's draws without disturbing the prefix.
  auto more = ann::sample_annotations(consensus, c, 15, 42);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < 9; ++j)
      CHECK(more[i].labels[j] == a[i].labels[j]);
}

TEST_CASE("voting over many synthetic annotators recovers the consensus") {
  auto c = ann::isic_confusion();
  const int per_class = 200;
  for (int truth = 0; truth < 8; ++truth) {
    if (c.at(truth, truth) < 0.62) continue;
    // Strict row maximum required for the vote to concentrate.
    bool strict = true;
    for (int j = 0; j < 8; ++j)
      if (j != truth && c.at(truth, j) >= c.at(truth, truth)) strict = false;
    if (!strict) continue;

    std::vector<int> consensus(per_class, truth);
    auto sets = ann::sample_annotations(consensus, c, 201,
                                        1000 + static_cast<std::uint64_t>(truth));
    int hits = 0;
    for (const auto& s : sets) {
      auto pi = ambical::empirical_distribution(s, 8);
      if (ambical::voted_label(pi) == truth) ++hits;
    }
    CHECK(static_cast<double>(hits) / per_class > 0.99);
  }
}

TEST_CASE("subsampling annotations") {
  ambical::AnnotationSet pool{{0, 0, 1, 2, 2, 2, 1, 0, 2}};

  auto full = ann::subsample_annotations(pool, 9, 3);
  std::vector<int> sorted_full = full.labels, sorted_pool = pool.labels;
  std::sort(sorted_full.begin(), sorted_full.end());
  std::sort(sorted_pool.begin(), sorted_pool.end());
  CHECK(sorted_full == sorted_pool);

  auto one = ann::subsample_annotations(pool, 1, 3);
  REQUIRE(one.labels.size() == 1);
  CHECK(std::count(pool.labels.begin(), pool.labels.end(), one.labels[0]) > 0);

  auto again = ann::subsample_annotations(pool, 4, 3);
  CHECK(ann::subsample_annotations(pool, 4, 3).labels == again.labels);

  CHECK_THROWS_AS(ann::subsample_annotations(pool, 10, 3), ambical::InputError);
}

TEST_CASE("smaller subsamples nest inside larger ones") {
  ambical::AnnotationSet pool{{0, 1, 2, 3, 4, 5, 6, 7, 8}};
  auto five = ann::subsample_annotations(pool, 5, 11, 2);
  auto three = ann::subsample_annotations(pool, 3, 11, 2);
  for (std::size_t j = 0; j < 3; ++j) CHECK(three.labels[j] == five.labels[j]);
}

TEST_CASE("confusion matrices round-trip through json") {
  auto c = ann::isic_confusion();
  auto text = ann::confusion_to_json(c);
  auto back = ann::confusion_from_json(text);
  CHECK(back.k == c.k);
  CHECK(back.rows == c.rows);
  CHECK(back.class_names == c.class_names);

  CHECK_THROWS_AS(ann::confusion_from_json("{\"version\":1}"), ambical::LoadError);
  CHECK_THROWS_AS(
      ann::confusion_from_json(
          "{\"version\":1,\"k\":2,\"rows\":[[0.9,0.2],[0.1,0.9]]}"),
      ambical::Error);
}
