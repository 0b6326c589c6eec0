#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "ambical/calibrators.hpp"
#include "ambical/core.hpp"
#include "ambical/errors.hpp"
#include "ambical/rng.hpp"
#include "helpers.hpp"

namespace cal = ambical::cal;
using ambical::AnnotationSet;
using ambical::Distribution;
using ambical::LogitVector;

namespace {

double fitted_t(const cal::CalibratorModel& m) {
  return std::get<cal::TemperatureParams>(m.params).t;
}

double mean_entropy(const std::vector<Distribution>& ps) {
  double h = 0.0;
  for (const auto& p : ps) h += ambical::entropy(p);
  return h / static_cast<double>(ps.size());
}

/// Mean cross entropy of the model's output against the targets; the raw
/// loss each fit minimizes, without any penalty term.
double model_ce(const cal::CalibratorModel& m,
                const std::vector<LogitVector>& logits,
                const std::vector<Distribution>& targets) {
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto q = cal::apply(m, logits[i]);
    for (int k = 0; k < q.size(); ++k)
      s -= targets[i][k] * std::log(ambical::clamp_prob(q[k]));
  }
  return s / static_cast<double>(logits.size());
}

}  // namespace

TEST_CASE("fit_temperature recovers an exact soft target") {
  auto logits = testutil::random_logits(400, 5, 3.0, 21);
  auto targets = cal::annotator_targets(testutil::soften(logits, 2.5));
  auto m = cal::fit_temperature(logits, targets);
  CHECK(std::abs(fitted_t(m) - 2.5) < 1e-3);
  CHECK(m.fitted_on == cal::FittedOn::soft);
}

TEST_CASE("fit_temperature on sampled voted labels is consistent") {
  auto logits = testutil::random_logits(10000, 10, 3.0, 22);
  auto pi = testutil::soften(logits, 3.0);
  double mean_t = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto labels = testutil::sample_labels(pi, seed);
    auto m = cal::fit_temperature(logits, cal::voted_targets(labels, 10));
    mean_t += fitted_t(m);
  }
  mean_t /= 5.0;
  CHECK(std::abs(mean_t - 3.0) < 0.05);
}

TEST_CASE("fit_mcts equals the voted fit when every target is one-hot") {
  auto logits = testutil::random_logits(150, 4, 2.0, 23);
  std::vector<AnnotationSet> ann;
  std::vector<int> voted;
  auto rng = ambical::make_stream(23, ambical::stream::kGeneric, 5);
  for (int i = 0; i < 150; ++i) {
    const int c = ambical::next_index(rng, 4);
    ann.push_back(AnnotationSet{{c, c, c}});
    voted.push_back(c);
  }
  auto base = cal::fit_temperature(logits, cal::voted_targets(voted, 4));
  for (int s : {1, 4}) {
    for (std::uint64_t seed : {7ull, 99ull}) {
      auto m = cal::fit_mcts(logits, ann, 4, s, seed);
      CHECK(fitted_t(m) == fitted_t(base));
    }
  }
}

TEST_CASE("fit_mcts converges to the soft fit as S grows") {
  auto logits = testutil::random_logits(400, 3, 2.5, 24);
  std::vector<AnnotationSet> ann;
  std::vector<Distribution> pi;
  auto rng = ambical::make_stream(24, ambical::stream::kGeneric, 6);
  for (const auto& z : logits) {
    auto p = ambical::softmax_t(z, 2.0);
    std::vector<int> labels(9);
    for (auto& l : labels) l = ambical::sample_categorical(rng, p.probs());
    ann.push_back(AnnotationSet{labels});
    pi.push_back(ambical::empirical_distribution(ann.back(), 3));
  }

  auto soft = cal::annotator_targets(pi);
  auto slts = cal::fit_temperature(logits, soft);
  auto mcts = cal::fit_mcts(logits, ann, 3, 5000, 17);

  const double gap = cal::temperature_ce(logits, soft, fitted_t(mcts)) -
                     cal::temperature_ce(logits, soft, fitted_t(slts));
  CHECK(gap >= -1e-12);
  CHECK(gap < 1e-3);
}

TEST_CASE("fit_mcts is deterministic and validates inputs") {
  auto logits = testutil::random_logits(60, 3, 2.0, 25);
  std::vector<AnnotationSet> ann(60, AnnotationSet{{0, 1, 1}});
  auto a = cal::fit_mcts(logits, ann, 3, 3, 42);
  auto b = cal::fit_mcts(logits, ann, 3, 3, 42);
  CHECK(fitted_t(a) == fitted_t(b));

  std::vector<AnnotationSet> short_ann(59, AnnotationSet{{0}});
  CHECK_THROWS_AS(cal::fit_mcts(logits, short_ann, 3, 1, 42), ambical::InputError);
}

TEST_CASE("label smoothing global variant matches the definition") {
  // Confidence exactly 0.8 on the voted class for every example, K=10.
  const int k = 10;
  const double top = std::log(0.8), rest = std::log(0.2 / 9.0);
  std::vector<LogitVector> logits;
  std::vector<int> voted;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> z(static_cast<std::size_t>(k), rest);
    z[static_cast<std::size_t>(i % k)] = top;
    logits.emplace_back(std::move(z));
    voted.push_back(i % k);
  }

  cal::SmoothingSpec spec;
  spec.mode = cal::SmoothingSpec::Mode::global;
  auto t = cal::label_smoothing_targets(logits, voted, k, spec);
  CHECK(t.eps_bar == doctest::Approx(0.2).epsilon(1e-12));
  for (std::size_t i = 0; i < t.targets.size(); ++i) {
    const int y = voted[i];
    CHECK(t.targets[i][y] == doctest::Approx(0.82).epsilon(1e-12));
    CHECK(t.targets[i][(y + 1) % k] == doctest::Approx(0.02).epsilon(1e-12));
  }
}

TEST_CASE("label smoothing fixed variant puts 1-eps plus uniform share on the vote") {
  auto logits = testutil::random_logits(30, 10, 2.0, 26);
  std::vector<int> voted;
  for (const auto& z : logits) voted.push_back(ambical::voted_label(ambical::softmax_t(z, 1.0)));

  cal::SmoothingSpec spec;
  spec.mode = cal::SmoothingSpec::Mode::fixed;
  spec.eps = 0.1;
  auto t = cal::label_smoothing_targets(logits, voted, 10, spec);
  for (std::size_t i = 0; i < t.targets.size(); ++i)
    CHECK(t.targets[i][voted[i]] == doctest::Approx(0.91).epsilon(1e-12));
}

TEST_CASE("label smoothing entropy variant uses normalized entropy per example") {
  auto logits = testutil::random_logits(25, 4, 2.0, 27);
  std::vector<int> voted;
  for (const auto& z : logits) voted.push_back(ambical::voted_label(ambical::softmax_t(z, 1.0)));

  cal::SmoothingSpec spec;
  spec.mode = cal::SmoothingSpec::Mode::entropy;
  auto t = cal::label_smoothing_targets(logits, voted, 4, spec);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double want =
        ambical::entropy(ambical::softmax_t(logits[i], 1.0)) / std::log(4.0);
    CHECK(t.eps[i] == doctest::Approx(want).epsilon(1e-12));
    CHECK(t.targets[i][voted[i]] ==
          doctest::Approx(1.0 - want + want / 4.0).epsilon(1e-12));
  }
}

TEST_CASE("label smoothing classwise variant falls back to global for empty classes") {
  // Voted labels only ever hit classes 0 and 1 of 3.
  std::vector<LogitVector> logits;
  std::vector<int> voted;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> z = {0.0, 0.0, -8.0};
    z[static_cast<std::size_t>(i % 2)] = 1.5 + 0.1 * i;
    logits.emplace_back(std::move(z));
    voted.push_back(i % 2);
  }
  cal::SmoothingSpec spec;
  spec.mode = cal::SmoothingSpec::Mode::classwise;
  auto t = cal::label_smoothing_targets(logits, voted, 3, spec);
  REQUIRE(t.eps_class.size() == 3);
  CHECK(t.eps_class[2] == doctest::Approx(t.eps_bar).epsilon(1e-12));
  CHECK(t.eps_class[0] != t.eps_class[1]);
}

TEST_CASE("label smoothing variants emit distinct diagnostics") {
  auto logits = testutil::random_logits(200, 5, 2.0, 28);
  std::vector<int> voted;
  for (const auto& z : logits) voted.push_back(ambical::voted_label(ambical::softmax_t(z, 1.0)));

  std::vector<cal::SoftTargetSet> sets;
  for (auto mode :
       {cal::SmoothingSpec::Mode::global, cal::SmoothingSpec::Mode::fixed,
        cal::SmoothingSpec::Mode::entropy, cal::SmoothingSpec::Mode::classwise}) {
    cal::SmoothingSpec spec;
    spec.mode = mode;
    sets.push_back(cal::label_smoothing_targets(logits, voted, 5, spec));
  }
  for (std::size_t a = 0; a < sets.size(); ++a)
    for (std::size_t b = a + 1; b < sets.size(); ++b) {
      CHECK(sets[a].smoothing != sets[b].smoothing);
      CHECK(sets[a].eps != sets[b].eps);
    }
}

TEST_CASE("label smoothing targets carry the moment identity") {
  auto logits = testutil::random_logits(300, 4, 2.0, 29);
  std::vector<int> voted;
  for (const auto& z : logits) voted.push_back(ambical::voted_label(ambical::softmax_t(z, 1.0)));

  cal::SmoothingSpec spec;
  spec.mode = cal::SmoothingSpec::Mode::global;
  auto t = cal::label_smoothing_targets(logits, voted, 4, spec);
  double mass = 0.0;
  for (std::size_t i = 0; i < t.targets.size(); ++i) mass += t.targets[i][voted[i]];
  mass /= static_cast<double>(t.targets.size());
  CHECK(mass ==
        doctest::Approx(1.0 - t.eps_bar + t.eps_bar / 4.0).epsilon(1e-12));
}

TEST_CASE("a perfectly confident model makes smoothing a no-op") {
  auto logits = testutil::random_logits(200, 3, 1.0, 30);
  std::vector<LogitVector> sharp;
  std::vector<int> voted;
  for (const auto& z : logits) {
    const int c = ambical::voted_label(ambical::softmax_t(z, 1.0));
    std::vector<double> big(3, 0.0);
    big[static_cast<std::size_t>(c)] = 60.0;
    sharp.emplace_back(std::move(big));
    voted.push_back(c);
  }
  cal::SmoothingSpec spec;
  spec.mode = cal::SmoothingSpec::Mode::global;
  auto t = cal::label_smoothing_targets(sharp, voted, 3, spec);
  CHECK(t.eps_bar < 1e-12);

  auto ls = cal::fit_temperature(sharp, t);
  auto ts = cal::fit_temperature(sharp, cal::voted_targets(voted, 3));
  CHECK(std::abs(fitted_t(ls) - fitted_t(ts)) < 1e-6);
}

TEST_CASE("smoothing widens the fitted temperature whenever eps is visible") {
  for (std::uint64_t seed = 40; seed < 50; ++seed) {
    const int k = 2 + static_cast<int>(seed % 4);
    auto logits = testutil::random_logits(250, k, 2.5, seed);
    auto pi = testutil::soften(logits, 1.5);
    auto labels = testutil::sample_labels(pi, seed);

    cal::SmoothingSpec spec;
    spec.mode = cal::SmoothingSpec::Mode::global;
    auto smooth = cal::label_smoothing_targets(logits, labels, k, spec);
    REQUIRE(smooth.eps_bar > 0.01);

    auto t_ls = fitted_t(cal::fit_temperature(logits, smooth));
    auto t_ts = fitted_t(cal::fit_temperature(logits, cal::voted_targets(labels, k)));
    CHECK(t_ls > t_ts);
  }
}

TEST_CASE("temperature scaling underestimates the soft temperature under ambiguity") {
  for (std::uint64_t seed = 100; seed < 106; ++seed) {
    auto data = testutil::two_cluster(seed);
    auto t_ts = fitted_t(
        cal::fit_temperature(data.logits, cal::voted_targets(testutil::voted_of(data.pi), 3)));
    auto t_slts = fitted_t(cal::fit_temperature(data.logits, cal::annotator_targets(data.pi)));
    CHECK(t_ts < t_slts);
  }
}

TEST_CASE("fit_diag_affine leaves an already matching model alone") {
  auto logits = testutil::random_logits(150, 3, 2.0, 31);
  auto targets = testutil::soften(logits, 1.0);
  auto m = cal::fit_diag_affine(logits, cal::annotator_targets(targets));
  CHECK(std::abs(model_ce(m, logits, targets) - mean_entropy(targets)) < 1e-6);
}

TEST_CASE("fit_diag_affine reaches a target inside the family") {
  auto logits = testutil::random_logits(200, 3, 2.0, 32);
  std::vector<Distribution> targets;
  for (const auto& z : logits)
    targets.push_back(ambical::softmax_t(
        LogitVector({0.5 * z[0] + 0.3, 0.5 * z[1] - 0.1, 0.5 * z[2] + 0.4}), 1.0));
  auto m = cal::fit_diag_affine(logits, cal::annotator_targets(targets));
  CHECK(model_ce(m, logits, targets) - mean_entropy(targets) < 1e-6);
}

TEST_CASE("fit_diag_affine beats a single temperature when class scales differ") {
  auto logits = testutil::random_logits(300, 2, 2.0, 33);
  std::vector<Distribution> targets;
  for (const auto& z : logits)
    targets.push_back(
        ambical::softmax_t(LogitVector({z[0] / 1.0, z[1] / 3.0}), 1.0));
  auto soft = cal::annotator_targets(targets);

  auto diag = cal::fit_diag_affine(logits, soft);
  auto single = cal::fit_temperature(logits, soft);
  CHECK(model_ce(diag, logits, targets) <
        model_ce(single, logits, targets) - 1e-3);
}

TEST_CASE("fit_vector_scaling recovers shared and per-class temperatures") {
  auto logits = testutil::random_logits(250, 3, 2.0, 34);
  auto targets = testutil::soften(logits, 2.0);
  auto m = cal::fit_vector_scaling(logits, cal::annotator_targets(targets));
  const auto& p = std::get<cal::VectorTemperatureParams>(m.params);
  for (double u : p.u) CHECK(std::abs(std::exp(u) - 2.0) < 1e-2);

  std::vector<Distribution> uneven;
  for (const auto& z : logits)
    uneven.push_back(ambical::softmax_t(LogitVector({z[0], z[1] / 3.0, z[2]}), 1.0));
  auto m2 = cal::fit_vector_scaling(logits, cal::annotator_targets(uneven));
  CHECK(model_ce(m2, logits, uneven) - mean_entropy(uneven) < 1e-6);
}

TEST_CASE("vector scaling never loses to the best single temperature") {
  auto logits = testutil::random_logits(200, 2, 2.0, 35);
  auto targets = testutil::soften(logits, 2.0);
  auto soft = cal::annotator_targets(targets);
  auto vs = cal::fit_vector_scaling(logits, soft);
  auto ts = cal::fit_temperature(logits, soft);
  CHECK(model_ce(vs, logits, targets) <=
        model_ce(ts, logits, targets) + 1e-6);
}

TEST_CASE("fit_dirichlet with zero penalty keeps an already optimal identity") {
  auto logits = testutil::random_logits(150, 3, 2.0, 36);
  auto targets = testutil::soften(logits, 1.0);
  auto m = cal::fit_dirichlet(logits, cal::annotator_targets(targets), 0.0);
  CHECK(std::abs(model_ce(m, logits, targets) - mean_entropy(targets)) < 1e-6);
}

TEST_CASE("fit_dirichlet reaches a permuted target") {
  auto logits = testutil::random_logits(200, 3, 2.0, 37);
  std::vector<Distribution> targets;
  for (const auto& z : logits)
    targets.push_back(ambical::softmax_t(LogitVector({z[2], z[0], z[1]}), 1.0));
  auto m = cal::fit_dirichlet(logits, cal::annotator_targets(targets), 0.0);
  CHECK(model_ce(m, logits, targets) - mean_entropy(targets) < 1e-6);
}

TEST_CASE("a huge dirichlet penalty suppresses off-diagonal weights") {
  auto logits = testutil::random_logits(150, 3, 2.0, 38);
  auto targets = testutil::soften(logits, 2.0);
  auto m = cal::fit_dirichlet(logits, cal::annotator_targets(targets), 1e6);
  const auto& p = std::get<cal::FullAffineParams>(m.params);
  double off = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (r != c) off += p.w[static_cast<std::size_t>(r * 3 + c)] *
                         p.w[static_cast<std::size_t>(r * 3 + c)];
  CHECK(std::sqrt(off) < 1e-3);
}

TEST_CASE("dirichlet penalty normalization matches its definition") {
  auto logits = testutil::random_logits(40, 2, 2.0, 39);
  auto soft = cal::annotator_targets(testutil::soften(logits, 1.3));
  const std::vector<double> params = {1.0, 2.0, 3.0, 4.0, 1.0, -1.0};
  const double base = cal::dirichlet_ce(logits, soft, params, 0.0).value;
  const double pen = cal::dirichlet_ce(logits, soft, params, 1.0).value;
  // Off-diagonal squares (4 + 9) / (K(K-1)) = 6.5, biases (1 + 1) / K = 1.
  CHECK(pen - base == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("richer families achieve no worse calibration loss") {
  auto logits = testutil::random_logits(150, 3, 2.0, 41);
  auto targets = testutil::soften(logits, 2.2);
  auto soft = cal::annotator_targets(targets);

  ambical::optim::VectorConfig shared;
  shared.learning_rate = 0.02;
  shared.max_steps = 6000;

  const double l_full = model_ce(cal::fit_dirichlet(logits, soft, 0.0, shared),
                                 logits, targets);
  const double l_diag =
      model_ce(cal::fit_diag_affine(logits, soft, shared), logits, targets);
  const double l_vec =
      model_ce(cal::fit_vector_scaling(logits, soft, shared), logits, targets);
  const double l_temp = model_ce(cal::fit_temperature(logits, soft), logits, targets);
  const double l_id = model_ce(cal::identity_model(3), logits, targets);

  CHECK(l_full <= l_diag + 1e-6);
  CHECK(l_diag <= l_vec + 1e-6);
  CHECK(l_vec <= l_temp + 1e-6);
  CHECK(l_temp <= l_id + 1e-6);
}

TEST_CASE("fit_isotonic_confidence pools conflicting pairs") {
  auto m = cal::fit_isotonic_confidence({0.6, 0.9}, {0.9, 0.6});
  const auto& p = std::get<cal::IsotonicParams>(m.params);
  REQUIRE(p.values.size() == 2);
  CHECK(p.values[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(p.values[1] == doctest::Approx(0.75).epsilon(1e-12));

  // Both a 0.6-confidence and a 0.9-confidence input map to 0.75.
  for (double conf : {0.6, 0.9}) {
    auto q = cal::apply(m, LogitVector({std::log(conf / (1.0 - conf)), 0.0}));
    CHECK(q[0] == doctest::Approx(0.75).epsilon(1e-9));
  }
}

TEST_CASE("fit_isotonic_confidence is the identity on calibrated knots") {
  auto m = cal::fit_isotonic_confidence({0.55, 0.7, 0.9}, {0.55, 0.7, 0.9});
  // The fitted map is a right-continuous step function, so probe a hair above
  // each knot: going through logit space and back can round the confidence
  // one ulp below the knot, which belongs to the previous interval.
  for (double conf : {0.55, 0.7, 0.9}) {
    const double probe = conf + 1e-9;
    auto q = cal::apply(m, LogitVector({std::log(probe / (1.0 - probe)), 0.0}));
    CHECK(q[0] == doctest::Approx(conf).epsilon(1e-9));
  }
}

TEST_CASE("fit_isotonic_confidence collapses constant targets") {
  auto m = cal::fit_isotonic_confidence({0.5, 0.7, 0.95}, {0.8, 0.8, 0.8});
  for (double conf : {0.52, 0.8, 0.99}) {
    auto q = cal::apply(m, LogitVector({std::log(conf / (1.0 - conf)), 0.0}));
    CHECK(q[0] == doctest::Approx(0.8).epsilon(1e-9));
  }
  CHECK_THROWS_AS(cal::fit_isotonic_confidence({0.5}, {0.5}), ambical::InputError);
}

TEST_CASE("isotonic apply rewrites only the top class") {
  auto m = cal::fit_isotonic_confidence({0.5, 0.65, 0.8, 0.95},
                                        {0.55, 0.6, 0.75, 0.9});
  auto rng = ambical::make_stream(42, ambical::stream::kGeneric, 7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(3);
    for (auto& v : z) v = 2.0 * ambical::next_normal(rng);
    const LogitVector lv(z);
    auto raw = ambical::softmax_t(lv, 1.0);
    auto q = cal::apply(m, lv);
    const int top = ambical::voted_label(raw);
    CHECK(ambical::voted_label(q) == top);
    double sum = 0.0;
    for (int k = 0; k < 3; ++k) sum += q[k];
    CHECK(std::abs(sum - 1.0) < 1e-12);
    // Non-top classes keep their relative proportions.
    const int a = (top + 1) % 3, b = (top + 2) % 3;
    if (raw[b] > 1e-9 && q[b] > 1e-9)
      CHECK(q[a] / q[b] == doctest::Approx(raw[a] / raw[b]).epsilon(1e-9));
  }
}

TEST_CASE("fit_ats starts at the uncalibrated model") {
  auto logits = testutil::random_logits(80, 3, 2.0, 43);
  std::vector<int> voted;
  for (const auto& z : logits) voted.push_back(ambical::voted_label(ambical::softmax_t(z, 1.0)));

  const double b0 = std::log(std::expm1(0.9));
  double nll = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto p = ambical::softmax_t(logits[i], 1.0);
    nll -= std::log(ambical::clamp_prob(p[voted[i]]));
  }
  nll /= static_cast<double>(logits.size());

  auto at_init = cal::ats_nll(logits, voted, {0.0, 0.0, 0.0, 0.0, b0}, 1e-3);
  CHECK(at_init.value == doctest::Approx(nll).epsilon(1e-12));

  cal::AdaptiveTemperatureParams p0;
  p0.w = {0.0, 0.0, 0.0, 0.0};
  p0.b = b0;
  CHECK(cal::ats_temperature(p0, logits[0]) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit_ats represents a global miscalibration") {
  auto logits = testutil::random_logits(2000, 4, 3.0, 44);
  auto pi = testutil::soften(logits, 2.0);
  auto labels = testutil::sample_labels(pi, 3);

  auto ats = cal::fit_ats(logits, labels);
  const auto& p = std::get<cal::AdaptiveTemperatureParams>(ats.params);

  double sum = 0.0, sum2 = 0.0;
  for (const auto& z : logits) {
    const double t = cal::ats_temperature(p, z);
    sum += t;
    sum2 += t * t;
  }
  const double n = static_cast<double>(logits.size());
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
  CHECK(std::abs(mean - 2.0) < 0.3);
  CHECK(sd < 0.2);

  auto ts = cal::fit_temperature(logits, cal::voted_targets(labels, 4));
  double nll_ats = 0.0, nll_ts = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto qa = cal::apply(ats, logits[i]);
    auto qt = cal::apply(ts, logits[i]);
    nll_ats -= std::log(ambical::clamp_prob(qa[labels[i]]));
    nll_ts -= std::log(ambical::clamp_prob(qt[labels[i]]));
  }
  CHECK(nll_ats / n <= nll_ts / n + 1e-4);
}

TEST_CASE("ats features are the documented four") {
  const LogitVector z({2.0, 1.0, 0.0});
  auto phi = cal::ats_features(z);
  REQUIRE(phi.size() == 4);
  auto p = ambical::softmax_t(z, 1.0);
  std::vector<double> sorted = p.probs();
  std::sort(sorted.rbegin(), sorted.rend());
  CHECK(phi[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(phi[1] == doctest::Approx(ambical::entropy(p) / std::log(3.0)).epsilon(1e-12));
  CHECK(phi[2] == doctest::Approx(sorted[0] - sorted[1]).epsilon(1e-12));
  CHECK(phi[3] == doctest::Approx(sorted[0]).epsilon(1e-12));
}

TEST_CASE("apply dispatches by kind") {
  auto id = cal::identity_model(2);
  auto u = cal::apply(id, LogitVector({0.0, 0.0}));
  CHECK(u[0] == 0.5);
  CHECK(u[1] == 0.5);

  cal::CalibratorModel temp;
  temp.kind = cal::CalibratorKind::temperature;
  temp.k = 0;
  temp.params = cal::TemperatureParams{2.5};
  const LogitVector z({1.0, -0.5, 0.25});
  auto got = cal::apply(temp, z);
  auto want = ambical::softmax_t(z, 2.5);
  for (int k = 0; k < 3; ++k) CHECK(got[k] == want[k]);

  cal::CalibratorModel vec;
  vec.kind = cal::CalibratorKind::vector_temperature;
  vec.k = 2;
  vec.params = cal::VectorTemperatureParams{{std::log(2.0), std::log(4.0)}};
  auto gv = cal::apply(vec, LogitVector({1.0, 2.0}));
  auto wv = ambical::softmax_t(LogitVector({0.5, 0.5}), 1.0);
  CHECK(gv[0] == doctest::Approx(wv[0]).epsilon(1e-12));

  CHECK_THROWS_AS(cal::apply(vec, LogitVector({1.0, 2.0, 3.0})), ambical::InputError);
}

TEST_CASE("cross entropy and brier are minimized exactly at the target") {
  auto rng = ambical::make_stream(45, ambical::stream::kGeneric, 8);
  for (int trial = 0; trial < 20; ++trial) {
    // Keep the target on the search grid. Off the grid, cross entropy ranks
    // nearby candidates in a 1/pi-weighted metric, so near a cell boundary
    // its grid minimizer can legitimately differ from the Euclidean-nearest
    // point.
    auto raw = testutil::random_simplex(3, rng, 0.05);
    int n0 = static_cast<int>(std::lround(100.0 * raw[0]));
    int n1 = static_cast<int>(std::lround(100.0 * raw[1]));
    n0 = std::max(1, std::min(98, n0));
    n1 = std::max(1, std::min(99 - n0, n1));
    const ambical::Distribution pi(
        {n0 / 100.0, n1 / 100.0, (100 - n0 - n1) / 100.0});

    double best_ce = ambical::kInf, best_br = ambical::kInf;
    int ce_i = -1, ce_j = -1, br_i = -1, br_j = -1, near_i = -1, near_j = -1;
    double best_dist = ambical::kInf;
    for (int i = 0; i <= 100; ++i) {
      for (int j = 0; j + i <= 100; ++j) {
        const double q0 = i / 100.0, q1 = j / 100.0, q2 = 1.0 - q0 - q1;
        double ce = 0.0, br = 0.0, dist = 0.0;
        const double qs[3] = {q0, q1, q2};
        for (int k = 0; k < 3; ++k) {
          ce -= pi[k] * std::log(ambical::clamp_prob(qs[k]));
          br += (qs[k] - pi[k]) * (qs[k] - pi[k]);
        }
        dist = br;
        if (ce < best_ce) {
          best_ce = ce;
          ce_i = i;
          ce_j = j;
        }
        if (br < best_br) {
          best_br = br;
          br_i = i;
          br_j = j;
        }
        if (dist < best_dist) {
          best_dist = dist;
          near_i = i;
          near_j = j;
        }
      }
    }
    CHECK(ce_i == near_i);
    CHECK(ce_j == near_j);
    CHECK(br_i == near_i);
    CHECK(br_j == near_j);
  }
}

TEST_CASE("models serialize with bit-exact parameters") {
  auto logits = testutil::random_logits(120, 3, 2.0, 46);
  auto pi = testutil::soften(logits, 1.9);
  auto soft = cal::annotator_targets(pi);
  std::vector<int> voted = testutil::voted_of(pi);

  std::vector<cal::CalibratorModel> models;
  models.push_back(cal::identity_model(3));
  models.push_back(cal::fit_temperature(logits, soft));
  models.push_back(cal::fit_vector_scaling(logits, soft));
  models.push_back(cal::fit_diag_affine(logits, soft));
  models.push_back(cal::fit_dirichlet(logits, soft));
  models.push_back(cal::fit_ats(logits, voted));
  {
    std::vector<double> conf, target;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      auto p = ambical::softmax_t(logits[i], 1.0);
      const int top = ambical::voted_label(p);
      conf.push_back(p[top]);
      target.push_back(pi[i][top]);
    }
    models.push_back(cal::fit_isotonic_confidence(conf, target));
  }

  const LogitVector probe({0.3, -1.2, 0.9});
  for (const auto& m : models) {
    auto text = cal::model_to_json(m);
    auto back = cal::model_from_json(text);
    CHECK(back.kind == m.kind);
    CHECK(back.k == m.k);
    CHECK(back.fitted_on == m.fitted_on);
    CHECK(cal::model_to_json(back) == text);

    auto a = cal::apply(m, probe);
    auto b = cal::apply(back, probe);
    for (int k = 0; k < 3; ++k) {
      CHECK(std::memcmp(&a.probs()[static_cast<std::size_t>(k)],
                        &b.probs()[static_cast<std::size_t>(k)],
                        sizeof(double)) == 0);
    }
  }

  CHECK_THROWS_AS(cal::model_from_json("{\"version\":1,\"kind\":\"nope\"}"),
                  ambical::LoadError);
  CHECK_THROWS_AS(cal::model_from_json("not json"), ambical::LoadError);
}
