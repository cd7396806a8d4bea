#include <doctest.h>

#include "oracles.hpp"
#include "ttech/mlp.hpp"

using namespace ttech;
using namespace ttech::mlp;

namespace {

LabeledData random_task(std::mt19937_64& rng, Index q, Index n) {
  std::normal_distribution<double> g(0, 1);
  LabeledData d;
  d.X.resize(q, n);
  d.t.resize(q);
  for (Index r = 0; r < q; ++r) {
    for (Index i = 0; i < n; ++i) d.X(r, i) = g(rng);
    d.t[r] = g(rng);
  }
  return d;
}

Vec gaussian_weights(std::mt19937_64& rng, Index s, double scale) {
  std::normal_distribution<double> g(0, scale);
  Vec w(s);
  for (Index i = 0; i < s; ++i) w[i] = g(rng);
  return w;
}

}  // namespace

TEST_CASE("forward pass") {
  const MlpArch a{3, 4};
  CHECK(a.param_count() == 21);
  Vec w = Vec::Zero(21);
  w[a.out_bias()] = 0.7;
  CHECK(forward(a, w, oracle::v3(1, -2, 3)) == 0.7);

  // Written out by hand for n = 2, k = 2.
  const MlpArch b{2, 2};
  const Vec v = (Vec(9) << 0.5, -1.0, 0.2, 0.3, -0.4, 0.1, 0.25, 0.05, -0.15).finished();
  const double x1 = 0.6, x2 = -1.1;
  const double ref = 0.5 * std::tanh(0.2 * x1 - 0.4 * x2 + 0.05) - 1.0 * std::tanh(0.3 * x1 + 0.1 * x2 - 0.15) + 0.25;
  CHECK(forward(b, v, oracle::v2(x1, x2)) == doctest::Approx(ref).epsilon(1e-14));

  CHECK_THROWS_AS(forward(a, Vec::Zero(20), oracle::v3(0, 0, 0)), ParameterError);
  CHECK_THROWS_AS(forward(a, w, oracle::v2(0, 0)), ParameterError);
}

TEST_CASE("tiny weights give the linearized network") {
  const MlpArch a{2, 1};
  Vec w(5);
  w[a.out_weight(0)] = 2.0;
  w[a.in_weight(0, 0)] = 1e-3;
  w[a.in_weight(1, 0)] = -2e-3;
  w[a.hidden_bias(0)] = 5e-4;
  w[a.out_bias()] = 0.1;
  const Vec x = oracle::v2(0.8, 0.3);
  const double lin = 2.0 * (1e-3 * 0.8 - 2e-3 * 0.3 + 5e-4);
  const double y = forward(a, w, x) - 0.1;
  CHECK(std::abs(y - lin) < 0.01 * std::abs(lin));
}

TEST_CASE("mse and residuals") {
  const MlpArch a{1, 1};
  LabeledData d;
  d.X = Mat::Constant(1, 1, 0.0);
  d.t = Vec::Constant(1, 2.0);
  const Vec w = Vec::Zero(4);
  CHECK(mse(a, w, d) == 4.0);
  d.t[0] = 0;
  CHECK(mse(a, w, d) == 0.0);

  std::mt19937_64 rng(3);
  const LabeledData r = random_task(rng, 30, 3);
  const MlpArch b{3, 2};
  const Vec v = gaussian_weights(rng, b.param_count(), 0.7);
  CHECK(mse(b, v, r) == doctest::Approx(residuals(b, v, r).array().square().mean()));
}

TEST_CASE("analytic Jacobian matches finite differences") {
  std::mt19937_64 rng(19);
  int count = 0;
  for (int t = 0; t < 120; ++t) {
    const MlpArch a{1 + t % 10, 1 + t % 5};
    const LabeledData d = random_task(rng, 12, a.n);
    const Vec w = gaussian_weights(rng, a.param_count(), 0.6);
    const Mat J = jacobian(a, w, d);
    const Mat fd = oracle::central_jacobian([&](const Vec& v) { return residuals(a, v, d); }, w);
    REQUIRE(oracle::rel_err(J, fd) < 1e-5);
    CHECK((J.col(a.out_bias()).array() == -1.0).all());
    const Mat jtj = J.transpose() * J;
    CHECK((jtj - jtj.transpose()).norm() <= 1e-14 * jtj.norm());
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(jtj).eigenvalues().minCoeff() > -1e-10 * jtj.norm());
    ++count;
  }
  CHECK(count >= 100);

  const MlpArch a{2, 3};
  const LabeledData d = random_task(rng, 20, 2);
  const Objective f = mse_objective(a, d);
  const Vec w = gaussian_weights(rng, a.param_count(), 0.5);
  CHECK(oracle::rel_err(f.gradient(w), oracle::central_grad([&](const Vec& v) { return f.value(v); }, w)) < 1e-6);
}

TEST_CASE("LM solves XOR from some start") {
  const LabeledData d = xor_data();
  const MlpArch a{2, 2};
  int solved = 0;
  for (int s = 0; s < 20; ++s) {
    const TrainResult r = lm_train(a, random_init(a, static_cast<std::uint64_t>(s)), d);
    if (r.mse < 1e-3) ++solved;
  }
  CHECK(solved >= 1);
}

TEST_CASE("LM fits a linear target with one hidden node") {
  LabeledData d;
  d.X.resize(21, 1);
  d.t.resize(21);
  for (int i = 0; i <= 20; ++i) {
    d.X(i, 0) = -1 + 0.1 * i;
    d.t[i] = 0.3 * d.X(i, 0) + 0.1;
  }
  const MlpArch a{1, 1};
  Vec w0(4);
  w0 << 1.0, 0.5, 0.0, 0.0;
  const TrainResult r = lm_train(a, w0, d);
  CHECK(r.mse < 1e-6);
}

TEST_CASE("early stopping keeps the best validation iterate") {
  const LabeledData all = two_moons(120, 0.25, 4);
  std::vector<Index> tr, va;
  for (Index i = 0; i < 120; ++i) (i % 4 == 0 ? va : tr).push_back(i);
  const LabeledData train = all.subset(tr), valid = all.subset(va);
  const MlpArch a{2, 8};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const TrainResult r = lm_train(a, nguyen_widrow_init(a, input_ranges(train.X), s), train, {}, &valid);
    const double best = *std::min_element(r.validation_mse.begin(), r.validation_mse.end());
    CHECK(mse(a, r.w, valid) == doctest::Approx(best).epsilon(1e-12));
    CHECK(mse(a, r.w, valid) <= best);
  }
}

TEST_CASE("TRUST-TECH neighbors") {
  const MlpArch a{2, 2};
  const LabeledData d = xor_data();

  SUBCASE("a poor XOR minimum has a better neighbor") {
    // Seed 19 lands LM on the MSE = 0.125 plateau.
    const TrainResult r = lm_train(a, random_init(a, 19), d);
    REQUIRE(r.mse > 0.1);
    const auto nb = tt_neighbors(a, r, d, 0);
    bool better = false;
    for (const Neighbor& n : nb) {
      better |= n.mse < r.mse;
      const TrainResult again = lm_train(a, n.w, d);
      CHECK(again.grad_norm < LmConfig{}.tol_grad * 10);
    }
    CHECK(better);
  }
  SUBCASE("a zero target fitted exactly has no neighbors") {
    const MlpArch one{1, 1};
    LabeledData q;
    q.X = (Mat(3, 1) << -1, 0, 1).finished();
    q.t = Vec::Zero(3);
    const TrainResult r = lm_train(one, Vec::Zero(4), q);
    REQUIRE(r.mse == 0.0);
    CHECK(tt_neighbors(one, r, q, 0.05).empty());
  }
}

TEST_CASE("tt_train is never worse than LM") {
  const MlpArch a{2, 2};
  const LabeledData d = xor_data();
  for (int s = 0; s < 20; ++s) {
    const Vec w0 = random_init(a, static_cast<std::uint64_t>(s));
    const TtTrainResult t = tt_train(a, w0, d);
    CHECK(t.mse <= lm_train(a, w0, d).mse);
    CHECK(t.lm_mse == lm_train(a, w0, d).mse);
    CHECK(t.mse == doctest::Approx(mse(a, t.w, d)).epsilon(1e-9).scale(1e-20));
  }
  // c -> 0 admits no tier-1 solution for expansion.
  const TtTrainResult none = tt_train(a, random_init(a, 19), d, 0, 1e-300);
  CHECK(none.expanded == 0);
  CHECK(none.tier2.empty());
}

TEST_CASE("Nguyen-Widrow initialization") {
  const MlpArch a{3, 5};
  const Mat unit = (Mat(3, 2) << -1, 1, -1, 1, -1, 1).finished();
  const Vec w = nguyen_widrow_init(a, unit, 8);
  const double beta = 0.7 * std::pow(5.0, 1.0 / 3.0);
  for (Index j = 0; j < 5; ++j) {
    double s = 0;
    for (Index i = 0; i < 3; ++i) s += w[a.in_weight(i, j)] * w[a.in_weight(i, j)];
    CHECK(std::sqrt(s) == doctest::Approx(beta));
    CHECK(std::abs(w[a.hidden_bias(j)]) <= beta + 1e-12);
  }
  CHECK(nguyen_widrow_init(a, unit, 8) == w);
  CHECK(nguyen_widrow_init(a, unit, 9) != w);

  const Vec r = random_init(a, 4);
  CHECK(r.size() == a.param_count());
  CHECK(r.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(random_init(a, 4) == r);
}

TEST_CASE("folds and cross-validation") {
  const auto folds = make_folds(23, 10, 1);
  std::vector<int> seen(23, 0);
  size_t lo = 100, hi = 0;
  for (const auto& f : folds) {
    lo = std::min(lo, f.size());
    hi = std::max(hi, f.size());
    for (Index i : f) ++seen[static_cast<size_t>(i)];
  }
  CHECK(hi - lo <= 1);
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK_THROWS_AS(make_folds(5, 10, 1), ParameterError);

  const MlpArch a{2, 4};
  double tr = 0, te = 0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    KFoldConfig cfg;
    cfg.seed = s;
    const KFoldResult r = kfold_eval(a, two_moons(100, 0.3, s), cfg);
    tr += r.train_error;
    te += r.test_error;
    CHECK(r.accuracy > 50);
    CHECK(r.accuracy <= 100);
    // The pooled accuracy is the size-weighted mean of the per-fold accuracies.
    double pooled = 0, mean_test = 0;
    for (size_t f = 0; f < r.folds.size(); ++f) {
      pooled += r.fold_accuracy[f] * static_cast<double>(r.folds[(f + 1) % r.folds.size()].size()) / 100.0;
      mean_test += r.fold_test_error[f] / static_cast<double>(r.folds.size());
    }
    CHECK(pooled == doctest::Approx(r.accuracy));
    CHECK(mean_test == doctest::Approx(r.test_error));
  }
  CHECK(tr <= te);
}

TEST_CASE("accuracy counts nearest-target misclassifications") {
  const MlpArch a{1, 1};
  LabeledData d;
  d.X = (Mat(4, 1) << 0, 0, 0, 0).finished();
  d.t = (Vec(4) << 0, 1, 1, 2).finished();
  d.class_names = {"a", "b", "c"};
  d.class_targets = {0, 1, 2};
  Vec w = Vec::Zero(4);
  w[a.out_bias()] = 0.9;  // predicts class b everywhere
  CHECK(accuracy(a, w, d) == 50.0);
  CHECK(classify(d, -3) == 0);
  CHECK(classify(d, 1.6) == 2);
}

TEST_CASE("CSV loading") {
  const LabeledData d = load_csv("f1,f2,label\n1,2,cat\n3,4,dog\n5,0,cat\n", true, true);
  CHECK(d.size() == 3);
  CHECK(d.class_names == std::vector<std::string>{"cat", "dog"});
  CHECK(d.t == (Vec(3) << 0, 1, 0).finished());
  CHECK(d.X.col(0).minCoeff() == -1);
  CHECK(d.X.col(0).maxCoeff() == 1);
  CHECK_THROWS_AS(load_csv("1,x,a\n"), IoError);
  CHECK_THROWS_AS(load_csv("1,2,a\n1,a\n"), IoError);
  CHECK_THROWS_AS(load_csv(""), IoError);
}

TEST_CASE("training is deterministic") {
  const MlpArch a{2, 3};
  const LabeledData d = two_moons(60, 0.2, 2);
  const Vec w0 = nguyen_widrow_init(a, input_ranges(d.X), 5);
  CHECK(tt_train(a, w0, d).w == tt_train(a, w0, d).w);
}

TEST_CASE("tt_train test accuracy on two moons is at least LM's on average") {
  const MlpArch a{2, 2};
  const LabeledData train = two_moons(200, 0.2, 100), test = two_moons(1000, 0.2, 200);
  double lm = 0, tt = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vec w0 = random_init(a, s);
    lm += accuracy(a, lm_train(a, w0, train).w, test);
    tt += accuracy(a, tt_train(a, w0, train).w, test);
  }
  CHECK(tt >= lm);
}
