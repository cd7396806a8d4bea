#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ttech/core.hpp"
#include "ttech/dynsys.hpp"
#include "ttech/solvers.hpp"

namespace ttech::mlp {

/// n inputs, k tanh hidden nodes, one linear output.
struct MlpArch {
  Index n = 1;
  Index k = 1;

  Index param_count() const { return (n + 2) * k + 1; }
  void validate() const;

  // Weight vector layout: output weights w0_1..w0_k, hidden weights w_ij
  // (input-major: w_11..w_1k, w_21, ...), output bias b0, hidden biases b_1..b_k.
  Index out_weight(Index j) const { return j; }
  Index in_weight(Index i, Index j) const { return k + i * k + j; }
  Index out_bias() const { return k + n * k; }
  Index hidden_bias(Index j) const { return k + n * k + 1 + j; }
};

struct LabeledData {
  Mat X;  // Q x n
  Vec t;  // Q
  /// Class names by index; class c has target class_targets[c]. Empty for regression.
  std::vector<std::string> class_names;
  std::vector<double> class_targets;

  Index size() const { return X.rows(); }
  void validate() const;
  LabeledData subset(const std::vector<Index>& rows) const;
};

double forward(const MlpArch& a, const Vec& w, const Vec& x);
Vec predict(const MlpArch& a, const Vec& w, const Mat& X);
/// e_i = t_i - y(w, x_i)
Vec residuals(const MlpArch& a, const Vec& w, const LabeledData& data);
double mse(const MlpArch& a, const Vec& w, const LabeledData& data);
/// d e_i / d w_j, Q x s.
Mat jacobian(const MlpArch& a, const Vec& w, const LabeledData& data);
/// MSE as an Objective of the weights; `data` must outlive it.
Objective mse_objective(const MlpArch& a, const LabeledData& data);

struct TrainConfig {
  LmConfig lm;
  int patience = 10;  // validation checks without improvement before stopping
};

struct TrainResult {
  Vec w;
  double mse = 0;
  Mat jtj;  // Gauss-Newton matrix at w
  double grad_norm = 0;
  double avg_step = 0;  // mean accepted LM step length
  int iterations = 0;
  LmStatus status = LmStatus::max_iterations;
  bool converged = false;  // gradient tolerance met
  std::vector<double> validation_mse;
  bool stopped_early = false;
};

/// Levenberg-Marquardt on the residuals. With validation data the run stops after
/// `patience` accepted steps without a new validation minimum and returns the
/// iterate with the lowest validation error.
TrainResult lm_train(const MlpArch& a, const Vec& w0, const LabeledData& data, const TrainConfig& cfg = {},
                     const LabeledData* validation = nullptr);

struct Neighbor {
  Vec w;
  double mse = 0;
  Index direction = 0;
};

/// Exit-point search along each eigenvector of J^T J (both orientations) from a
/// trained w, then LM from just past the exit. step <= 0 selects the average LM
/// step of the run that produced w (1e-2 when that run took a single step).
std::vector<Neighbor> tt_neighbors(const MlpArch& a, const TrainResult& at, const LabeledData& data, double step,
                                   const TrainConfig& cfg = {}, int max_evals = 500);

struct TtTrainResult {
  Vec w;
  double mse = 0;
  double lm_mse = 0;  // tier 0
  std::vector<Neighbor> tier1;
  std::vector<Neighbor> tier2;
  int expanded = 0;  // tier-1 solutions below the threshold
};

/// Two-tier training: tier-1 neighbors of the LM solution, tier-2 neighbors of
/// every tier-1 solution with MSE < c x tier-0 MSE; returns the best of all.
TtTrainResult tt_train(const MlpArch& a, const Vec& w0, const LabeledData& data, double step = 0, double c = 1.2,
                       const TrainConfig& cfg = {});

/// Hidden rows of norm 0.7 k^(1/n) for inputs scaled to [-1, 1], mapped back to
/// the given per-feature ranges (n x 2, lo and hi); output layer U(-0.5, 0.5).
Vec nguyen_widrow_init(const MlpArch& a, const Mat& input_ranges, std::uint64_t seed);
/// Every parameter U(-1, 1).
Vec random_init(const MlpArch& a, std::uint64_t seed);

/// Feature ranges of a data matrix, n x 2.
Mat input_ranges(const Mat& X);

/// Index of the nearest class target, or -1 for regression data.
int classify(const LabeledData& data, double y);
/// (1 - misclassified / Q) * 100
double accuracy(const MlpArch& a, const Vec& w, const LabeledData& data);

enum class Trainer { lm, trust_tech };

struct KFoldConfig {
  int folds = 10;
  Trainer trainer = Trainer::lm;
  TrainConfig train;
  double tt_step = 0;
  double tt_c = 1.2;
  std::uint64_t seed = 0;
};

struct KFoldResult {
  double train_error = 0;  // mean MSE
  double test_error = 0;
  double accuracy = 0;     // pooled over test folds
  std::vector<std::vector<Index>> folds;
  // Per evaluation round i (validation fold i, test fold i + 1).
  std::vector<double> fold_train_error, fold_test_error, fold_accuracy;
};

/// Shuffled partition into folds whose sizes differ by at most one.
std::vector<std::vector<Index>> make_folds(Index q, int folds, std::uint64_t seed);

/// Fold i validates (early stopping), fold i+1 tests, the rest train.
KFoldResult kfold_eval(const MlpArch& a, const LabeledData& data, const KFoldConfig& cfg);

// ---- data -----------------------------------------------------------------------

LabeledData xor_data();
/// Two interleaved half-moons with Gaussian noise; classes 0 and 1.
LabeledData two_moons(int q, double noise, std::uint64_t seed);
/// Numeric feature columns and a final label column. Labels become equally spaced
/// targets 0, 1, ... in order of first appearance.
LabeledData load_csv(const std::string& text, bool normalize = false, bool header = false);
/// Min-max scaling of every feature to [-1, 1].
void normalize_features(LabeledData& data);

}  // namespace ttech::mlp
