#include "ttech/mlp.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "ttech/parallel.hpp"
#include "ttech/tiersearch.hpp"

namespace ttech::mlp {

void MlpArch::validate() const {
  if (n < 1 || k < 1) throw ParameterError("MlpArch: need n >= 1 and k >= 1");
}

void LabeledData::validate() const {
  if (X.rows() < 1) throw ParameterError("LabeledData: no samples");
  if (t.size() != X.rows()) throw ParameterError("LabeledData: one target per sample");
  if (!X.allFinite() || !t.allFinite()) throw ParameterError("LabeledData: non-finite values");
  if (class_names.size() != class_targets.size()) throw ParameterError("LabeledData: class map size mismatch");
}

LabeledData LabeledData::subset(const std::vector<Index>& rows) const {
  LabeledData s;
  s.X.resize(static_cast<Index>(rows.size()), X.cols());
  s.t.resize(static_cast<Index>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    s.X.row(static_cast<Index>(r)) = X.row(rows[r]);
    s.t[static_cast<Index>(r)] = t[rows[r]];
  }
  s.class_names = class_names;
  s.class_targets = class_targets;
  return s;
}

namespace {

void check(const MlpArch& a, const Vec& w, Index cols) {
  a.validate();
  if (w.size() != a.param_count())
    throw ParameterError(fmt::format("weight vector has {} entries, architecture needs {}", w.size(), a.param_count()));
  if (cols != a.n) throw ParameterError(fmt::format("input has {} features, architecture expects {}", cols, a.n));
}

// Hidden activations for one sample.
void hidden(const MlpArch& a, const Vec& w, const Mat& X, Index r, double* h) {
  for (Index j = 0; j < a.k; ++j) {
    double s = w[a.hidden_bias(j)];
    for (Index i = 0; i < a.n; ++i) s += w[a.in_weight(i, j)] * X(r, i);
    h[j] = std::tanh(s);
  }
}

double output(const MlpArch& a, const Vec& w, const double* h) {
  double y = w[a.out_bias()];
  for (Index j = 0; j < a.k; ++j) y += w[a.out_weight(j)] * h[j];
  return y;
}

}  // namespace

double forward(const MlpArch& a, const Vec& w, const Vec& x) {
  check(a, w, x.size());
  const Mat X = x.transpose();
  std::vector<double> h(static_cast<size_t>(a.k));
  hidden(a, w, X, 0, h.data());
  return output(a, w, h.data());
}

Vec predict(const MlpArch& a, const Vec& w, const Mat& X) {
  check(a, w, X.cols());
  Vec y(X.rows());
  std::vector<double> h(static_cast<size_t>(a.k));
  for (Index r = 0; r < X.rows(); ++r) {
    hidden(a, w, X, r, h.data());
    y[r] = output(a, w, h.data());
  }
  return y;
}

Vec residuals(const MlpArch& a, const Vec& w, const LabeledData& data) { return data.t - predict(a, w, data.X); }

double mse(const MlpArch& a, const Vec& w, const LabeledData& data) {
  return residuals(a, w, data).squaredNorm() / static_cast<double>(data.size());
}

Mat jacobian(const MlpArch& a, const Vec& w, const LabeledData& data) {
  check(a, w, data.X.cols());
  Mat J(data.size(), a.param_count());
  std::vector<double> h(static_cast<size_t>(a.k));
  for (Index r = 0; r < data.size(); ++r) {
    hidden(a, w, data.X, r, h.data());
    J(r, a.out_bias()) = -1;
    for (Index j = 0; j < a.k; ++j) {
      const double hj = h[static_cast<size_t>(j)];
      J(r, a.out_weight(j)) = -hj;
      const double back = -w[a.out_weight(j)] * (1 - hj * hj);
      J(r, a.hidden_bias(j)) = back;
      for (Index i = 0; i < a.n; ++i) J(r, a.in_weight(i, j)) = back * data.X(r, i);
    }
  }
  return J;
}

Objective mse_objective(const MlpArch& a, const LabeledData& data) {
  const double q = static_cast<double>(data.size());
  return Objective(
      "mlp_mse", a.param_count(), [a, &data](const Vec& w) { return mse(a, w, data); },
      [a, &data, q](const Vec& w) { return Vec(2.0 / q * jacobian(a, w, data).transpose() * residuals(a, w, data)); });
}

TrainResult lm_train(const MlpArch& a, const Vec& w0, const LabeledData& data, const TrainConfig& cfg,
                     const LabeledData* validation) {
  data.validate();
  check(a, w0, data.X.cols());
  if (cfg.patience < 1) throw ParameterError("TrainConfig: patience must be positive");
  auto res_fn = [&](const Vec& w) { return residuals(a, w, data); };
  auto jac_fn = [&](const Vec& w) { return jacobian(a, w, data); };

  TrainResult out;
  Vec best_w = w0;
  double best_val = 0;
  int since = 0;
  LmCallback cb;
  if (validation) {
    best_val = mse(a, w0, *validation);
    out.validation_mse.push_back(best_val);
    cb = [&](const Vec& w, int) {
      const double v = mse(a, w, *validation);
      out.validation_mse.push_back(v);
      if (v < best_val) {
        best_val = v;
        best_w = w;
        since = 0;
        return false;
      }
      return ++since >= cfg.patience;
    };
  }
  const LmResult r = levenberg_marquardt(res_fn, jac_fn, w0, cfg.lm, cb);
  out.iterations = r.iterations;
  out.status = r.status;
  if (!r.step_lengths.empty())
    out.avg_step = std::accumulate(r.step_lengths.begin(), r.step_lengths.end(), 0.0) /
                   static_cast<double>(r.step_lengths.size());
  if (validation) {
    // Any exit keeps the iterate with the lowest validation error.
    if (mse(a, r.w, *validation) < best_val) best_w = r.w;
    out.stopped_early = r.status == LmStatus::stopped_by_callback;
    out.w = best_w;
    const Mat J = jacobian(a, out.w, data);
    const Vec e = residuals(a, out.w, data);
    out.jtj = J.transpose() * J;
    out.grad_norm = (J.transpose() * e).norm();
    out.mse = e.squaredNorm() / static_cast<double>(data.size());
  } else {
    out.w = r.w;
    out.jtj = r.jtj;
    out.grad_norm = r.gradient.norm();
    out.mse = 2 * r.cost / static_cast<double>(data.size());
  }
  out.converged = out.grad_norm < cfg.lm.tol_grad;
  return out;
}

std::vector<Neighbor> tt_neighbors(const MlpArch& a, const TrainResult& at, const LabeledData& data, double step,
                                   const TrainConfig& cfg, int max_evals) {
  if (!(step > 0)) step = at.avg_step > 0 && at.iterations > 1 ? at.avg_step : 1e-2;
  const Objective obj = mse_objective(a, data);
  std::mt19937_64 unused(0);
  const std::vector<Vec> dirs = tier::generate_directions(obj, at.w, tier::DirectionStrategy::hessian_eigenvectors, 0,
                                                          unused, [&](const Vec&) { return at.jtj; });
  const LocalSolver solver = [&](const Vec& w) {
    const TrainResult r = lm_train(a, w, data, cfg);
    return LocalResult{r.w, r.mse, r.grad_norm, r.iterations, r.converged};
  };
  tier::SolutionSet seen;
  tier::Solution origin;
  origin.point = at.w;
  origin.value = at.mse;
  seen.insert(origin);
  origin = seen.solutions().front();

  std::vector<Neighbor> out;
  for (size_t d = 0; d < dirs.size(); ++d) {
    const auto hit = tier::exit_along(obj, at.w, dirs[d], step, max_evals, false);
    if (!hit) continue;
    auto s = tier::escape_refine(obj, hit->exit, hit->ray, 2 * step, solver, origin, seen);
    if (!s) continue;
    const Vec w = s->point;
    const double v = s->value;
    if (seen.insert(std::move(*s))) out.push_back({w, v, static_cast<Index>(d)});
  }
  return out;
}

TtTrainResult tt_train(const MlpArch& a, const Vec& w0, const LabeledData& data, double step, double c,
                       const TrainConfig& cfg) {
  if (!(c > 0)) throw ParameterError("tt_train: c must be positive");
  const TrainResult t0 = lm_train(a, w0, data, cfg);
  TtTrainResult out;
  out.w = t0.w;
  out.mse = out.lm_mse = t0.mse;
  const double thresh = c * t0.mse;
  out.tier1 = tt_neighbors(a, t0, data, step, cfg);
  for (const Neighbor& n : out.tier1) {
    if (n.mse < out.mse) {
      out.mse = n.mse;
      out.w = n.w;
    }
    if (!(n.mse < thresh)) continue;
    ++out.expanded;
    const TrainResult tn = lm_train(a, n.w, data, cfg);
    for (const Neighbor& m : tt_neighbors(a, tn, data, step, cfg)) {
      out.tier2.push_back(m);
      if (m.mse < out.mse) {
        out.mse = m.mse;
        out.w = m.w;
      }
    }
  }
  return out;
}

Vec nguyen_widrow_init(const MlpArch& a, const Mat& ranges, std::uint64_t seed) {
  a.validate();
  if (ranges.rows() != a.n || ranges.cols() != 2 || !ranges.allFinite())
    throw ParameterError("nguyen_widrow_init: ranges must be finite, n x 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double beta = 0.7 * std::pow(static_cast<double>(a.k), 1.0 / static_cast<double>(a.n));
  Vec w(a.param_count());
  for (Index j = 0; j < a.k; ++j) {
    Vec row(a.n);
    for (Index i = 0; i < a.n; ++i) row[i] = u(rng);
    if (!(row.norm() > 0)) row[0] = 1;
    row *= beta / row.norm();
    const double spread = a.k == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(a.k - 1);
    double b = beta * spread * (row[0] < 0 ? -1.0 : 1.0);
    // Map from [-1, 1] inputs to the given ranges.
    for (Index i = 0; i < a.n; ++i) {
      const double lo = ranges(i, 0), hi = ranges(i, 1);
      const double scale = hi > lo ? 2.0 / (hi - lo) : 1.0;
      const double shift = hi > lo ? -(hi + lo) / (hi - lo) : 0.0;
      w[a.in_weight(i, j)] = row[i] * scale;
      b += row[i] * shift;
    }
    w[a.hidden_bias(j)] = b;
  }
  for (Index j = 0; j < a.k; ++j) w[a.out_weight(j)] = 0.5 * u(rng);
  w[a.out_bias()] = 0.5 * u(rng);
  return w;
}

Vec random_init(const MlpArch& a, std::uint64_t seed) {
  a.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec w(a.param_count());
  for (Index i = 0; i < w.size(); ++i) w[i] = u(rng);
  return w;
}

Mat input_ranges(const Mat& X) {
  Mat r(X.cols(), 2);
  r.col(0) = X.colwise().minCoeff().transpose();
  r.col(1) = X.colwise().maxCoeff().transpose();
  return r;
}

int classify(const LabeledData& data, double y) {
  int best = -1;
  for (size_t c = 0; c < data.class_targets.size(); ++c)
    if (best < 0 || std::abs(y - data.class_targets[c]) < std::abs(y - data.class_targets[static_cast<size_t>(best)]))
      best = static_cast<int>(c);
  return best;
}

double accuracy(const MlpArch& a, const Vec& w, const LabeledData& data) {
  if (data.class_targets.empty()) throw ParameterError("accuracy: data has no classes");
  const Vec y = predict(a, w, data.X);
  Index wrong = 0;
  for (Index r = 0; r < data.size(); ++r)
    if (classify(data, y[r]) != classify(data, data.t[r])) ++wrong;
  return (1.0 - static_cast<double>(wrong) / static_cast<double>(data.size())) * 100.0;
}

std::vector<std::vector<Index>> make_folds(Index q, int folds, std::uint64_t seed) {
  if (folds < 2) throw ParameterError("make_folds: need at least two folds");
  if (q < folds) throw ParameterError(fmt::format("make_folds: {} samples cannot fill {} folds", q, folds));
  std::vector<Index> idx(static_cast<size_t>(q));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<Index>> out(static_cast<size_t>(folds));
  for (size_t r = 0; r < idx.size(); ++r) out[r % static_cast<size_t>(folds)].push_back(idx[r]);
  return out;
}

KFoldResult kfold_eval(const MlpArch& a, const LabeledData& data, const KFoldConfig& cfg) {
  data.validate();
  a.validate();
  if (cfg.folds < 3) throw ParameterError("kfold_eval: need at least three folds (train, validation, test)");
  KFoldResult res;
  res.folds = make_folds(data.size(), cfg.folds, cfg.seed);
  const size_t f = res.folds.size();
  std::vector<double> train_err(f), test_err(f);
  std::vector<Index> wrong(f, 0);
  parallel::for_each(static_cast<Index>(f), [&](Index fi) {
    const size_t v = static_cast<size_t>(fi), te = (v + 1) % f;
    std::vector<Index> train_rows;
    for (size_t g = 0; g < f; ++g)
      if (g != v && g != te) train_rows.insert(train_rows.end(), res.folds[g].begin(), res.folds[g].end());
    const LabeledData train = data.subset(train_rows), valid = data.subset(res.folds[v]),
                      test = data.subset(res.folds[te]);
    const Vec w0 = nguyen_widrow_init(a, input_ranges(train.X), cfg.seed * 1000 + v);
    Vec w;
    if (cfg.trainer == Trainer::lm) {
      w = lm_train(a, w0, train, cfg.train, &valid).w;
    } else {
      const Vec start = lm_train(a, w0, train, cfg.train, &valid).w;
      w = tt_train(a, start, train, cfg.tt_step, cfg.tt_c, cfg.train).w;
    }
    train_err[v] = mse(a, w, train);
    test_err[v] = mse(a, w, test);
    if (!data.class_targets.empty()) {
      const Vec y = predict(a, w, test.X);
      for (Index r = 0; r < test.size(); ++r)
        if (classify(test, y[r]) != classify(test, test.t[r])) ++wrong[v];
    }
  });
  Index total_wrong = 0;
  res.fold_train_error = train_err;
  res.fold_test_error = test_err;
  for (size_t v = 0; v < f; ++v) {
    const double q = static_cast<double>(res.folds[(v + 1) % f].size());
    res.fold_accuracy.push_back(data.class_targets.empty() ? 0.0 : (1.0 - static_cast<double>(wrong[v]) / q) * 100.0);
    res.train_error += train_err[v] / static_cast<double>(f);
    res.test_error += test_err[v] / static_cast<double>(f);
    total_wrong += wrong[v];
  }
  res.accuracy = (1.0 - static_cast<double>(total_wrong) / static_cast<double>(data.size())) * 100.0;
  return res;
}

// ---- data -----------------------------------------------------------------------

LabeledData xor_data() {
  LabeledData d;
  d.X = (Mat(4, 2) << 0, 0, 0, 1, 1, 0, 1, 1).finished();
  d.t = (Vec(4) << 0, 1, 1, 0).finished();
  d.class_names = {"0", "1"};
  d.class_targets = {0, 1};
  return d;
}

LabeledData two_moons(int q, double noise, std::uint64_t seed) {
  if (q < 2) throw ParameterError("two_moons: need at least two samples");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 3.14159265358979323846);
  std::normal_distribution<double> g(0.0, noise);
  LabeledData d;
  d.X.resize(q, 2);
  d.t.resize(q);
  for (int r = 0; r < q; ++r) {
    const double a = u(rng);
    const bool upper = r % 2 == 0;
    d.X(r, 0) = (upper ? std::cos(a) : 1 - std::cos(a)) + g(rng);
    d.X(r, 1) = (upper ? std::sin(a) : 0.5 - std::sin(a)) + g(rng);
    d.t[r] = upper ? 0 : 1;
  }
  d.class_names = {"0", "1"};
  d.class_targets = {0, 1};
  return d;
}

LabeledData load_csv(const std::string& text, bool normalize, bool header) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
  bool skip = header;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (skip) {
      skip = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) throw IoError(fmt::format("CSV row {} needs features and a label", rows.size() + 1));
    std::vector<double> f;
    for (size_t c = 0; c + 1 < cells.size(); ++c) {
      try {
        size_t used = 0;
        f.push_back(std::stod(cells[c], &used));
      } catch (const std::exception&) {
        throw IoError(fmt::format("CSV row {}: feature '{}' is not a number", rows.size() + 1, cells[c]));
      }
    }
    if (!rows.empty() && f.size() != rows.front().size())
      throw IoError(fmt::format("CSV row {} has {} features, expected {}", rows.size() + 1, f.size(), rows.front().size()));
    rows.push_back(std::move(f));
    labels.push_back(cells.back());
  }
  if (rows.empty()) throw IoError("CSV has no data rows");
  LabeledData d;
  d.X.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  d.t.resize(static_cast<Index>(rows.size()));
  std::map<std::string, int> ids;
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) d.X(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    auto [it, added] = ids.emplace(labels[r], static_cast<int>(ids.size()));
    if (added) {
      d.class_names.push_back(labels[r]);
      d.class_targets.push_back(static_cast<double>(it->second));
    }
    d.t[static_cast<Index>(r)] = it->second;
  }
  if (normalize) normalize_features(d);
  d.validate();
  return d;
}

void normalize_features(LabeledData& data) {
  for (Index c = 0; c < data.X.cols(); ++c) {
    const double lo = data.X.col(c).minCoeff(), hi = data.X.col(c).maxCoeff();
    if (hi > lo) data.X.col(c) = ((data.X.col(c).array() - lo) * (2.0 / (hi - lo)) - 1.0).matrix();
    else data.X.col(c).setZero();
  }
}

}  // namespace ttech::mlp
