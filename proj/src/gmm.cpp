#include "ttech/gmm.hpp"

#include <fmt/core.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ttech/parallel.hpp"

namespace ttech::gmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kEmpty = 1e-12;

struct Component {
  Vec mu;
  Mat linv;  // inverse Cholesky factor of the covariance
  double log_norm = 0;
  double log_weight = 0;
};

std::vector<Component> prepare(const GmmParams& p) {
  std::vector<Component> out(static_cast<size_t>(p.k()));
  const Index d = p.d();
  for (Index i = 0; i < p.k(); ++i) {
    Eigen::LLT<Mat> llt(p.covs[static_cast<size_t>(i)]);
    if (llt.info() != Eigen::Success) throw ParameterError(fmt::format("covariance {} is not positive definite", i));
    const Mat L = llt.matrixL();
    Component& c = out[static_cast<size_t>(i)];
    c.mu = p.means.row(i).transpose();
    c.linv = L.triangularView<Eigen::Lower>().solve(Mat::Identity(d, d));
    c.log_norm = -0.5 * d * kLog2Pi - L.diagonal().array().log().sum();
    c.log_weight = std::log(p.weights[i]);
  }
  return out;
}

// Allocation-free: `diff` has room for d entries.
double log_density(const Component& c, const Dataset& x, Index j, double* diff) {
  const Index d = c.mu.size();
  for (Index m = 0; m < d; ++m) diff[m] = x(j, m) - c.mu[m];
  double quad = 0;
  for (Index r = 0; r < d; ++r) {
    double y = 0;
    for (Index q = 0; q <= r; ++q) y += c.linv(r, q) * diff[q];
    quad += y * y;
  }
  return c.log_norm - 0.5 * quad;
}

double log_sum_exp(const double* v, Index k) {
  double m = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < k; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (Index i = 0; i < k; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

void check_data(const GmmParams& p, const Dataset& x) {
  if (x.cols() != p.d()) throw ParameterError(fmt::format("data has {} columns, model has {}", x.cols(), p.d()));
  if (!x.allFinite()) throw ParameterError("data contains non-finite entries");
}

// Joint log terms log(alpha_i) + log N_i for rows [lo, hi).
void joint_rows(const std::vector<Component>& comps, const Dataset& x, Index lo, Index hi, Mat& out) {
  const Index k = static_cast<Index>(comps.size());
  std::vector<double> diff(static_cast<size_t>(x.cols()));
  for (Index j = lo; j < hi; ++j)
    for (Index i = 0; i < k; ++i) {
      const Component& c = comps[static_cast<size_t>(i)];
      out(j, i) = c.log_weight + log_density(c, x, j, diff.data());
    }
}

}  // namespace

const char* to_string(CovKind k) {
  switch (k) {
    case CovKind::spherical:
      return "spherical";
    case CovKind::diagonal:
      return "diagonal";
    case CovKind::full:
      return "full";
  }
  return "?";
}

CovKind cov_kind_from_string(const std::string& s) {
  if (s == "spherical") return CovKind::spherical;
  if (s == "diagonal") return CovKind::diagonal;
  if (s == "full") return CovKind::full;
  throw ParameterError(fmt::format("unknown covariance kind '{}'", s));
}

void GmmParams::validate() const {
  const Index kk = k(), dd = d();
  if (kk < 1 || dd < 1) throw ParameterError("GmmParams: need at least one component and one dimension");
  if (means.rows() != kk) throw ParameterError("GmmParams: means must have one row per component");
  if (static_cast<Index>(covs.size()) != kk) throw ParameterError("GmmParams: one covariance per component");
  if (!weights.allFinite() || !means.allFinite()) throw ParameterError("GmmParams: non-finite parameters");
  if (weights.minCoeff() < 0 || weights.maxCoeff() > 1) throw ParameterError("GmmParams: weights must lie in [0, 1]");
  if (std::abs(weights.sum() - 1) > 1e-9) throw ParameterError("GmmParams: weights must sum to 1");
  for (Index i = 0; i < kk; ++i) {
    const Mat& c = covs[static_cast<size_t>(i)];
    if (c.rows() != dd || c.cols() != dd || !c.allFinite())
      throw ParameterError(fmt::format("GmmParams: covariance {} has the wrong shape", i));
    const double scale = c.cwiseAbs().maxCoeff();
    if (!(scale > 0)) throw ParameterError(fmt::format("GmmParams: covariance {} is zero", i));
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw ParameterError(fmt::format("GmmParams: covariance {} is not symmetric", i));
    if (kind != CovKind::full) {
      Mat off = c;
      off.diagonal().setZero();
      if (off.cwiseAbs().maxCoeff() > 0) throw ParameterError(fmt::format("GmmParams: covariance {} is not diagonal", i));
      if (kind == CovKind::spherical && (c.diagonal().array() - c(0, 0)).abs().maxCoeff() > 1e-12 * scale)
        throw ParameterError(fmt::format("GmmParams: covariance {} is not spherical", i));
    }
    Eigen::LLT<Mat> llt(c);
    if (llt.info() != Eigen::Success)
      throw ParameterError(fmt::format("GmmParams: covariance {} is not positive definite", i));
  }
}

GmmParams GmmParams::canonical() const {
  std::vector<Index> order(static_cast<size_t>(k()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index j = 0; j < d(); ++j)
      if (means(a, j) != means(b, j)) return means(a, j) < means(b, j);
    return false;
  });
  GmmParams out = *this;
  for (size_t r = 0; r < order.size(); ++r) {
    out.weights[static_cast<Index>(r)] = weights[order[r]];
    out.means.row(static_cast<Index>(r)) = means.row(order[r]);
    out.covs[r] = covs[static_cast<size_t>(order[r])];
  }
  return out;
}

GmmParams make_params(const Vec& weights, const Mat& means, const std::vector<Mat>& covs, CovKind kind) {
  GmmParams p{weights, means, covs, kind};
  p.validate();
  return p;
}

// ---- likelihood -----------------------------------------------------------------

Mat log_densities(const GmmParams& p, const Dataset& x) {
  p.validate();
  check_data(p, x);
  const auto comps = prepare(p);
  Mat out(x.rows(), p.k());
  parallel::for_blocks(x.rows(), [&](Index lo, Index hi) {
    std::vector<double> diff(static_cast<size_t>(x.cols()));
    for (Index j = lo; j < hi; ++j)
      for (Index i = 0; i < p.k(); ++i) out(j, i) = log_density(comps[static_cast<size_t>(i)], x, j, diff.data());
  });
  return out;
}

EStep e_step(const GmmParams& p, const Dataset& x) {
  p.validate();
  check_data(p, x);
  const auto comps = prepare(p);
  const Index n = x.rows(), k = p.k();
  EStep e;
  e.resp.resize(n, k);
  Vec logp(n);
  parallel::for_blocks(n, [&](Index lo, Index hi) {
    joint_rows(comps, x, lo, hi, e.resp);
    for (Index j = lo; j < hi; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < k; ++i) m = std::max(m, e.resp(j, i));
      double sum = 0;
      for (Index i = 0; i < k; ++i) {
        e.resp(j, i) = std::exp(e.resp(j, i) - m);
        sum += e.resp(j, i);
      }
      logp[j] = m + std::log(sum);
      for (Index i = 0; i < k; ++i) e.resp(j, i) /= sum;
    }
  });
  e.loglik = 0;
  for (Index j = 0; j < n; ++j) e.loglik += logp[j];
  return e;
}

double log_likelihood(const GmmParams& p, const Dataset& x) { return e_step(p, x).loglik; }

EStep e_step_serial(const GmmParams& p, const Dataset& x) {
  p.validate();
  check_data(p, x);
  const Index n = x.rows(), k = p.k(), d = p.d();
  std::vector<Mat> prec(static_cast<size_t>(k));
  std::vector<double> lognorm(static_cast<size_t>(k));
  for (Index i = 0; i < k; ++i) {
    const Mat& c = p.covs[static_cast<size_t>(i)];
    prec[static_cast<size_t>(i)] = c.inverse();
    lognorm[static_cast<size_t>(i)] = -0.5 * (d * kLog2Pi + std::log(c.determinant()));
  }
  EStep e;
  e.resp.resize(n, k);
  e.loglik = 0;
  for (Index j = 0; j < n; ++j) {
    double m = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < k; ++i) {
      const Vec dx = x.row(j).transpose() - p.means.row(i).transpose();
      e.resp(j, i) = std::log(p.weights[i]) + lognorm[static_cast<size_t>(i)] - 0.5 * dx.dot(prec[static_cast<size_t>(i)] * dx);
      m = std::max(m, e.resp(j, i));
    }
    double s = 0;
    for (Index i = 0; i < k; ++i) s += std::exp(e.resp(j, i) - m);
    const double lse = m + std::log(s);
    for (Index i = 0; i < k; ++i) e.resp(j, i) = std::exp(e.resp(j, i) - lse);
    e.loglik += lse;
  }
  return e;
}

double log_likelihood_serial(const GmmParams& p, const Dataset& x) { return e_step_serial(p, x).loglik; }

Vec variance_floor(const Dataset& x, double scale) {
  if (x.rows() < 1) throw ParameterError("variance_floor: empty data");
  const Vec mean = x.colwise().mean().transpose();
  Vec var = (x.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  for (Index j = 0; j < var.size(); ++j)
    if (!(var[j] > 0)) var[j] = 1.0;
  return scale * var;
}

namespace {

void check_mstep_input(const Mat& resp, const Dataset& x, const Vec& floor) {
  if (resp.rows() != x.rows() || resp.cols() < 1) throw ParameterError("m_step: responsibilities do not match the data");
  if (floor.size() != x.cols()) throw ParameterError("m_step: floor must have one entry per dimension");
}

// Covariance from the scatter matrix S (already divided by the component mass).
Mat shape_covariance(const Mat& S, CovKind kind, const Vec& floor, int* hits) {
  const Index d = S.rows();
  Mat c = Mat::Zero(d, d);
  switch (kind) {
    case CovKind::spherical: {
      double v = S.trace() / static_cast<double>(d);
      const double f = floor.mean();
      if (v < f) {
        v = f;
        if (hits) ++*hits;
      }
      c.diagonal().setConstant(v);
      break;
    }
    case CovKind::diagonal:
      for (Index j = 0; j < d; ++j) {
        double v = S(j, j);
        if (v < floor[j]) {
          v = floor[j];
          if (hits) ++*hits;
        }
        c(j, j) = v;
      }
      break;
    case CovKind::full: {
      c = 0.5 * (S + S.transpose());
      const double f = floor.minCoeff();
      Eigen::SelfAdjointEigenSolver<Mat> eig(c);
      if (eig.eigenvalues().minCoeff() < f) {
        Vec ev = eig.eigenvalues();
        for (Index j = 0; j < d; ++j)
          if (ev[j] < f) {
            ev[j] = f;
            if (hits) ++*hits;
          }
        c = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
        c = 0.5 * (c + c.transpose());
      }
      break;
    }
  }
  return c;
}

GmmParams assemble(const Vec& mass, const Mat& means, const std::vector<Mat>& scatter, Index n, CovKind kind,
                   const Vec& floor, int* hits) {
  const Index k = mass.size();
  GmmParams p;
  p.kind = kind;
  p.weights = mass / static_cast<double>(n);
  p.weights /= p.weights.sum();
  p.means = means;
  p.covs.resize(static_cast<size_t>(k));
  for (Index i = 0; i < k; ++i)
    p.covs[static_cast<size_t>(i)] = shape_covariance(scatter[static_cast<size_t>(i)], kind, floor, hits);
  return p;
}

void check_empty(const Vec& mass) {
  for (Index i = 0; i < mass.size(); ++i)
    if (!(mass[i] >= kEmpty))
      throw EmptyComponentError(fmt::format("component {} has total responsibility {:.3g}", i, mass[i]),
                                static_cast<int>(i), -1);
}

GmmParams m_step_impl(const Mat& resp, const Dataset& x, CovKind kind, const Vec& floor, int* hits) {
  check_mstep_input(resp, x, floor);
  const Index n = x.rows(), d = x.cols(), k = resp.cols();
  // Pass 1: mass and weighted sums, one row per component: [mass, sum_x].
  const Mat first = parallel::block_accumulate(n, k, 1 + d, [&](Index j, Mat& acc) {
    for (Index i = 0; i < k; ++i) {
      const double r = resp(j, i);
      acc(i, 0) += r;
      for (Index m = 0; m < d; ++m) acc(i, 1 + m) += r * x(j, m);
    }
  });
  const Vec mass = first.col(0);
  check_empty(mass);
  Mat means(k, d);
  for (Index i = 0; i < k; ++i) means.row(i) = first.row(i).tail(d) / mass[i];
  // Pass 2: scatter about the new means, d*d entries per component.
  const Mat second = parallel::block_accumulate(n, k, d * d, [&](Index j, Mat& acc) {
    for (Index i = 0; i < k; ++i) {
      const double r = resp(j, i);
      for (Index b = 0; b < d; ++b) {
        const double db = r * (x(j, b) - means(i, b));
        for (Index a = 0; a < d; ++a) acc(i, b * d + a) += db * (x(j, a) - means(i, a));
      }
    }
  });
  std::vector<Mat> scatter(static_cast<size_t>(k));
  for (Index i = 0; i < k; ++i)
    scatter[static_cast<size_t>(i)] = Eigen::Map<const Mat>(second.row(i).eval().data(), d, d) / mass[i];
  return assemble(mass, means, scatter, n, kind, floor, hits);
}

}  // namespace

GmmParams m_step(const Mat& resp, const Dataset& x, CovKind kind, const Vec& floor) {
  return m_step_impl(resp, x, kind, floor, nullptr);
}

GmmParams m_step_serial(const Mat& resp, const Dataset& x, CovKind kind, const Vec& floor) {
  check_mstep_input(resp, x, floor);
  const Index n = x.rows(), d = x.cols(), k = resp.cols();
  Vec mass = Vec::Zero(k);
  Mat means = Mat::Zero(k, d);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < k; ++i) {
      mass[i] += resp(j, i);
      means.row(i) += resp(j, i) * x.row(j);
    }
  check_empty(mass);
  for (Index i = 0; i < k; ++i) means.row(i) /= mass[i];
  std::vector<Mat> scatter(static_cast<size_t>(k), Mat::Zero(d, d));
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < k; ++i) {
      const Vec dx = x.row(j).transpose() - means.row(i).transpose();
      scatter[static_cast<size_t>(i)] += resp(j, i) * dx * dx.transpose();
    }
  for (Index i = 0; i < k; ++i) scatter[static_cast<size_t>(i)] /= mass[i];
  return assemble(mass, means, scatter, n, kind, floor, nullptr);
}

// ---- EM -------------------------------------------------------------------------

void EmConfig::validate() const {
  if (!(tol > 0) || max_iter < 1 || !(floor_scale >= 0))
    throw ParameterError("EmConfig: tol and max_iter must be positive, floor_scale nonnegative");
}

namespace {

Mat diag_cov(const Vec& var, CovKind kind) {
  Mat c = Mat::Zero(var.size(), var.size());
  if (kind == CovKind::spherical)
    c.diagonal().setConstant(var.mean());
  else
    c.diagonal() = var;
  return c;
}

void reseed(GmmParams& w, Index comp, const Dataset& x, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> pick(0, x.rows() - 1);
  w.means.row(comp) = x.row(pick(rng));
  w.covs[static_cast<size_t>(comp)] = diag_cov(variance_floor(x, 1.0), w.kind);
  w.weights[comp] = 1.0 / static_cast<double>(w.k());
  w.weights /= w.weights.sum();
}

}  // namespace

EmResult em_fit_in(const GmmParams& start, const Dataset& x, const EmConfig& cfg, const EmSpace& space) {
  cfg.validate();
  start.validate();
  check_data(start, x);
  const Vec floor = space.work_floor(variance_floor(x, cfg.floor_scale));
  std::mt19937_64 rng(cfg.seed);
  EmResult res;
  GmmParams w = space.to_work(start);
  EStep e = e_step(w, x);
  res.loglik.push_back(e.loglik);
  for (int it = 1; it <= cfg.max_iter; ++it) {
    GmmParams next;
    try {
      next = m_step_impl(e.resp, x, w.kind, floor, &res.floor_hits);
    } catch (const EmptyComponentError& err) {
      if (!cfg.reseed_empty)
        throw EmptyComponentError(fmt::format("{} at iteration {}", err.what(), it), err.component, it);
      reseed(w, err.component, x, rng);
      ++res.reseeds;
      e = e_step(w, x);
      continue;
    }
    w = std::move(next);
    const double prev = res.loglik.back();
    e = e_step(w, x);
    res.loglik.push_back(e.loglik);
    res.iterations = it;
    if (std::abs(e.loglik - prev) < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.params = space.from_work(w);
  return res;
}

EmResult em_fit(const GmmParams& start, const Dataset& x, const EmConfig& cfg) {
  const EmSpace identity{[](const GmmParams& p) { return p; }, [](const GmmParams& p) { return p; },
                         [](const Vec& f) { return f; }};
  return em_fit_in(start, x, cfg, identity);
}

// ---- gradient ----------------------------------------------------------------------

namespace {

Index scale_count(Index d, CovKind kind) {
  switch (kind) {
    case CovKind::spherical:
      return 1;
    case CovKind::diagonal:
      return d;
    case CovKind::full:
      return d * (d + 1) / 2;
  }
  return 0;
}

Mat cholesky_lower(const Mat& c) {
  Eigen::LLT<Mat> llt(c);
  if (llt.info() != Eigen::Success) throw ParameterError("covariance is not positive definite");
  return llt.matrixL();
}

}  // namespace

Index raw_size(Index k, Index d, CovKind kind) { return k * d + k * scale_count(d, kind) + (k - 1); }

Vec pack_raw(const GmmParams& p) {
  p.validate();
  const Index k = p.k(), d = p.d();
  Vec v(raw_size(k, d, p.kind));
  Index o = 0;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < d; ++j) v[o++] = p.means(i, j);
  for (Index i = 0; i < k; ++i) {
    const Mat& c = p.covs[static_cast<size_t>(i)];
    if (p.kind == CovKind::spherical) {
      v[o++] = std::sqrt(c(0, 0));
    } else if (p.kind == CovKind::diagonal) {
      for (Index j = 0; j < d; ++j) v[o++] = std::sqrt(c(j, j));
    } else {
      const Mat L = cholesky_lower(c);
      for (Index r = 0; r < d; ++r)
        for (Index q = 0; q <= r; ++q) v[o++] = L(r, q);
    }
  }
  for (Index i = 0; i + 1 < k; ++i) v[o++] = p.weights[i];
  return v;
}

GmmParams unpack_raw(const Vec& v, Index k, Index d, CovKind kind) {
  if (k < 1 || d < 1 || v.size() != raw_size(k, d, kind)) throw ParameterError("unpack_raw: size mismatch");
  GmmParams p;
  p.kind = kind;
  p.means.resize(k, d);
  Index o = 0;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < d; ++j) p.means(i, j) = v[o++];
  p.covs.resize(static_cast<size_t>(k));
  for (Index i = 0; i < k; ++i) {
    Mat c = Mat::Zero(d, d);
    if (kind == CovKind::spherical) {
      c.diagonal().setConstant(v[o] * v[o]);
      ++o;
    } else if (kind == CovKind::diagonal) {
      for (Index j = 0; j < d; ++j, ++o) c(j, j) = v[o] * v[o];
    } else {
      Mat L = Mat::Zero(d, d);
      for (Index r = 0; r < d; ++r)
        for (Index q = 0; q <= r; ++q) L(r, q) = v[o++];
      c = L * L.transpose();
    }
    p.covs[static_cast<size_t>(i)] = c;
  }
  p.weights.resize(k);
  double rest = 1;
  for (Index i = 0; i + 1 < k; ++i) {
    p.weights[i] = v[o++];
    rest -= p.weights[i];
  }
  p.weights[k - 1] = rest;
  return p;
}

Vec nll_gradient(const GmmParams& p, const Dataset& x) {
  const Mat logn = log_densities(p, x);
  const Index n = x.rows(), k = p.k(), d = p.d();
  // log of the mixture density per sample
  Vec logmix(n);
  {
    std::vector<double> row(static_cast<size_t>(k));
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < k; ++i)
        row[static_cast<size_t>(i)] = p.weights[i] > 0 ? std::log(p.weights[i]) + logn(j, i)
                                                       : -std::numeric_limits<double>::infinity();
      logmix[j] = log_sum_exp(row.data(), k);
    }
  }
  // ratio(j, i) = N_i(x_j) / p(x_j); responsibilities are alpha_i * ratio.
  const Mat ratio = (logn.colwise() - logmix).array().exp().matrix();
  Vec g(raw_size(k, d, p.kind));
  Index o = 0;
  std::vector<Mat> prec(static_cast<size_t>(k));
  for (Index i = 0; i < k; ++i) prec[static_cast<size_t>(i)] = p.covs[static_cast<size_t>(i)].inverse();
  for (Index i = 0; i < k; ++i) {
    Vec gm = Vec::Zero(d);
    for (Index j = 0; j < n; ++j) gm += p.weights[i] * ratio(j, i) * (x.row(j).transpose() - p.means.row(i).transpose());
    g.segment(o, d) = -(prec[static_cast<size_t>(i)] * gm);
    o += d;
  }
  for (Index i = 0; i < k; ++i) {
    const Mat& c = p.covs[static_cast<size_t>(i)];
    if (p.kind == CovKind::spherical) {
      const double s = std::sqrt(c(0, 0));
      double acc = 0;
      for (Index j = 0; j < n; ++j) {
        const double r = p.weights[i] * ratio(j, i);
        const double q = (x.row(j) - p.means.row(i)).squaredNorm();
        acc += r * (q / (s * s * s) - static_cast<double>(d) / s);
      }
      g[o++] = -acc;
    } else if (p.kind == CovKind::diagonal) {
      for (Index m = 0; m < d; ++m) {
        const double s = std::sqrt(c(m, m));
        double acc = 0;
        for (Index j = 0; j < n; ++j) {
          const double r = p.weights[i] * ratio(j, i);
          const double dx = x(j, m) - p.means(i, m);
          acc += r * (dx * dx / (s * s * s) - 1 / s);
        }
        g[o++] = -acc;
      }
    } else {
      const Mat& P = prec[static_cast<size_t>(i)];
      Mat scatter = Mat::Zero(d, d);
      double mass = 0;
      for (Index j = 0; j < n; ++j) {
        const double r = p.weights[i] * ratio(j, i);
        const Vec dx = x.row(j).transpose() - p.means.row(i).transpose();
        scatter += r * dx * dx.transpose();
        mass += r;
      }
      const Mat G = 0.5 * (P * scatter * P - mass * P);  // dL/dSigma
      const Mat dL = 2 * G * cholesky_lower(c);
      for (Index r = 0; r < d; ++r)
        for (Index q = 0; q <= r; ++q) g[o++] = -dL(r, q);
    }
  }
  for (Index i = 0; i + 1 < k; ++i) g[o++] = -(ratio.col(i) - ratio.col(k - 1)).sum();
  return g;
}

Index free_size(Index k, Index d, CovKind kind) { return raw_size(k, d, kind); }

Vec to_free(const GmmParams& p) {
  Vec z = pack_raw(p);
  const Index k = p.k(), d = p.d();
  Index o = k * d;
  for (Index i = 0; i < k; ++i) {
    if (p.kind == CovKind::full) {
      for (Index r = 0; r < d; ++r)
        for (Index q = 0; q <= r; ++q, ++o)
          if (q == r) z[o] = std::log(z[o]);
    } else {
      const Index sc = p.kind == CovKind::spherical ? 1 : d;
      for (Index m = 0; m < sc; ++m, ++o) z[o] = std::log(z[o]);
    }
  }
  const double last = std::log(p.weights[k - 1]);
  for (Index i = 0; i + 1 < k; ++i, ++o) z[o] = std::log(p.weights[i]) - last;
  return z;
}

namespace {

// Softmax of (z_1 .. z_{k-1}, 0).
Vec alr_inverse(const Vec& a) {
  const Index k = a.size() + 1;
  Vec e(k);
  e.head(k - 1) = a;
  e[k - 1] = 0;
  const double m = e.maxCoeff();
  e = (e.array() - m).exp().matrix();
  return e / e.sum();
}

}  // namespace

GmmParams from_free(const Vec& z, Index k, Index d, CovKind kind) {
  if (z.size() != free_size(k, d, kind)) throw ParameterError("from_free: size mismatch");
  if (!z.allFinite()) throw ParameterError("from_free: non-finite coordinates");
  Vec v = z;
  Index o = k * d;
  for (Index i = 0; i < k; ++i) {
    if (kind == CovKind::full) {
      for (Index r = 0; r < d; ++r)
        for (Index q = 0; q <= r; ++q, ++o)
          if (q == r) v[o] = std::exp(v[o]);
    } else {
      const Index sc = kind == CovKind::spherical ? 1 : d;
      for (Index m = 0; m < sc; ++m, ++o) v[o] = std::exp(v[o]);
    }
  }
  const Vec w = alr_inverse(z.tail(k - 1));
  v.tail(k - 1) = w.head(k - 1);
  GmmParams p = unpack_raw(v, k, d, kind);
  p.weights = w;  // exact simplex point
  return p;
}

Objective nll_objective(const Dataset& x, Index k, CovKind kind) {
  const Index d = x.cols();
  auto value = [x, k, d, kind](const Vec& z) { return -log_likelihood(from_free(z, k, d, kind), x); };
  auto grad = [x, k, d, kind](const Vec& z) {
    const GmmParams p = from_free(z, k, d, kind);
    Vec g = nll_gradient(p, x);
    const Vec raw = pack_raw(p);
    Index o = k * d;
    for (Index i = 0; i < k; ++i) {
      if (kind == CovKind::full) {
        for (Index r = 0; r < d; ++r)
          for (Index q = 0; q <= r; ++q, ++o)
            if (q == r) g[o] *= raw[o];
      } else {
        const Index sc = kind == CovKind::spherical ? 1 : d;
        for (Index m = 0; m < sc; ++m, ++o) g[o] *= raw[o];
      }
    }
    // d alpha_i / d z_m = alpha_i (delta_im - alpha_m), alpha_k dependent.
    const Vec ga = g.tail(k - 1);
    const Vec a = p.weights.head(k - 1);
    const double s = a.dot(ga);
    g.tail(k - 1) = (a.array() * (ga.array() - s)).matrix();
    return g;
  };
  return Objective(fmt::format("gmm_nll_{}", to_string(kind)), free_size(k, d, kind), value, grad);
}

// ---- TRUST-TECH EM --------------------------------------------------------------

tier::TierConfig default_tt_config() {
  tier::TierConfig c;
  c.step = 0.05;
  c.max_tiers = 1;
  c.dedup_tol = 1e-2;
  return c;
}

TtEmResult tt_em(const GmmParams& start, const Dataset& x, const EmConfig& em, const tier::TierConfig& tier_cfg) {
  const Index k = start.k(), d = start.d();
  const CovKind kind = start.kind;
  const EmResult root = em_fit(start, x, em);
  const Vec z0 = to_free(start.canonical());
  LocalResult root_local;
  root_local.x = to_free(root.params.canonical());
  root_local.value = -root.loglik.back();
  root_local.iterations = root.iterations;
  root_local.converged = true;  // the root is kept even when EM hit max_iter
  auto solver = [&](const Vec& z) {
    if (z.size() == z0.size() && z == z0) return root_local;
    const EmResult r = em_fit(from_free(z, k, d, kind), x, em);
    LocalResult lr;
    lr.x = to_free(r.params.canonical());
    lr.value = -r.loglik.back();
    lr.iterations = r.iterations;
    lr.converged = r.converged;
    return lr;
  };
  TtEmResult out{root.params, root.loglik.back(), root.loglik.back(), tier::SolutionSet(tier_cfg.dedup_tol), {}};
  out.solutions = tier::tier_search(nll_objective(x, k, kind), z0, solver, tier_cfg, {}, &out.log);
  const tier::Solution& best = out.solutions.best();
  if (-best.value > out.em_loglik) {
    out.loglik = -best.value;
    out.params = from_free(best.point, k, d, kind);
  }
  return out;
}

// ---- data --------------------------------------------------------------------------

Dataset sample(const GmmParams& p, int n, std::mt19937_64& rng, std::vector<int>* labels) {
  p.validate();
  if (n < 1) throw ParameterError("sample: n must be positive");
  const Index d = p.d();
  std::vector<Mat> chol(static_cast<size_t>(p.k()));
  for (Index i = 0; i < p.k(); ++i) chol[static_cast<size_t>(i)] = cholesky_lower(p.covs[static_cast<size_t>(i)]);
  std::discrete_distribution<int> pick(p.weights.data(), p.weights.data() + p.k());
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset x(n, d);
  if (labels) labels->assign(static_cast<size_t>(n), 0);
  for (int j = 0; j < n; ++j) {
    const int c = pick(rng);
    Vec z(d);
    for (Index m = 0; m < d; ++m) z[m] = normal(rng);
    x.row(j) = (p.means.row(c).transpose() + chol[static_cast<size_t>(c)] * z).transpose();
    if (labels) (*labels)[static_cast<size_t>(j)] = c;
  }
  return x;
}

Synthetic gen_synthetic(const std::string& id, int n, std::uint64_t seed) {
  GmmParams truth;
  int def = 0;
  if (id == "spherical5") {
    Mat mu(5, 2);
    mu << 0.3, 0.3, 0.5, 0.5, 0.7, 0.7, 0.3, 0.7, 0.7, 0.3;
    truth = make_params(Vec::Constant(5, 0.2), mu, std::vector<Mat>(5, 1e-4 * Mat::Identity(2, 2)), CovKind::spherical);
    def = 40;
  } else if (id == "elliptical3") {
    Mat mu(3, 2);
    mu << 0, -2, 0, 0, 0, 2;
    const Mat c = (Mat(2, 2) << 2, 0, 0, 0.2).finished();
    truth = make_params(Vec::Constant(3, 1.0 / 3), mu, std::vector<Mat>(3, c), CovKind::diagonal);
    def = 900;
  } else if (id == "overlap4") {
    Mat mu(4, 2);
    mu << -4, -4, -4, -4, 2, 2, -1, -6;
    std::vector<Mat> c = {(Mat(2, 2) << 1, 0.5, 0.5, 1).finished(), (Mat(2, 2) << 6, -2, -2, 6).finished(),
                          (Mat(2, 2) << 2, -1, -1, 2).finished(), (Mat(2, 2) << 0.125, 0, 0, 0.125).finished()};
    truth = make_params((Vec(4) << 0.3, 0.3, 0.3, 0.1).finished(), mu, c, CovKind::full);
    def = 1000;
  } else {
    throw ParameterError(fmt::format("unknown synthetic dataset '{}'", id));
  }
  std::mt19937_64 rng(seed);
  Synthetic s;
  s.truth = truth;
  s.data = sample(truth, n > 0 ? n : def, rng, &s.labels);
  return s;
}

GmmParams random_start(const Dataset& x, Index k, CovKind kind, std::mt19937_64& rng, StartKind how) {
  if (k < 1 || x.rows() < k) throw ParameterError("random_start: need 1 <= k <= n");
  const Index d = x.cols();
  const Vec var = variance_floor(x, 1.0);
  const Vec lo = x.colwise().minCoeff().transpose(), hi = x.colwise().maxCoeff().transpose();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GmmParams p;
  p.kind = kind;
  p.weights = Vec::Constant(k, 1.0 / static_cast<double>(k));
  p.means.resize(k, d);
  if (how == StartKind::uniform_box) {
    for (Index i = 0; i < k; ++i)
      for (Index m = 0; m < d; ++m) p.means(i, m) = lo[m] + (hi[m] - lo[m]) * u(rng);
  } else {
    std::vector<Index> idx(static_cast<size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    for (Index i = 0; i < k; ++i) {
      std::uniform_int_distribution<Index> pick(i, x.rows() - 1);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(pick(rng))]);
      p.means.row(i) = x.row(idx[static_cast<size_t>(i)]);
    }
  }
  p.covs.resize(static_cast<size_t>(k));
  for (Index i = 0; i < k; ++i) {
    Vec v(d);
    if (kind == CovKind::spherical) {
      v.setConstant(var.mean() * (0.1 + 0.9 * u(rng)));
    } else {
      for (Index m = 0; m < d; ++m) v[m] = var[m] * (0.1 + 0.9 * u(rng));
    }
    p.covs[static_cast<size_t>(i)] = v.asDiagonal();
  }
  return p;
}

// ---- I/O ----------------------------------------------------------------------------

std::string params_to_json(const GmmParams& p) {
  using nlohmann::json;
  json j;
  j["kind"] = to_string(p.kind);
  j["weights"] = std::vector<double>(p.weights.begin(), p.weights.end());
  json means = json::array(), covs = json::array();
  for (Index i = 0; i < p.k(); ++i) {
    means.push_back(std::vector<double>(p.means.row(i).begin(), p.means.row(i).end()));
    json c = json::array();
    const Mat& m = p.covs[static_cast<size_t>(i)];
    for (Index r = 0; r < m.rows(); ++r) c.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    covs.push_back(c);
  }
  j["means"] = means;
  j["covariances"] = covs;
  return j.dump(2);
}

GmmParams params_from_json(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
    GmmParams p;
    p.kind = cov_kind_from_string(j.at("kind").get<std::string>());
    const auto w = j.at("weights").get<std::vector<double>>();
    const auto mu = j.at("means").get<std::vector<std::vector<double>>>();
    const auto cv = j.at("covariances").get<std::vector<std::vector<std::vector<double>>>>();
    const Index k = static_cast<Index>(w.size());
    if (k < 1 || static_cast<Index>(mu.size()) != k || static_cast<Index>(cv.size()) != k)
      throw ParameterError("params JSON: weights, means and covariances must have one entry per component");
    const Index d = static_cast<Index>(mu[0].size());
    p.weights = Eigen::Map<const Vec>(w.data(), k);
    p.means.resize(k, d);
    for (Index i = 0; i < k; ++i) {
      if (static_cast<Index>(mu[static_cast<size_t>(i)].size()) != d) throw ParameterError("params JSON: ragged means");
      for (Index m = 0; m < d; ++m) p.means(i, m) = mu[static_cast<size_t>(i)][static_cast<size_t>(m)];
      Mat c(d, d);
      const auto& rows = cv[static_cast<size_t>(i)];
      if (static_cast<Index>(rows.size()) != d) throw ParameterError("params JSON: covariance shape");
      for (Index r = 0; r < d; ++r) {
        if (static_cast<Index>(rows[static_cast<size_t>(r)].size()) != d)
          throw ParameterError("params JSON: covariance shape");
        for (Index q = 0; q < d; ++q) c(r, q) = rows[static_cast<size_t>(r)][static_cast<size_t>(q)];
      }
      p.covs.push_back(c);
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ParameterError(fmt::format("params JSON: {}", e.what()));
  }
}

std::string dataset_to_csv(const Dataset& x) {
  std::string out;
  for (Index j = 0; j < x.rows(); ++j) {
    for (Index m = 0; m < x.cols(); ++m) {
      if (m) out += ',';
      out += fmt::format("{:.17g}", x(j, m));
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ParameterError(fmt::format("CSV: cannot parse '{}'", cell));
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ParameterError("CSV: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParameterError("CSV: no data");
  Dataset x(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (size_t j = 0; j < rows.size(); ++j)
    for (size_t m = 0; m < rows[j].size(); ++m) x(static_cast<Index>(j), static_cast<Index>(m)) = rows[j][m];
  if (!x.allFinite()) throw ParameterError("CSV: non-finite entries");
  return x;
}

}  // namespace ttech::gmm
