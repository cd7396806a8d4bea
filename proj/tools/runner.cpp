#include "runner.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ttech/evo.hpp"
#include "ttech/gmm.hpp"
#include "ttech/mlp.hpp"
#include "ttech/parallel.hpp"
#include "ttech/saddle.hpp"
#include "ttech/smoothing.hpp"
#include "ttech/solvers.hpp"
#include "ttech/surfaces.hpp"
#include "ttech/tiersearch.hpp"

namespace ttech::cli {

namespace fs = std::filesystem;

// ---- config access ------------------------------------------------------------------

Reader::Reader(json in, std::string text) : in_(std::move(in)), echo_(json::object()), text_(std::move(text)) {
  if (!in_.is_object()) throw FieldError("config must be a JSON object", "", 1);
  nodes_.push_back({&in_, &echo_, "", {}});
}

Section Reader::root() { return Section(this, 0); }

void Reader::finish() const {
  for (const Node& n : nodes_)
    for (const auto& [key, value] : n.in->items())
      if (!n.used.count(key)) {
        const std::string f = n.path.empty() ? key : n.path + "." + key;
        fail(f, "unknown field");
      }
}

int Reader::line_of(const std::string& field) const {
  // Follows the path components through the text; good enough for diagnostics.
  size_t pos = 0;
  bool found = false;
  std::stringstream ss(field);
  std::string part;
  while (std::getline(ss, part, '.')) {
    const size_t p = text_.find("\"" + part + "\"", pos);
    if (p == std::string::npos) return 0;
    pos = p + part.size() + 2;
    found = true;
  }
  if (!found) return 0;
  return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

void Reader::fail(const std::string& field, const std::string& msg) const {
  const int line = line_of(field);
  const std::string where = line > 0 ? fmt::format(" (line {})", line) : "";
  throw FieldError(fmt::format("field '{}'{}: {}", field, where, msg), field, line);
}

std::string Section::field(const std::string& key) const {
  if (key.empty()) return node().path;
  return node().path.empty() ? key : node().path + "." + key;
}

void Section::fail(const std::string& key, const std::string& msg) const { r_->fail(field(key), msg); }

bool Section::has(const std::string& key) const { return node().in->contains(key); }

const json* Section::raw(const std::string& key) {
  node().used.insert(key);
  const auto it = node().in->find(key);
  return it == node().in->end() ? nullptr : &*it;
}

double Section::number(const std::string& key, std::optional<double> def) {
  const json* v = raw(key);
  double out;
  if (!v) {
    if (!def) fail(key, "required");
    out = *def;
  } else {
    if (!v->is_number()) fail(key, "expected a number");
    out = v->get<double>();
  }
  (*node().echo)[key] = out;
  return out;
}

long long Section::integer(const std::string& key, std::optional<long long> def) {
  const json* v = raw(key);
  long long out;
  if (!v) {
    if (!def) fail(key, "required");
    out = *def;
  } else {
    if (v->is_number_integer()) {
      out = v->get<long long>();
    } else if (v->is_number_float() && std::floor(v->get<double>()) == v->get<double>() &&
               std::abs(v->get<double>()) < 9e15) {
      out = static_cast<long long>(v->get<double>());
    } else {
      fail(key, "expected an integer");
    }
  }
  (*node().echo)[key] = out;
  return out;
}

std::uint64_t Section::seed(const std::string& key, std::optional<std::uint64_t> def) {
  const json* v = raw(key);
  std::uint64_t out;
  if (!v) {
    if (!def) fail(key, "required (no wall-clock seeding; pass --seed)");
    out = *def;
  } else {
    if (!v->is_number_unsigned()) fail(key, "expected a nonnegative integer");
    out = v->get<std::uint64_t>();
  }
  (*node().echo)[key] = out;
  return out;
}

std::string Section::text(const std::string& key, std::optional<std::string> def) {
  const json* v = raw(key);
  std::string out;
  if (!v) {
    if (!def) fail(key, "required");
    out = *def;
  } else {
    if (!v->is_string()) fail(key, "expected a string");
    out = v->get<std::string>();
  }
  (*node().echo)[key] = out;
  return out;
}

bool Section::flag(const std::string& key, std::optional<bool> def) {
  const json* v = raw(key);
  bool out;
  if (!v) {
    if (!def) fail(key, "required");
    out = *def;
  } else {
    if (!v->is_boolean()) fail(key, "expected true or false");
    out = v->get<bool>();
  }
  (*node().echo)[key] = out;
  return out;
}

Vec Section::vec(const std::string& key, std::optional<Vec> def) {
  const json* v = raw(key);
  Vec out;
  if (!v) {
    if (!def) fail(key, "required");
    out = *def;
  } else {
    if (!v->is_array()) fail(key, "expected an array of numbers");
    out.resize(static_cast<Index>(v->size()));
    for (size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) fail(key, fmt::format("element {} is not a number", i));
      out[static_cast<Index>(i)] = (*v)[i].get<double>();
    }
  }
  (*node().echo)[key] = std::vector<double>(out.begin(), out.end());
  return out;
}

std::vector<std::string> Section::texts(const std::string& key, std::optional<std::vector<std::string>> def) {
  const json* v = raw(key);
  std::vector<std::string> out;
  if (!v) {
    if (!def) fail(key, "required");
    out = *def;
  } else {
    if (!v->is_array()) fail(key, "expected an array of strings");
    for (const auto& e : *v) {
      if (!e.is_string()) fail(key, "expected an array of strings");
      out.push_back(e.get<std::string>());
    }
  }
  (*node().echo)[key] = out;
  return out;
}

Section Section::sub(const std::string& key) {
  static const json empty = json::object();
  const json* v = raw(key);
  if (v && !v->is_object()) fail(key, "expected an object");
  json& e = (*node().echo)[key];
  e = json::object();
  r_->nodes_.push_back({v ? v : &empty, &e, field(key), {}});
  return Section(r_, r_->nodes_.size() - 1);
}

json parse_config(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const size_t end = std::min(e.byte ? e.byte - 1 : 0, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n'));
    throw FieldError(fmt::format("{} (line {}): invalid JSON: {}", source, line, e.what()), "", line);
  }
}

void apply_override(json& cfg, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw FieldError("override must look like key.path=value: " + assignment, "", 0);
  const std::string path = assignment.substr(0, eq), value = assignment.substr(eq + 1);
  json* node = &cfg;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (parts[i].empty()) throw FieldError("empty path component in override " + path, path, 0);
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw FieldError(fmt::format("field '{}' is not an object", parts[i]), path, 0);
    node = &next;
  }
  json v = json::parse(value, nullptr, false);
  if (v.is_discarded()) v = value;
  (*node)[parts.back()] = v;
}

// ---- helpers ------------------------------------------------------------------------

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

json to_json(const Vec& v) { return std::vector<double>(v.begin(), v.end()); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string read_file(Section& s, const std::string& key, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) s.fail(key, fmt::format("cannot read '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Stats {
  double mean = 0, std = 0, best = 0, worst = 0;
  size_t count = 0;
};

// Larger is better when `maximize`.
Stats stats(const std::vector<double>& v, bool maximize) {
  Stats s;
  s.count = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x / static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(v.size() - 1));
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  s.best = maximize ? *hi : *lo;
  s.worst = maximize ? *lo : *hi;
  return s;
}

json to_json(const Stats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"best", s.best}, {"worst", s.worst}, {"count", s.count}};
}

template <class Cfg>
void validated(Section& s, const Cfg& c) {
  try {
    c.validate();
  } catch (const ParameterError& e) {
    s.fail("", e.what());
  }
}

tier::TierConfig read_tier(Section s, const tier::TierConfig& d) {
  tier::TierConfig t = d;
  t.step = s.number("step", d.step);
  t.eps = s.number("eps", d.eps);
  t.max_evals = static_cast<int>(s.integer("max_evals", d.max_evals));
  t.max_tiers = static_cast<int>(s.integer("max_tiers", d.max_tiers));
  const std::string st = s.text(
      "strategy", d.strategy == tier::DirectionStrategy::random ? "random" : "hessian_eigenvectors");
  if (st == "random")
    t.strategy = tier::DirectionStrategy::random;
  else if (st == "hessian_eigenvectors")
    t.strategy = tier::DirectionStrategy::hessian_eigenvectors;
  else
    s.fail("strategy", "expected 'random' or 'hessian_eigenvectors'");
  t.n_directions = static_cast<int>(s.integer("n_directions", d.n_directions));
  t.prune_factor = s.number("prune_factor", d.prune_factor);
  t.dedup_tol = s.number("dedup_tol", d.dedup_tol);
  t.scale_steps = s.flag("scale_steps", d.scale_steps);
  t.iteration_cap_factor = s.number("iteration_cap_factor", d.iteration_cap_factor);
  t.seed = s.seed("seed", d.seed);
  validated(s, t);
  return t;
}

gmm::EmConfig read_em(Section s) {
  const gmm::EmConfig d;
  gmm::EmConfig c;
  c.tol = s.number("tol", d.tol);
  c.max_iter = static_cast<int>(s.integer("max_iter", d.max_iter));
  c.floor_scale = s.number("floor_scale", d.floor_scale);
  c.reseed_empty = s.flag("reseed_empty", d.reseed_empty);
  c.seed = s.seed("seed", d.seed);
  validated(s, c);
  return c;
}

LmConfig read_lm(Section s) {
  const LmConfig d;
  LmConfig c;
  c.mu0 = s.number("mu0", d.mu0);
  c.mu_scale = s.number("mu_scale", d.mu_scale);
  c.mu_max = s.number("mu_max", d.mu_max);
  c.tol_grad = s.number("tol_grad", d.tol_grad);
  c.tol_step = s.number("tol_step", d.tol_step);
  c.max_iter = static_cast<int>(s.integer("max_iter", d.max_iter));
  validated(s, c);
  return c;
}

saddle::SaddleConfig read_saddle(Section s, const saddle::SaddleConfig& d) {
  saddle::SaddleConfig c;
  c.coarse_steps = static_cast<int>(s.integer("coarse_steps", d.coarse_steps));
  c.eps = s.number("eps", d.eps);
  c.dt = s.number("dt", d.dt);
  c.intsteps = static_cast<int>(s.integer("intsteps", d.intsteps));
  c.smallstep = static_cast<int>(s.integer("smallstep", d.smallstep));
  c.max_hops = static_cast<int>(s.integer("max_hops", d.max_hops));
  c.mgp_tol = s.number("mgp_tol", d.mgp_tol);
  c.newton_tol = s.number("newton_tol", d.newton_tol);
  c.newton_max_iter = static_cast<int>(s.integer("newton_max_iter", d.newton_max_iter));
  c.exit_critical_tol = s.number("exit_critical_tol", d.exit_critical_tol);
  c.perturb_delta = s.number("perturb_delta", d.perturb_delta);
  validated(s, c);
  return c;
}

Objective surface(Section& s, const std::string& key, const std::string& name, Index dim = 2) {
  if (name == "muller_brown") return surfaces::muller_brown();
  if (name == "eckhardt") return surfaces::eckhardt();
  if (name == "leps") return surfaces::leps();
  if (name == "lj3") return surfaces::lj3_reduced();
  if (name == "multiwell") return evo::multiwell(dim);
  s.fail(key, fmt::format("unknown surface '{}' (muller_brown, eckhardt, leps, lj3, multiwell)", name));
}

Vec dim_check(Section& s, const std::string& key, Vec v, Index dim) {
  if (v.size() != dim) s.fail(key, fmt::format("expected {} coordinates, got {}", dim, v.size()));
  return v;
}

// ---- saddle ---------------------------------------------------------------------------

struct Preset {
  std::string surface;
  Vec a, b;
  saddle::SaddleConfig cfg;
  bool refine = true;
};

std::optional<Preset> preset(const std::string& name) {
  auto v = [](std::initializer_list<double> l) {
    Vec out(static_cast<Index>(l.size()));
    Index i = 0;
    for (double x : l) out[i++] = x;
    return out;
  };
  Preset p;
  if (name == "mb-AB" || name == "mb-BC" || name == "mb-AC") {
    const Vec A = v({-0.558, 1.442}), B = v({-0.050, 0.467}), C = v({0.623, 0.028});
    p.surface = "muller_brown";
    p.a = name == "mb-BC" ? B : A;
    p.b = name == "mb-AB" ? B : C;
    return p;
  }
  if (name == "eckhardt-AB") {
    p.surface = "eckhardt";
    p.a = v({-3, 0});
    p.b = v({3, 0});
    p.cfg.dt = 1e-2;
    // The tabulated minima sit on a plateau; Newton would drift along it.
    p.refine = false;
    return p;
  }
  if (name == "lj3") {
    p.surface = "lj3";
    p.a = v({1.0, 0.5, 0.866});
    p.b = v({1.0, 0.5, -0.866});
    p.cfg.dt = 1e-3;
    return p;
  }
  return std::nullopt;
}

RunOutput run_saddle(Section root) {
  RunOutput out;
  const std::string name = root.text("preset", "");
  Preset p;
  if (!name.empty()) {
    const auto found = preset(name);
    if (!found) root.fail("preset", fmt::format("unknown preset '{}' (mb-AB, mb-BC, mb-AC, eckhardt-AB, lj3)", name));
    p = *found;
  }
  p.surface = root.text("surface", p.surface.empty() ? std::optional<std::string>() : p.surface);
  const Objective obj = surface(root, "surface", p.surface);
  p.a = dim_check(root, "A", root.vec("A", p.a.size() ? std::optional<Vec>(p.a) : std::nullopt), obj.dim());
  p.b = dim_check(root, "B", root.vec("B", p.b.size() ? std::optional<Vec>(p.b) : std::nullopt), obj.dim());
  const bool refine = root.flag("refine_minima", p.refine);
  const saddle::SaddleConfig cfg = read_saddle(root.sub("saddle"), p.cfg);
  root.done();

  Vec A = p.a, B = p.b;
  if (refine) {
    A = newton_critical(obj, A, cfg.newton_tol, cfg.newton_max_iter);
    B = newton_critical(obj, B, cfg.newton_tol, cfg.newton_max_iter);
  }
  const auto results = saddle::locate_ddps(obj, A, B, cfg);
  json records = json::array();
  for (size_t i = 0; i < results.size(); ++i) {
    const saddle::SaddleResult& r = results[i];
    const std::string trace = fmt::format("trace_{}.csv", i);
    out.files[trace] = saddle::trace_csv(r.trace);
    records.push_back({{"exit_point", to_json(r.exit_point)},
                       {"mgp", to_json(r.mgp)},
                       {"mgp_grad_norm", r.trace.mgp_grad_norm},
                       {"mgp_found", r.trace.mgp_found},
                       {"hops", r.trace.points.size()},
                       {"ddp", to_json(r.ddp)},
                       {"ddp_energy", r.ddp_energy},
                       {"ddp_grad_norm", grad_norm(obj, r.ddp)},
                       {"force_evals", r.force_evals},
                       {"hessian_index", r.ddp_class.negative_eigenvalue_count},
                       {"eigenvalues", to_json(r.ddp_class.eigenvalues)},
                       {"trace_file", trace}});
  }
  json summary = {{"surface", p.surface},
                  {"A", to_json(A)},
                  {"B", to_json(B)},
                  {"energy_A", obj.value(A)},
                  {"energy_B", obj.value(B)},
                  {"records", records}};
  out.files["summary.json"] = dump(summary);
  return out;
}

// ---- gmm / smooth ---------------------------------------------------------------------

struct GmmData {
  gmm::Dataset x;
  std::optional<gmm::GmmParams> truth;
  Index k = 0;
  gmm::CovKind kind = gmm::CovKind::diagonal;
  std::string name;
};

GmmData read_gmm_data(Section& root, std::uint64_t seed) {
  GmmData d;
  const std::string file = root.text("data_file", "");
  if (!file.empty()) {
    try {
      d.x = gmm::dataset_from_csv(read_file(root, "data_file", file));
    } catch (const IoError& e) {
      root.fail("data_file", e.what());
    }
    d.name = file;
  } else {
    d.name = root.text("dataset", "elliptical3");
    const int n = static_cast<int>(root.integer("n", 0));
    const std::uint64_t ds = root.seed("data_seed", seed);
    try {
      gmm::Synthetic s = gmm::gen_synthetic(d.name, n, ds);
      d.x = std::move(s.data);
      d.truth = std::move(s.truth);
    } catch (const ParameterError& e) {
      root.fail("dataset", e.what());
    }
  }
  d.k = root.integer("k", d.truth ? std::optional<long long>(d.truth->k()) : std::nullopt);
  if (d.k < 1) root.fail("k", "must be at least 1");
  try {
    d.kind = gmm::cov_kind_from_string(root.text("kind", "diagonal"));
  } catch (const ParameterError& e) {
    root.fail("kind", e.what());
  }
  return d;
}

gmm::StartKind read_start_kind(Section& root, const std::string& def) {
  const std::string s = root.text("start", def);
  if (s == "uniform_box") return gmm::StartKind::uniform_box;
  if (s == "data_points") return gmm::StartKind::data_points;
  root.fail("start", "expected 'uniform_box' or 'data_points'");
}

std::string run_csv(const std::vector<std::vector<std::string>>& rows, const std::string& header) {
  std::string out = header + "\n";
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
    out += "\n";
  }
  return out;
}

RunOutput run_gmm(Section root, std::uint64_t seed) {
  RunOutput out;
  GmmData d = read_gmm_data(root, seed);
  const int starts = static_cast<int>(root.integer("starts", 20));
  if (starts < 1) root.fail("starts", "must be at least 1");
  const gmm::StartKind how = read_start_kind(root, "uniform_box");
  const std::vector<std::string> methods = root.texts("methods", std::vector<std::string>{"em", "tt_em"});
  for (const auto& m : methods)
    if (m != "em" && m != "tt_em") root.fail("methods", fmt::format("unknown method '{}' (em, tt_em)", m));
  const gmm::EmConfig em = read_em(root.sub("em"));
  const tier::TierConfig tc = read_tier(root.sub("tier"), gmm::default_tt_config());
  root.done();

  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::vector<double>> finals;
  std::map<std::string, std::pair<double, gmm::GmmParams>> best;
  std::map<std::string, int> failed;
  for (int r = 0; r < starts; ++r) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(r);
    std::mt19937_64 rng(s);
    const gmm::GmmParams start = gmm::random_start(d.x, d.k, d.kind, rng, how);
    const double l0 = gmm::log_likelihood(start, d.x);
    for (const auto& m : methods) {
      std::vector<std::string> row{std::to_string(r), std::to_string(s), m, num(l0)};
      try {
        double l;
        int iters;
        size_t sols = 1, explored = 0;
        gmm::GmmParams p;
        if (m == "em") {
          const gmm::EmResult e = gmm::em_fit(start, d.x, em);
          l = e.loglik.back();
          iters = e.iterations;
          p = e.params;
        } else {
          const gmm::TtEmResult t = gmm::tt_em(start, d.x, em, tc);
          l = t.loglik;
          iters = t.solutions.best().iterations;
          sols = t.solutions.size();
          explored = t.log.size();
          p = t.params;
        }
        row.insert(row.end(), {num(l), std::to_string(iters), std::to_string(sols), std::to_string(explored), "ok"});
        finals[m].push_back(l);
        if (!best.count(m) || l > best[m].first) best[m] = {l, p};
      } catch (const Error& e) {
        row.insert(row.end(), {"", "", "", "", e.kind()});
        ++failed[m];
      }
      rows.push_back(std::move(row));
    }
  }
  out.files["runs.csv"] =
      run_csv(rows, "run,seed,method,start_loglik,final_loglik,iterations,tier_solutions,explorations,status");
  json summary = {{"dataset", d.name}, {"n", d.x.rows()}, {"d", d.x.cols()}, {"k", d.k},
                  {"kind", gmm::to_string(d.kind)}, {"starts", starts}};
  if (d.truth) summary["truth_loglik"] = gmm::log_likelihood(*d.truth, d.x);
  json agg = json::object();
  for (const auto& m : methods) {
    json a = to_json(stats(finals[m], true));
    a["failed"] = failed[m];
    agg[m] = a;
    if (best.count(m)) out.files[fmt::format("best_{}.json", m)] = gmm::params_to_json(best[m].second) + "\n";
  }
  summary["final_loglik"] = agg;
  out.files["summary.json"] = dump(summary);
  return out;
}

smoothing::KernelMode read_mode(Section& s, const std::string& key) {
  const std::string m = s.text(key, "additive");
  if (m == "additive") return smoothing::KernelMode::additive;
  if (m == "multiplicative") return smoothing::KernelMode::multiplicative;
  s.fail(key, "expected 'additive' or 'multiplicative'");
}

RunOutput run_smooth(Section root, std::uint64_t seed) {
  RunOutput out;
  GmmData d = read_gmm_data(root, seed);
  const std::string task = root.text("task", "census");
  const gmm::EmConfig em = read_em(root.sub("em"));
  json summary = {{"dataset", d.name}, {"n", d.x.rows()}, {"k", d.k}, {"kind", gmm::to_string(d.kind)}, {"task", task}};
  if (task == "census") {
    const Vec levels = root.vec("levels", (Vec(5) << 0, 0.25, 0.5, 0.75, 1.0).finished());
    const int starts = static_cast<int>(root.integer("starts", 1000));
    const smoothing::KernelMode mode = read_mode(root, "mode");
    const double dedup = root.number("dedup_tol", 1e-2);
    root.done();
    if (starts < 1) root.fail("starts", "must be at least 1");
    const auto rows = smoothing::census(d.x, d.k, d.kind, std::vector<double>(levels.begin(), levels.end()), starts,
                                        mode, dedup, seed, em);
    out.files["census.csv"] = smoothing::census_csv(rows);
    json jr = json::array();
    size_t best = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
      jr.push_back({{"level", rows[i].level}, {"unique", rows[i].count.unique}, {"failed", rows[i].count.failed}});
      if (rows[i].count.unique < rows[best].count.unique) best = i;
    }
    summary["rows"] = jr;
    if (!rows.empty()) summary["best_level"] = rows[best].level;
  } else if (task == "compare") {
    Section hs = root.sub("hierarchy");
    smoothing::Hierarchy h;
    h.nl = static_cast<int>(hs.integer("nl", h.nl));
    h.sfac = hs.number("sfac", h.sfac);
    h.ns = static_cast<int>(hs.integer("ns", h.ns));
    h.mode = read_mode(hs, "mode");
    validated(hs, h);
    const int starts = static_cast<int>(root.integer("starts", 20));
    const int global = static_cast<int>(root.integer("global_starts", 10));
    const gmm::StartKind how = read_start_kind(root, "uniform_box");
    root.done();
    if (starts < 1) root.fail("starts", "must be at least 1");
    std::vector<std::vector<std::string>> rows;
    std::map<std::string, std::vector<double>> finals;
    for (int r = 0; r < starts; ++r) {
      const std::uint64_t s = seed + static_cast<std::uint64_t>(r);
      std::mt19937_64 rng(s);
      const gmm::GmmParams start = gmm::random_start(d.x, d.k, d.kind, rng, how);
      const double l0 = gmm::log_likelihood(start, d.x);
      for (const std::string m : {"em", "smooth_em"}) {
        std::vector<std::string> row{std::to_string(r), std::to_string(s), m, num(l0)};
        try {
          const double l = m == std::string("em")
                               ? gmm::em_fit(start, d.x, em).loglik.back()
                               : smoothing::smooth_em_hierarchy(start, d.x, h, em, global, s).loglik;
          row.insert(row.end(), {num(l), "ok"});
          finals[m].push_back(l);
        } catch (const Error& e) {
          row.insert(row.end(), {"", e.kind()});
        }
        rows.push_back(std::move(row));
      }
    }
    out.files["runs.csv"] = run_csv(rows, "run,seed,method,start_loglik,final_loglik,status");
    summary["levels"] = h.levels(d.x);
    summary["final_loglik"] = {{"em", to_json(stats(finals["em"], true))},
                               {"smooth_em", to_json(stats(finals["smooth_em"], true))}};
  } else {
    root.fail("task", "expected 'census' or 'compare'");
  }
  out.files["summary.json"] = dump(summary);
  return out;
}

// ---- nn -----------------------------------------------------------------------------

RunOutput run_nn(Section root, std::uint64_t seed) {
  RunOutput out;
  mlp::LabeledData data;
  const std::string file = root.text("data_file", "");
  std::string name;
  if (!file.empty()) {
    const std::string text = read_file(root, "data_file", file);
    const bool header = root.flag("header", false);
    const bool normalize = root.flag("normalize", true);
    try {
      data = mlp::load_csv(text, normalize, header);
    } catch (const Error& e) {
      root.fail("data_file", e.what());
    }
    name = file;
  } else {
    name = root.text("dataset", "two_moons");
    if (name == "two_moons") {
      const int n = static_cast<int>(root.integer("n", 200));
      const double noise = root.number("noise", 0.2);
      data = mlp::two_moons(n, noise, root.seed("data_seed", seed));
    } else if (name == "xor") {
      data = mlp::xor_data();
    } else {
      root.fail("dataset", "expected 'two_moons' or 'xor' (or set data_file)");
    }
  }
  mlp::MlpArch a{data.X.cols(), root.integer("hidden", 5)};
  mlp::KFoldConfig kc;
  kc.seed = seed;
  kc.folds = static_cast<int>(root.integer("folds", 10));
  kc.tt_step = root.number("tt_step", 0);
  kc.tt_c = root.number("tt_c", 1.2);
  kc.train.patience = static_cast<int>(root.integer("patience", 10));
  kc.train.lm = read_lm(root.sub("lm"));
  const std::vector<std::string> trainers = root.texts("trainers", std::vector<std::string>{"lm", "trust_tech"});
  for (const auto& t : trainers)
    if (t != "lm" && t != "trust_tech") root.fail("trainers", fmt::format("unknown trainer '{}' (lm, trust_tech)", t));
  root.done();
  try {
    a.validate();
  } catch (const ParameterError& e) {
    root.fail("hidden", e.what());
  }
  if (kc.folds < 3 || kc.folds > data.size()) root.fail("folds", "need 3 <= folds <= number of samples");

  std::vector<std::vector<std::string>> rows;
  json agg = json::object();
  for (const auto& t : trainers) {
    kc.trainer = t == "lm" ? mlp::Trainer::lm : mlp::Trainer::trust_tech;
    const mlp::KFoldResult r = mlp::kfold_eval(a, data, kc);
    for (size_t f = 0; f < r.folds.size(); ++f)
      rows.push_back({t, std::to_string(f), num(r.fold_train_error[f]), num(r.fold_test_error[f]),
                      num(r.fold_accuracy[f])});
    json j = {{"train_error", r.train_error}, {"test_error", r.test_error}, {"accuracy", r.accuracy}};
    j["fold_accuracy"] = to_json(stats(r.fold_accuracy, true));
    j["fold_test_error"] = to_json(stats(r.fold_test_error, false));
    agg[t] = j;
  }
  out.files["folds.csv"] = run_csv(rows, "trainer,fold,train_mse,test_mse,accuracy");
  json summary = {{"dataset", name},
                  {"samples", data.size()},
                  {"inputs", a.n},
                  {"hidden", a.k},
                  {"folds", kc.folds},
                  {"trainers", agg}};
  out.files["summary.json"] = dump(summary);
  return out;
}

// ---- evo ----------------------------------------------------------------------------

RunOutput run_evo(Section root, std::uint64_t seed) {
  RunOutput out;
  const Index dim = root.integer("dim", 2);
  if (dim < 1) root.fail("dim", "must be at least 1");
  const std::string fname = root.text("function", "multiwell");
  const Objective obj = surface(root, "function", fname, dim);
  evo::EvoConfig base;
  base.lo = dim_check(root, "lo", root.vec("lo", Vec::Constant(obj.dim(), -5.12)), obj.dim());
  base.hi = dim_check(root, "hi", root.vec("hi", Vec::Constant(obj.dim(), 5.12)), obj.dim());
  base.pop_size = static_cast<int>(root.integer("pop_size", base.pop_size));
  base.generations = static_cast<int>(root.integer("generations", base.generations));
  base.rounds = static_cast<int>(root.integer("rounds", base.rounds));
  base.sigma = root.number("sigma", base.sigma);
  base.tier = read_tier(root.sub("tier"), evo::EvoConfig::default_tier());
  LbfgsOptions lo;
  lo.tol = root.number("solver_tol", lo.tol);
  const int runs = static_cast<int>(root.integer("runs", 20));
  const std::vector<std::string> names =
      root.texts("variants", std::vector<std::string>{"mutate", "local_refine", "trust_tech"});
  std::vector<evo::Variant> variants;
  for (const auto& n : names) try {
      variants.push_back(evo::variant_from_string(n));
    } catch (const ParameterError& e) {
      root.fail("variants", e.what());
    }
  root.done();
  if (runs < 1) root.fail("runs", "must be at least 1");
  try {
    base.validate(obj.dim());
  } catch (const ParameterError& e) {
    root.fail("", e.what());
  }

  const LocalSolver solver = lbfgs_solver(obj, lo);
  std::vector<std::vector<std::string>> rows, hist;
  std::map<std::string, std::vector<double>> finals;
  int ordered = 0;
  for (int r = 0; r < runs; ++r) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(r);
    std::map<evo::Variant, double> v;
    for (evo::Variant var : variants) {
      evo::EvoConfig c = base;
      c.variant = var;
      c.seed = s;
      const evo::EvoResult res = evo::ea_run(obj, c, solver);
      rows.push_back({std::to_string(r), std::to_string(s), evo::to_string(var), num(res.history.front().best),
                      num(res.best_value)});
      for (const auto& g : res.history)
        hist.push_back({std::to_string(r), std::to_string(s), evo::to_string(var), std::to_string(g.generation),
                        num(g.best), num(g.mean)});
      finals[evo::to_string(var)].push_back(res.best_value);
      v[var] = res.best_value;
    }
    if (v.size() == 3 && v[evo::Variant::trust_tech] <= v[evo::Variant::local_refine] &&
        v[evo::Variant::local_refine] <= v[evo::Variant::mutate])
      ++ordered;
  }
  out.files["runs.csv"] = run_csv(rows, "run,seed,variant,initial_best,final_best");
  out.files["history.csv"] = run_csv(hist, "run,seed,variant,generation,best_value,mean_value");
  json agg = json::object();
  for (const auto& n : names) agg[n] = to_json(stats(finals[n], false));
  json summary = {{"function", fname}, {"dim", dim}, {"runs", runs}, {"final_best", agg}};
  if (variants.size() == 3) summary["ordered_runs"] = ordered;
  out.files["summary.json"] = dump(summary);
  return out;
}

// ---- gendata ------------------------------------------------------------------------

RunOutput run_gendata(Section root, std::uint64_t seed) {
  RunOutput out;
  const std::string id = root.text("dataset");
  const int n = static_cast<int>(root.integer("n", 0));
  root.done();
  gmm::Synthetic s;
  try {
    s = gmm::gen_synthetic(id, n, seed);
  } catch (const ParameterError& e) {
    root.fail(n < 0 ? "n" : "dataset", e.what());
  }
  out.files["data.csv"] = gmm::dataset_to_csv(s.data);
  out.files["truth.json"] = gmm::params_to_json(s.truth) + "\n";
  std::string labels = "label\n";
  for (int l : s.labels) labels += std::to_string(l) + "\n";
  out.files["labels.csv"] = labels;
  out.files["summary.json"] =
      dump({{"dataset", id}, {"n", s.data.rows()}, {"d", s.data.cols()}, {"k", s.truth.k()}, {"seed", seed}});
  return out;
}

// ---- surfscan -----------------------------------------------------------------------

struct ScanBox {
  Vec lo, hi;
};

ScanBox default_box(const std::string& name, Index dim) {
  auto v = [](std::initializer_list<double> l) {
    Vec out(static_cast<Index>(l.size()));
    Index i = 0;
    for (double x : l) out[i++] = x;
    return out;
  };
  if (name == "muller_brown") return {v({-1.5, -0.5}), v({1.2, 2.0})};
  if (name == "eckhardt") return {v({-4, -3}), v({4, 3})};
  if (name == "leps") return {v({0.5, 0.5}), v({3.5, 3.5})};
  if (name == "lj3") return {v({0.8, -1.5, 0.3}), v({2.5, 2.0, 1.5})};
  return {Vec::Constant(dim, -5.12), Vec::Constant(dim, 5.12)};
}

RunOutput run_surfscan(Section root, std::uint64_t seed) {
  RunOutput out;
  const std::string name = root.text("surface", "muller_brown");
  const Index dim = root.integer("dim", 2);
  const Objective obj = surface(root, "surface", name, dim);
  const ScanBox db = default_box(name, obj.dim());
  const Vec lo = dim_check(root, "lo", root.vec("lo", db.lo), obj.dim());
  const Vec hi = dim_check(root, "hi", root.vec("hi", db.hi), obj.dim());
  const int starts = static_cast<int>(root.integer("starts", 200));
  NewtonOptions no;
  no.tol = root.number("tol", 1e-10);
  no.max_iter = static_cast<int>(root.integer("max_iter", 100));
  const double dedup = root.number("dedup_tol", 1e-6);
  const double ctol = root.number("classify_tol", 1e-7);
  root.done();
  if (starts < 1) root.fail("starts", "must be at least 1");
  if (!((hi - lo).array() > 0).all()) root.fail("hi", "box must have positive width");

  std::vector<Vec> x0(static_cast<size_t>(starts));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& x : x0) {
    x.resize(obj.dim());
    for (Index j = 0; j < x.size(); ++j) x[j] = lo[j] + (hi[j] - lo[j]) * u(rng);
  }
  std::vector<std::optional<Vec>> found(x0.size());
  parallel::for_each(starts, [&](Index i) {
    try {
      const NewtonResult r = newton_critical(obj, x0[static_cast<size_t>(i)], no);
      found[static_cast<size_t>(i)] = r.x;
    } catch (const Error&) {
    }
  });
  struct Point {
    Vec x;
    int hits;
  };
  std::vector<Point> points;
  int failed = 0;
  for (const auto& f : found) {
    if (!f) {
      ++failed;
      continue;
    }
    auto it = std::find_if(points.begin(), points.end(),
                           [&](const Point& p) { return tier::relative_distance(*f, p.x) < dedup; });
    if (it == points.end())
      points.push_back({*f, 1});
    else
      ++it->hits;
  }
  std::string csv = "index";
  for (Index j = 0; j < obj.dim(); ++j) csv += fmt::format(",x{}", j + 1);
  csv += ",energy,grad_norm,kind,negative_eigenvalues,hits\n";
  std::map<std::string, int> counts;
  for (size_t i = 0; i < points.size(); ++i) {
    const Vec& x = points[i].x;
    std::string kind;
    std::string neg;
    try {
      const CriticalClass c = classify_critical(obj, x, ctol);
      kind = to_string(c.kind);
      neg = std::to_string(c.negative_eigenvalue_count);
    } catch (const Error& e) {
      kind = e.kind();
    }
    ++counts[kind];
    csv += std::to_string(i);
    for (Index j = 0; j < x.size(); ++j) csv += "," + num(x[j]);
    csv += fmt::format(",{},{},{},{},{}\n", num(obj.value(x)), num(grad_norm(obj, x)), kind, neg, points[i].hits);
  }
  out.files["critical.csv"] = csv;
  out.files["summary.json"] = dump(
      {{"surface", name}, {"starts", starts}, {"failed", failed}, {"unique", points.size()}, {"by_kind", counts}});
  return out;
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"saddle", "gmm", "smooth", "nn", "evo", "gendata", "surfscan"};
  return c;
}

RunOutput run(const std::string& command, const json& cfg, const std::string& text) {
  Reader reader(cfg, text);
  Section root = reader.root();
  const std::string declared = root.text("command", command);
  if (declared != command)
    root.fail("command", fmt::format("config is for '{}', not '{}'", declared, command));
  const bool stochastic = command != "saddle";
  const std::uint64_t seed = stochastic ? root.seed("seed") : 0;
  root.text("out", "");  // consumed by the front end

  RunOutput out;
  if (command == "saddle")
    out = run_saddle(root);
  else if (command == "gmm")
    out = run_gmm(root, seed);
  else if (command == "smooth")
    out = run_smooth(root, seed);
  else if (command == "nn")
    out = run_nn(root, seed);
  else if (command == "evo")
    out = run_evo(root, seed);
  else if (command == "gendata")
    out = run_gendata(root, seed);
  else if (command == "surfscan")
    out = run_surfscan(root, seed);
  else
    throw ConfigError(fmt::format("unknown command '{}'", command));
  reader.finish();
  // The run directory is not part of the experiment.
  json echo = reader.echo();
  echo.erase("out");
  out.files["config-echo.json"] = dump(echo);
  return out;
}

void write_output(const std::string& dir, const RunOutput& out) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir, ec.message()));
  for (const auto& [name, content] : out.files) {
    const fs::path p = fs::path(dir) / name;
    std::ofstream f(p, std::ios::binary);
    f << content;
    if (!f) throw IoError(fmt::format("cannot write '{}'", p.string()));
  }
}

std::string error_json(const std::exception& e) {
  json j;
  if (const auto* fe = dynamic_cast<const FieldError*>(&e)) {
    j["error"] = fe->kind();
    if (!fe->field.empty()) j["field"] = fe->field;
    if (fe->line > 0) j["line"] = fe->line;
  } else if (const auto* te = dynamic_cast<const Error*>(&e)) {
    j["error"] = te->kind();
  } else {
    j["error"] = "internal";
  }
  j["message"] = e.what();
  return j.dump();
}

}  // namespace ttech::cli
