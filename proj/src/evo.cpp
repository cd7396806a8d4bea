#include "ttech/evo.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace ttech::evo {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::mutate:
      return "mutate";
    case Variant::local_refine:
      return "local_refine";
    case Variant::trust_tech:
      return "trust_tech";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::mutate, Variant::local_refine, Variant::trust_tech})
    if (s == to_string(v)) return v;
  throw ParameterError(fmt::format("unknown evolutionary variant '{}'", s));
}

tier::TierConfig EvoConfig::default_tier() {
  tier::TierConfig t;
  t.max_tiers = 1;
  t.max_evals = 100;
  t.step = 0.05;
  t.scale_steps = false;
  t.n_directions = 8;
  return t;
}

void EvoConfig::validate(Index dim) const {
  if (pop_size < 2) throw ParameterError("EvoConfig: pop_size must be at least 2");
  if (generations < 0 || rounds < 1) throw ParameterError("EvoConfig: generations >= 0 and rounds >= 1 required");
  if (!(sigma > 0)) throw ParameterError("EvoConfig: sigma must be positive");
  if (lo.size() != dim || hi.size() != dim) throw ParameterError("EvoConfig: box bounds must match the dimension");
  if (!((hi - lo).array() > 0).all()) throw ParameterError("EvoConfig: box must have positive width");
  tier.validate();
}

size_t Population::best() const {
  return static_cast<size_t>(std::min_element(f.begin(), f.end()) - f.begin());
}

double Population::mean() const { return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size()); }

std::pair<Vec, Vec> recombine(const Vec& p1, const Vec& p2, double lambda) {
  if (p1.size() != p2.size()) throw ParameterError("recombine: parents differ in dimension");
  return {lambda * p1 + (1 - lambda) * p2, (1 - lambda) * p1 + lambda * p2};
}

std::pair<Vec, Vec> recombine(const Vec& p1, const Vec& p2, std::mt19937_64& rng) {
  return recombine(p1, p2, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
}

Vec perturb_child(const Vec& c, const Objective& obj, const EvoConfig& cfg, const LocalSolver& solver,
                  std::mt19937_64& rng) {
  switch (cfg.variant) {
    case Variant::mutate: {
      std::normal_distribution<double> g(0.0, cfg.sigma);
      Vec m = c;
      for (Index i = 0; i < m.size(); ++i) m[i] += g(rng) * (cfg.hi[i] - cfg.lo[i]);
      return m;
    }
    case Variant::local_refine:
      return solver(c).x;
    case Variant::trust_tech: {
      tier::TierConfig t = cfg.tier;
      t.seed = rng();
      return tier::tier_search(obj, c, solver, t).best().point;
    }
  }
  return c;
}

void select_round(Population& pop, const Objective& obj, const EvoConfig& cfg, const LocalSolver& solver,
                  std::mt19937_64& rng) {
  if (pop.size() < 2) throw ParameterError("select_round: population needs at least two members");
  if (cfg.variant != Variant::mutate && !solver) throw ParameterError("select_round: variant needs a local solver");
  std::uniform_int_distribution<size_t> pick(0, pop.size() - 1);
  const size_t a = pick(rng);
  size_t b = pick(rng);
  while (b == a) b = pick(rng);
  auto [c1, c2] = recombine(pop.x[a], pop.x[b], rng);
  c1 = perturb_child(c1, obj, cfg, solver, rng);
  c2 = perturb_child(c2, obj, cfg, solver, rng);
  std::array<std::pair<double, Vec>, 4> quartet{{{pop.f[a], pop.x[a]},
                                                 {pop.f[b], pop.x[b]},
                                                 {obj.value(c1), c1},
                                                 {obj.value(c2), c2}}};
  // Parents come first, so ties keep them.
  std::stable_sort(quartet.begin(), quartet.end(), [](const auto& p, const auto& q) { return p.first < q.first; });
  pop.f[a] = quartet[0].first;
  pop.x[a] = quartet[0].second;
  pop.f[b] = quartet[1].first;
  pop.x[b] = quartet[1].second;
}

EvoResult ea_run(const Objective& obj, const EvoConfig& cfg, const LocalSolver& solver) {
  cfg.validate(obj.dim());
  if (cfg.variant != Variant::mutate && !solver) throw ParameterError("ea_run: variant needs a local solver");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EvoResult res;
  Population& pop = res.population;
  for (int i = 0; i < cfg.pop_size; ++i) {
    Vec x(obj.dim());
    for (Index j = 0; j < x.size(); ++j) x[j] = cfg.lo[j] + (cfg.hi[j] - cfg.lo[j]) * u(rng);
    pop.f.push_back(obj.value(x));
    pop.x.push_back(std::move(x));
  }
  res.history.push_back({0, pop.f[pop.best()], pop.mean()});
  for (int g = 1; g <= cfg.generations; ++g) {
    for (int r = 0; r < cfg.rounds; ++r) select_round(pop, obj, cfg, solver, rng);
    res.history.push_back({g, pop.f[pop.best()], pop.mean()});
  }
  res.best = pop.x[pop.best()];
  res.best_value = pop.f[pop.best()];
  return res;
}

std::string history_csv(const std::vector<GenerationStats>& h) {
  std::string out = "generation,best_value,mean_value\n";
  for (const auto& s : h) out += fmt::format("{},{:.17g},{:.17g}\n", s.generation, s.best, s.mean);
  return out;
}

Objective multiwell(Index dim) {
  constexpr double kTwoPi = 6.283185307179586;
  return Objective(
      "multiwell", dim,
      [](const Vec& x) {
        double s = 10.0 * static_cast<double>(x.size());
        for (Index i = 0; i < x.size(); ++i) s += x[i] * x[i] - 10 * std::cos(kTwoPi * x[i]);
        return s;
      },
      [](const Vec& x) {
        Vec g(x.size());
        for (Index i = 0; i < x.size(); ++i) g[i] = 2 * x[i] + 10 * kTwoPi * std::sin(kTwoPi * x[i]);
        return g;
      },
      [](const Vec& x) {
        Mat h = Mat::Zero(x.size(), x.size());
        for (Index i = 0; i < x.size(); ++i) h(i, i) = 2 + 10 * kTwoPi * kTwoPi * std::cos(kTwoPi * x[i]);
        return h;
      });
}

}  // namespace ttech::evo
