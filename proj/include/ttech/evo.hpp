#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ttech/core.hpp"
#include "ttech/dynsys.hpp"
#include "ttech/solvers.hpp"
#include "ttech/tiersearch.hpp"

namespace ttech::evo {

enum class Variant { mutate, local_refine, trust_tech };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct EvoConfig {
  int pop_size = 10;
  int generations = 100;
  int rounds = 10;  // recombinations per generation
  Variant variant = Variant::mutate;
  double sigma = 0.1;  // mutation scale, relative to the box width
  Vec lo, hi;          // initial population box
  /// Exploration around each child for the trust_tech variant (tier 1 only).
  tier::TierConfig tier = default_tier();
  std::uint64_t seed = 0;

  static tier::TierConfig default_tier();
  void validate(Index dim) const;
};

struct Population {
  std::vector<Vec> x;
  std::vector<double> f;

  size_t size() const { return x.size(); }
  size_t best() const;
  double mean() const;
};

/// Arithmetic blend: c1 = l p1 + (1 - l) p2, c2 = (1 - l) p1 + l p2.
std::pair<Vec, Vec> recombine(const Vec& p1, const Vec& p2, double lambda);
std::pair<Vec, Vec> recombine(const Vec& p1, const Vec& p2, std::mt19937_64& rng);

/// The variant's treatment of one child.
Vec perturb_child(const Vec& c, const Objective& obj, const EvoConfig& cfg, const LocalSolver& solver,
                  std::mt19937_64& rng);

/// Two random parents, two children; the best two of the four replace the parents.
void select_round(Population& pop, const Objective& obj, const EvoConfig& cfg, const LocalSolver& solver,
                  std::mt19937_64& rng);

struct GenerationStats {
  int generation;
  double best;
  double mean;
};

struct EvoResult {
  Vec best;
  double best_value = 0;
  std::vector<GenerationStats> history;  // generation 0 is the initial population
  Population population;
};

EvoResult ea_run(const Objective& obj, const EvoConfig& cfg, const LocalSolver& solver = {});

/// generation,best_value,mean_value
std::string history_csv(const std::vector<GenerationStats>& h);

/// Rastrigin-type multi-well test function 10 dim + sum(x_i^2 - 10 cos(2 pi x_i)).
Objective multiwell(Index dim = 2);

}  // namespace ttech::evo
