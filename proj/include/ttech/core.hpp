#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace ttech {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Base of every error raised by the library. `kind()` is a stable machine-readable tag
/// (it is what the CLI writes into its error JSON).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct EvaluationError : Error {
  explicit EvaluationError(const std::string& m) : Error("evaluation", m) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& m) : Error("domain", m) {}
};

struct SingularityError : Error {
  explicit SingularityError(const std::string& m) : Error("singularity", m) {}
};

struct StepError : Error {
  StepError(const std::string& m, Index coord) : Error("step", m), coordinate(coord) {}
  Index coordinate;
};

struct DegenerateCriticalPointError : Error {
  explicit DegenerateCriticalPointError(const std::string& m) : Error("degenerate_critical_point", m) {}
};

struct NotCriticalError : Error {
  explicit NotCriticalError(const std::string& m) : Error("not_critical", m) {}
};

struct NoConvergenceError : Error {
  NoConvergenceError(const std::string& m, Vec last) : Error("no_convergence", m), last_iterate(std::move(last)) {}
  Vec last_iterate;
};

struct StallError : Error {
  explicit StallError(const std::string& m) : Error("stall", m) {}
};

struct WrongIndexError : Error {
  WrongIndexError(const std::string& m, int negatives) : Error("wrong_index", m), negative_count(negatives) {}
  int negative_count;
};

struct FellIntoBasinError : Error {
  explicit FellIntoBasinError(const std::string& m) : Error("fell_into_basin", m) {}
};

struct DegenerateExitError : Error {
  explicit DegenerateExitError(const std::string& m) : Error("degenerate_exit", m) {}
};

struct NoExitPointError : Error {
  explicit NoExitPointError(const std::string& m) : Error("no_exit_point", m) {}
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& m) : Error("parameter", m) {}
};

struct EmptyComponentError : Error {
  EmptyComponentError(const std::string& m, int comp, int iter)
      : Error("empty_component", m), component(comp), iteration(iter) {}
  int component;
  int iteration;
};

struct StrategyError : Error {
  explicit StrategyError(const std::string& m) : Error("strategy", m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace ttech
