#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "runner.hpp"
#include "ttech/gmm.hpp"
#include "ttech/mlp.hpp"

using namespace ttech;
using cli::json;

namespace {

cli::RunOutput run(const std::string& command, const std::string& text) {
  return cli::run(command, cli::parse_config(text), text);
}

json summary(const cli::RunOutput& out) { return json::parse(out.files.at("summary.json")); }

int csv_rows(const std::string& csv) { return static_cast<int>(std::count(csv.begin(), csv.end(), '\n')) - 1; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("ttech_cli_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("saddle presets") {
  const json ab = summary(run("saddle", R"({"preset": "mb-AB"})"));
  REQUIRE(ab["records"].size() == 1);
  const json& r = ab["records"][0];
  CHECK(std::abs(r["ddp"][0].get<double>() + 0.822) < 1e-2);
  CHECK(std::abs(r["ddp"][1].get<double>() - 0.624) < 1e-2);
  CHECK(r["hessian_index"] == 1);
  CHECK(r["force_evals"].get<long>() > 0);

  const cli::RunOutput ek = run("saddle", R"({"preset": "eckhardt-AB"})");
  const json es = summary(ek);
  REQUIRE(es["records"].size() == 2);
  const double y0 = es["records"][0]["ddp"][1], y1 = es["records"][1]["ddp"][1];
  CHECK(std::abs(std::abs(y0) - 1.4644) < 1e-3);
  CHECK(y0 * y1 < 0);
  CHECK(es["A"][0] == -3.0);
  CHECK(ek.files.count("trace_0.csv") == 1);
  CHECK(ek.files.count("trace_1.csv") == 1);
  CHECK(ek.files.at("trace_0.csv").rfind("hop_index,x1,x2,grad_norm\n", 0) == 0);

  CHECK_THROWS_AS(run("saddle", R"({"preset": "mb-XY"})"), ConfigError);
}

TEST_CASE("config diagnostics name the field and line") {
  const std::string text = "{\n  \"preset\": \"mb-AB\",\n  \"saddle\": {\n    \"dt\": \"small\"\n  }\n}";
  try {
    run("saddle", text);
    FAIL("expected a config error");
  } catch (const cli::FieldError& e) {
    CHECK(e.field == "saddle.dt");
    CHECK(e.line == 4);
    const json j = json::parse(cli::error_json(e));
    CHECK(j["error"] == "config");
    CHECK(j["field"] == "saddle.dt");
    CHECK(j["line"] == 4);
  }
  try {
    run("saddle", "{\n  \"preset\": \"mb-AB\",\n  \"sadle\": {}\n}");
    FAIL("expected a config error");
  } catch (const cli::FieldError& e) {
    CHECK(e.field == "sadle");
    CHECK(e.line == 3);
  }
  try {
    cli::parse_config("{\n  \"a\": 1,\n  \"b\": }\n");
    FAIL("expected a parse error");
  } catch (const cli::FieldError& e) {
    CHECK(e.line == 3);
  }
  // Stochastic experiments need an explicit seed.
  CHECK_THROWS_AS(run("gendata", R"({"dataset": "spherical5"})"), ConfigError);
  CHECK_THROWS_AS(run("gmm", R"({"seed": -1})"), ConfigError);
  CHECK_THROWS_AS(run("gmm", R"({"seed": 1, "command": "evo"})"), ConfigError);
  CHECK_THROWS_AS(run("nn", R"({"seed": 1, "data_file": "/nonexistent/file.csv"})"), ConfigError);
  CHECK(json::parse(cli::error_json(NoConvergenceError("x", Vec())))["error"] == "no_convergence");
}

TEST_CASE("overrides") {
  json c = json::object();
  cli::apply_override(c, "em.tol=1e-8");
  cli::apply_override(c, "dataset=overlap4");
  cli::apply_override(c, "levels=[0, 0.5]");
  cli::apply_override(c, "em.reseed_empty=true");
  CHECK(c["em"]["tol"] == 1e-8);
  CHECK(c["dataset"] == "overlap4");
  CHECK(c["levels"].size() == 2);
  CHECK(c["em"]["reseed_empty"] == true);
  CHECK_THROWS_AS(cli::apply_override(c, "novalue"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "dataset.x=1"), ConfigError);
}

TEST_CASE("gendata writes the dataset and its true parameters") {
  const cli::RunOutput out = run("gendata", R"({"dataset": "spherical5", "n": 40, "seed": 5})");
  const std::string& csv = out.files.at("data.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 40);
  CHECK(std::count(csv.begin(), csv.begin() + static_cast<long>(csv.find('\n')), ',') == 1);
  const gmm::GmmParams truth = gmm::params_from_json(out.files.at("truth.json"));
  const double mu[5][2] = {{0.3, 0.3}, {0.5, 0.5}, {0.7, 0.7}, {0.3, 0.7}, {0.7, 0.3}};
  for (int i = 0; i < 5; ++i) {
    CHECK(truth.means(i, 0) == mu[i][0]);
    CHECK(truth.means(i, 1) == mu[i][1]);
    CHECK(truth.weights[i] == 0.2);
    CHECK(truth.covs[static_cast<size_t>(i)](0, 0) == doctest::Approx(1e-4).epsilon(1e-15));
  }
  CHECK(gmm::dataset_from_csv(csv).rows() == 40);
  const cli::RunOutput again = run("gendata", R"({"dataset": "spherical5", "n": 40, "seed": 5})");
  CHECK(again.files == out.files);
  CHECK(run("gendata", R"({"dataset": "spherical5", "n": 40, "seed": 6})").files.at("data.csv") != csv);
  CHECK_THROWS_AS(run("gendata", R"({"dataset": "spiral", "seed": 1})"), ConfigError);
}

TEST_CASE("gmm: em versus tt_em over 20 seeds on elliptical3") {
  const cli::RunOutput out = run("gmm", R"({"dataset": "elliptical3", "data_seed": 148, "seed": 1148, "starts": 20})");
  const json s = summary(out);
  CHECK(s["final_loglik"]["tt_em"]["mean"].get<double>() >= s["final_loglik"]["em"]["mean"].get<double>());
  CHECK(csv_rows(out.files.at("runs.csv")) == 40);
  // Paired rows: tt_em never ends below em from the same start.
  std::stringstream ss(out.files.at("runs.csv"));
  std::string line, em_final;
  std::getline(ss, line);
  while (std::getline(ss, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    REQUIRE(f.size() == 9);
    if (f[2] == "em")
      em_final = f[4];
    else if (f[8] == "ok" && !em_final.empty())
      CHECK(std::stod(f[4]) >= std::stod(em_final) - 1e-6);
  }
  CHECK(out.files.count("best_tt_em.json") == 1);
}

TEST_CASE("smooth census table") {
  const cli::RunOutput out =
      run("smooth", R"({"dataset": "spherical5", "seed": 3, "starts": 20, "levels": [0, 0.05]})");
  const std::string& csv = out.files.at("census.csv");
  CHECK(csv.rfind("level,unique_maxima_count\n", 0) == 0);
  CHECK(csv_rows(csv) == 2);
  CHECK(summary(out)["rows"].size() == 2);
}

TEST_CASE("nn k-fold on a user CSV") {
  const auto dir = scratch("nn");
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "data.csv");
    f << "x1,x2,label\n";
    const mlp::LabeledData m = mlp::two_moons(60, 0.1, 4);
    for (Index r = 0; r < m.size(); ++r) f << m.X(r, 0) << "," << m.X(r, 1) << "," << (m.t[r] > 0.5 ? "b" : "a") << "\n";
  }
  const std::string text = R"({"data_file": ")" + (dir / "data.csv").string() +
                           R"(", "header": true, "seed": 1, "folds": 4, "hidden": 3})";
  const cli::RunOutput out = run("nn", text);
  const std::string& csv = out.files.at("folds.csv");
  CHECK(csv.rfind("trainer,fold,train_mse,test_mse,accuracy\n", 0) == 0);
  CHECK(csv_rows(csv) == 8);
  const json s = summary(out);
  for (const char* t : {"lm", "trust_tech"}) {
    CHECK(s["trainers"][t]["fold_accuracy"]["count"] == 4);
    CHECK(s["trainers"][t]["accuracy"].get<double>() > 50);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("evo and surfscan tables") {
  const cli::RunOutput e = run("evo", R"({"seed": 0, "runs": 2, "generations": 5})");
  CHECK(csv_rows(e.files.at("runs.csv")) == 6);
  CHECK(csv_rows(e.files.at("history.csv")) == 36);
  CHECK(summary(e)["ordered_runs"].get<int>() <= 2);

  const json s = summary(run("surfscan", R"({"seed": 1, "surface": "muller_brown", "starts": 200})"));
  CHECK(s["by_kind"]["stable"] == 3);
  CHECK(s["by_kind"]["saddle"] == 2);
}

TEST_CASE("identical config and seed give byte-identical run directories") {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"saddle", R"({"preset": "lj3"})"},
      {"gmm", R"({"dataset": "spherical5", "seed": 2, "starts": 3})"},
      {"evo", R"({"seed": 4, "runs": 2, "generations": 5})"},
      {"surfscan", R"({"seed": 9, "starts": 50})"}};
  for (const auto& [command, text] : cases) {
    const auto a = scratch("det_a"), b = scratch("det_b");
    cli::write_output(a.string(), run(command, text));
    cli::write_output(b.string(), run(command, text));
    int files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(a)) {
      ++files;
      CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
    }
    CHECK(files >= 3);
    // The echo reproduces the run.
    const std::string echo = slurp(a / "config-echo.json");
    CHECK(run(command, echo).files == run(command, text).files);
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
  }
}
