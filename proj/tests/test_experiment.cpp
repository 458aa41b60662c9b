#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "inslicing/error.hpp"
#include "inslicing/experiment.hpp"

using namespace inslicing;
using namespace inslicing::experiment;
using nlohmann::json;

namespace {

json small_toy_config() {
  return json::parse(R"({
    "scenario": {"type": "toy"},
    "seeds": [0, 1],
    "surrogate": {"samples": 120, "steps": 150},
    "budget": {"evals": 1500, "gbo_evals": 30},
    "ga": {"population_size": 20}
  })");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("default configuration") {
  const auto c = parse_config(json::object());
  CHECK(c.scenario.slices == 9);
  CHECK(c.scenario.resources == 6);
  CHECK(c.methods.size() == 3);
  CHECK(c.hybrid.trm_interval == 5);
  CHECK(c.hybrid.ga.population_size == 50);
  CHECK(c.hybrid.ga.crossover_prob == 0.9);
  CHECK(c.hybrid.ga.base_mutation_rate == 0.2);
  CHECK(c.hybrid.trm.initial_radius == 0.2);
  CHECK(c.hybrid.trm.max_iterations == 25);
  CHECK(c.surrogate.train.steps == 1000);
  CHECK(c.effective_gbo_budget() == static_cast<int>(c.surrogate.samples));
}

TEST_CASE("seed ranges") {
  const auto c = parse_config(json::parse(R"({"seeds": {"start": 3, "count": 4}})"));
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4, 5, 6});
  CHECK(c.scalability_seeds == c.seeds);
}

TEST_CASE("malformed configurations are rejected with ConfigError") {
  const char* bad[] = {
      R"({"unknown": 1})",
      R"({"ga": {"population": 10}})",
      R"({"methods": ["random-search"]})",
      R"({"methods": []})",
      R"({"seeds": [-1]})",
      R"({"seeds": "all"})",
      R"({"penalty": {"c1": -1}})",
      R"({"scenario": {"type": "file"}})",
      R"({"scenario": {"type": "lattice"}})",
      R"({"surrogate": {"sampling": "sobol"}})",
      R"({"surrogate": {"steps": 0}})",
      R"({"ga": {"crossover_prob": 2.0}})",
      R"({"trm_interval": 0})",
      R"({"trm": {"shrink": 3.0}})",
      R"({"ga": {"population_size": "fifty"}})",
      R"({"budget": {"evals": 5}})",
  };
  for (const char* text : bad) {
    CAPTURE(text);
    CHECK_THROWS_AS(parse_config(json::parse(text)), ConfigError);
  }
}

TEST_CASE("missing config file names the path") {
  try {
    load_config("/nonexistent/inslicing.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/inslicing.json") != std::string::npos);
  }
}

TEST_CASE("number formatting") {
  CHECK(format_number(1.5) == "1.5");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0 / 3.0) == "0.3333333333");
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("reference optimum is the best final cost for the seed") {
  std::vector<harness::RunTrace> runs(3);
  runs[0].num_slices = runs[1].num_slices = runs[2].num_slices = 2;
  runs[0].final_cost = 3.0;
  runs[1].final_cost = 2.0;
  runs[2].final_cost = 1.0;
  runs[2].status = "failed";
  CHECK(reference_optimum(runs, 2, 0) == 2.0);
  CHECK(std::isinf(reference_optimum(runs, 3, 0)));
}

TEST_CASE("toy experiment reruns produce byte-identical CSV files") {
  const auto config = parse_config(small_toy_config());
  const auto base = std::filesystem::temp_directory_path() / "inslicing_experiment_determinism";
  std::filesystem::remove_all(base);
  const auto a = run_experiment(config);
  const auto b = run_experiment(config);
  write_outputs(a, base / "a");
  write_outputs(b, base / "b");
  std::size_t compared = 0;
  for (const auto& entry : std::filesystem::directory_iterator(base / "a")) {
    if (entry.path().extension() != ".csv" || entry.path().filename() == "timing.csv") continue;
    CAPTURE(entry.path().filename().string());
    CHECK(slurp(entry.path()) == slurp(base / "b" / entry.path().filename()));
    ++compared;
  }
  CHECK(compared >= 5);
  CHECK(std::filesystem::exists(base / "a" / "timing.csv"));
  CHECK(std::filesystem::exists(base / "a" / "models" / "slice_0.json"));
  CHECK(a.runs.size() == 6);
  for (const auto& r : a.runs) {
    CHECK(r.status == "ok");
    CHECK(r.validated);
  }

  const std::string summary = slurp(base / "a" / "summary.csv");
  CHECK(summary.rfind("method,", 0) == 0);
  std::filesystem::remove_all(base);
}
