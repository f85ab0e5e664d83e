#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "coopt/artifacts.hpp"
#include "coopt/io.hpp"
#include "coopt/optimizer.hpp"
#include "coopt/scenarios.hpp"
#include "doctest.h"
#include "test_data.hpp"

using namespace coopt;
namespace fs = std::filesystem;
using artifacts::Json;

TEST_SUITE("artifacts") {

TEST_CASE("configuration round trip and schema errors") {
  BatteryConfig cfg = BatteryConfig{}.with_round_trip(0.81);
  cfg.e_max = 12.5;
  const auto back = artifacts::battery_from_json(artifacts::to_json(cfg));
  CHECK(back.e_max == 12.5);
  CHECK(back.eta_c == cfg.eta_c);
  CHECK(back.eta_d == cfg.eta_d);

  const auto partial = artifacts::battery_from_json(Json{{"p_max", 3.0}, {"p_min", -3.0}});
  CHECK(partial.p_max == 3.0);
  CHECK(partial.e_max == BatteryConfig{}.e_max);

  CHECK_THROWS_AS(artifacts::battery_from_json(Json{{"e_maxx", 3.0}}), ValidationError);
  CHECK_THROWS_AS(artifacts::battery_from_json(Json{{"e_max", "ten"}}), ValidationError);
  CHECK_THROWS_AS(artifacts::battery_from_json(Json{{"e_0", 50.0}}), ValidationError);
  CHECK_THROWS_AS(artifacts::grid_from_json(Json{{"n_t", 0}}), ValidationError);

  const PriceSet p = artifacts::prices_from_json(Json{{"c_r", 20.0}});
  CHECK(p.c_r == 20.0);
  CHECK(artifacts::grid_from_json(artifacts::to_json(TimeGrid{48, 0.5})).n_t == 48);
}

TEST_CASE("model and policy round trip exactly") {
  const TimeGrid grid{12, 2.0};
  auto model = fit_uncertainty(testdata::ar_frequency(120, 12, 3), 1e-3);
  const Json mj = artifacts::wrap("coopt.model", "cfg", {{"train", "abc"}}, artifacts::model_payload(model));
  const auto m2 = artifacts::model_from_json(artifacts::parse_json(artifacts::dump(mj), "model"));
  CHECK(m2.mean == model.mean);
  CHECK(m2.w == model.w);
  CHECK(m2.w_inv == model.w_inv);
  CHECK(m2.sigma_f == model.sigma_f);
  CHECK(m2.sigma_b == model.sigma_b);
  CHECK(m2.epsilon == model.epsilon);
  CHECK(m2.training_hash == model.training_hash);
  CHECK(mj["inputs"]["train"] == "abc");

  BatteryConfig cfg;
  cfg.e_max = 4.0;
  cfg.e_0 = 2.0;
  const auto set = ProfileScenarioSet::uniform(testdata::net_profiles(4, 12, 5));
  const auto sol = solve(build_combined_problem(model, cfg, grid, PriceSet{}, set));
  REQUIRE(sol.feasible());
  const Json pj = artifacts::wrap("coopt.policy", "cfg", {}, artifacts::policy_payload(sol, cfg, grid, PriceSet{}));
  const auto back = artifacts::policy_from_json(artifacts::parse_json(artifacts::dump(pj), "policy"));
  CHECK(back.solution.r == sol.r);
  CHECK(back.solution.d == sol.d);
  CHECK(back.solution.envelope.e_max_sc == sol.envelope.e_max_sc);
  CHECK(back.solution.envelope.p_min_sc == sol.envelope.p_min_sc);
  CHECK(back.solution.fcr_revenue == sol.fcr_revenue);
  CHECK(back.has_sc);
  CHECK(back.solution.feasible());
  CHECK(back.grid.n_t == 12);
  CHECK(back.cfg.e_max == 4.0);

  // Same content, same bytes.
  CHECK(artifacts::dump(pj) ==
        artifacts::dump(artifacts::wrap("coopt.policy", "cfg", {}, artifacts::policy_payload(sol, cfg, grid, {}))));
  CHECK_THROWS_AS(artifacts::model_from_json(pj), ValidationError);
  Json bad = mj;
  bad["version"] = 99;
  CHECK_THROWS_AS(artifacts::model_from_json(bad), ValidationError);
  CHECK_THROWS_AS(artifacts::parse_json("{not json", "x"), ValidationError);
}

}  // TEST_SUITE

TEST_SUITE("cli") {

namespace {

fs::path scratch() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "coopt_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

int run(const std::string& args) {
  const std::string cmd = std::string(COOPT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Frequency, model and profiles shared by the cases below.
const fs::path& prepared() {
  static const fs::path dir = [] {
    const fs::path d = scratch();
    const std::string o = d.string();
    REQUIRE(run("--seed 1 -o " + o + "/raw synth-frequency --days 60") == 0);
    REQUIRE(run("--n-t 24 --seed 2 -o " + o + "/fold ingest -i " + o + "/raw/frequency_raw.csv") == 0);
    REQUIRE(run("--n-t 24 --epsilon 0.01 -o " + o + "/model fit --train " + o + "/fold/train.csv") == 0);
    REQUIRE(run("--n-t 24 --seed 3 -o " + o + "/prof synth-profiles -n 16") == 0);
    return d;
  }();
  return dir;
}

std::vector<std::vector<std::string>> read_rows(const fs::path& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(io::read_text(csv));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    for (auto part : io::split(line, ',')) f.emplace_back(part);
    rows.push_back(f);
  }
  return rows;
}

}  // namespace

TEST_CASE("exit codes") {
  const std::string o = prepared().string();
  // stochastic command without a seed
  CHECK(run("-o " + o + "/x synth-profiles -n 3") == 2);
  // unknown configuration key
  CHECK(run("--set battery.capacity=3 -o " + o + "/x fit --train " + o + "/fold/train.csv") == 2);
  // missing input file
  CHECK(run("--n-t 24 -o " + o + "/x fit --train " + o + "/nope.csv") == 2);
  // grid does not match the data
  CHECK(run("--n-t 12 -o " + o + "/x fit --train " + o + "/fold/train.csv") == 2);
  // unknown subcommand
  CHECK(run("frobnicate") == 2);
  // a reserve the battery cannot hold is reported as a solver outcome
  CHECK(run("--n-t 24 --epsilon 0.01 -o " + o + "/x optimize fcr --model " + o + "/model/model.json --fixed-r 50") ==
        3);
  CHECK(run("--n-t 24 --epsilon 0.01 -o " + o + "/ok optimize fcr --model " + o + "/model/model.json") == 0);
  CHECK(fs::exists(o + "/ok/policy.json"));
  CHECK(fs::exists(o + "/ok/summary.txt"));
}

TEST_CASE("epsilon study is nondecreasing in r") {
  const std::string o = prepared().string();
  REQUIRE(run("--n-t 24 -o " + o + "/se study epsilon --train " + o + "/fold/train.csv") == 0);
  const auto rows = read_rows(prepared() / "se/study_epsilon.csv");
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(rows[i][1]) >= std::stod(rows[i - 1][1]) - 1e-6);
}

TEST_CASE("price study trades self-consumption for reserve") {
  const std::string o = prepared().string();
  REQUIRE(run("--n-t 24 --epsilon 0.01 --set study.c_r=[0,10,20,40] -o " + o + "/sp study price --train " + o +
              "/fold/train.csv --scenarios " + o + "/prof/profiles.csv") == 0);
  const auto rows = read_rows(prepared() / "sp/study_price.csv");
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stod(rows[i][2]) >= std::stod(rows[i - 1][2]) - 1e-6);  // FCR revenue
    CHECK(std::stod(rows[i][3]) <= std::stod(rows[i - 1][3]) + 1e-6);  // self-consumption revenue
  }
}

}  // TEST_SUITE
