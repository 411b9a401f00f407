#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecl/artifacts.hpp"
#include "oracles.hpp"

using namespace ecl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ecl_test_artifacts";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<std::string> lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("format_double round-trips exactly") {
  Rng rng(1);
  for (int k = 0; k < 10000; ++k) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-300.0, 300.0));
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("binary parameter file round-trips bit for bit") {
  MlpConfig cfg;
  cfg.input_dim = 2;
  const ParameterVector p = oracle::random_params(cfg, 3);
  const fs::path path = scratch("p.bin");
  write_params_binary(path, p);
  CHECK(fs::file_size(path) == 16 + 8 * p.size());
  const ParameterVector q = read_params_binary(path);
  CHECK(q.config() == cfg);
  CHECK(q.values() == p.values());

  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "ECL1");
}

TEST_CASE("corrupt parameter files are rejected") {
  const fs::path path = scratch("bad.bin");
  std::ofstream(path, std::ios::binary) << "XXXX0000000000000000";
  CHECK_THROWS(read_params_binary(path));

  write_params_binary(path, init_params(MlpConfig{}, 1));
  fs::resize_file(path, fs::file_size(path) - 8);
  CHECK_THROWS(read_params_binary(path));
  CHECK_THROWS(read_params_binary(scratch("missing.bin")));
}

TEST_CASE("parameter CSV has one value per line") {
  const ParameterVector p = init_params(MlpConfig{}, 2);
  write_params_csv(scratch("p.csv"), p);
  const auto rows = lines(scratch("p.csv"));
  REQUIRE(rows.size() == p.size());
  CHECK(std::stod(rows[5]) == p.values()(5));
}

TEST_CASE("train record CSV columns depend on the objective") {
  TrainRecord r;
  r.objective = ObjectiveKind::Pinn;
  r.epochs.push_back({0, 3.0, 2.0, 1.0, 0.01, 0, 0, 0});
  write_train_record_csv(scratch("pinn.csv"), r);
  CHECK(lines(scratch("pinn.csv")) ==
        std::vector<std::string>{"epoch,total_loss,domain_loss,boundary_loss,lr", "0,3,2,1,0.01"});

  r.objective = ObjectiveKind::Pecann;
  r.epochs[0].mu = 2.0;
  r.epochs[0].mean_lambda = 0.5;
  r.epochs[0].mean_constraint = 0.25;
  write_train_record_csv(scratch("pec.csv"), r);
  CHECK(lines(scratch("pec.csv")) ==
        std::vector<std::string>{"epoch,total_loss,domain_loss,boundary_loss,lr,mu,mean_lambda,mean_constraint",
                                 "0,3,2,1,0.01,2,0.5,0.25"});
}

TEST_CASE("prediction and exact-grid CSVs") {
  const Problem p = Problem::poisson2d();
  const ModelEvaluation eval = evaluate_model(ParameterVector(MlpConfig{2, 8, 20}), p, 3);
  write_prediction_csv(scratch("pred.csv"), eval);
  const auto rows = lines(scratch("pred.csv"));
  REQUIRE(rows.size() == 10);
  CHECK(rows[0] == "x,y,u_pred,u_exact");
  CHECK(rows[1] == "0,0,0,1");

  write_exact_grid_csv(scratch("exact1d.csv"), Problem::poisson1d(5), 3);
  CHECK(lines(scratch("exact1d.csv"))[0] == "x,u_exact");
  CHECK(lines(scratch("exact1d.csv")).size() == 4);
}

TEST_CASE("landscape export") {
  LandscapeGrid g;
  g.alphas = Eigen::Vector3d(-1, 0, 1);
  g.betas = g.alphas;
  g.losses = Eigen::Matrix3d::Constant(2.0);
  g.losses(0, 2) = std::numeric_limits<double>::infinity();
  g.center_loss = 2.0;
  g.direction_seed = 13;
  g.half_range = 1.0;
  write_landscape(scratch("l.csv"), scratch("l.json"), g);
  const auto rows = lines(scratch("l.csv"));
  REQUIRE(rows.size() == 10);
  CHECK(rows[0] == "alpha,beta,loss");
  CHECK(rows[3] == "-1,1,inf");
  std::ifstream in(scratch("l.json"));
  const nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j.at("seed") == 13);
  CHECK(j.at("resolution") == 3);
  CHECK(j.at("normalization") == "filter");
  CHECK(j.at("center_loss") == 2.0);
  CHECK(j.at("half_range") == 1.0);
}

TEST_CASE("histogram export") {
  const auto hists = weight_histograms(init_params(MlpConfig{}, 1), 5);
  write_histograms(scratch("h.csv"), scratch("hs.csv"), hists);
  const auto rows = lines(scratch("h.csv"));
  CHECK(rows[0] == "layer,bin_left,bin_right,count");
  CHECK(rows.size() == 1 + 9 * 5);
  CHECK(rows[1].rfind("1,", 0) == 0);
  const auto summary = lines(scratch("hs.csv"));
  CHECK(summary[0] == "layer,mean,variance");
  CHECK(summary.size() == 10);
}

TEST_CASE("ALM state round-trips, including the initial infinite violation") {
  AlmState a;
  a.lambda = Eigen::Vector3d(0.1, 2.5, 1e-17);
  a.mu = 64.0;
  write_alm_state(scratch("alm.json"), a);
  AlmState b = read_alm_state(scratch("alm.json"));
  CHECK(b.lambda == a.lambda);
  CHECK(b.mu == 64.0);
  CHECK(std::isinf(b.previous_mean_violation));

  a.previous_mean_violation = 0.123456789;
  write_alm_state(scratch("alm.json"), a);
  b = read_alm_state(scratch("alm.json"));
  CHECK(b.previous_mean_violation == 0.123456789);
}
