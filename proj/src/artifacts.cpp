#include "ecl/artifacts.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ecl {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'C', 'L', '1'};

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xffU));
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) out.put(static_cast<char>((bits >> (8 * k)) & 0xffU));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int k = 0; k < bytes; ++k) v |= static_cast<std::uint64_t>(p[k]) << (8 * k);
  return v;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

void write_params_binary(const std::filesystem::path& path, const ParameterVector& params) {
  std::ofstream out = open_out(path, true);
  const MlpConfig& cfg = params.config();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(cfg.input_dim));
  put_u32(out, static_cast<std::uint32_t>(cfg.hidden_layers));
  put_u32(out, static_cast<std::uint32_t>(cfg.hidden_width));
  for (const double v : params.values()) put_f64(out, v);
  finish(out, path);
}

ParameterVector read_params_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw std::runtime_error(path.string() + ": not an ECL1 parameter file");
  }
  MlpConfig cfg;
  cfg.input_dim = static_cast<int>(get_le(bytes.data() + 4, 4));
  cfg.hidden_layers = static_cast<int>(get_le(bytes.data() + 8, 4));
  cfg.hidden_width = static_cast<int>(get_le(bytes.data() + 12, 4));
  cfg.validate();
  const std::size_t count = cfg.parameter_count();
  if (bytes.size() != 16 + 8 * count) {
    throw std::runtime_error(path.string() + ": payload size does not match header architecture");
  }
  Eigen::VectorXd values(static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) {
    values(static_cast<Eigen::Index>(k)) =
        std::bit_cast<double>(get_le(bytes.data() + 16 + 8 * k, 8));
  }
  return ParameterVector(cfg, std::move(values));
}

void write_params_csv(const std::filesystem::path& path, const ParameterVector& params) {
  std::ofstream out = open_out(path);
  for (const double v : params.values()) out << format_double(v) << '\n';
  finish(out, path);
}

void write_train_record_csv(const std::filesystem::path& path, const TrainRecord& record) {
  std::ofstream out = open_out(path);
  const bool alm = record.objective == ObjectiveKind::Pecann;
  out << "epoch,total_loss,domain_loss,boundary_loss,lr";
  if (alm) out << ",mu,mean_lambda,mean_constraint";
  out << '\n';
  for (const EpochRecord& e : record.epochs) {
    out << e.epoch << ',' << format_double(e.total_loss) << ',' << format_double(e.domain_loss)
        << ',' << format_double(e.boundary_loss) << ',' << format_double(e.lr);
    if (alm) {
      out << ',' << format_double(e.mu) << ',' << format_double(e.mean_lambda) << ','
          << format_double(e.mean_constraint);
    }
    out << '\n';
  }
  finish(out, path);
}

namespace {

void write_coords_header(std::ostream& out, Eigen::Index dim) {
  out << (dim == 1 ? "x" : "x,y");
}

void write_coords(std::ostream& out, const Eigen::MatrixXd& points, Eigen::Index j) {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (i > 0) out << ',';
    out << format_double(points(i, j));
  }
}

}  // namespace

void write_prediction_csv(const std::filesystem::path& path, const ModelEvaluation& eval) {
  std::ofstream out = open_out(path);
  write_coords_header(out, eval.points.rows());
  out << ",u_pred,u_exact\n";
  for (Eigen::Index j = 0; j < eval.points.cols(); ++j) {
    write_coords(out, eval.points, j);
    out << ',' << format_double(eval.predicted(j)) << ',' << format_double(eval.exact(j)) << '\n';
  }
  finish(out, path);
}

void write_exact_grid_csv(const std::filesystem::path& path, const Problem& problem,
                          int resolution) {
  const Eigen::MatrixXd grid = evaluation_grid(problem, resolution);
  std::ofstream out = open_out(path);
  write_coords_header(out, grid.rows());
  out << ",u_exact\n";
  for (Eigen::Index j = 0; j < grid.cols(); ++j) {
    write_coords(out, grid, j);
    out << ',' << format_double(problem.exact(grid.col(j))) << '\n';
  }
  finish(out, path);
}

void write_landscape(const std::filesystem::path& csv_path,
                     const std::filesystem::path& json_path, const LandscapeGrid& grid) {
  std::ofstream out = open_out(csv_path);
  out << "alpha,beta,loss\n";
  for (Eigen::Index i = 0; i < grid.alphas.size(); ++i) {
    for (Eigen::Index j = 0; j < grid.betas.size(); ++j) {
      out << format_double(grid.alphas(i)) << ',' << format_double(grid.betas(j)) << ','
          << format_double(grid.losses(i, j)) << '\n';
    }
  }
  finish(out, csv_path);

  nlohmann::json meta;
  meta["seed"] = grid.direction_seed;
  meta["half_range"] = grid.half_range;
  meta["resolution"] = grid.alphas.size();
  meta["normalization"] = grid.normalization;
  meta["center_loss"] = grid.center_loss;
  meta["events"] = grid.events;
  std::ofstream js = open_out(json_path);
  js << meta.dump(2) << '\n';
  finish(js, json_path);
}

void write_histograms(const std::filesystem::path& csv_path,
                      const std::filesystem::path& summary_path,
                      const std::vector<LayerHistogram>& histograms) {
  std::ofstream out = open_out(csv_path);
  out << "layer,bin_left,bin_right,count\n";
  for (const LayerHistogram& h : histograms) {
    for (Eigen::Index k = 0; k < h.counts.size(); ++k) {
      out << h.layer_index << ',' << format_double(h.bin_edges(k)) << ','
          << format_double(h.bin_edges(k + 1)) << ',' << h.counts(k) << '\n';
    }
  }
  finish(out, csv_path);

  std::ofstream summary = open_out(summary_path);
  summary << "layer,mean,variance\n";
  for (const LayerHistogram& h : histograms) {
    summary << h.layer_index << ',' << format_double(h.mean) << ',' << format_double(h.variance)
            << '\n';
  }
  finish(summary, summary_path);
}

void write_alm_state(const std::filesystem::path& path, const AlmState& alm) {
  nlohmann::json j;
  j["lambda"] = std::vector<double>(alm.lambda.data(), alm.lambda.data() + alm.lambda.size());
  j["mu"] = alm.mu;
  j["mu_max"] = alm.mu_max;
  j["growth"] = alm.growth;
  j["shrink_factor"] = alm.shrink_factor;
  if (std::isfinite(alm.previous_mean_violation)) {
    j["previous_mean_violation"] = alm.previous_mean_violation;
  } else {
    j["previous_mean_violation"] = nullptr;
  }
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

AlmState read_alm_state(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  AlmState alm;
  const auto lambda = j.at("lambda").get<std::vector<double>>();
  alm.lambda = Eigen::Map<const Eigen::VectorXd>(lambda.data(), static_cast<Eigen::Index>(lambda.size()));
  alm.mu = j.at("mu").get<double>();
  alm.mu_max = j.at("mu_max").get<double>();
  alm.growth = j.at("growth").get<double>();
  alm.shrink_factor = j.at("shrink_factor").get<double>();
  if (!j.at("previous_mean_violation").is_null()) {
    alm.previous_mean_violation = j.at("previous_mean_violation").get<double>();
  }
  return alm;
}

}  // namespace ecl
