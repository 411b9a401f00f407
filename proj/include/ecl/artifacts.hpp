#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ecl/analysis.hpp"
#include "ecl/field_model.hpp"
#include "ecl/problems.hpp"
#include "ecl/training.hpp"

namespace ecl {

// Binary parameter file: 16-byte header ("ECL1", then input_dim,
// hidden_layers, hidden_width as little-endian uint32) followed by the
// parameter vector as little-endian IEEE-754 doubles.
void write_params_binary(const std::filesystem::path& path, const ParameterVector& params);
ParameterVector read_params_binary(const std::filesystem::path& path);

// One value per line, full round-trip precision.
void write_params_csv(const std::filesystem::path& path, const ParameterVector& params);

// epoch,total_loss,domain_loss,boundary_loss,lr[,mu,mean_lambda,mean_constraint]
void write_train_record_csv(const std::filesystem::path& path, const TrainRecord& record);

// x[,y],u_pred,u_exact
void write_prediction_csv(const std::filesystem::path& path, const ModelEvaluation& eval);

// x[,y],u_exact on the uniform evaluation grid.
void write_exact_grid_csv(const std::filesystem::path& path, const Problem& problem,
                          int resolution = 0);

// alpha,beta,loss plus a JSON sidecar (seed, range, resolution,
// normalization, center_loss, events).
void write_landscape(const std::filesystem::path& csv_path,
                     const std::filesystem::path& json_path, const LandscapeGrid& grid);

// layer,bin_left,bin_right,count and layer,mean,variance.
void write_histograms(const std::filesystem::path& csv_path,
                      const std::filesystem::path& summary_path,
                      const std::vector<LayerHistogram>& histograms);

// Multipliers and penalty, so PECANN landscapes can be rescanned later.
void write_alm_state(const std::filesystem::path& path, const AlmState& alm);
AlmState read_alm_state(const std::filesystem::path& path);

// Shortest decimal form that parses back to the same double ("inf", "-inf",
// "nan" for non-finite values).
std::string format_double(double value);

}  // namespace ecl
