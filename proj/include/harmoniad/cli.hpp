#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "harmoniad/config.hpp"
#include "harmoniad/evalio.hpp"

namespace harmoniad::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kNumericError = 4,
};

// Entry point of the `harmoniad` tool: gen | train | eval | infer | split.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Dataset containers: per sample "<name>.image" (f64 [1,H,W]),
// "<name>.mask" (u8 [H,W]) and "<name>.label" (f64 [class_id, anomalous]).
std::vector<evalio::TensorRecord> dataset_records(const std::vector<training::SynthSample>& samples);
std::vector<training::SynthSample> dataset_from_records(const std::vector<evalio::TensorRecord>& records);

// Checkpoints: "param.<group>" per parameter group, "adam.m.<group>",
// "adam.v.<group>", "adam.step" and "model.shape".
std::vector<evalio::TensorRecord> checkpoint_records(const ModelParams& params, const training::OptimState& optim);
ModelParams params_from_checkpoint(const std::vector<evalio::TensorRecord>& records);
training::OptimState optim_from_checkpoint(const std::vector<evalio::TensorRecord>& records, const ModelParams& params);

// Fixed-column metrics table.
std::string format_metrics_table(const std::vector<std::pair<std::string, evalio::Metrics>>& rows);

}  // namespace harmoniad::cli
