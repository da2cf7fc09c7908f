#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "manifest.hpp"
#include "rsindex/ingest.hpp"

namespace rsindex::cli {

struct BinningOptions {
  int period_months = 3;
  std::string epoch = "1985-07";
  std::optional<int> periods;
  double price_min = 0.0;
  bool drop_whole_house = false;

  IngestConfig to_config(std::uint64_t seed = 0) const;
};

struct FitOptions {
  std::string input;
  std::string model = "ar";
  std::string out;
  BinningOptions binning;
  int max_iters = 200;
  double tau_prior_factor = 2.0;
  bool allow_nonconverged = false;
};

struct EvaluateOptions {
  std::string input;
  std::uint64_t seed = 1;
  std::vector<std::string> models = {"ar", "mixed", "cs"};
  std::string out_dir;
  BinningOptions binning;
  int max_iters = 200;
  double tau_prior_factor = 2.0;
};

struct IndexOptions {
  std::string model;
  std::string out;
};

struct PredictOptions {
  std::string model;
  std::string sales;
  std::string out;
};

struct SimulateOptions {
  std::string config;
  std::string out;
  std::string truth_out;
  std::optional<std::uint64_t> seed;
};

struct DiagnoseOptions {
  std::string model;
  std::string train;
  std::string out_dir;
};

// Each command fills `run` with its config snapshot, inputs and outputs as
// it goes, so a manifest can be written even when it throws.
void run_fit(const FitOptions& opt, RunManifest& run);
void run_evaluate(const EvaluateOptions& opt, RunManifest& run);
void run_index(const IndexOptions& opt, RunManifest& run);
void run_predict(const PredictOptions& opt, RunManifest& run);
void run_simulate(const SimulateOptions& opt, RunManifest& run);
void run_diagnose(const DiagnoseOptions& opt, RunManifest& run);

}  // namespace rsindex::cli
