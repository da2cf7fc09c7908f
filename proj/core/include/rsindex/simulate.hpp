#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rsindex/ar_model.hpp"
#include "rsindex/data_model.hpp"
#include "rsindex/mixed_model.hpp"

namespace rsindex {

enum class SaleTiming {
  // Sale quarters drawn uniformly without replacement, then sorted.
  kUniform,
  // First sale uniform, then 1 + geometric gaps with the configured mean;
  // sales falling past the last period are dropped.
  kGeometric,
};

struct SimConfig {
  int periods = 40;
  int zips = 50;
  int houses_per_zip = 560;
  // P(house sells k times) for k = 1, 2, ...; defaults follow the sale-count
  // mix of typical metro areas (about 66% / 27% / 6% / 1%).
  std::vector<double> sale_count_probs = {0.66, 0.27, 0.06, 0.01};
  SaleTiming timing = SaleTiming::kUniform;
  double mean_gap = 22.0;  // geometric timing only
  std::uint64_t seed = 1;

  // Throws kConfig for probabilities that do not sum to 1, more sales per
  // house than periods, or non-positive sizes.
  void validate() const;
};

// Truth of the Gaussian random-walk repeat-sales process:
// y_it = mu + beta_t + H_it + u_it, H a per-house random walk started at the
// house's first sale with N(0, sigma2_v) steps, u iid N(0, sigma2_u).
struct RandomWalkParams {
  double mu = 0.0;
  std::vector<double> beta;
  double sigma2_u = 0.0;
  double sigma2_v = 0.0;
};

struct ArSimulation {
  PanelDataset panel;
  ARParams truth;                      // beta centred to the constraint
  std::map<std::string, double> tau;   // true ZIP effects
  std::vector<double> latent;          // u per sale, panel order
};

struct MixedSimulation {
  PanelDataset panel;
  MixedParams truth;
  std::map<std::string, double> tau;
  std::map<std::string, double> alpha;
};

struct RandomWalkSimulation {
  PanelDataset panel;
  RandomWalkParams truth;
};

// A beta path of the given length: a drifting random walk starting at 0.
std::vector<double> sample_beta_path(int periods, std::uint64_t seed);

// When truth.beta is empty a path is sampled. beta is shifted (and mu
// compensated) so that sum_t n_t beta_t = 0 on the generated panel.
ArSimulation simulate_ar_panel(const SimConfig& config, ARParams truth);
MixedSimulation simulate_mixed_panel(const SimConfig& config,
                                     MixedParams truth);
RandomWalkSimulation simulate_cs_panel(const SimConfig& config,
                                       RandomWalkParams truth);

std::string house_name(int zip, int house);
std::string zip_name(int zip);

}  // namespace rsindex
