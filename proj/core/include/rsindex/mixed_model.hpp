#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rsindex/data_model.hpp"

namespace rsindex {

// Conventional mixed effects comparison model
//   y_ijz = mu + beta_t + alpha_i + tau_z + eps_ijz
// with house and ZIP random intercepts and homoscedastic errors.
struct MixedParams {
  double mu = 0.0;
  std::vector<double> beta;
  double sigma2_alpha = 0.0;
  double sigma2_tau = 0.0;
  double sigma2_eps = 0.0;

  void validate() const;
};

// Flattened training panel with house and ZIP grouping.
class MixedProblem {
 public:
  explicit MixedProblem(const PanelDataset& panel);

  struct House {
    std::string id;
    std::size_t zip = 0;
    std::size_t first = 0;
    std::size_t count = 0;
  };
  struct Zip {
    std::string name;
    std::size_t first_house = 0;
    std::size_t house_count = 0;
    std::size_t sale_count = 0;
  };

  std::size_t size() const { return log_price_.size(); }
  int periods() const { return periods_; }
  const std::vector<House>& houses() const { return houses_; }
  const std::vector<Zip>& zips() const { return zips_; }
  const std::vector<int>& period() const { return period_; }
  const std::vector<double>& log_price() const { return log_price_; }
  const std::vector<std::size_t>& quarter_counts() const {
    return quarter_counts_;
  }

 private:
  std::vector<int> period_;
  std::vector<double> log_price_;
  std::vector<House> houses_;
  std::vector<Zip> zips_;
  std::vector<std::size_t> quarter_counts_;
  int periods_ = 0;
};

double mixed_log_likelihood(const MixedProblem& problem,
                            const MixedParams& params);

struct MixedBeta {
  double mu = 0.0;
  std::vector<double> beta;
};
// GLS for (mu, beta) under the constraint sum_t n_t beta_t = 0.
MixedBeta mixed_update_beta(const MixedProblem& problem,
                            const MixedParams& params);

struct MixedBlups {
  std::vector<double> alpha;  // per house, MixedProblem order
  std::vector<double> tau;    // per ZIP
  int sweeps = 0;
  bool converged = false;
};

// Alternating house/ZIP BLUP updates until the max-norm change drops below
// tol or max_sweeps is reached.
MixedBlups mixed_blups(const MixedProblem& problem, const MixedParams& params,
                       bool alpha_first = true, double tol = 1e-8,
                       int max_sweeps = 500);

struct MixedFitConfig {
  double tol_beta = 1e-6;
  double tol_variance = 1e-8;
  int max_iters = 200;
  double blup_tol = 1e-8;
  int blup_max_sweeps = 500;
  std::optional<MixedParams> initial;
};

struct FittedMixedModel {
  MixedParams params;
  std::map<std::string, double> alpha_hat;
  std::map<std::string, double> tau_hat;
  std::map<std::string, std::size_t> zip_sales;
  double msr = 0.0;
  int iterations = 0;
  int blup_sweeps = 0;
  bool converged = false;
  std::vector<double> loglik_trace;

  int periods() const { return static_cast<int>(params.beta.size()); }
};

FittedMixedModel fit_mixed(const PanelDataset& train,
                           const MixedFitConfig& config = {});

struct MixedPrediction {
  double log_price = 0.0;
  double price = 0.0;
  bool unseen_house = false;
  bool unseen_zip = false;
};

MixedPrediction predict_mixed(const FittedMixedModel& model,
                              std::string_view house_id, std::string_view zip,
                              int target_quarter);

std::vector<GapResidual> mixed_training_residuals(
    const FittedMixedModel& model, const PanelDataset& train);

}  // namespace rsindex
