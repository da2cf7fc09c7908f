#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rsindex/data_model.hpp"

namespace rsindex {

// Parameters of the autoregressive repeat-sales model
//
//   y_ij = mu + beta_t(ij) + tau_z + u_ij,
//   u_ij = phi^gap * u_i,j-1 + eps_ij,
//
// with Var(eps_i1) = sigma2_eps / (1 - phi^2) and
// Var(eps_ij) = sigma2_eps (1 - phi^(2 gap)) / (1 - phi^2) for j > 1.
// beta has one entry per period and satisfies sum_t n_t beta_t = 0.
struct ARParams {
  double mu = 0.0;
  std::vector<double> beta;
  double phi = 0.95;
  double sigma2_eps = 0.0;
  double sigma2_tau = 0.0;

  // Throws kDomain for phi outside [0, 1), sigma2_eps <= 0 or sigma2_tau < 0.
  void validate() const;
};

// Per-ZIP transform T_z (unit lower-bidiagonal), diagonal r_z and T_z * 1.
// Entry k of `sub_diagonal` is the coefficient on sale k-1 in row k, i.e.
// -phi^gap for a repeat sale and 0 for a house's first sale.
struct TransformBlock {
  std::vector<double> sub_diagonal;
  std::vector<double> r;
  std::vector<double> ones_image;

  std::size_t size() const { return r.size(); }
  // T_z x for a vector in the block's sale order.
  std::vector<double> apply(std::span<const double> x) const;
};

// zip_block: the sales of one ZIP ordered house-major, by quarter within a
// house. Throws kMalformedSeries for a non-positive gap.
TransformBlock build_transform(std::span<const Sale> zip_block, double phi);

// Flattened view of a training panel used by every likelihood routine.
class ArProblem {
 public:
  explicit ArProblem(const PanelDataset& panel);

  struct Zip {
    std::string name;
    std::size_t first = 0;
    std::size_t count = 0;
  };

  std::size_t size() const { return log_price_.size(); }
  int periods() const { return periods_; }
  int max_gap() const { return max_gap_; }
  std::size_t repeat_sales() const { return repeat_sales_; }
  const std::vector<Zip>& zips() const { return zips_; }
  const std::vector<std::size_t>& quarter_counts() const {
    return quarter_counts_;
  }

  // Per-sale data: 0-based period, log price, gap to previous sale (0 for a
  // house's first sale).
  std::span<const int> period() const { return period_; }
  std::span<const double> log_price() const { return log_price_; }
  std::span<const int> gap() const { return gap_; }

  // Throws kIdentifiability naming every period without sales.
  void require_all_periods_observed() const;

 private:
  std::vector<int> period_;
  std::vector<double> log_price_;
  std::vector<int> gap_;
  std::vector<Zip> zips_;
  std::vector<std::size_t> quarter_counts_;
  int periods_ = 0;
  int max_gap_ = 0;
  std::size_t repeat_sales_ = 0;
};

// Log-likelihood of the transformed model, evaluated block by block with the
// diagonal-plus-rank-one structure of each V_zz.
double log_likelihood(const ArProblem& problem, const ARParams& params);
double log_likelihood(const PanelDataset& train, const ARParams& params);

// Partial derivatives of log_likelihood. Exposed for the fitting loop and
// for finite-difference checks.
double score_sigma_eps(const ArProblem& problem, const ARParams& params);
double score_sigma_tau(const ArProblem& problem, const ARParams& params);
double score_phi(const ArProblem& problem, const ARParams& params);

struct BetaUpdate {
  double mu = 0.0;
  std::vector<double> beta;  // all T entries; beta_T from the constraint
};

// GLS solve for (mu, beta_1..beta_{T-1}) with variance parameters held fixed.
BetaUpdate update_beta(const ArProblem& problem, const ARParams& params);

struct ScalarUpdate {
  double value = 0.0;
  bool at_boundary = false;
  int evaluations = 0;
};

// Each returns the stationary point of the log-likelihood slice in one
// parameter, others fixed. Throw kConvergence when no sign change of the
// score can be bracketed; update_phi throws kNonIdentifiable when the panel
// holds no repeat sales.
ScalarUpdate update_sigma_eps(const ArProblem& problem, const ARParams& params);
ScalarUpdate update_sigma_tau(const ArProblem& problem, const ARParams& params);
ScalarUpdate update_phi(const ArProblem& problem, const ARParams& params);

// Starting point for coordinate ascent: per-period mean log prices centred to
// the constraint, phi = 0.95, half the residual variance for sigma2_eps and
// the variance of per-ZIP mean residuals for sigma2_tau.
ARParams initial_params(const ArProblem& problem);

struct ArFitConfig {
  double tol_phi = 1e-6;
  double tol_variance = 1e-8;
  double tol_beta = 1e-6;
  int max_iters = 200;
  // Prior-precision multiplier on sigma2_eps / sigma2_tau in the ZIP BLUP.
  // 2 reproduces the published formula; 1 is the Henderson solution.
  double tau_prior_factor = 2.0;
  std::optional<ARParams> initial;
};

struct FittedARModel {
  ARParams params;
  std::map<std::string, double> tau_hat;
  std::map<std::string, std::size_t> zip_sales;
  double msr = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;
  double tau_prior_factor = 2.0;
  std::string stop_reason;

  int periods() const { return static_cast<int>(params.beta.size()); }
  // 0 for ZIPs absent from training.
  double tau(std::string_view zip) const;
};

// Coordinate ascent (beta, sigma2_eps, sigma2_tau, phi in that order) until
// every parameter moves less than its tolerance, then ZIP BLUPs and the
// training mean squared residual.
FittedARModel fit_ar(const PanelDataset& train, const ArFitConfig& config = {});

// ZIP-level BLUP for one block given fixed parameters.
double estimate_tau(const ARParams& params, std::span<const Sale> zip_block,
                    double prior_factor = 2.0);

struct PriorSale {
  int quarter = 0;
  double log_price = 0.0;
};

struct ArPrediction {
  double log_price = 0.0;  // conditional mean on the log scale
  double price = 0.0;      // exp(log_price + msr / 2)
  bool unseen_zip = false;
};

// Conditional mean of y at `quarter` given the previous sale's residual
// u_prev = y_prev - mu - beta_prev - tau and the gap since it.
struct LaggedResidual {
  double residual = 0.0;
  double gap = 1.0;
};
double conditional_log_mean(const ARParams& params, double tau, int quarter,
                            std::optional<LaggedResidual> lagged);

// Throws kDomain when the quarter lies outside 1..T or does not follow the
// previous sale.
ArPrediction predict_ar(const FittedARModel& model,
                        std::optional<PriorSale> previous, std::string_view zip,
                        int target_quarter);

// Training residuals y - yhat in panel order, with each sale's gap (0 for a
// house's first sale).
std::vector<GapResidual> ar_training_residuals(const FittedARModel& model,
                                               const PanelDataset& train);

}  // namespace rsindex
