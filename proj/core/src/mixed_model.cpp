#include "rsindex/mixed_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <functional>
#include <numbers>
#include <utility>

#include "constrained_gls.hpp"
#include "rsindex/errors.hpp"

namespace rsindex {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct HouseStat {
  double n = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;
};

std::vector<HouseStat> house_stats(const MixedProblem& problem, double mu,
                                   const std::vector<double>& beta) {
  const auto& y = problem.log_price();
  const auto& t = problem.period();
  std::vector<HouseStat> stats;
  stats.reserve(problem.houses().size());
  for (const auto& h : problem.houses()) {
    HouseStat s;
    s.n = static_cast<double>(h.count);
    for (std::size_t k = h.first; k < h.first + h.count; ++k) {
      const double r = y[k] - mu - beta[t[k]];
      s.sum += r;
      s.sum_sq += r * r;
    }
    stats.push_back(s);
  }
  return stats;
}

// V_z = eps I + alpha blockdiag(1 1') + tau 1 1', inverted house by house and
// then with one rank-one correction for the ZIP effect.
double loglik_from_stats(const MixedProblem& problem,
                         const std::vector<HouseStat>& stats, double eps,
                         double alpha, double tau) {
  double total = 0.0;
  for (const auto& z : problem.zips()) {
    double log_det = 0.0, quad = 0.0, big_a = 0.0, big_b = 0.0;
    for (std::size_t i = z.first_house; i < z.first_house + z.house_count;
         ++i) {
      const HouseStat& s = stats[i];
      const double denom = eps + s.n * alpha;
      log_det += (s.n - 1.0) * std::log(eps) + std::log(denom);
      quad += (s.sum_sq - alpha / denom * s.sum * s.sum) / eps;
      big_a += s.n / denom;
      big_b += s.sum / denom;
    }
    log_det += std::log1p(tau * big_a);
    quad -= tau * big_b * big_b / (1.0 + tau * big_a);
    total += static_cast<double>(z.sale_count) * kLog2Pi + log_det + quad;
  }
  return -0.5 * total;
}

double mean_square_residual(const std::vector<HouseStat>& stats) {
  double ss = 0.0, n = 0.0;
  for (const HouseStat& s : stats) {
    ss += s.sum_sq;
    n += s.n;
  }
  return n > 0.0 ? ss / n : 0.0;
}

// Maximizes the likelihood slice in one variance over log scale; zero is
// tried explicitly when allowed since the log grid cannot reach it.
double maximize_variance(const std::function<double(double)>& loglik,
                         double current, double scale, bool allow_zero) {
  const double lo = std::log(1e-10 * scale);
  const double hi = std::log(10.0 * scale);
  const auto neg = [&](double u) { return -loglik(std::exp(u)); };
  const auto [u_best, neg_best] =
      boost::math::tools::brent_find_minima(neg, lo, hi, 50);
  double best = std::exp(u_best);
  double best_ll = -neg_best;
  if (allow_zero) {
    const double ll0 = loglik(0.0);
    if (ll0 >= best_ll) {
      best = 0.0;
      best_ll = ll0;
    }
  }
  return loglik(current) > best_ll ? current : best;
}

MixedParams initial_mixed_params(const MixedProblem& problem) {
  const auto& y = problem.log_price();
  const auto& t = problem.period();
  const std::size_t periods = static_cast<std::size_t>(problem.periods());
  std::vector<double> sum(periods, 0.0);
  double grand = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    sum[t[k]] += y[k];
    grand += y[k];
  }
  grand /= static_cast<double>(y.size());
  MixedParams p;
  p.mu = grand;
  p.beta.assign(periods, 0.0);
  const auto& n = problem.quarter_counts();
  for (std::size_t q = 0; q < periods; ++q) {
    if (n[q] > 0) p.beta[q] = sum[q] / static_cast<double>(n[q]) - grand;
  }

  const auto stats = house_stats(problem, p.mu, p.beta);
  const double total_var = std::max(mean_square_residual(stats), 1e-12);
  std::vector<double> zip_means;
  for (const auto& z : problem.zips()) {
    double s = 0.0;
    for (std::size_t i = z.first_house; i < z.first_house + z.house_count;
         ++i) {
      s += stats[i].sum;
    }
    zip_means.push_back(s / static_cast<double>(z.sale_count));
  }
  double zbar = 0.0;
  for (double m : zip_means) zbar += m;
  zbar /= static_cast<double>(zip_means.size());
  double zvar = 0.0;
  for (double m : zip_means) zvar += (m - zbar) * (m - zbar);
  if (zip_means.size() > 1) {
    zvar /= static_cast<double>(zip_means.size() - 1);
  }
  p.sigma2_tau = std::min(zvar, 0.5 * total_var);
  const double rest = std::max(total_var - p.sigma2_tau, 1e-12);
  p.sigma2_alpha = 0.5 * rest;
  p.sigma2_eps = 0.5 * rest;
  return p;
}

}  // namespace

void MixedParams::validate() const {
  if (!(sigma2_eps > 0.0)) {
    throw Error(ErrorKind::kDomain, "sigma2_eps must be positive");
  }
  if (!(sigma2_alpha >= 0.0) || !(sigma2_tau >= 0.0)) {
    throw Error(ErrorKind::kDomain, "random-effect variances must be >= 0");
  }
}

MixedProblem::MixedProblem(const PanelDataset& panel)
    : quarter_counts_(panel.quarter_counts()), periods_(panel.periods()) {
  const auto sales = panel.sales();
  period_.reserve(sales.size());
  log_price_.reserve(sales.size());
  for (const Sale& s : sales) {
    period_.push_back(s.quarter - 1);
    log_price_.push_back(s.log_price);
  }
  const auto houses = panel.houses();
  for (const ZipRange& z : panel.zips()) {
    const std::size_t zi = zips_.size();
    zips_.push_back(Zip{z.zip, z.first_house, z.house_count, z.sale_count});
    for (std::size_t i = z.first_house; i < z.first_house + z.house_count;
         ++i) {
      houses_.push_back(House{sales[houses[i].first_sale].house_id, zi,
                              houses[i].first_sale, houses[i].sale_count});
    }
  }
}

double mixed_log_likelihood(const MixedProblem& problem,
                            const MixedParams& params) {
  params.validate();
  const auto stats = house_stats(problem, params.mu, params.beta);
  return loglik_from_stats(problem, stats, params.sigma2_eps,
                           params.sigma2_alpha, params.sigma2_tau);
}

MixedBeta mixed_update_beta(const MixedProblem& problem,
                            const MixedParams& params) {
  params.validate();
  const auto& n = problem.quarter_counts();
  for (std::size_t q = 0; q < n.size(); ++q) {
    if (n[q] == 0) {
      throw Error(ErrorKind::kIdentifiability,
                  "no training sales in period " + std::to_string(q + 1));
    }
  }
  const int full = problem.periods() + 1;
  const double eps = params.sigma2_eps;
  const double alpha = params.sigma2_alpha;
  const double tau = params.sigma2_tau;
  const auto& y = problem.log_price();
  const auto& t = problem.period();

  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(full, full);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(full);
  Eigen::VectorXd g(full);

  for (const auto& z : problem.zips()) {
    g.setZero();
    double big_a = 0.0, g_y = 0.0;
    for (std::size_t i = z.first_house; i < z.first_house + z.house_count;
         ++i) {
      const auto& h = problem.houses()[i];
      const double j = static_cast<double>(h.count);
      const double denom = eps + j * alpha;
      const double c = alpha / denom;
      // Sparse house sums: mu coefficient J plus one per sale period.
      double sum_y = 0.0;
      for (std::size_t k = h.first; k < h.first + h.count; ++k) {
        const int col = t[k] + 1;
        normal(0, 0) += 1.0 / eps;
        normal(0, col) += 1.0 / eps;
        normal(col, 0) += 1.0 / eps;
        normal(col, col) += 1.0 / eps;
        rhs(0) += y[k] / eps;
        rhs(col) += y[k] / eps;
        sum_y += y[k];
      }
      if (c > 0.0) {
        for (std::size_t k = h.first; k < h.first + h.count; ++k) {
          const int col_k = t[k] + 1;
          for (std::size_t m = h.first; m < h.first + h.count; ++m) {
            normal(col_k, t[m] + 1) -= c / eps;
          }
          normal(0, col_k) -= c * j / eps;
          normal(col_k, 0) -= c * j / eps;
          rhs(col_k) -= c * sum_y / eps;
        }
        normal(0, 0) -= c * j * j / eps;
        rhs(0) -= c * j * sum_y / eps;
      }
      // X' H_i^-1 1 = S_i / (eps + J alpha).
      g(0) += j / denom;
      for (std::size_t k = h.first; k < h.first + h.count; ++k) {
        g(t[k] + 1) += 1.0 / denom;
      }
      big_a += j / denom;
      g_y += sum_y / denom;
    }
    if (tau > 0.0) {
      const double rho = tau / (1.0 + tau * big_a);
      normal.noalias() -= rho * g * g.transpose();
      rhs.noalias() -= rho * g_y * g;
    }
  }
  auto solution = detail::solve_constrained_gls(normal, rhs, n);
  return MixedBeta{solution.mu, std::move(solution.beta)};
}

MixedBlups mixed_blups(const MixedProblem& problem, const MixedParams& params,
                       bool alpha_first, double tol, int max_sweeps) {
  params.validate();
  const auto& y = problem.log_price();
  const auto& t = problem.period();
  const auto& houses = problem.houses();
  const auto& zips = problem.zips();

  std::vector<double> resid(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    resid[k] = y[k] - params.mu - params.beta[t[k]];
  }
  std::vector<double> house_sum(houses.size(), 0.0);
  for (std::size_t i = 0; i < houses.size(); ++i) {
    for (std::size_t k = houses[i].first;
         k < houses[i].first + houses[i].count; ++k) {
      house_sum[i] += resid[k];
    }
  }

  MixedBlups out;
  out.alpha.assign(houses.size(), 0.0);
  out.tau.assign(zips.size(), 0.0);

  const auto sweep_alpha = [&] {
    double change = 0.0;
    if (params.sigma2_alpha <= 0.0) return change;
    const double ratio = params.sigma2_eps / params.sigma2_alpha;
    for (std::size_t i = 0; i < houses.size(); ++i) {
      const double j = static_cast<double>(houses[i].count);
      const double next =
          (house_sum[i] - j * out.tau[houses[i].zip]) / (ratio + j);
      change = std::max(change, std::abs(next - out.alpha[i]));
      out.alpha[i] = next;
    }
    return change;
  };
  const auto sweep_tau = [&] {
    double change = 0.0;
    if (params.sigma2_tau <= 0.0) return change;
    const double ratio = params.sigma2_eps / params.sigma2_tau;
    for (std::size_t zi = 0; zi < zips.size(); ++zi) {
      const auto& z = zips[zi];
      double s = 0.0;
      for (std::size_t i = z.first_house; i < z.first_house + z.house_count;
           ++i) {
        s += house_sum[i] -
             static_cast<double>(houses[i].count) * out.alpha[i];
      }
      const double next = s / (ratio + static_cast<double>(z.sale_count));
      change = std::max(change, std::abs(next - out.tau[zi]));
      out.tau[zi] = next;
    }
    return change;
  };

  for (out.sweeps = 1; out.sweeps <= max_sweeps; ++out.sweeps) {
    double change = 0.0;
    if (alpha_first) {
      change = std::max(sweep_alpha(), sweep_tau());
    } else {
      const double dt = sweep_tau();
      change = std::max(dt, sweep_alpha());
    }
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  out.sweeps = std::min(out.sweeps, max_sweeps);
  return out;
}

FittedMixedModel fit_mixed(const PanelDataset& train,
                           const MixedFitConfig& config) {
  if (train.empty()) {
    throw Error(ErrorKind::kEmptyInput, "training panel is empty");
  }
  const MixedProblem problem(train);
  MixedParams params = config.initial.value_or(initial_mixed_params(problem));
  if (params.beta.size() != static_cast<std::size_t>(problem.periods())) {
    throw Error(ErrorKind::kConfig, "initial beta has wrong length");
  }
  params.validate();

  FittedMixedModel model;
  double ll = mixed_log_likelihood(problem, params);
  model.loglik_trace.push_back(ll);

  bool converged = false;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const MixedParams before = params;
    {
      MixedBeta b = mixed_update_beta(problem, params);
      MixedParams c = params;
      c.mu = b.mu;
      c.beta = std::move(b.beta);
      const double cand = mixed_log_likelihood(problem, c);
      if (cand >= ll) {
        params = std::move(c);
        ll = cand;
      }
    }
    const auto stats = house_stats(problem, params.mu, params.beta);
    const double scale = std::max(mean_square_residual(stats), 1e-12);
    params.sigma2_eps = maximize_variance(
        [&](double v) {
          return loglik_from_stats(problem, stats, v, params.sigma2_alpha,
                                   params.sigma2_tau);
        },
        params.sigma2_eps, scale, false);
    params.sigma2_alpha = maximize_variance(
        [&](double v) {
          return loglik_from_stats(problem, stats, params.sigma2_eps, v,
                                   params.sigma2_tau);
        },
        params.sigma2_alpha, scale, true);
    params.sigma2_tau = maximize_variance(
        [&](double v) {
          return loglik_from_stats(problem, stats, params.sigma2_eps,
                                   params.sigma2_alpha, v);
        },
        params.sigma2_tau, scale, true);
    ll = loglik_from_stats(problem, stats, params.sigma2_eps,
                           params.sigma2_alpha, params.sigma2_tau);
    model.loglik_trace.push_back(ll);
    model.iterations = iter;

    double max_beta_change = std::abs(params.mu - before.mu);
    for (std::size_t q = 0; q < params.beta.size(); ++q) {
      max_beta_change =
          std::max(max_beta_change, std::abs(params.beta[q] - before.beta[q]));
    }
    if (max_beta_change < config.tol_beta &&
        std::abs(params.sigma2_eps - before.sigma2_eps) <
            config.tol_variance &&
        std::abs(params.sigma2_alpha - before.sigma2_alpha) <
            config.tol_variance &&
        std::abs(params.sigma2_tau - before.sigma2_tau) <
            config.tol_variance) {
      converged = true;
      break;
    }
  }

  model.params = params;
  const MixedBlups blups = mixed_blups(problem, params, true, config.blup_tol,
                                       config.blup_max_sweeps);
  model.blup_sweeps = blups.sweeps;
  model.converged = converged && blups.converged;
  for (std::size_t i = 0; i < problem.houses().size(); ++i) {
    model.alpha_hat[problem.houses()[i].id] = blups.alpha[i];
  }
  for (std::size_t zi = 0; zi < problem.zips().size(); ++zi) {
    model.tau_hat[problem.zips()[zi].name] = blups.tau[zi];
    model.zip_sales[problem.zips()[zi].name] = problem.zips()[zi].sale_count;
  }

  double ss = 0.0;
  for (const GapResidual& r : mixed_training_residuals(model, train)) {
    ss += r.residual * r.residual;
  }
  model.msr = ss / static_cast<double>(train.size());
  return model;
}

MixedPrediction predict_mixed(const FittedMixedModel& model,
                              std::string_view house_id, std::string_view zip,
                              int target_quarter) {
  if (target_quarter < 1 || target_quarter > model.periods()) {
    throw Error(ErrorKind::kDomain, "target quarter " +
                                        std::to_string(target_quarter) +
                                        " outside 1.." +
                                        std::to_string(model.periods()));
  }
  MixedPrediction out;
  const auto a = model.alpha_hat.find(std::string(house_id));
  const auto z = model.tau_hat.find(std::string(zip));
  out.unseen_house = a == model.alpha_hat.end();
  out.unseen_zip = z == model.tau_hat.end();
  out.log_price =
      model.params.mu +
      model.params.beta[static_cast<std::size_t>(target_quarter - 1)] +
      (out.unseen_house ? 0.0 : a->second) +
      (out.unseen_zip ? 0.0 : z->second);
  out.price = std::exp(out.log_price + 0.5 * model.msr);
  return out;
}

std::vector<GapResidual> mixed_training_residuals(
    const FittedMixedModel& model, const PanelDataset& train) {
  const auto sales = train.sales();
  std::vector<GapResidual> out;
  out.reserve(sales.size());
  for (std::size_t k = 0; k < sales.size(); ++k) {
    const Sale& s = sales[k];
    const int gap = s.ordinal > 1 ? s.quarter - sales[k - 1].quarter : 0;
    const double fitted =
        predict_mixed(model, s.house_id, s.zip, s.quarter).log_price;
    out.push_back({gap, s.log_price - fitted});
  }
  return out;
}

}  // namespace rsindex
