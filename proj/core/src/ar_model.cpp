#include "rsindex/ar_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

#include "constrained_gls.hpp"
#include "rsindex/errors.hpp"
#include "rsindex/root_finding.hpp"

namespace rsindex {
namespace {

constexpr double kPhiLo = 1e-6;
constexpr double kPhiHi = 1.0 - 1e-6;
constexpr double kSigmaEpsFloor = 1e-12;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// phi^g for g = 0..max_gap.
std::vector<double> power_table(double phi, int max_gap) {
  std::vector<double> p(static_cast<std::size_t>(max_gap) + 1);
  for (int g = 0; g <= max_gap; ++g) p[g] = std::pow(phi, g);
  return p;
}

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// Residuals y - mu - beta_t for every sale.
std::vector<double> fixed_effect_residuals(const ArProblem& problem,
                                           const ARParams& params) {
  const auto y = problem.log_price();
  const auto t = problem.period();
  std::vector<double> w(problem.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = y[k] - params.mu - params.beta[t[k]];
  }
  return w;
}

// Per-ZIP sufficient statistics with the variance scale removed: with
// d0_k = r_k / (1 - phi^2) the block covariance is
// V = sigma2_eps * diag(d0) + sigma2_tau * a a', a = T 1.
struct ZipStat {
  double n = 0.0;
  double a0 = 0.0;  // a' diag(d0)^-1 a
  double b0 = 0.0;  // a' diag(d0)^-1 q,   q = T w
  double q0 = 0.0;  // q' diag(d0)^-1 q
  double l0 = 0.0;  // sum log d0
};

std::vector<ZipStat> zip_stats(const ArProblem& problem,
                               const ARParams& params) {
  const auto gap = problem.gap();
  const auto pw = power_table(params.phi, problem.max_gap());
  const double one_minus_phi2 = 1.0 - params.phi * params.phi;
  const auto w = fixed_effect_residuals(problem, params);

  std::vector<ZipStat> stats;
  stats.reserve(problem.zips().size());
  for (const auto& z : problem.zips()) {
    ZipStat s;
    s.n = static_cast<double>(z.count);
    for (std::size_t k = z.first; k < z.first + z.count; ++k) {
      double c = 0.0, q = w[k];
      if (gap[k] > 0) {
        c = pw[gap[k]];
        q -= c * w[k - 1];
      }
      const double r = 1.0 - c * c;
      const double a = 1.0 - c;
      const double d0 = r / one_minus_phi2;
      s.a0 += a * a / d0;
      s.b0 += a * q / d0;
      s.q0 += q * q / d0;
      s.l0 += std::log(d0);
    }
    stats.push_back(s);
  }
  return stats;
}

double loglik_from_stats(const std::vector<ZipStat>& stats, double sigma,
                         double lambda) {
  double total = 0.0;
  for (const ZipStat& s : stats) {
    const double denom = sigma + lambda * s.a0;
    const double log_det = s.l0 + (s.n - 1.0) * std::log(sigma) +
                           std::log(denom);
    const double quad = s.q0 / sigma - lambda * s.b0 * s.b0 / (sigma * denom);
    total += s.n * kLog2Pi + log_det + quad;
  }
  return -0.5 * total;
}

double sigma_eps_score_from_stats(const std::vector<ZipStat>& stats,
                                  double sigma, double lambda) {
  double total = 0.0;
  for (const ZipStat& s : stats) {
    const double denom = sigma + lambda * s.a0;
    total += (s.n - 1.0) / sigma + 1.0 / denom - s.q0 / (sigma * sigma) +
             lambda * s.b0 * s.b0 * (2.0 * sigma + lambda * s.a0) /
                 (sigma * sigma * denom * denom);
  }
  return -0.5 * total;
}

double sigma_tau_score_from_stats(const std::vector<ZipStat>& stats,
                                  double sigma, double lambda) {
  double total = 0.0;
  for (const ZipStat& s : stats) {
    const double denom = sigma + lambda * s.a0;
    total += s.a0 / denom - s.b0 * s.b0 / (denom * denom);
  }
  return -0.5 * total;
}

double mean_square(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return ss / static_cast<double>(v.size());
}

// BLUP of tau_z from already-transformed block quantities.
double tau_blup(double a_r_a, double a_r_q, const ARParams& p, double factor) {
  if (p.sigma2_tau <= 0.0) return 0.0;
  const double one_minus_phi2 = 1.0 - p.phi * p.phi;
  return one_minus_phi2 * a_r_q /
         (factor * p.sigma2_eps / p.sigma2_tau + one_minus_phi2 * a_r_a);
}

std::string describe_phi_slice(const ArProblem& problem, ARParams p) {
  std::ostringstream os;
  os << "log-likelihood slice in phi:";
  for (double phi : {0.05, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999}) {
    p.phi = phi;
    os << " (" << phi << ", " << log_likelihood(problem, p) << ")";
  }
  return os.str();
}

}  // namespace

void ARParams::validate() const {
  if (!(phi >= 0.0 && phi < 1.0)) {
    throw Error(ErrorKind::kDomain, "phi must lie in [0, 1)");
  }
  if (!(sigma2_eps > 0.0)) {
    throw Error(ErrorKind::kDomain,
                "sigma2_eps must be positive for V to be positive definite");
  }
  if (!(sigma2_tau >= 0.0)) {
    throw Error(ErrorKind::kDomain, "sigma2_tau must be non-negative");
  }
}

std::vector<double> TransformBlock::apply(std::span<const double> x) const {
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t k = 1; k < out.size(); ++k) {
    out[k] += sub_diagonal[k] * x[k - 1];
  }
  return out;
}

TransformBlock build_transform(std::span<const Sale> zip_block, double phi) {
  TransformBlock block;
  block.sub_diagonal.assign(zip_block.size(), 0.0);
  block.r.assign(zip_block.size(), 1.0);
  block.ones_image.assign(zip_block.size(), 1.0);
  for (std::size_t k = 1; k < zip_block.size(); ++k) {
    if (zip_block[k].house_id != zip_block[k - 1].house_id) continue;
    const int gap = zip_block[k].quarter - zip_block[k - 1].quarter;
    if (gap <= 0) {
      throw Error(ErrorKind::kMalformedSeries,
                  "non-positive gap for house " + zip_block[k].house_id);
    }
    const double c = std::pow(phi, gap);
    block.sub_diagonal[k] = -c;
    block.r[k] = 1.0 - c * c;
    block.ones_image[k] = 1.0 - c;
  }
  return block;
}

ArProblem::ArProblem(const PanelDataset& panel) : periods_(panel.periods()) {
  const auto sales = panel.sales();
  period_.reserve(sales.size());
  log_price_.reserve(sales.size());
  gap_.reserve(sales.size());
  for (std::size_t k = 0; k < sales.size(); ++k) {
    period_.push_back(sales[k].quarter - 1);
    log_price_.push_back(sales[k].log_price);
    int gap = 0;
    if (sales[k].ordinal > 1) {
      gap = sales[k].quarter - sales[k - 1].quarter;
      ++repeat_sales_;
    }
    gap_.push_back(gap);
    max_gap_ = std::max(max_gap_, gap);
  }
  for (const ZipRange& z : panel.zips()) {
    zips_.push_back(Zip{z.zip, z.first_sale, z.sale_count});
  }
  quarter_counts_ = panel.quarter_counts();
}

void ArProblem::require_all_periods_observed() const {
  std::string empty;
  for (std::size_t t = 0; t < quarter_counts_.size(); ++t) {
    if (quarter_counts_[t] == 0) {
      if (!empty.empty()) empty += ", ";
      empty += std::to_string(t + 1);
    }
  }
  if (periods_ < 1) {
    throw Error(ErrorKind::kIdentifiability, "panel has no periods");
  }
  if (!empty.empty()) {
    throw Error(ErrorKind::kIdentifiability,
                "no training sales in period(s) " + empty);
  }
}

double log_likelihood(const ArProblem& problem, const ARParams& params) {
  params.validate();
  return loglik_from_stats(zip_stats(problem, params), params.sigma2_eps,
                           params.sigma2_tau);
}

double log_likelihood(const PanelDataset& train, const ARParams& params) {
  return log_likelihood(ArProblem(train), params);
}

double score_sigma_eps(const ArProblem& problem, const ARParams& params) {
  params.validate();
  return sigma_eps_score_from_stats(zip_stats(problem, params),
                                    params.sigma2_eps, params.sigma2_tau);
}

double score_sigma_tau(const ArProblem& problem, const ARParams& params) {
  params.validate();
  return sigma_tau_score_from_stats(zip_stats(problem, params),
                                    params.sigma2_eps, params.sigma2_tau);
}

double score_phi(const ArProblem& problem, const ARParams& params) {
  params.validate();
  const double phi = params.phi;
  const double lambda = params.sigma2_tau;
  const double one_minus_phi2 = 1.0 - phi * phi;
  const double s = params.sigma2_eps / one_minus_phi2;
  const double ds = 2.0 * phi * params.sigma2_eps /
                    (one_minus_phi2 * one_minus_phi2);
  const auto gap = problem.gap();
  const auto pw = power_table(phi, problem.max_gap());
  const auto w = fixed_effect_residuals(problem, params);

  // Per sale: c = phi^g, r = 1 - c^2, a = 1 - c, q = w - c w_prev and their
  // phi-derivatives; d = s r is the diagonal of V before the rank-one term.
  struct Row {
    double a, da, q, dq, d, e;
  };
  std::vector<Row> rows;
  double total = 0.0;
  for (const auto& z : problem.zips()) {
    rows.clear();
    double big_a = 0.0, big_b = 0.0;
    for (std::size_t k = z.first; k < z.first + z.count; ++k) {
      Row row{1.0, 0.0, w[k], 0.0, s, ds};
      if (gap[k] > 0) {
        const int g = gap[k];
        const double c = pw[g];
        const double dc = g * pw[g - 1];
        const double r = 1.0 - c * c;
        const double dr = -2.0 * c * dc;
        row.a = 1.0 - c;
        row.da = -dc;
        row.q = w[k] - c * w[k - 1];
        row.dq = -dc * w[k - 1];
        row.d = s * r;
        row.e = ds * r + s * dr;
      }
      big_a += row.a * row.a / row.d;
      big_b += row.a * row.q / row.d;
      rows.push_back(row);
    }
    const double rho = lambda / (1.0 + lambda * big_a);
    double trace_diag = 0.0, a_da = 0.0, quad_diag = 0.0, p_da = 0.0,
           p_dq = 0.0;
    for (const Row& row : rows) {
      const double p = (row.q - rho * big_b * row.a) / row.d;
      trace_diag += row.e / row.d - rho * row.e * row.a * row.a /
                                        (row.d * row.d);
      a_da += row.a * row.da / row.d;
      quad_diag += row.e * p * p;
      p_da += p * row.da;
      p_dq += p * row.dq;
    }
    const double shrink = 1.0 - rho * big_a;  // a' V^-1 a = A * shrink
    const double trace_rank = 2.0 * lambda * shrink * a_da;
    const double quad_rank = 2.0 * lambda * p_da * big_b * shrink;
    total += -0.5 * (trace_diag + trace_rank) + 0.5 * (quad_diag + quad_rank) -
             p_dq;
  }
  return total;
}

BetaUpdate update_beta(const ArProblem& problem, const ARParams& params) {
  params.validate();
  problem.require_all_periods_observed();
  const int periods = problem.periods();
  const int full = periods + 1;  // mu, beta_1..beta_T
  const double phi = params.phi;
  const double lambda = params.sigma2_tau;
  const double s = params.sigma2_eps / (1.0 - phi * phi);
  const auto gap = problem.gap();
  const auto t = problem.period();
  const auto y = problem.log_price();
  const auto pw = power_table(phi, problem.max_gap());

  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(full, full);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(full);
  Eigen::VectorXd h(full);

  for (const auto& z : problem.zips()) {
    h.setZero();
    double big_a = 0.0, a_ty = 0.0;
    for (std::size_t k = z.first; k < z.first + z.count; ++k) {
      // Row k of T X in full coordinates has at most three entries.
      int idx[3] = {0, t[k] + 1, -1};
      double val[3] = {1.0, 1.0, 0.0};
      double ty = y[k];
      double d = s;
      if (gap[k] > 0) {
        const double c = pw[gap[k]];
        val[0] = 1.0 - c;
        idx[2] = t[k - 1] + 1;
        val[2] = -c;
        ty -= c * y[k - 1];
        d = s * (1.0 - c * c);
      }
      const double a = val[0];
      const int nnz = idx[2] < 0 ? 2 : 3;
      for (int i = 0; i < nnz; ++i) {
        for (int j = 0; j < nnz; ++j) {
          normal(idx[i], idx[j]) += val[i] * val[j] / d;
        }
        rhs(idx[i]) += val[i] * ty / d;
        h(idx[i]) += a * val[i] / d;
      }
      big_a += a * a / d;
      a_ty += a * ty / d;
    }
    if (lambda > 0.0) {
      const double rho = lambda / (1.0 + lambda * big_a);
      normal.noalias() -= rho * h * h.transpose();
      rhs.noalias() -= rho * a_ty * h;
    }
  }

  auto solution =
      detail::solve_constrained_gls(normal, rhs, problem.quarter_counts());
  BetaUpdate out;
  out.mu = solution.mu;
  out.beta = std::move(solution.beta);
  return out;
}

ScalarUpdate update_sigma_eps(const ArProblem& problem,
                              const ARParams& params) {
  params.validate();
  const auto stats = zip_stats(problem, params);
  const double lambda = params.sigma2_tau;
  const auto score = [&](double sigma) {
    return sigma_eps_score_from_stats(stats, sigma, lambda);
  };

  ScalarUpdate out;
  const double lo = kSigmaEpsFloor;
  const double f_lo = score(lo);
  if (!(f_lo > 0.0)) {
    // Residuals vanish: the slice increases towards zero variance.
    out.value = lo;
    out.at_boundary = true;
    return out;
  }
  double hi = 10.0 *
              std::max(mean_square(fixed_effect_residuals(problem, params)),
                       kSigmaEpsFloor);
  double f_hi = score(hi);
  for (int doubling = 0; doubling < 3 && f_hi >= 0.0; ++doubling) {
    hi *= 2.0;
    f_hi = score(hi);
  }
  if (f_hi >= 0.0) {
    throw Error(ErrorKind::kConvergence,
                "sigma2_eps score has no sign change below " +
                    std::to_string(hi));
  }
  // Search in log(sigma) so the bracket's ten-plus decades cost little.
  const auto log_score = [&](double u) { return score(std::exp(u)); };
  const RootResult root = find_score_root(log_score, std::log(lo),
                                          std::log(hi), f_lo, f_hi, 1e-14);
  out.value = std::exp(root.x);
  out.evaluations = root.evaluations + 2;
  return out;
}

ScalarUpdate update_sigma_tau(const ArProblem& problem,
                              const ARParams& params) {
  params.validate();
  const auto stats = zip_stats(problem, params);
  const double sigma = params.sigma2_eps;
  const auto score = [&](double lambda) {
    return sigma_tau_score_from_stats(stats, sigma, lambda);
  };

  ScalarUpdate out;
  if (!(score(0.0) > 0.0)) {
    out.value = 0.0;
    out.at_boundary = true;
    return out;
  }
  const double scale =
      std::max(mean_square(fixed_effect_residuals(problem, params)),
               kSigmaEpsFloor);
  const double lo = 1e-12 * scale;
  double hi = 10.0 * scale;
  const double f_lo = score(lo);
  if (!(f_lo > 0.0)) {
    out.value = lo;
    out.at_boundary = true;
    return out;
  }
  double f_hi = score(hi);
  for (int doubling = 0; doubling < 3 && f_hi >= 0.0; ++doubling) {
    hi *= 2.0;
    f_hi = score(hi);
  }
  if (f_hi >= 0.0) {
    throw Error(ErrorKind::kConvergence,
                "sigma2_tau score has no sign change below " +
                    std::to_string(hi));
  }
  const auto log_score = [&](double u) { return score(std::exp(u)); };
  const RootResult root = find_score_root(log_score, std::log(lo),
                                          std::log(hi), f_lo, f_hi, 1e-14);
  out.value = std::exp(root.x);
  out.evaluations = root.evaluations + 3;
  return out;
}

ScalarUpdate update_phi(const ArProblem& problem, const ARParams& params) {
  params.validate();
  if (problem.repeat_sales() == 0) {
    throw Error(ErrorKind::kNonIdentifiable,
                "phi is not identifiable without repeat sales");
  }
  ARParams p = params;
  int evaluations = 0;
  const auto score = [&](double phi) {
    p.phi = phi;
    ++evaluations;
    return score_phi(problem, p);
  };

  // Walk in logit(phi) from the current value in the ascent direction until
  // the score changes sign; the bracket then holds the nearest local maximum.
  const double start = std::clamp(params.phi, kPhiLo, kPhiHi);
  const double f_start = score(start);
  ScalarUpdate out;
  if (f_start == 0.0) {
    out.value = start;
    out.evaluations = evaluations;
    return out;
  }
  const double direction = f_start > 0.0 ? 1.0 : -1.0;
  const double limit = f_start > 0.0 ? kPhiHi : kPhiLo;
  double inner = start, f_inner = f_start;
  double outer = start, f_outer = f_start;
  double step = 0.05;
  bool bracketed = false;
  while (!bracketed) {
    double next = logistic(logit(inner) + direction * step);
    next = direction > 0.0 ? std::min(next, kPhiHi) : std::max(next, kPhiLo);
    outer = next;
    f_outer = score(outer);
    if (f_outer * direction < 0.0) {
      bracketed = true;
      break;
    }
    if (outer == limit) break;
    inner = outer;
    f_inner = f_outer;
    step *= 2.0;
  }
  if (!bracketed) {
    throw Error(ErrorKind::kConvergence,
                "no interior root of the phi score; " +
                    describe_phi_slice(problem, params));
  }

  double lo = inner, hi = outer, f_lo = f_inner, f_hi = f_outer;
  if (direction < 0.0) {
    std::swap(lo, hi);
    std::swap(f_lo, f_hi);
  }
  const auto logit_score = [&](double u) { return score(logistic(u)); };
  const RootResult root = find_score_root(logit_score, logit(lo), logit(hi),
                                          f_lo, f_hi, 1e-14);
  out.value = logistic(root.x);
  out.evaluations = evaluations;
  return out;
}

ARParams initial_params(const ArProblem& problem) {
  const auto y = problem.log_price();
  const auto t = problem.period();
  const std::size_t periods = static_cast<std::size_t>(problem.periods());
  std::vector<double> sum(periods, 0.0);
  double grand = 0.0;
  for (std::size_t k = 0; k < problem.size(); ++k) {
    sum[t[k]] += y[k];
    grand += y[k];
  }
  const double n_total = static_cast<double>(problem.size());
  grand /= n_total;

  ARParams p;
  p.mu = grand;
  p.beta.assign(periods, 0.0);
  const auto& n = problem.quarter_counts();
  for (std::size_t q = 0; q < periods; ++q) {
    if (n[q] > 0) p.beta[q] = sum[q] / static_cast<double>(n[q]) - grand;
  }
  p.phi = 0.95;

  double ss = 0.0;
  std::vector<double> zip_means;
  for (const auto& z : problem.zips()) {
    double zsum = 0.0;
    for (std::size_t k = z.first; k < z.first + z.count; ++k) {
      const double e = y[k] - grand - p.beta[t[k]];
      ss += e * e;
      zsum += e;
    }
    zip_means.push_back(zsum / static_cast<double>(z.count));
  }
  p.sigma2_eps = std::max(0.5 * ss / n_total, kSigmaEpsFloor);

  double zbar = 0.0;
  for (double m : zip_means) zbar += m;
  zbar /= static_cast<double>(zip_means.size());
  double zvar = 0.0;
  for (double m : zip_means) zvar += (m - zbar) * (m - zbar);
  p.sigma2_tau = zip_means.size() > 1
                     ? zvar / static_cast<double>(zip_means.size() - 1)
                     : 0.0;
  return p;
}

double FittedARModel::tau(std::string_view zip) const {
  const auto it = tau_hat.find(std::string(zip));
  return it == tau_hat.end() ? 0.0 : it->second;
}

double estimate_tau(const ARParams& params, std::span<const Sale> zip_block,
                    double prior_factor) {
  params.validate();
  if (params.sigma2_tau <= 0.0) return 0.0;
  const TransformBlock block = build_transform(zip_block, params.phi);
  std::vector<double> w(zip_block.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = zip_block[k].log_price - params.mu -
           params.beta[static_cast<std::size_t>(zip_block[k].quarter - 1)];
  }
  const auto q = block.apply(w);
  double a_r_a = 0.0, a_r_q = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    a_r_a += block.ones_image[k] * block.ones_image[k] / block.r[k];
    a_r_q += block.ones_image[k] * q[k] / block.r[k];
  }
  return tau_blup(a_r_a, a_r_q, params, prior_factor);
}

FittedARModel fit_ar(const PanelDataset& train, const ArFitConfig& config) {
  if (train.empty()) {
    throw Error(ErrorKind::kEmptyInput, "training panel is empty");
  }
  const ArProblem problem(train);
  problem.require_all_periods_observed();
  if (problem.repeat_sales() == 0) {
    throw Error(ErrorKind::kNonIdentifiable,
                "phi is not identifiable without repeat sales");
  }

  ARParams params = config.initial.value_or(initial_params(problem));
  if (params.beta.size() != static_cast<std::size_t>(problem.periods())) {
    throw Error(ErrorKind::kConfig, "initial beta has wrong length");
  }
  params.validate();

  FittedARModel model;
  model.tau_prior_factor = config.tau_prior_factor;
  double ll = log_likelihood(problem, params);
  model.loglik_trace.push_back(ll);

  // Accept a coordinate move only if it does not lower the likelihood.
  const auto try_move = [&](ARParams candidate) {
    const double cand_ll = log_likelihood(problem, candidate);
    if (cand_ll >= ll) {
      params = std::move(candidate);
      ll = cand_ll;
    }
  };

  model.stop_reason = "max_iters";
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const ARParams before = params;
    try {
      {
        BetaUpdate b = update_beta(problem, params);
        ARParams c = params;
        c.mu = b.mu;
        c.beta = std::move(b.beta);
        try_move(std::move(c));
      }
      {
        ARParams c = params;
        c.sigma2_eps = update_sigma_eps(problem, params).value;
        try_move(std::move(c));
      }
      {
        ARParams c = params;
        c.sigma2_tau = update_sigma_tau(problem, params).value;
        try_move(std::move(c));
      }
      {
        ARParams c = params;
        c.phi = update_phi(problem, params).value;
        try_move(std::move(c));
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kConvergence) throw;
      model.iterations = iter;
      model.stop_reason = e.what();
      break;
    }
    model.loglik_trace.push_back(ll);
    model.iterations = iter;

    double max_beta_change = std::abs(params.mu - before.mu);
    for (std::size_t q = 0; q < params.beta.size(); ++q) {
      max_beta_change =
          std::max(max_beta_change, std::abs(params.beta[q] - before.beta[q]));
    }
    if (max_beta_change < config.tol_beta &&
        std::abs(params.phi - before.phi) < config.tol_phi &&
        std::abs(params.sigma2_eps - before.sigma2_eps) <
            config.tol_variance &&
        std::abs(params.sigma2_tau - before.sigma2_tau) <
            config.tol_variance) {
      model.converged = true;
      model.stop_reason = "converged";
      break;
    }
  }

  // beta_T already follows the constraint through update_beta's
  // parameterization; re-impose it exactly for the initial-value path.
  const auto& n = problem.quarter_counts();
  double weighted = 0.0;
  const std::size_t last = params.beta.size() - 1;
  for (std::size_t q = 0; q < last; ++q) {
    weighted += static_cast<double>(n[q]) * params.beta[q];
  }
  params.beta[last] = -weighted / static_cast<double>(n[last]);

  model.params = params;
  const auto sales = train.sales();
  for (const ZipRange& z : train.zips()) {
    model.tau_hat[z.zip] =
        estimate_tau(params, sales.subspan(z.first_sale, z.sale_count),
                     config.tau_prior_factor);
    model.zip_sales[z.zip] = z.sale_count;
  }

  double ss = 0.0;
  for (const GapResidual& r : ar_training_residuals(model, train)) {
    ss += r.residual * r.residual;
  }
  model.msr = ss / static_cast<double>(train.size());
  return model;
}

double conditional_log_mean(const ARParams& params, double tau, int quarter,
                            std::optional<LaggedResidual> lagged) {
  double mean = params.mu + params.beta[static_cast<std::size_t>(quarter - 1)] +
                tau;
  if (lagged) mean += std::pow(params.phi, lagged->gap) * lagged->residual;
  return mean;
}

ArPrediction predict_ar(const FittedARModel& model,
                        std::optional<PriorSale> previous, std::string_view zip,
                        int target_quarter) {
  const ARParams& p = model.params;
  const int periods = model.periods();
  if (target_quarter < 1 || target_quarter > periods) {
    throw Error(ErrorKind::kDomain, "target quarter " +
                                        std::to_string(target_quarter) +
                                        " outside 1.." +
                                        std::to_string(periods));
  }
  ArPrediction out;
  out.unseen_zip = !model.tau_hat.contains(std::string(zip));
  const double tau = model.tau(zip);
  std::optional<LaggedResidual> lagged;
  if (previous) {
    if (previous->quarter < 1 || previous->quarter >= target_quarter) {
      throw Error(ErrorKind::kDomain,
                  "previous sale must precede the target quarter");
    }
    lagged = LaggedResidual{
        previous->log_price - p.mu -
            p.beta[static_cast<std::size_t>(previous->quarter - 1)] - tau,
        static_cast<double>(target_quarter - previous->quarter)};
  }
  out.log_price = conditional_log_mean(p, tau, target_quarter, lagged);
  out.price = std::exp(out.log_price + 0.5 * model.msr);
  return out;
}

std::vector<GapResidual> ar_training_residuals(const FittedARModel& model,
                                               const PanelDataset& train) {
  const auto sales = train.sales();
  std::vector<GapResidual> out;
  out.reserve(sales.size());
  const ARParams& p = model.params;
  for (std::size_t k = 0; k < sales.size(); ++k) {
    const Sale& s = sales[k];
    const double tau = model.tau(s.zip);
    std::optional<LaggedResidual> lagged;
    int gap = 0;
    if (s.ordinal > 1) {
      const Sale& prev = sales[k - 1];
      gap = s.quarter - prev.quarter;
      lagged = LaggedResidual{
          prev.log_price - p.mu -
              p.beta[static_cast<std::size_t>(prev.quarter - 1)] - tau,
          static_cast<double>(gap)};
    }
    out.push_back(
        {gap, s.log_price - conditional_log_mean(p, tau, s.quarter, lagged)});
  }
  return out;
}

}  // namespace rsindex
