#include "rsindex/case_shiller.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "rsindex/errors.hpp"

namespace rsindex {
namespace {

constexpr double kMaxCondition = 1e12;

// Zin' W X and Zin' W w for diagonal weights (nullptr for unit weights).
void assemble(const CSSystem& sys, const std::vector<double>* weights,
              Eigen::MatrixXd& zx, Eigen::VectorXd& zw) {
  const int cols = sys.periods - 1;
  zx = Eigen::MatrixXd::Zero(cols, cols);
  zw = Eigen::VectorXd::Zero(cols);
  for (std::size_t s = 0; s < sys.rows.size(); ++s) {
    const auto& row = sys.rows[s];
    const double omega = weights ? (*weights)[s] : 1.0;
    // Instrument row: -1 at first_col, +1 at second_col.
    const int z_cols[2] = {row.first_col, row.second_col};
    const double z_vals[2] = {-1.0, 1.0};
    for (int a = 0; a < 2; ++a) {
      if (z_cols[a] < 0) continue;
      const double za = omega * z_vals[a];
      if (row.first_col >= 0) zx(z_cols[a], row.first_col) -= za * row.first_price;
      zx(z_cols[a], row.second_col) += za * row.second_price;
      zw(z_cols[a]) += za * sys.w[s];
    }
  }
}

std::vector<double> solve_iv(const Eigen::MatrixXd& zx,
                             const Eigen::VectorXd& zw) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(zx);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || smax / smin > kMaxCondition) {
    throw Error(ErrorKind::kIdentifiability,
                "Z'X is singular or ill-conditioned (condition " +
                    std::to_string(smin > 0.0 ? smax / smin : INFINITY) + ")");
  }
  const Eigen::VectorXd b = zx.colPivHouseholderQr().solve(zw);
  return {b.data(), b.data() + b.size()};
}

}  // namespace

std::vector<SalePair> build_sale_pairs(const PanelDataset& panel) {
  std::vector<SalePair> pairs;
  const auto sales = panel.sales();
  for (const HouseRange& h : panel.houses()) {
    for (std::size_t k = h.first_sale + 1; k < h.first_sale + h.sale_count;
         ++k) {
      const Sale& a = sales[k - 1];
      const Sale& b = sales[k];
      pairs.push_back(
          {b.house_id, b.zip, a.quarter, b.quarter, a.price, b.price});
    }
  }
  return pairs;
}

std::vector<double> CSSystem::residuals(const std::vector<double>& b) const {
  std::vector<double> out(rows.size());
  for (std::size_t s = 0; s < rows.size(); ++s) {
    const Row& row = rows[s];
    double xb = row.second_price * b[static_cast<std::size_t>(row.second_col)];
    if (row.first_col >= 0) {
      xb -= row.first_price * b[static_cast<std::size_t>(row.first_col)];
    }
    out[s] = w[s] - xb;
  }
  return out;
}

CSSystem build_cs_system(const std::vector<SalePair>& pairs, int periods) {
  CSSystem sys;
  sys.periods = periods;
  sys.rows.reserve(pairs.size());
  sys.w.reserve(pairs.size());
  for (const SalePair& p : pairs) {
    if (p.first_quarter < 1 || p.second_quarter > periods ||
        p.second_quarter <= p.first_quarter) {
      throw Error(ErrorKind::kDomain,
                  "pair for house " + p.house_id + " has quarters " +
                      std::to_string(p.first_quarter) + "," +
                      std::to_string(p.second_quarter) + " outside 1.." +
                      std::to_string(periods));
    }
    CSSystem::Row row;
    row.first_col = p.first_quarter - 2;
    row.second_col = p.second_quarter - 2;
    row.first_price = p.first_price;
    row.second_price = p.second_price;
    row.gap = p.gap();
    sys.rows.push_back(row);
    sys.w.push_back(p.first_quarter == 1 ? p.first_price : 0.0);
  }
  return sys;
}

CSFit fit_cs(const std::vector<SalePair>& pairs, int periods) {
  if (pairs.empty()) {
    throw Error(ErrorKind::kEmptyInput, "no repeat-sale pairs to fit");
  }
  if (periods < 2) {
    throw Error(ErrorKind::kIdentifiability,
                "an index needs at least two periods");
  }
  const CSSystem sys = build_cs_system(pairs, periods);

  Eigen::MatrixXd zx;
  Eigen::VectorXd zw;
  assemble(sys, nullptr, zx, zw);
  std::vector<double> b = solve_iv(zx, zw);

  CSFit fit;
  fit.pair_count = pairs.size();
  fit.b_stage1 = b;
  const std::vector<double> e = sys.residuals(b);
  const double n = static_cast<double>(e.size());

  double rss = 0.0, scale = 0.0;
  for (std::size_t s = 0; s < e.size(); ++s) {
    rss += e[s] * e[s];
    scale += sys.rows[s].second_price * sys.rows[s].second_price;
  }
  if (rss <= 1e-24 * scale) {
    fit.weighted = false;
    fit.weights.assign(pairs.size(), 1.0);
  } else {
    double mg = 0.0, me = 0.0;
    for (std::size_t s = 0; s < e.size(); ++s) {
      mg += sys.rows[s].gap;
      me += e[s] * e[s];
    }
    mg /= n;
    me /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t s = 0; s < e.size(); ++s) {
      const double dg = sys.rows[s].gap - mg;
      sxx += dg * dg;
      sxy += dg * (e[s] * e[s] - me);
    }
    fit.alpha1 = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.alpha0 = me - fit.alpha1 * mg;

    std::vector<std::size_t> bad;
    fit.weights.resize(e.size());
    for (std::size_t s = 0; s < e.size(); ++s) {
      const double fitted = fit.alpha0 + fit.alpha1 * sys.rows[s].gap;
      if (!(fitted > 0.0)) {
        bad.push_back(s);
      } else {
        fit.weights[s] = 1.0 / std::sqrt(fitted);
      }
    }
    if (!bad.empty()) {
      std::string msg = std::to_string(bad.size()) +
                        " pairs have non-positive stage-2 fitted variance "
                        "(alpha0=" +
                        std::to_string(fit.alpha0) +
                        ", alpha1=" + std::to_string(fit.alpha1) + "):";
      for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 10); ++i) {
        const SalePair& p = pairs[bad[i]];
        msg += " " + p.house_id + "[" + std::to_string(p.first_quarter) +
               "->" + std::to_string(p.second_quarter) + "]";
      }
      if (bad.size() > 10) msg += " ...";
      throw Error(ErrorKind::kNegativeWeight, msg);
    }
    assemble(sys, &fit.weights, zx, zw);
    b = solve_iv(zx, zw);
  }

  fit.b = b;
  fit.B.assign(static_cast<std::size_t>(periods), 1.0);
  for (std::size_t t = 0; t < b.size(); ++t) fit.B[t + 1] = 1.0 / b[t];
  return fit;
}

double predict_cs(const CSFit& fit, int previous_quarter, double previous_price,
                  int target_quarter) {
  const int periods = fit.periods();
  if (previous_quarter < 1 || previous_quarter > periods ||
      target_quarter < 1 || target_quarter > periods) {
    throw Error(ErrorKind::kDomain,
                "quarters " + std::to_string(previous_quarter) + "->" +
                    std::to_string(target_quarter) + " outside 1.." +
                    std::to_string(periods));
  }
  return fit.B[static_cast<std::size_t>(target_quarter - 1)] /
         fit.B[static_cast<std::size_t>(previous_quarter - 1)] *
         previous_price;
}

std::vector<GapResidual> cs_pair_residuals(const CSFit& fit,
                                           const std::vector<SalePair>& pairs) {
  const CSSystem sys = build_cs_system(pairs, fit.periods());
  const std::vector<double> e = sys.residuals(fit.b);
  std::vector<GapResidual> out;
  out.reserve(e.size());
  for (std::size_t s = 0; s < e.size(); ++s) {
    out.push_back({sys.rows[s].gap, e[s]});
  }
  return out;
}

}  // namespace rsindex
