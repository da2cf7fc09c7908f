#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dense.hpp"
#include "instances.hpp"
#include "rsindex/ar_model.hpp"
#include "rsindex/errors.hpp"
#include "rsindex/simulate.hpp"

namespace rsindex {
namespace {

using testing_support::small_instance;

PanelDataset panel_of(std::vector<Sale> sales, int periods) {
  return PanelDataset::from_sales(std::move(sales), periods);
}

TEST(BuildTransform, SingleSaleIsIdentity) {
  const std::vector<Sale> block = {Sale::make("h", "z", 3, 100.0)};
  const TransformBlock t = build_transform(block, 0.7);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.sub_diagonal[0], 0.0);
  EXPECT_EQ(t.r[0], 1.0);
  EXPECT_EQ(t.ones_image[0], 1.0);
}

TEST(BuildTransform, GapTwoAtHalf) {
  const std::vector<Sale> block = {Sale::make("h", "z", 1, 100.0),
                                   Sale::make("h", "z", 3, 120.0)};
  const TransformBlock t = build_transform(block, 0.5);
  EXPECT_DOUBLE_EQ(t.sub_diagonal[1], -0.25);
  EXPECT_DOUBLE_EQ(t.r[0], 1.0);
  EXPECT_DOUBLE_EQ(t.r[1], 0.9375);
  EXPECT_DOUBLE_EQ(t.ones_image[1], 0.75);
}

TEST(BuildTransform, PhiNearZeroIsIdentity) {
  const std::vector<Sale> block = {Sale::make("a", "z", 1, 1.0),
                                   Sale::make("a", "z", 2, 1.0),
                                   Sale::make("b", "z", 2, 1.0)};
  const TransformBlock t = build_transform(block, 1e-12);
  for (std::size_t k = 0; k < t.size(); ++k) {
    EXPECT_NEAR(t.sub_diagonal[k], 0.0, 1e-12);
    EXPECT_NEAR(t.r[k], 1.0, 1e-12);
  }
}

TEST(BuildTransform, NonPositiveGapIsMalformed) {
  const std::vector<Sale> block = {Sale::make("h", "z", 4, 1.0),
                                   Sale::make("h", "z", 4, 1.0)};
  try {
    build_transform(block, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMalformedSeries);
  }
}

TEST(BuildTransform, ApplyGivesInnovations) {
  const std::vector<Sale> block = {Sale::make("h", "z", 1, 1.0),
                                   Sale::make("h", "z", 4, 1.0),
                                   Sale::make("g", "z", 2, 1.0)};
  const TransformBlock t = build_transform(block, 0.9);
  const std::vector<double> u = {0.3, -0.2, 0.5};
  const auto e = t.apply(u);
  EXPECT_DOUBLE_EQ(e[0], 0.3);
  EXPECT_NEAR(e[1], -0.2 - std::pow(0.9, 3) * 0.3, 1e-15);
  EXPECT_DOUBLE_EQ(e[2], 0.5);
}

TEST(LogLikelihood, StandardNormalAtZero) {
  const PanelDataset panel = panel_of({Sale::make("h", "z", 1, 1.0)}, 1);
  ARParams p;
  p.mu = 0.0;
  p.beta = {0.0};
  p.phi = 0.6;
  p.sigma2_eps = 1.0 - 0.36;
  p.sigma2_tau = 0.0;
  EXPECT_NEAR(log_likelihood(panel, p), -0.5 * std::log(2.0 * std::numbers::pi),
              1e-14);
}

TEST(LogLikelihood, NoZipVarianceIsIndependentDensities) {
  const auto inst = small_instance(7);
  ARParams p = inst.ar;
  p.sigma2_tau = 0.0;
  const double marginal = p.sigma2_eps / (1.0 - p.phi * p.phi);
  double expected = 0.0;
  for (const ZipRange& z : inst.panel.zips()) {
    const auto block = inst.panel.sales().subspan(z.first_sale, z.sale_count);
    const TransformBlock t = build_transform(block, p.phi);
    std::vector<double> w;
    for (const Sale& s : block) {
      w.push_back(s.log_price - p.mu - p.beta[s.quarter - 1]);
    }
    const auto e = t.apply(w);
    for (std::size_t k = 0; k < e.size(); ++k) {
      const double var = marginal * t.r[k];
      expected += -0.5 * (std::log(2.0 * std::numbers::pi * var) +
                          e[k] * e[k] / var);
    }
  }
  EXPECT_NEAR(log_likelihood(inst.panel, p), expected, 1e-9);
}

TEST(LogLikelihood, MatchesDenseOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto inst = small_instance(seed);
    const auto designs = oracle::ar_designs(inst.panel, inst.ar);
    const double dense = oracle::gaussian_loglik(
        designs, oracle::theta_of(inst.ar.mu, inst.ar.beta));
    EXPECT_NEAR(log_likelihood(inst.panel, inst.ar), dense, 1e-8)
        << "seed " << seed;
  }
}

TEST(LogLikelihood, RejectsInvalidParams) {
  const auto inst = small_instance(3);
  ARParams p = inst.ar;
  p.sigma2_eps = 0.0;
  EXPECT_THROW(log_likelihood(inst.panel, p), Error);
  p = inst.ar;
  p.phi = 1.0;
  EXPECT_THROW(log_likelihood(inst.panel, p), Error);
}

TEST(Scores, MatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = small_instance(seed);
    const ArProblem problem(inst.panel);
    ARParams p = inst.ar;
    p.sigma2_tau = std::max(p.sigma2_tau, 0.02);
    const auto fd = [&](double ARParams::*field, double h) {
      ARParams up = p, down = p;
      up.*field += h;
      down.*field -= h;
      return (log_likelihood(problem, up) - log_likelihood(problem, down)) /
             (2.0 * h);
    };
    const double s_eps = score_sigma_eps(problem, p);
    const double s_tau = score_sigma_tau(problem, p);
    const double s_phi = score_phi(problem, p);
    EXPECT_NEAR(s_eps, fd(&ARParams::sigma2_eps, 1e-7),
                1e-5 * (1.0 + std::abs(s_eps)))
        << "seed " << seed;
    EXPECT_NEAR(s_tau, fd(&ARParams::sigma2_tau, 1e-7),
                1e-5 * (1.0 + std::abs(s_tau)))
        << "seed " << seed;
    EXPECT_NEAR(s_phi, fd(&ARParams::phi, 1e-7),
                1e-5 * (1.0 + std::abs(s_phi)))
        << "seed " << seed;
  }
}

TEST(UpdateBeta, MatchesDenseGls) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto inst = small_instance(seed);
    const ArProblem problem(inst.panel);
    const BetaUpdate b = update_beta(problem, inst.ar);
    const Eigen::VectorXd dense = oracle::constrained_gls(
        oracle::ar_designs(inst.panel, inst.ar), inst.panel.quarter_counts());
    EXPECT_NEAR(b.mu, dense(0), 1e-8) << "seed " << seed;
    for (std::size_t t = 0; t < b.beta.size(); ++t) {
      EXPECT_NEAR(b.beta[t], dense(static_cast<Eigen::Index>(t) + 1), 1e-8)
          << "seed " << seed << " t " << t;
    }
  }
}

TEST(UpdateBeta, SingleSalesReduceToQuarterMeans) {
  std::vector<Sale> sales;
  const double prices[] = {100, 120, 90, 200, 210, 150};
  const int quarters[] = {1, 1, 2, 2, 3, 3};
  for (int k = 0; k < 6; ++k) {
    sales.push_back(Sale::make("h" + std::to_string(k), "z" + std::to_string(k % 2),
                               quarters[k], prices[k]));
  }
  const PanelDataset panel = panel_of(sales, 3);
  const ArProblem problem(panel);
  ARParams p;
  p.beta.assign(3, 0.0);
  p.phi = 1e-9;
  p.sigma2_eps = 0.1;
  p.sigma2_tau = 0.0;
  const BetaUpdate b = update_beta(problem, p);
  for (int t = 0; t < 3; ++t) {
    const double mean =
        0.5 * (std::log(prices[2 * t]) + std::log(prices[2 * t + 1]));
    EXPECT_NEAR(b.mu + b.beta[t], mean, 1e-12);
  }
}

TEST(UpdateBeta, EmptyQuarterIsIdentificationError) {
  const PanelDataset panel = panel_of(
      {Sale::make("a", "z", 1, 1.0), Sale::make("a", "z", 3, 2.0)}, 3);
  const ArProblem problem(panel);
  ARParams p;
  p.beta.assign(3, 0.0);
  p.sigma2_eps = 0.1;
  try {
    problem.require_all_periods_observed();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIdentifiability);
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
  }
}

// Each 1-D update must sit at the maximum of its likelihood slice.
class ScalarUpdates : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(ScalarUpdates, MatchGoldenSection) {
  const auto inst = small_instance(GetParam());
  const ArProblem problem(inst.panel);
  ARParams p = inst.ar;
  p.sigma2_tau = std::max(p.sigma2_tau, 0.01);

  const auto slice = [&](double ARParams::*field) {
    return [&, field](double v) {
      ARParams q = p;
      q.*field = v;
      return log_likelihood(problem, q);
    };
  };
  const auto eps = update_sigma_eps(problem, p);
  const double eps_ref = std::exp(oracle::golden_max(
      [&](double u) { return slice(&ARParams::sigma2_eps)(std::exp(u)); },
      std::log(1e-8), std::log(10.0)));
  EXPECT_NEAR(eps.value, eps_ref, 1e-5 * eps_ref);

  const auto tau = update_sigma_tau(problem, p);
  const double tau_ref = oracle::golden_max(slice(&ARParams::sigma2_tau), 0.0,
                                            10.0);
  if (tau.at_boundary) {
    EXPECT_LT(tau_ref, 1e-6);
  } else {
    EXPECT_NEAR(tau.value, tau_ref, 1e-5 * tau_ref + 1e-9);
  }

  const auto phi = update_phi(problem, p);
  const double phi_ref =
      oracle::golden_max(slice(&ARParams::phi), 1e-6, 1.0 - 1e-6);
  EXPECT_NEAR(phi.value, phi_ref, 1e-5 * phi_ref);

  // Perturbation: the returned value beats +-10% on both sides.
  const auto f = slice(&ARParams::sigma2_eps);
  EXPECT_GT(f(eps.value), f(1.1 * eps.value));
  EXPECT_GT(f(eps.value), f(0.9 * eps.value));
}

INSTANTIATE_TEST_SUITE_P(SmallPanels, ScalarUpdates,
                         ::testing::Range<std::uint64_t>(1, 11));

TEST(UpdatePhi, NoRepeatSalesIsNonIdentifiable) {
  const PanelDataset panel = panel_of(
      {Sale::make("a", "z", 1, 1.0), Sale::make("b", "z", 2, 2.0)}, 2);
  const ArProblem problem(panel);
  ARParams p;
  p.beta.assign(2, 0.0);
  p.sigma2_eps = 0.1;
  try {
    update_phi(problem, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonIdentifiable);
  }
}

TEST(EstimateTau, UnitFactorMatchesHenderson) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = small_instance(seed);
    ARParams p = inst.ar;
    p.sigma2_tau = std::max(p.sigma2_tau, 0.01);
    const auto designs = oracle::ar_designs(inst.panel, p);
    const auto dense =
        oracle::tau_blups(designs, oracle::theta_of(p.mu, p.beta), p.sigma2_tau);
    for (const ZipRange& z : inst.panel.zips()) {
      const auto block = inst.panel.sales().subspan(z.first_sale, z.sale_count);
      EXPECT_NEAR(estimate_tau(p, block, 1.0), dense.at(z.zip), 1e-6)
          << "seed " << seed << " zip " << z.zip;
    }
  }
}

TEST(EstimateTau, PrintedFactorShrinksHarder) {
  const auto inst = small_instance(4);
  ARParams p = inst.ar;
  p.sigma2_tau = 0.05;
  for (const ZipRange& z : inst.panel.zips()) {
    const auto block = inst.panel.sales().subspan(z.first_sale, z.sale_count);
    const double one = estimate_tau(p, block, 1.0);
    const double two = estimate_tau(p, block, 2.0);
    EXPECT_LE(std::abs(two), std::abs(one) + 1e-15);
  }
}

TEST(EstimateTau, ZeroVarianceGivesZero) {
  const auto inst = small_instance(5);
  ARParams p = inst.ar;
  p.sigma2_tau = 0.0;
  const ZipRange& z = inst.panel.zips()[0];
  EXPECT_EQ(estimate_tau(p, inst.panel.sales().subspan(z.first_sale,
                                                      z.sale_count)),
            0.0);
}

TEST(Predict, NoPreviousSaleIsMarginalMean) {
  FittedARModel m;
  m.params.mu = 11.0;
  m.params.beta = {0.0, 0.1, 0.2};
  m.params.phi = 0.9;
  m.params.sigma2_eps = 0.01;
  m.tau_hat["z"] = 0.05;
  m.msr = 0.02;
  const auto pred = predict_ar(m, std::nullopt, "z", 3);
  EXPECT_DOUBLE_EQ(pred.log_price, 11.25);
  EXPECT_DOUBLE_EQ(pred.price, std::exp(11.25 + 0.01));
  const auto unseen = predict_ar(m, std::nullopt, "elsewhere", 2);
  EXPECT_TRUE(unseen.unseen_zip);
  EXPECT_DOUBLE_EQ(unseen.log_price, 11.1);
}

TEST(Predict, LongGapApproachesMarginalMean) {
  FittedARModel m;
  m.params.mu = 0.0;
  m.params.beta = {0.0, 0.0};
  m.params.phi = 0.99;
  m.params.sigma2_eps = 0.01;
  const double cond = conditional_log_mean(m.params, 0.0, 2,
                                           LaggedResidual{0.4, 1e6});
  EXPECT_NEAR(cond, conditional_log_mean(m.params, 0.0, 2, std::nullopt),
              1e-12);
}

TEST(Predict, ShrinkageWeightAtMeanGap) {
  ARParams p;
  p.beta = {0.0};
  p.phi = 0.993247;
  EXPECT_NEAR(conditional_log_mean(p, 0.0, 1, LaggedResidual{1.0, 22.0}),
              0.8615, 5e-5);
}

TEST(Predict, RejectsBadQuarters) {
  FittedARModel m;
  m.params.beta = {0.0, 0.0};
  m.params.sigma2_eps = 0.1;
  EXPECT_THROW(predict_ar(m, std::nullopt, "z", 3), Error);
  EXPECT_THROW(predict_ar(m, PriorSale{2, 0.0}, "z", 2), Error);
}

SimConfig mid_config(std::uint64_t seed) {
  SimConfig c;
  c.periods = 20;
  c.zips = 20;
  c.houses_per_zip = 150;
  c.seed = seed;
  return c;
}

TEST(FitAr, ZeroNoiseRecoversBetaAndPrices) {
  ARParams truth;
  truth.mu = 12.0;
  truth.phi = 0.9;
  truth.sigma2_eps = 1e-12;
  truth.sigma2_tau = 0.0;
  const auto sim = simulate_ar_panel(mid_config(3), truth);
  const auto m = fit_ar(sim.panel);
  for (std::size_t t = 0; t < truth.beta.size(); ++t) {
    EXPECT_NEAR(m.params.beta[t], sim.truth.beta[t], 1e-4);
  }
  const auto sales = sim.panel.sales();
  for (std::size_t k = 1; k < sales.size(); k += 37) {
    std::optional<PriorSale> prev;
    if (sales[k].ordinal > 1) {
      prev = PriorSale{sales[k - 1].quarter, sales[k - 1].log_price};
    }
    const double pred =
        predict_ar(m, prev, sales[k].zip, sales[k].quarter).price;
    EXPECT_NEAR(pred / sales[k].price, 1.0, 1e-3);
  }
}

TEST(FitAr, TraceIsMonotoneAndConstraintHolds) {
  ARParams truth;
  truth.mu = 11.0;
  truth.phi = 0.97;
  truth.sigma2_eps = 0.003;
  truth.sigma2_tau = 0.05;
  const auto sim = simulate_ar_panel(mid_config(11), truth);
  const auto m = fit_ar(sim.panel);
  EXPECT_TRUE(m.converged) << m.stop_reason;
  for (std::size_t i = 1; i < m.loglik_trace.size(); ++i) {
    EXPECT_GE(m.loglik_trace[i], m.loglik_trace[i - 1] - 1e-9);
  }
  double weighted = 0.0, scale = 0.0;
  const auto& n = sim.panel.quarter_counts();
  for (std::size_t t = 0; t < n.size(); ++t) {
    weighted += static_cast<double>(n[t]) * m.params.beta[t];
    scale += static_cast<double>(n[t]) * std::abs(m.params.beta[t]);
  }
  EXPECT_LE(std::abs(weighted), 1e-8 * scale);

  ArFitConfig again;
  again.initial = m.params;
  const auto refit = fit_ar(sim.panel, again);
  EXPECT_LE(refit.iterations, 2);
}

TEST(FitAr, NoZipVarianceEstimatesNearZero) {
  ARParams truth;
  truth.mu = 11.0;
  truth.phi = 0.95;
  truth.sigma2_eps = 0.003;
  truth.sigma2_tau = 0.0;
  SimConfig c = mid_config(21);
  c.zips = 50;
  const auto m = fit_ar(simulate_ar_panel(c, truth).panel);
  EXPECT_LE(m.params.sigma2_tau, 1e-4);
}

TEST(FitAr, SingleSalesOnlyIsNonIdentifiable) {
  ARParams truth;
  truth.phi = 0.9;
  truth.sigma2_eps = 0.01;
  SimConfig c = mid_config(2);
  c.sale_count_probs = {1.0};
  try {
    fit_ar(simulate_ar_panel(c, truth).panel);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonIdentifiable);
  }
}

}  // namespace
}  // namespace rsindex
