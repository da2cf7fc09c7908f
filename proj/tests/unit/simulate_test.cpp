#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "rsindex/errors.hpp"
#include "rsindex/simulate.hpp"

namespace rsindex {
namespace {

SimConfig small(std::uint64_t seed) {
  SimConfig c;
  c.periods = 16;
  c.zips = 10;
  c.houses_per_zip = 100;
  c.seed = seed;
  return c;
}

TEST(SimConfig, Validation) {
  SimConfig c = small(1);
  c.sale_count_probs = {0.5, 0.4};
  EXPECT_THROW(c.validate(), Error);
  c = small(1);
  c.periods = 3;
  EXPECT_THROW(c.validate(), Error);
  c.sale_count_probs = {0.5, 0.5, 0.0, 0.0};
  EXPECT_NO_THROW(c.validate());
}

TEST(SimulateAr, SameSeedIsBitIdentical) {
  ARParams p;
  p.phi = 0.95;
  p.sigma2_eps = 0.002;
  p.sigma2_tau = 0.05;
  const auto a = simulate_ar_panel(small(3), p);
  const auto b = simulate_ar_panel(small(3), p);
  ASSERT_EQ(a.panel.size(), b.panel.size());
  for (std::size_t k = 0; k < a.panel.size(); ++k) {
    ASSERT_EQ(a.panel.sales()[k].price, b.panel.sales()[k].price);
  }
  const auto c = simulate_ar_panel(small(4), p);
  EXPECT_NE(a.panel.sales()[0].price, c.panel.sales()[0].price);
}

TEST(SimulateAr, NoNoiseIsDeterministicLevel) {
  ARParams p;
  p.mu = 12.0;
  p.phi = 0.5;
  p.sigma2_eps = 1e-30;
  const auto sim = simulate_ar_panel(small(5), p);
  for (const Sale& s : sim.panel.sales()) {
    ASSERT_NEAR(s.log_price,
                sim.truth.mu + sim.truth.beta[s.quarter - 1], 1e-9);
  }
  double weighted = 0.0;
  const auto& n = sim.panel.quarter_counts();
  for (std::size_t t = 0; t < n.size(); ++t) {
    weighted += static_cast<double>(n[t]) * sim.truth.beta[t];
  }
  EXPECT_NEAR(weighted, 0.0, 1e-9);
}

TEST(SimulateAr, LatentMomentsMatchProcess) {
  ARParams p;
  p.phi = 0.9;
  p.sigma2_eps = 0.019;
  SimConfig c = small(6);
  c.zips = 50;
  c.houses_per_zip = 2000;
  c.sale_count_probs = {0.0, 1.0};
  const auto sim = simulate_ar_panel(c, p);
  const double marginal = p.sigma2_eps / (1.0 - p.phi * p.phi);
  const auto sales = sim.panel.sales();
  double first_sq = 0.0;
  std::size_t first_n = 0;
  std::map<int, std::array<double, 4>> by_gap;  // n, sxy, sxx, syy
  for (std::size_t k = 0; k < sales.size(); ++k) {
    if (sales[k].ordinal == 1) {
      first_sq += sim.latent[k] * sim.latent[k];
      ++first_n;
    } else {
      auto& cell = by_gap[sales[k].quarter - sales[k - 1].quarter];
      cell[0] += 1.0;
      cell[1] += sim.latent[k] * sim.latent[k - 1];
      cell[2] += sim.latent[k - 1] * sim.latent[k - 1];
      cell[3] += sim.latent[k] * sim.latent[k];
    }
  }
  EXPECT_NEAR(first_sq / static_cast<double>(first_n) / marginal, 1.0, 0.02);
  for (const auto& [gap, cell] : by_gap) {
    if (cell[0] < 3000) continue;
    const double corr = cell[1] / std::sqrt(cell[2] * cell[3]);
    EXPECT_NEAR(corr, std::pow(p.phi, gap), 4.0 / std::sqrt(cell[0]))
        << "gap " << gap;
  }
}

TEST(SimulateMixed, ZeroVariancesGiveLevel) {
  MixedParams p;
  p.mu = 10.0;
  p.sigma2_eps = 1e-30;
  const auto sim = simulate_mixed_panel(small(2), p);
  for (const Sale& s : sim.panel.sales()) {
    ASSERT_NEAR(s.log_price, sim.truth.mu + sim.truth.beta[s.quarter - 1],
                1e-9);
  }
}

TEST(SimulateMixed, WithinHouseCovarianceIgnoresGap) {
  MixedParams p;
  p.sigma2_alpha = 0.04;
  p.sigma2_eps = 0.01;
  SimConfig c = small(8);
  c.zips = 20;
  c.houses_per_zip = 2000;
  c.sale_count_probs = {0.0, 1.0};
  const auto sim = simulate_mixed_panel(c, p);
  const auto sales = sim.panel.sales();
  std::array<double, 2> short_gap{}, long_gap{};
  for (std::size_t k = 0; k < sales.size(); ++k) {
    if (sales[k].ordinal == 1) continue;
    const auto r = [&](const Sale& s) {
      return s.log_price - sim.truth.mu - sim.truth.beta[s.quarter - 1];
    };
    auto& cell =
        sales[k].quarter - sales[k - 1].quarter <= 5 ? short_gap : long_gap;
    cell[0] += 1.0;
    cell[1] += r(sales[k]) * r(sales[k - 1]);
  }
  EXPECT_NEAR(short_gap[1] / short_gap[0], p.sigma2_alpha, 0.004);
  EXPECT_NEAR(long_gap[1] / long_gap[0], p.sigma2_alpha, 0.004);
}

TEST(SimulateCs, NoNoiseIsIndexPath) {
  RandomWalkParams p;
  const auto sim = simulate_cs_panel(small(4), p);
  for (const Sale& s : sim.panel.sales()) {
    ASSERT_NEAR(s.log_price, sim.truth.beta[s.quarter - 1], 1e-12);
  }
}

TEST(SimulateCs, DifferenceVarianceGrowsWithGap) {
  RandomWalkParams p;
  p.sigma2_u = 0.003;
  p.sigma2_v = 0.001;
  SimConfig c = small(12);
  c.zips = 40;
  c.houses_per_zip = 2000;
  c.sale_count_probs = {0.0, 1.0};
  const auto sim = simulate_cs_panel(c, p);
  const auto sales = sim.panel.sales();
  std::map<int, std::array<double, 2>> cells;
  for (std::size_t k = 0; k < sales.size(); ++k) {
    if (sales[k].ordinal == 1) continue;
    const double d = sales[k].log_price - sales[k - 1].log_price -
                     (sim.truth.beta[sales[k].quarter - 1] -
                      sim.truth.beta[sales[k - 1].quarter - 1]);
    auto& cell = cells[sales[k].quarter - sales[k - 1].quarter];
    cell[0] += 1.0;
    cell[1] += d * d;
  }
  for (const auto& [gap, cell] : cells) {
    if (cell[0] < 2000) continue;
    const double expected = 2.0 * p.sigma2_u + gap * p.sigma2_v;
    EXPECT_NEAR(cell[1] / cell[0] / expected, 1.0, 0.1) << "gap " << gap;
  }
}

TEST(SimulateGeometric, MeanGapNearTarget) {
  ARParams p;
  p.phi = 0.9;
  p.sigma2_eps = 0.01;
  SimConfig c = small(13);
  c.periods = 400;
  c.timing = SaleTiming::kGeometric;
  c.mean_gap = 8.0;
  c.sale_count_probs = {0.0, 0.0, 0.0, 1.0};
  const auto sim = simulate_ar_panel(c, p);
  double sum = 0.0, n = 0.0;
  const auto sales = sim.panel.sales();
  for (std::size_t k = 0; k < sales.size(); ++k) {
    if (sales[k].ordinal == 1) continue;
    sum += sales[k].quarter - sales[k - 1].quarter;
    n += 1.0;
  }
  EXPECT_NEAR(sum / n, 8.0, 0.4);
}

}  // namespace
}  // namespace rsindex
