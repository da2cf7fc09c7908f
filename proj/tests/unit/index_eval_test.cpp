#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "rsindex/errors.hpp"
#include "rsindex/index_eval.hpp"
#include "rsindex/simulate.hpp"

namespace rsindex {
namespace {

TEST(IndexFromBeta, StartsAtOne) {
  const auto flat = index_from_beta({0.0, 0.0, 0.0}, "ar");
  for (double v : flat.values) EXPECT_EQ(v, 1.0);
  const auto doubling = index_from_beta({0.0, std::log(2.0)}, "ar");
  EXPECT_EQ(doubling.values[0], 1.0);
  EXPECT_NEAR(doubling.values[1], 2.0, 1e-15);
  const auto shifted = index_from_beta({0.3, 0.3 + std::log(2.0)}, "ar");
  EXPECT_EQ(shifted.values[0], 1.0);
  EXPECT_NEAR(shifted.values[1], 2.0, 1e-14);
}

TEST(MeanIndex, QuarterMeansOverBase) {
  const auto panel = PanelDataset::from_sales(
      {Sale::make("a", "z", 1, 100000.0), Sale::make("b", "z", 2, 110000.0)},
      2);
  const auto idx = mean_index(panel);
  EXPECT_EQ(idx.values[0], 1.0);
  EXPECT_NEAR(idx.values[1], 1.1, 1e-15);
  const auto gap = PanelDataset::from_sales({Sale::make("a", "z", 1, 1.0)}, 2);
  EXPECT_THROW(mean_index(gap), Error);
}

TEST(Rmse, Basics) {
  const std::vector<double> a = {100.0, 200.0};
  const std::vector<double> p = {200.0, 100.0};
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(rmse(p, a), 100.0);
  EXPECT_DOUBLE_EQ(rmse(a, p), rmse(p, a));
  const std::vector<double> one = {1.0};
  EXPECT_THROW(rmse(one, a), Error);
  EXPECT_THROW(rmse({}, {}), Error);
}

TEST(CorrelationByGap, OmitsSingletonsAndIgnoresShift) {
  FittedARModel m;
  m.params.beta.assign(10, 0.0);
  m.params.phi = 0.8;
  m.params.sigma2_eps = 0.1;
  std::vector<Sale> sales = {Sale::make("a", "z", 1, 1.0),
                             Sale::make("a", "z", 8, 2.0)};
  const double prices[][2] = {{1.0, 1.5}, {2.0, 2.2}, {3.0, 4.0}};
  for (int i = 0; i < 3; ++i) {
    const std::string h = "h" + std::to_string(i);
    sales.push_back(Sale::make(h, "z", 2, prices[i][0]));
    sales.push_back(Sale::make(h, "z", 4, prices[i][1]));
  }
  const auto panel = PanelDataset::from_sales(sales, 10);
  const auto cells = correlation_by_gap(m, panel);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].gap, 2);
  EXPECT_EQ(cells[0].n, 3u);
  EXPECT_NEAR(*cells[0].expected, 0.64, 1e-15);
  m.params.mu = 5.0;
  m.tau_hat["z"] = -1.0;
  const auto shifted = correlation_by_gap(m, panel);
  EXPECT_NEAR(shifted[0].statistic, cells[0].statistic, 1e-12);
}

TEST(ResidualVariance, SampleVariancePerGap) {
  const std::vector<GapResidual> r = {{0, 9.0}, {1, 1.0}, {1, 3.0},
                                      {2, 5.0}, {3, 1.0}, {3, 2.0}, {3, 3.0}};
  const auto cells = residual_variance_by_gap(r, [](int h) { return 10.0 * h; });
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].gap, 1);
  EXPECT_DOUBLE_EQ(cells[0].statistic, 2.0);
  EXPECT_DOUBLE_EQ(*cells[0].expected, 10.0);
  EXPECT_EQ(cells[1].gap, 3);
  EXPECT_DOUBLE_EQ(cells[1].statistic, 1.0);
}

TEST(VarianceCurves, Shapes) {
  ARParams ar;
  ar.phi = 0.9;
  ar.sigma2_eps = 0.019;
  const auto a = ar_variance_curve(ar);
  EXPECT_NEAR(a(1), 0.019, 1e-15);
  EXPECT_LT(a(1), a(5));
  MixedParams mx;
  mx.sigma2_eps = 0.3;
  const auto m = mixed_variance_curve(mx);
  EXPECT_EQ(m(1), m(40));
  CSFit fit;
  fit.alpha0 = 2.0;
  fit.alpha1 = 0.5;
  EXPECT_EQ(cs_variance_curve(fit)(0), 2.0);
  EXPECT_EQ(cs_variance_curve(fit)(4), 4.0);
}

TEST(RanefQuantiles, SymmetricAndSorted) {
  const std::map<std::string, double> effects = {
      {"a", 0.5}, {"b", -0.5}, {"c", 0.0}};
  const auto q = ranef_quantiles(effects, {{"a", 7}});
  ASSERT_EQ(q.size(), 3u);
  EXPECT_EQ(q[0].label, "b");
  EXPECT_NEAR(q[0].theoretical, -q[2].theoretical, 1e-15);
  EXPECT_NEAR(q[1].theoretical, 0.0, 1e-15);
  EXPECT_EQ(q[2].group_size, 7u);
  EXPECT_THROW(ranef_quantiles({{"a", 1.0}}), Error);
}

TEST(RanefQuantiles, NormalEffectsLieOnLine) {
  SimConfig c;
  c.zips = 400;
  c.houses_per_zip = 1;
  c.sale_count_probs = {1.0};
  ARParams p;
  p.phi = 0.5;
  p.sigma2_eps = 0.01;
  p.sigma2_tau = 0.09;
  const auto sim = simulate_ar_panel(c, p);
  const auto q = ranef_quantiles(sim.tau);
  double sxy = 0.0, sxx = 0.0;
  for (const auto& pt : q) {
    sxy += pt.theoretical * pt.observed;
    sxx += pt.theoretical * pt.theoretical;
  }
  EXPECT_NEAR(sxy / sxx, 0.3, 0.045);
}

TEST(Csv, Headers) {
  std::ostringstream idx, gap;
  write_index_csv(idx, {"ar", {1.0, 1.5}});
  EXPECT_EQ(idx.str(), "quarter,index\n1,1\n2,1.5\n");
  write_gap_csv(gap, {{2, 0.5, std::nullopt, 4}});
  EXPECT_EQ(gap.str(), "gap,statistic,n,expected\n2,0.5,4,\n");
}

TEST(EvalReportJson, ReportsFailures) {
  EvalReport r;
  r.scores.push_back({"ar", 1234.5, 10, ""});
  r.scores.push_back({"cs", std::nullopt, 0, "negative weight"});
  const std::string j = r.to_json();
  EXPECT_NE(j.find("\"rmse_dollars\": 1234.5"), std::string::npos);
  EXPECT_NE(j.find("negative weight"), std::string::npos);
}

}  // namespace
}  // namespace rsindex
