#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rsindex/errors.hpp"
#include "rsindex/ingest.hpp"
#include "rsindex/rng.hpp"
#include "rsindex/simulate.hpp"

namespace rsindex {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

TEST(PanelDataset, SortsAndAssignsOrdinals) {
  const auto panel = PanelDataset::from_sales(
      {Sale::make("b", "z2", 3, 10.0), Sale::make("a", "z1", 4, 5.0),
       Sale::make("a", "z1", 1, 4.0), Sale::make("c", "z1", 2, 7.0)},
      4);
  const auto sales = panel.sales();
  ASSERT_EQ(sales.size(), 4u);
  EXPECT_EQ(sales[0].house_id, "a");
  EXPECT_EQ(sales[0].quarter, 1);
  EXPECT_EQ(sales[0].ordinal, 1);
  EXPECT_EQ(sales[1].ordinal, 2);
  EXPECT_EQ(sales[3].zip, "z2");
  EXPECT_EQ(panel.zip_count(), 2u);
  EXPECT_EQ(panel.houses().size(), 3u);
  EXPECT_EQ(panel.quarter_counts(), (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(sales[0].log_price, std::log(4.0));
  EXPECT_EQ(panel.house_of(1), 0u);
}

TEST(PanelDataset, RejectsMalformedSeries) {
  EXPECT_EQ(kind_of([] {
              PanelDataset::from_sales(
                  {Sale::make("a", "z", 2, 1.0), Sale::make("a", "z", 2, 2.0)},
                  3);
            }),
            ErrorKind::kMalformedSeries);
  EXPECT_EQ(kind_of([] {
              PanelDataset::from_sales(
                  {Sale::make("a", "z", 1, 1.0), Sale::make("a", "y", 2, 2.0)},
                  3);
            }),
            ErrorKind::kMalformedSeries);
  EXPECT_EQ(kind_of([] {
              PanelDataset::from_sales({Sale::make("a", "z", 4, 1.0)}, 3);
            }),
            ErrorKind::kMalformedSeries);
  EXPECT_EQ(kind_of([] {
              PanelDataset::from_sales({Sale::make("a", "z", 1, -5.0)}, 1);
            }),
            ErrorKind::kDomain);
}

TEST(GapTime, ConsecutiveDifferences) {
  const std::vector<int> q = {1, 5, 9};
  EXPECT_EQ(gap_time(q), (std::vector<int>{4, 4}));
  const std::vector<int> bad = {3, 3};
  EXPECT_EQ(kind_of([&] { gap_time(bad); }), ErrorKind::kMalformedSeries);
}

TEST(YearMonthParse, AcceptsOnlyYearDashMonth) {
  ASSERT_TRUE(YearMonth::parse("2004-09"));
  EXPECT_EQ(YearMonth::parse("2004-09")->month, 9);
  EXPECT_FALSE(YearMonth::parse("2004-13"));
  EXPECT_FALSE(YearMonth::parse("2004/09"));
  EXPECT_FALSE(YearMonth::parse(""));
}

TEST(IngestConfig, QuarterBinning) {
  IngestConfig c;
  EXPECT_EQ(c.period_of({1985, 7}), 1);
  EXPECT_EQ(c.period_of({1985, 9}), 1);
  EXPECT_EQ(c.period_of({1985, 10}), 2);
  EXPECT_EQ(c.period_of({2004, 9}), 77);
  EXPECT_EQ(c.start_of(77), (YearMonth{2004, 7}));
}

TEST(ParseSales, CountsRejections) {
  std::istringstream in(
      "zip,house_id,price,date\n"
      "z1,a,100000,1990-01\n"
      "z1,a,-5,1991-01\n"
      "z1,b,,1990-01\n"
      "z1,c,120000,1980-01\n"
      "z1,d,120000,nonsense\n"
      "z2,e,90000,1986-02\n");
  const auto result = parse_sales(in);
  EXPECT_EQ(result.report.rows_read, 6u);
  EXPECT_EQ(result.report.accepted, 2u);
  EXPECT_EQ(result.report.bad_price, 1u);
  EXPECT_EQ(result.report.missing_field, 1u);
  EXPECT_EQ(result.report.bad_date, 2u);
  EXPECT_EQ(result.sales[0].house_id, "a");
}

TEST(ParseSales, ErrorsOnMissingColumnEmptyInputAndMissingFile) {
  std::istringstream no_price("house_id,zip,date\na,z,1990-01\n");
  EXPECT_EQ(kind_of([&] { parse_sales(no_price); }), ErrorKind::kIo);
  std::istringstream only_bad("house_id,zip,date,price\na,z,1990-01,0\n");
  EXPECT_EQ(kind_of([&] { parse_sales(only_bad); }), ErrorKind::kEmptyInput);
  EXPECT_EQ(kind_of([] { parse_sales_file("/nonexistent/sales.csv"); }),
            ErrorKind::kIo);
}

TEST(BinAndFilter, RemovesSameQuarterResales) {
  IngestConfig c;
  const std::vector<RawSale> raw = {
      {"a", "z", {1990, 1}, 100.0}, {"a", "z", {1990, 2}, 110.0},
      {"a", "z", {1992, 5}, 130.0}, {"b", "z", {1990, 1}, 90.0},
      {"b", "z", {1995, 1}, 95.0}};
  const auto result = bin_and_filter(raw, c);
  EXPECT_EQ(result.report.same_period_removed, 2u);
  EXPECT_EQ(result.panel.size(), 3u);

  c.drop_whole_house = true;
  const auto whole = bin_and_filter(raw, c);
  EXPECT_EQ(whole.panel.size(), 2u);
  for (const Sale& s : whole.panel.sales()) EXPECT_EQ(s.house_id, "b");
}

TEST(PanelCsv, RoundTripsThroughIngest) {
  SimConfig sc;
  sc.periods = 12;
  sc.zips = 3;
  sc.houses_per_zip = 20;
  ARParams p;
  p.mu = 12.0;
  p.phi = 0.9;
  p.sigma2_eps = 0.01;
  p.sigma2_tau = 0.02;
  const auto sim = simulate_ar_panel(sc, p);
  IngestConfig c;
  c.periods = 12;
  const auto path =
      std::filesystem::temp_directory_path() / "rsindex_roundtrip.csv";
  write_panel_csv(path, sim.panel, c);
  const auto loaded = load_panel(path, c);
  std::filesystem::remove(path);
  ASSERT_EQ(loaded.panel.size(), sim.panel.size());
  for (std::size_t k = 0; k < sim.panel.size(); ++k) {
    EXPECT_EQ(loaded.panel.sales()[k].house_id, sim.panel.sales()[k].house_id);
    EXPECT_EQ(loaded.panel.sales()[k].quarter, sim.panel.sales()[k].quarter);
    EXPECT_EQ(loaded.panel.sales()[k].price, sim.panel.sales()[k].price);
  }
}

TEST(Split, HoldsOutFinalSalesOnly) {
  const auto panel = PanelDataset::from_sales(
      {Sale::make("a", "z", 1, 1.0), Sale::make("a", "z", 2, 1.0),
       Sale::make("a", "z", 3, 1.0), Sale::make("b", "z", 1, 1.0)},
      3);
  const auto split = split_train_test(panel, 5);
  ASSERT_EQ(split.test.size(), 1u);
  EXPECT_EQ(split.test[0].sale.quarter, 3);
  EXPECT_EQ(split.test[0].previous.quarter, 2);
  EXPECT_EQ(split.train.size(), 3u);
}

TEST(Split, FractionAndDeterminism) {
  SimConfig sc;
  sc.seed = 17;
  ARParams p;
  p.phi = 0.9;
  p.sigma2_eps = 0.01;
  const auto sim = simulate_ar_panel(sc, p);
  const auto a = split_train_test(sim.panel, 99);
  const auto b = split_train_test(sim.panel, 99);
  const double frac = static_cast<double>(a.test.size()) /
                      static_cast<double>(sim.panel.size());
  EXPECT_NEAR(frac, 0.15, 0.02);
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    EXPECT_EQ(a.test[i].sale.house_id, b.test[i].sale.house_id);
  }
}

TEST(Rng, ReproducibleAndLabelled) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(derive_seed(1, "split"), derive_seed(1, "beta"));
  EXPECT_NE(derive_seed(1, "noise", 0), derive_seed(1, "noise", 1));
  Rng c(7);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = c.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(c.uniform_int(7), 7u);
}

}  // namespace
}  // namespace rsindex
