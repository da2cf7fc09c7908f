#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rsindex/data_model.hpp"

namespace rsindex {

struct YearMonth {
  int year = 0;
  int month = 0;  // 1..12

  // Parses "YYYY-MM"; nullopt on anything else.
  static std::optional<YearMonth> parse(std::string_view text);
  std::string to_string() const;
  int months_since(const YearMonth& origin) const {
    return (year - origin.year) * 12 + (month - origin.month);
  }
  YearMonth plus_months(int months) const;

  friend bool operator==(const YearMonth&, const YearMonth&) = default;
};

struct IngestConfig {
  int period_months = 3;
  YearMonth epoch{1985, 7};
  // Number of periods T; nullopt means "last period observed in the data".
  std::optional<int> periods;
  std::uint64_t seed = 0;
  // Rows with price <= price_min are rejected.
  double price_min = 0.0;
  // Drop every sale of a house that ever sells twice in one period, rather
  // than only the offending period's sales.
  bool drop_whole_house = false;

  void validate() const;
  // 1-based period of a calendar month.
  int period_of(const YearMonth& date) const;
  // First calendar month of a 1-based period.
  YearMonth start_of(int period) const;
};

// A parsed CSV row before period binning.
struct RawSale {
  std::string house_id;
  std::string zip;
  YearMonth date;
  double price = 0.0;
};

struct RejectionReport {
  std::size_t rows_read = 0;
  std::size_t accepted = 0;
  std::size_t missing_field = 0;
  std::size_t bad_price = 0;
  std::size_t bad_date = 0;

  std::string to_json() const;
};

struct FilterReport {
  std::size_t input_sales = 0;
  std::size_t same_period_removed = 0;
  std::size_t out_of_range_removed = 0;
  std::size_t kept = 0;

  std::string to_json() const;
};

struct ParseResult {
  std::vector<RawSale> sales;
  RejectionReport report;
};

// Headered CSV with columns house_id,zip,date,price (date as YYYY-MM).
// Throws kEmptyInput when no row survives, kIo on unreadable input.
ParseResult parse_sales(std::istream& in, const IngestConfig& config = {});
ParseResult parse_sales_file(const std::filesystem::path& path,
                             const IngestConfig& config = {});

struct BinResult {
  PanelDataset panel;
  FilterReport report;
};

BinResult bin_and_filter(const std::vector<RawSale>& sales,
                         const IngestConfig& config);

// Convenience: parse + bin. Rejection and filter reports are returned too.
struct LoadResult {
  PanelDataset panel;
  RejectionReport rejections;
  FilterReport filter;
};
LoadResult load_panel(const std::filesystem::path& path,
                      const IngestConfig& config);

// Writes the panel in the same CSV format parse_sales reads; prices are
// printed with round-trip precision.
void write_panel_csv(std::ostream& out, const PanelDataset& panel,
                     const IngestConfig& config);
void write_panel_csv(const std::filesystem::path& path,
                     const PanelDataset& panel, const IngestConfig& config);

// Final sales of houses with >= 3 sales always go to test; the second sale of
// a two-sale house goes to test with probability 1/2.
TrainTestSplit split_train_test(const PanelDataset& panel, std::uint64_t seed);

}  // namespace rsindex
