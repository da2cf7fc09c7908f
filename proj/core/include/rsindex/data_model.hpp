#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rsindex {

// One recorded sale after period binning. `quarter` is 1-based.
struct Sale {
  std::string house_id;
  std::string zip;
  int quarter = 0;
  double price = 0.0;
  double log_price = 0.0;
  int ordinal = 0;  // 1..J_i within the house, assigned by PanelDataset

  static Sale make(std::string house_id, std::string zip, int quarter,
                   double price);
};

// Contiguous run of sales belonging to one house inside PanelDataset::sales().
struct HouseRange {
  std::size_t first_sale = 0;
  std::size_t sale_count = 0;
};

// Contiguous run of houses (and therefore sales) belonging to one ZIP.
struct ZipRange {
  std::string zip;
  std::size_t first_house = 0;
  std::size_t house_count = 0;
  std::size_t first_sale = 0;
  std::size_t sale_count = 0;
};

// Immutable panel of sales ordered by (zip, house_id, quarter).
class PanelDataset {
 public:
  PanelDataset() = default;

  // Sorts, validates and assigns ordinals. Throws kMalformedSeries if a house
  // has two sales in one quarter, a house appears under two ZIPs, or a
  // quarter lies outside 1..periods; kDomain for a non-positive price.
  static PanelDataset from_sales(std::vector<Sale> sales, int periods);

  std::span<const Sale> sales() const { return sales_; }
  std::span<const HouseRange> houses() const { return houses_; }
  std::span<const ZipRange> zips() const { return zips_; }

  std::span<const Sale> house_sales(const HouseRange& h) const {
    return std::span<const Sale>(sales_).subspan(h.first_sale, h.sale_count);
  }

  int periods() const { return periods_; }
  std::size_t size() const { return sales_.size(); }
  bool empty() const { return sales_.empty(); }
  std::size_t zip_count() const { return zips_.size(); }

  // n_t for t = 1..T, stored at index t-1.
  const std::vector<std::size_t>& quarter_counts() const {
    return quarter_counts_;
  }

  // Index into houses() of the house owning sale k.
  std::size_t house_of(std::size_t sale_index) const {
    return house_index_[sale_index];
  }

  std::vector<Sale> to_sales() const { return sales_; }

 private:
  std::vector<Sale> sales_;
  std::vector<HouseRange> houses_;
  std::vector<ZipRange> zips_;
  std::vector<std::size_t> house_index_;
  std::vector<std::size_t> quarter_counts_;
  int periods_ = 0;
};

// Two consecutive sales of one house.
struct SalePair {
  std::string house_id;
  std::string zip;
  int first_quarter = 0;
  int second_quarter = 0;
  double first_price = 0.0;
  double second_price = 0.0;

  int gap() const { return second_quarter - first_quarter; }
};

// A held-out sale together with the sale immediately before it (still in
// the training panel).
struct TestSale {
  Sale sale;
  Sale previous;
};

struct TrainTestSplit {
  PanelDataset train;
  std::vector<TestSale> test;
  std::uint64_t seed = 0;
};

// A model residual tagged with the gap since the house's previous sale
// (0 for a first sale).
struct GapResidual {
  int gap = 0;
  double residual = 0.0;
};

// Gap times between consecutive sales. Throws kMalformedSeries unless the
// quarters strictly increase.
std::vector<int> gap_time(std::span<const int> quarters);
std::vector<int> gap_time(std::span<const Sale> house_series);

}  // namespace rsindex
