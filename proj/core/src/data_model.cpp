#include "rsindex/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>

#include "rsindex/errors.hpp"

namespace rsindex {

Sale Sale::make(std::string house_id, std::string zip, int quarter,
                double price) {
  Sale s;
  s.house_id = std::move(house_id);
  s.zip = std::move(zip);
  s.quarter = quarter;
  s.price = price;
  s.log_price = std::log(price);
  return s;
}

PanelDataset PanelDataset::from_sales(std::vector<Sale> sales, int periods) {
  if (periods < 0) {
    throw Error(ErrorKind::kConfig, "period count must be non-negative");
  }
  std::stable_sort(sales.begin(), sales.end(),
                   [](const Sale& a, const Sale& b) {
                     return std::tie(a.zip, a.house_id, a.quarter) <
                            std::tie(b.zip, b.house_id, b.quarter);
                   });

  std::unordered_map<std::string, std::string> zip_of_house;
  PanelDataset panel;
  panel.periods_ = periods;
  panel.quarter_counts_.assign(static_cast<std::size_t>(periods), 0);
  panel.house_index_.reserve(sales.size());

  for (std::size_t k = 0; k < sales.size(); ++k) {
    Sale& s = sales[k];
    if (!(s.price > 0.0) || !std::isfinite(s.price)) {
      throw Error(ErrorKind::kDomain,
                  "non-positive price for house " + s.house_id);
    }
    if (s.quarter < 1 || s.quarter > periods) {
      throw Error(ErrorKind::kMalformedSeries,
                  "quarter " + std::to_string(s.quarter) + " of house " +
                      s.house_id + " outside 1.." + std::to_string(periods));
    }
    auto [it, inserted] = zip_of_house.emplace(s.house_id, s.zip);
    if (!inserted && it->second != s.zip) {
      throw Error(ErrorKind::kMalformedSeries,
                  "house " + s.house_id + " appears in ZIPs " + it->second +
                      " and " + s.zip);
    }

    const bool new_house = k == 0 || sales[k - 1].house_id != s.house_id ||
                           sales[k - 1].zip != s.zip;
    if (new_house) {
      if (k == 0 || sales[k - 1].zip != s.zip) {
        ZipRange z;
        z.zip = s.zip;
        z.first_house = panel.houses_.size();
        z.first_sale = k;
        panel.zips_.push_back(std::move(z));
      }
      panel.houses_.push_back(HouseRange{k, 0});
      s.ordinal = 1;
    } else {
      const Sale& prev = sales[k - 1];
      if (prev.quarter >= s.quarter) {
        throw Error(ErrorKind::kMalformedSeries,
                    "house " + s.house_id + " sold twice in quarter " +
                        std::to_string(s.quarter));
      }
      s.ordinal = prev.ordinal + 1;
    }
    panel.houses_.back().sale_count += 1;
    panel.zips_.back().sale_count += 1;
    if (new_house) panel.zips_.back().house_count += 1;
    panel.house_index_.push_back(panel.houses_.size() - 1);
    panel.quarter_counts_[static_cast<std::size_t>(s.quarter - 1)] += 1;
  }
  panel.sales_ = std::move(sales);
  return panel;
}

std::vector<int> gap_time(std::span<const int> quarters) {
  std::vector<int> gaps;
  if (quarters.size() < 2) return gaps;
  gaps.reserve(quarters.size() - 1);
  for (std::size_t j = 1; j < quarters.size(); ++j) {
    const int g = quarters[j] - quarters[j - 1];
    if (g <= 0) {
      throw Error(ErrorKind::kMalformedSeries,
                  "sale quarters must strictly increase");
    }
    gaps.push_back(g);
  }
  return gaps;
}

std::vector<int> gap_time(std::span<const Sale> house_series) {
  std::vector<int> quarters;
  quarters.reserve(house_series.size());
  for (const Sale& s : house_series) quarters.push_back(s.quarter);
  return gap_time(quarters);
}

}  // namespace rsindex
