#include "rsindex/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <utility>

#include "json.hpp"
#include "rsindex/errors.hpp"
#include "rsindex/rng.hpp"

namespace rsindex {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  // strtod wants a terminated buffer.
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

bool parse_int(std::string_view s, int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_price(double price) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(),
                                       price);
  return std::string(buf.data(), ptr);
}

}  // namespace

std::optional<YearMonth> YearMonth::parse(std::string_view text) {
  if (text.size() != 7 || text[4] != '-') return std::nullopt;
  YearMonth ym;
  if (!parse_int(text.substr(0, 4), ym.year) ||
      !parse_int(text.substr(5, 2), ym.month)) {
    return std::nullopt;
  }
  if (ym.month < 1 || ym.month > 12) return std::nullopt;
  return ym;
}

std::string YearMonth::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
  return buf;
}

YearMonth YearMonth::plus_months(int months) const {
  const int total = year * 12 + (month - 1) + months;
  return YearMonth{total / 12, total % 12 + 1};
}

void IngestConfig::validate() const {
  if (period_months < 1) {
    throw Error(ErrorKind::kConfig, "period_months must be >= 1");
  }
  if (price_min < 0.0) {
    throw Error(ErrorKind::kConfig, "price_min must be >= 0");
  }
  if (epoch.month < 1 || epoch.month > 12) {
    throw Error(ErrorKind::kConfig, "epoch month must be in 1..12");
  }
  if (periods && *periods < 1) {
    throw Error(ErrorKind::kConfig, "periods must be >= 1");
  }
}

int IngestConfig::period_of(const YearMonth& date) const {
  const int months = date.months_since(epoch);
  if (months < 0) return 0;
  return months / period_months + 1;
}

YearMonth IngestConfig::start_of(int period) const {
  return epoch.plus_months((period - 1) * period_months);
}

std::string RejectionReport::to_json() const {
  nlohmann::json j = {{"rows_read", rows_read},
                      {"accepted", accepted},
                      {"rejected",
                       {{"missing_field", missing_field},
                        {"bad_price", bad_price},
                        {"bad_date", bad_date}}}};
  return j.dump(2);
}

std::string FilterReport::to_json() const {
  nlohmann::json j = {{"input_sales", input_sales},
                      {"same_period_removed", same_period_removed},
                      {"out_of_range_removed", out_of_range_removed},
                      {"kept", kept}};
  return j.dump(2);
}

ParseResult parse_sales(std::istream& in, const IngestConfig& config) {
  config.validate();
  ParseResult result;
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::kEmptyInput, "input has no header row");
  }

  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t, std::less<>> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    column.emplace(std::string(header[c]), c);
  }
  std::array<std::size_t, 4> idx{};
  constexpr std::array<std::string_view, 4> kNames = {"house_id", "zip",
                                                      "date", "price"};
  for (std::size_t n = 0; n < kNames.size(); ++n) {
    auto it = column.find(kNames[n]);
    if (it == column.end()) {
      throw Error(ErrorKind::kIo, "CSV header lacks column '" +
                                      std::string(kNames[n]) + "'");
    }
    idx[n] = it->second;
  }

  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++result.report.rows_read;
    const auto fields = split_csv_line(line);
    const auto field = [&](std::size_t n) -> std::string_view {
      return idx[n] < fields.size() ? fields[idx[n]] : std::string_view{};
    };
    if (field(0).empty() || field(1).empty() || field(2).empty() ||
        field(3).empty()) {
      ++result.report.missing_field;
      continue;
    }
    const auto price = parse_double(field(3));
    if (!price || *price <= 0.0 || *price <= config.price_min) {
      ++result.report.bad_price;
      continue;
    }
    const auto date = YearMonth::parse(field(2));
    if (!date || date->months_since(config.epoch) < 0 ||
        (config.periods && config.period_of(*date) > *config.periods)) {
      ++result.report.bad_date;
      continue;
    }
    result.sales.push_back(RawSale{std::string(field(0)),
                                   std::string(field(1)), *date, *price});
  }
  result.report.accepted = result.sales.size();
  if (result.sales.empty()) {
    throw Error(ErrorKind::kEmptyInput, "no valid sale rows in input");
  }
  return result;
}

ParseResult parse_sales_file(const std::filesystem::path& path,
                             const IngestConfig& config) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::kIo, "cannot open " + path.string());
  }
  return parse_sales(in, config);
}

BinResult bin_and_filter(const std::vector<RawSale>& sales,
                         const IngestConfig& config) {
  config.validate();
  BinResult result;
  result.report.input_sales = sales.size();

  struct Binned {
    const RawSale* raw;
    int period;
  };
  std::vector<Binned> binned;
  binned.reserve(sales.size());
  int max_period = 0;
  for (const RawSale& s : sales) {
    const int p = config.period_of(s.date);
    if (p < 1 || (config.periods && p > *config.periods)) {
      ++result.report.out_of_range_removed;
      continue;
    }
    binned.push_back({&s, p});
    max_period = std::max(max_period, p);
  }
  const int periods = config.periods.value_or(max_period);

  std::sort(binned.begin(), binned.end(), [](const Binned& a, const Binned& b) {
    return std::tie(a.raw->zip, a.raw->house_id, a.period) <
           std::tie(b.raw->zip, b.raw->house_id, b.period);
  });

  // Houses (zip, id) that violate the one-sale-per-period rule.
  std::set<std::pair<std::string_view, std::string_view>> offenders;
  std::vector<bool> drop(binned.size(), false);
  for (std::size_t k = 0; k < binned.size();) {
    std::size_t end = k + 1;
    while (end < binned.size() && binned[end].raw->zip == binned[k].raw->zip &&
           binned[end].raw->house_id == binned[k].raw->house_id &&
           binned[end].period == binned[k].period) {
      ++end;
    }
    if (end - k > 1) {
      for (std::size_t m = k; m < end; ++m) drop[m] = true;
      offenders.emplace(binned[k].raw->zip, binned[k].raw->house_id);
    }
    k = end;
  }
  if (config.drop_whole_house) {
    for (std::size_t k = 0; k < binned.size(); ++k) {
      if (offenders.count({binned[k].raw->zip, binned[k].raw->house_id})) {
        drop[k] = true;
      }
    }
  }

  std::vector<Sale> kept;
  kept.reserve(binned.size());
  for (std::size_t k = 0; k < binned.size(); ++k) {
    if (drop[k]) {
      ++result.report.same_period_removed;
      continue;
    }
    const RawSale& r = *binned[k].raw;
    kept.push_back(Sale::make(r.house_id, r.zip, binned[k].period, r.price));
  }
  result.report.kept = kept.size();
  result.panel = PanelDataset::from_sales(std::move(kept), periods);
  return result;
}

LoadResult load_panel(const std::filesystem::path& path,
                      const IngestConfig& config) {
  ParseResult parsed = parse_sales_file(path, config);
  BinResult binned = bin_and_filter(parsed.sales, config);
  return LoadResult{std::move(binned.panel), parsed.report, binned.report};
}

void write_panel_csv(std::ostream& out, const PanelDataset& panel,
                     const IngestConfig& config) {
  out << "house_id,zip,date,price\n";
  for (const Sale& s : panel.sales()) {
    out << s.house_id << ',' << s.zip << ','
        << config.start_of(s.quarter).to_string() << ','
        << format_price(s.price) << '\n';
  }
}

void write_panel_csv(const std::filesystem::path& path,
                     const PanelDataset& panel, const IngestConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  write_panel_csv(out, panel, config);
}

TrainTestSplit split_train_test(const PanelDataset& panel,
                                std::uint64_t seed) {
  Rng rng(derive_seed(seed, "split"));
  std::vector<Sale> train;
  train.reserve(panel.size());
  TrainTestSplit split;
  split.seed = seed;

  for (const HouseRange& h : panel.houses()) {
    const auto series = panel.house_sales(h);
    bool hold_out_last = false;
    if (series.size() >= 3) {
      hold_out_last = true;
    } else if (series.size() == 2) {
      // Draw only for two-sale houses so the stream depends on nothing else.
      hold_out_last = rng.bernoulli(0.5);
    }
    const std::size_t n_train = series.size() - (hold_out_last ? 1 : 0);
    for (std::size_t j = 0; j < n_train; ++j) train.push_back(series[j]);
    if (hold_out_last) {
      split.test.push_back(TestSale{series.back(), series[series.size() - 2]});
    }
  }
  split.train = PanelDataset::from_sales(std::move(train), panel.periods());
  return split;
}

}  // namespace rsindex
