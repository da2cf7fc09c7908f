#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsindex/ar_model.hpp"
#include "rsindex/case_shiller.hpp"
#include "rsindex/data_model.hpp"
#include "rsindex/mixed_model.hpp"

namespace rsindex {

struct IndexSeries {
  std::string label;
  std::vector<double> values;  // values[0] == 1
};

// exp(beta_t - beta_1).
IndexSeries index_from_beta(const std::vector<double>& beta, std::string label);
IndexSeries ar_index(const FittedARModel& model);
IndexSeries mixed_index(const FittedMixedModel& model);
IndexSeries cs_index(const CSFit& fit);

// Mean sale price per quarter over the mean in quarter 1. Throws
// kIdentifiability naming the first empty quarter.
IndexSeries mean_index(const PanelDataset& panel);

// Throws kLengthMismatch for unequal lengths and kEmptyInput for n = 0.
double rmse(std::span<const double> predicted, std::span<const double> actual);

struct GapCell {
  int gap = 0;
  double statistic = 0.0;
  std::optional<double> expected;
  std::size_t n = 0;
};

// Pearson correlation of consecutive AR residuals y - mu - beta - tau per
// gap, expected phi^h. Cells with fewer than two pairs are omitted.
std::vector<GapCell> correlation_by_gap(const FittedARModel& model,
                                        const PanelDataset& train);

// Sample variance of residuals per gap; gap-0 entries (first sales) are
// skipped, as are cells with fewer than two residuals.
std::vector<GapCell> residual_variance_by_gap(
    std::span<const GapResidual> residuals,
    const std::function<double(int)>& expected = {});

std::function<double(int)> ar_variance_curve(const ARParams& params);
std::function<double(int)> mixed_variance_curve(const MixedParams& params);
std::function<double(int)> cs_variance_curve(const CSFit& fit);

struct QuantilePoint {
  std::string label;
  double theoretical = 0.0;
  double observed = 0.0;
  std::size_t group_size = 0;
};

// Sorted effects against standard normal quantiles at (k - 0.5) / n. Throws
// kDomain for fewer than three effects.
std::vector<QuantilePoint> ranef_quantiles(
    const std::map<std::string, double>& effects,
    const std::map<std::string, std::size_t>& group_sizes = {});

void write_index_csv(std::ostream& out, const IndexSeries& index);
void write_gap_csv(std::ostream& out, const std::vector<GapCell>& cells);
void write_quantile_csv(std::ostream& out,
                        const std::vector<QuantilePoint>& points);

struct ModelScore {
  std::string model;
  std::optional<double> rmse_dollars;
  std::size_t n_predicted = 0;
  std::string failure;  // set when the model could not be fit
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<ModelScore> scores;
  std::map<std::string, std::vector<GapCell>> correlation;
  std::map<std::string, std::vector<GapCell>> variance;

  std::string to_json() const;
};

}  // namespace rsindex
