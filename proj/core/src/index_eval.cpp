#include "rsindex/index_eval.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <ostream>
#include <utility>

#include "json.hpp"
#include "rsindex/errors.hpp"

namespace rsindex {
namespace {

struct Moments {
  std::size_t n = 0;
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;

  void add(double x, double y) {
    ++n;
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
};

nlohmann::json cells_json(const std::vector<GapCell>& cells) {
  auto arr = nlohmann::json::array();
  for (const GapCell& c : cells) {
    nlohmann::json j{{"gap", c.gap}, {"statistic", c.statistic}, {"n", c.n}};
    if (c.expected) j["expected"] = *c.expected;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

IndexSeries index_from_beta(const std::vector<double>& beta,
                            std::string label) {
  IndexSeries out;
  out.label = std::move(label);
  out.values.reserve(beta.size());
  for (double b : beta) out.values.push_back(std::exp(b - beta.front()));
  if (!out.values.empty()) out.values.front() = 1.0;
  return out;
}

IndexSeries ar_index(const FittedARModel& model) {
  return index_from_beta(model.params.beta, "ar");
}

IndexSeries mixed_index(const FittedMixedModel& model) {
  return index_from_beta(model.params.beta, "mixed");
}

IndexSeries cs_index(const CSFit& fit) { return {"cs", fit.B}; }

IndexSeries mean_index(const PanelDataset& panel) {
  const std::size_t periods = static_cast<std::size_t>(panel.periods());
  std::vector<double> sum(periods, 0.0);
  const auto& n = panel.quarter_counts();
  for (const Sale& s : panel.sales()) {
    sum[static_cast<std::size_t>(s.quarter - 1)] += s.price;
  }
  IndexSeries out{"mean", std::vector<double>(periods, 1.0)};
  for (std::size_t t = 0; t < periods; ++t) {
    if (n[t] == 0) {
      throw Error(ErrorKind::kIdentifiability,
                  "no sales in quarter " + std::to_string(t + 1));
    }
  }
  const double base = sum[0] / static_cast<double>(n[0]);
  for (std::size_t t = 1; t < periods; ++t) {
    out.values[t] = sum[t] / static_cast<double>(n[t]) / base;
  }
  return out;
}

double rmse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) {
    throw Error(ErrorKind::kLengthMismatch,
                std::to_string(predicted.size()) + " predictions for " +
                    std::to_string(actual.size()) + " actuals");
  }
  if (predicted.empty()) {
    throw Error(ErrorKind::kEmptyInput, "rmse of zero predictions");
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = predicted[i] - actual[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(actual.size()));
}

std::vector<GapCell> correlation_by_gap(const FittedARModel& model,
                                        const PanelDataset& train) {
  std::map<int, Moments> cells;
  const auto sales = train.sales();
  const auto& p = model.params;
  const auto resid = [&](const Sale& s) {
    return s.log_price - p.mu - p.beta[static_cast<std::size_t>(s.quarter - 1)] -
           model.tau(s.zip);
  };
  for (const HouseRange& h : train.houses()) {
    for (std::size_t k = h.first_sale + 1; k < h.first_sale + h.sale_count;
         ++k) {
      cells[sales[k].quarter - sales[k - 1].quarter].add(resid(sales[k - 1]),
                                                         resid(sales[k]));
    }
  }
  std::vector<GapCell> out;
  for (const auto& [gap, m] : cells) {
    if (m.n < 2) continue;
    const double n = static_cast<double>(m.n);
    const double cxy = m.sxy - m.sx * m.sy / n;
    const double cxx = m.sxx - m.sx * m.sx / n;
    const double cyy = m.syy - m.sy * m.sy / n;
    GapCell c;
    c.gap = gap;
    c.n = m.n;
    c.statistic = cxx > 0.0 && cyy > 0.0 ? cxy / std::sqrt(cxx * cyy) : 0.0;
    c.expected = std::pow(p.phi, gap);
    out.push_back(c);
  }
  return out;
}

std::vector<GapCell> residual_variance_by_gap(
    std::span<const GapResidual> residuals,
    const std::function<double(int)>& expected) {
  std::map<int, std::vector<double>> cells;
  for (const GapResidual& r : residuals) {
    if (r.gap > 0) cells[r.gap].push_back(r.residual);
  }
  std::vector<GapCell> out;
  for (const auto& [gap, values] : cells) {
    if (values.size() < 2) continue;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    GapCell c;
    c.gap = gap;
    c.n = values.size();
    c.statistic = ss / static_cast<double>(values.size() - 1);
    if (expected) c.expected = expected(gap);
    out.push_back(c);
  }
  return out;
}

std::function<double(int)> ar_variance_curve(const ARParams& params) {
  const double phi = params.phi;
  const double s = params.sigma2_eps / (1.0 - phi * phi);
  return [phi, s](int h) { return s * (1.0 - std::pow(phi, 2.0 * h)); };
}

std::function<double(int)> mixed_variance_curve(const MixedParams& params) {
  const double v = params.sigma2_eps;
  return [v](int) { return v; };
}

std::function<double(int)> cs_variance_curve(const CSFit& fit) {
  const double a0 = fit.alpha0, a1 = fit.alpha1;
  return [a0, a1](int h) { return a0 + a1 * h; };
}

std::vector<QuantilePoint> ranef_quantiles(
    const std::map<std::string, double>& effects,
    const std::map<std::string, std::size_t>& group_sizes) {
  if (effects.size() < 3) {
    throw Error(ErrorKind::kDomain, "need at least 3 effects for a quantile "
                                    "plot, got " +
                                        std::to_string(effects.size()));
  }
  std::vector<QuantilePoint> out;
  out.reserve(effects.size());
  for (const auto& [label, value] : effects) {
    const auto g = group_sizes.find(label);
    out.push_back({label, 0.0, value, g == group_sizes.end() ? 0 : g->second});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const QuantilePoint& a, const QuantilePoint& b) {
                     return a.observed < b.observed;
                   });
  const boost::math::normal_distribution<> standard;
  const double n = static_cast<double>(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].theoretical =
        boost::math::quantile(standard, (static_cast<double>(k) + 0.5) / n);
  }
  return out;
}

void write_index_csv(std::ostream& out, const IndexSeries& index) {
  out << "quarter,index\n";
  out.precision(17);
  for (std::size_t t = 0; t < index.values.size(); ++t) {
    out << t + 1 << ',' << index.values[t] << '\n';
  }
}

void write_gap_csv(std::ostream& out, const std::vector<GapCell>& cells) {
  out << "gap,statistic,n,expected\n";
  out.precision(17);
  for (const GapCell& c : cells) {
    out << c.gap << ',' << c.statistic << ',' << c.n << ',';
    if (c.expected) out << *c.expected;
    out << '\n';
  }
}

void write_quantile_csv(std::ostream& out,
                        const std::vector<QuantilePoint>& points) {
  out << "label,theoretical,observed,group_size\n";
  out.precision(17);
  for (const QuantilePoint& p : points) {
    out << p.label << ',' << p.theoretical << ',' << p.observed << ','
        << p.group_size << '\n';
  }
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["format"] = "eval-report/1";
  j["seed"] = seed;
  j["n_train"] = n_train;
  j["n_test"] = n_test;
  auto models = nlohmann::json::array();
  for (const ModelScore& s : scores) {
    nlohmann::json m{{"model", s.model}, {"n_predicted", s.n_predicted}};
    if (s.rmse_dollars) {
      m["rmse_dollars"] = *s.rmse_dollars;
    } else {
      m["rmse_dollars"] = nullptr;
      m["failure"] = s.failure;
    }
    models.push_back(std::move(m));
  }
  j["models"] = std::move(models);
  for (const auto& [name, cells] : correlation) {
    j["correlation_by_gap"][name] = cells_json(cells);
  }
  for (const auto& [name, cells] : variance) {
    j["residual_variance_by_gap"][name] = cells_json(cells);
  }
  return j.dump(2);
}

}  // namespace rsindex
