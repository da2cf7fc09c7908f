#include "rsindex/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

#include "rsindex/errors.hpp"
#include "rsindex/rng.hpp"

namespace rsindex {
namespace {

int draw_sale_count(Rng& rng, const std::vector<double>& probs) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cum += probs[k];
    if (u < cum) return static_cast<int>(k) + 1;
  }
  return static_cast<int>(probs.size());
}

// Partial Fisher-Yates over 1..T.
std::vector<int> uniform_quarters(Rng& rng, int periods, int count) {
  std::vector<int> pool(static_cast<std::size_t>(periods));
  std::iota(pool.begin(), pool.end(), 1);
  for (int k = 0; k < count; ++k) {
    const auto j = k + static_cast<int>(rng.uniform_int(
                           static_cast<std::uint64_t>(periods - k)));
    std::swap(pool[static_cast<std::size_t>(k)],
              pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<int> geometric_quarters(Rng& rng, int periods, int count,
                                    double mean_gap) {
  std::vector<int> out;
  int q = 1 + static_cast<int>(rng.uniform_int(
                  static_cast<std::uint64_t>(periods)));
  const double log_fail = std::log1p(-1.0 / mean_gap);
  for (int k = 0; k < count && q <= periods; ++k) {
    out.push_back(q);
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    const double extra =
        log_fail < 0.0 ? std::floor(std::log(u) / log_fail) : 0.0;
    q += 1 + static_cast<int>(std::min(extra, 1e6));
  }
  return out;
}

std::vector<int> draw_quarters(Rng& rng, const SimConfig& config) {
  const int count = draw_sale_count(rng, config.sale_count_probs);
  if (config.timing == SaleTiming::kGeometric) {
    return geometric_quarters(rng, config.periods, count, config.mean_gap);
  }
  return uniform_quarters(rng, config.periods, count);
}

std::vector<double> resolve_beta(const SimConfig& config,
                                 std::vector<double> beta) {
  if (beta.empty()) {
    return sample_beta_path(config.periods, derive_seed(config.seed, "beta"));
  }
  if (beta.size() != static_cast<std::size_t>(config.periods)) {
    throw Error(ErrorKind::kConfig,
                "truth beta has " + std::to_string(beta.size()) +
                    " entries, expected " + std::to_string(config.periods));
  }
  return beta;
}

// Shifts beta to satisfy sum_t n_t beta_t = 0 on the panel and moves the
// offset into mu; every log price is unchanged.
void centre_beta(const PanelDataset& panel, double& mu,
                 std::vector<double>& beta) {
  const auto& n = panel.quarter_counts();
  double weighted = 0.0, total = 0.0;
  for (std::size_t t = 0; t < beta.size(); ++t) {
    weighted += static_cast<double>(n[t]) * beta[t];
    total += static_cast<double>(n[t]);
  }
  if (total == 0.0) return;
  const double shift = weighted / total;
  for (double& b : beta) b -= shift;
  mu += shift;
}

std::uint64_t house_index(const SimConfig& config, int zip, int house) {
  return static_cast<std::uint64_t>(zip) *
             static_cast<std::uint64_t>(config.houses_per_zip) +
         static_cast<std::uint64_t>(house);
}

}  // namespace

void SimConfig::validate() const {
  if (periods < 1 || zips < 1 || houses_per_zip < 1) {
    throw Error(ErrorKind::kConfig,
                "periods, zips and houses_per_zip must be positive");
  }
  if (sale_count_probs.empty()) {
    throw Error(ErrorKind::kConfig, "sale_count_probs is empty");
  }
  double sum = 0.0;
  for (double p : sale_count_probs) {
    if (!(p >= 0.0)) {
      throw Error(ErrorKind::kConfig, "sale_count_probs must be >= 0");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorKind::kConfig, "sale_count_probs sum to " +
                                        std::to_string(sum) + ", not 1");
  }
  for (std::size_t k = sale_count_probs.size(); k-- > 0;) {
    if (sale_count_probs[k] > 0.0) {
      if (static_cast<int>(k) + 1 > periods) {
        throw Error(ErrorKind::kConfig,
                    "houses selling " + std::to_string(k + 1) +
                        " times cannot fit in " + std::to_string(periods) +
                        " periods");
      }
      break;
    }
  }
  if (timing == SaleTiming::kGeometric && !(mean_gap >= 1.0)) {
    throw Error(ErrorKind::kConfig, "mean_gap must be >= 1");
  }
}

std::string zip_name(int zip) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", 10000 + zip);
  return buf;
}

std::string house_name(int zip, int house) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d-%06d", 10000 + zip, house);
  return buf;
}

std::vector<double> sample_beta_path(int periods, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> beta(static_cast<std::size_t>(std::max(periods, 0)));
  double level = 0.0;
  for (std::size_t t = 1; t < beta.size(); ++t) {
    level += rng.normal(0.01, 0.02);
    beta[t] = level;
  }
  return beta;
}

ArSimulation simulate_ar_panel(const SimConfig& config, ARParams truth) {
  config.validate();
  truth.beta = resolve_beta(config, std::move(truth.beta));
  truth.validate();

  const double phi = truth.phi;
  const double marginal = truth.sigma2_eps / (1.0 - phi * phi);
  const double sd_tau = std::sqrt(truth.sigma2_tau);

  ArSimulation out;
  std::vector<Sale> sales;
  std::vector<double> latent;
  for (int z = 0; z < config.zips; ++z) {
    Rng zip_rng(derive_seed(config.seed, "zip", static_cast<std::uint64_t>(z)));
    const double tau = sd_tau * zip_rng.normal();
    out.tau[zip_name(z)] = tau;
    for (int h = 0; h < config.houses_per_zip; ++h) {
      Rng timing(derive_seed(config.seed, "timing", house_index(config, z, h)));
      Rng noise(derive_seed(config.seed, "noise", house_index(config, z, h)));
      const std::vector<int> quarters = draw_quarters(timing, config);
      double u = 0.0;
      for (std::size_t j = 0; j < quarters.size(); ++j) {
        if (j == 0) {
          u = std::sqrt(marginal) * noise.normal();
        } else {
          const double c =
              std::pow(phi, static_cast<double>(quarters[j] - quarters[j - 1]));
          u = c * u + std::sqrt(marginal * (1.0 - c * c)) * noise.normal();
        }
        const double y =
            truth.mu + truth.beta[static_cast<std::size_t>(quarters[j] - 1)] +
            tau + u;
        sales.push_back(
            Sale::make(house_name(z, h), zip_name(z), quarters[j], std::exp(y)));
        latent.push_back(u);
      }
    }
  }
  // Names are zero-padded and generated in (zip, house, quarter) order, so
  // the panel's sort leaves this sequence in place.
  out.panel = PanelDataset::from_sales(std::move(sales), config.periods);
  centre_beta(out.panel, truth.mu, truth.beta);
  out.truth = std::move(truth);
  out.latent = std::move(latent);
  return out;
}

MixedSimulation simulate_mixed_panel(const SimConfig& config,
                                     MixedParams truth) {
  config.validate();
  truth.beta = resolve_beta(config, std::move(truth.beta));
  truth.validate();
  const double sd_tau = std::sqrt(truth.sigma2_tau);
  const double sd_alpha = std::sqrt(truth.sigma2_alpha);
  const double sd_eps = std::sqrt(truth.sigma2_eps);

  MixedSimulation out;
  std::vector<Sale> sales;
  for (int z = 0; z < config.zips; ++z) {
    Rng zip_rng(derive_seed(config.seed, "zip", static_cast<std::uint64_t>(z)));
    const double tau = sd_tau * zip_rng.normal();
    out.tau[zip_name(z)] = tau;
    for (int h = 0; h < config.houses_per_zip; ++h) {
      Rng timing(derive_seed(config.seed, "timing", house_index(config, z, h)));
      Rng noise(derive_seed(config.seed, "noise", house_index(config, z, h)));
      const std::vector<int> quarters = draw_quarters(timing, config);
      const double alpha = sd_alpha * noise.normal();
      out.alpha[house_name(z, h)] = alpha;
      for (int q : quarters) {
        const double y = truth.mu + truth.beta[static_cast<std::size_t>(q - 1)] +
                         alpha + tau + sd_eps * noise.normal();
        sales.push_back(Sale::make(house_name(z, h), zip_name(z), q, std::exp(y)));
      }
    }
  }
  out.panel = PanelDataset::from_sales(std::move(sales), config.periods);
  centre_beta(out.panel, truth.mu, truth.beta);
  out.truth = std::move(truth);
  return out;
}

RandomWalkSimulation simulate_cs_panel(const SimConfig& config,
                                       RandomWalkParams truth) {
  config.validate();
  truth.beta = resolve_beta(config, std::move(truth.beta));
  if (!(truth.sigma2_u >= 0.0) || !(truth.sigma2_v >= 0.0)) {
    throw Error(ErrorKind::kDomain, "random-walk variances must be >= 0");
  }
  const double sd_u = std::sqrt(truth.sigma2_u);

  RandomWalkSimulation out;
  std::vector<Sale> sales;
  for (int z = 0; z < config.zips; ++z) {
    for (int h = 0; h < config.houses_per_zip; ++h) {
      Rng timing(derive_seed(config.seed, "timing", house_index(config, z, h)));
      Rng noise(derive_seed(config.seed, "noise", house_index(config, z, h)));
      const std::vector<int> quarters = draw_quarters(timing, config);
      double walk = 0.0;
      for (std::size_t j = 0; j < quarters.size(); ++j) {
        if (j > 0) {
          const double steps =
              static_cast<double>(quarters[j] - quarters[j - 1]);
          walk += std::sqrt(steps * truth.sigma2_v) * noise.normal();
        }
        const double y = truth.mu +
                         truth.beta[static_cast<std::size_t>(quarters[j] - 1)] +
                         walk + sd_u * noise.normal();
        sales.push_back(
            Sale::make(house_name(z, h), zip_name(z), quarters[j], std::exp(y)));
      }
    }
  }
  out.panel = PanelDataset::from_sales(std::move(sales), config.periods);
  out.truth = std::move(truth);
  return out;
}

}  // namespace rsindex
