#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "json.hpp"
#include "rsindex/ar_model.hpp"
#include "rsindex/case_shiller.hpp"
#include "rsindex/errors.hpp"
#include "rsindex/index_eval.hpp"
#include "rsindex/mixed_model.hpp"
#include "rsindex/model_io.hpp"
#include "rsindex/simulate.hpp"

namespace rsindex::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

json binning_json(const BinningOptions& b) {
  return {{"period_months", b.period_months},
          {"epoch", b.epoch},
          {"periods", b.periods ? json(*b.periods) : json()},
          {"price_min", b.price_min},
          {"drop_whole_house", b.drop_whole_house}};
}

IngestConfig model_binning(const SavedModel& model) {
  IngestConfig c;
  c.epoch = model.epoch;
  c.period_months = model.period_months;
  c.periods = model.periods();
  return c;
}

std::string failure_text(const Error& e) {
  return std::string(to_string(e.kind())) + ": " + e.what();
}

void write_gap_file(const fs::path& path, const std::vector<GapCell>& cells,
                    RunManifest& run) {
  auto out = open_output(path);
  write_gap_csv(out, cells);
  run.outputs.push_back(path.string());
}

void write_quantile_file(const fs::path& path,
                         const std::map<std::string, double>& effects,
                         const std::map<std::string, std::size_t>& sizes,
                         RunManifest& run) {
  if (effects.size() < 3) return;
  auto out = open_output(path);
  write_quantile_csv(out, ranef_quantiles(effects, sizes));
  run.outputs.push_back(path.string());
}

void write_index_file(const fs::path& path, const IndexSeries& index,
                      RunManifest& run) {
  auto out = open_output(path);
  write_index_csv(out, index);
  run.outputs.push_back(path.string());
}

std::map<std::string, std::size_t> house_sizes(const PanelDataset& panel) {
  std::map<std::string, std::size_t> sizes;
  for (const HouseRange& h : panel.houses()) {
    sizes[panel.sales()[h.first_sale].house_id] = h.sale_count;
  }
  return sizes;
}

// Diagnostics shared by `evaluate` and `diagnose`. File names carry the
// model name when `tagged`.
void write_diagnostics(const SavedModel& model, const PanelDataset& train,
                       const fs::path& dir, bool tagged, RunManifest& run,
                       EvalReport* report) {
  const std::string name(to_string(model.kind));
  const auto file = [&](const std::string& stem) {
    return dir / (tagged ? stem + "_" + name + ".csv" : stem + ".csv");
  };
  switch (model.kind) {
    case ModelKind::kAr: {
      const FittedARModel& m = *model.ar;
      const auto corr = correlation_by_gap(m, train);
      const auto var = residual_variance_by_gap(ar_training_residuals(m, train),
                                                ar_variance_curve(m.params));
      write_gap_file(file("correlation_by_gap"), corr, run);
      write_gap_file(file("variance_by_gap"), var, run);
      write_quantile_file(file("ranef_zip"), m.tau_hat, m.zip_sales, run);
      if (report) {
        report->correlation[name] = corr;
        report->variance[name] = var;
      }
      break;
    }
    case ModelKind::kMixed: {
      const FittedMixedModel& m = *model.mixed;
      const auto var =
          residual_variance_by_gap(mixed_training_residuals(m, train),
                                   mixed_variance_curve(m.params));
      write_gap_file(file("variance_by_gap"), var, run);
      write_quantile_file(file("ranef_zip"), m.tau_hat, m.zip_sales, run);
      write_quantile_file(file("ranef_house"), m.alpha_hat, house_sizes(train),
                          run);
      if (report) report->variance[name] = var;
      break;
    }
    case ModelKind::kCs: {
      const CSFit& f = *model.cs;
      const auto var = residual_variance_by_gap(
          cs_pair_residuals(f, build_sale_pairs(train)), cs_variance_curve(f));
      write_gap_file(file("variance_by_gap"), var, run);
      if (report) report->variance[name] = var;
      break;
    }
  }
}

IndexSeries index_of(const SavedModel& model) {
  switch (model.kind) {
    case ModelKind::kAr:
      return ar_index(*model.ar);
    case ModelKind::kMixed:
      return mixed_index(*model.mixed);
    case ModelKind::kCs:
      return cs_index(*model.cs);
  }
  throw Error(ErrorKind::kConfig, "unknown model kind");
}

SavedModel fit_model(ModelKind kind, const PanelDataset& train,
                     int max_iters, double tau_prior_factor) {
  SavedModel saved;
  saved.kind = kind;
  switch (kind) {
    case ModelKind::kAr: {
      ArFitConfig c;
      c.max_iters = max_iters;
      c.tau_prior_factor = tau_prior_factor;
      saved.ar = fit_ar(train, c);
      break;
    }
    case ModelKind::kMixed: {
      MixedFitConfig c;
      c.max_iters = max_iters;
      saved.mixed = fit_mixed(train, c);
      break;
    }
    case ModelKind::kCs:
      saved.cs = fit_cs(build_sale_pairs(train), train.periods());
      break;
  }
  return saved;
}

bool converged(const SavedModel& m) {
  if (m.ar) return m.ar->converged;
  if (m.mixed) return m.mixed->converged;
  return true;
}

std::string stop_reason(const SavedModel& m) {
  if (m.ar) return m.ar->stop_reason;
  if (m.mixed) {
    return "iterations=" + std::to_string(m.mixed->iterations) +
           " blup_sweeps=" + std::to_string(m.mixed->blup_sweeps);
  }
  return "";
}

double predict_test_sale(const SavedModel& m, const TestSale& t) {
  switch (m.kind) {
    case ModelKind::kAr:
      return predict_ar(*m.ar,
                        PriorSale{t.previous.quarter, t.previous.log_price},
                        t.sale.zip, t.sale.quarter)
          .price;
    case ModelKind::kMixed:
      return predict_mixed(*m.mixed, t.sale.house_id, t.sale.zip,
                           t.sale.quarter)
          .price;
    case ModelKind::kCs:
      return predict_cs(*m.cs, t.previous.quarter, t.previous.price,
                        t.sale.quarter);
  }
  throw Error(ErrorKind::kConfig, "unknown model kind");
}

SimConfig sim_config_from(const json& j) {
  SimConfig c;
  c.periods = j.value("periods", c.periods);
  c.zips = j.value("zips", c.zips);
  c.houses_per_zip = j.value("houses_per_zip", c.houses_per_zip);
  c.sale_count_probs = j.value("sale_count_probs", c.sale_count_probs);
  const std::string timing = j.value("timing", std::string("uniform"));
  if (timing == "uniform") {
    c.timing = SaleTiming::kUniform;
  } else if (timing == "geometric") {
    c.timing = SaleTiming::kGeometric;
  } else {
    throw Error(ErrorKind::kConfig, "timing must be 'uniform' or "
                                    "'geometric', got '" + timing + "'");
  }
  c.mean_gap = j.value("mean_gap", c.mean_gap);
  c.seed = j.value("seed", c.seed);
  return c;
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> keys,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) {
      throw Error(ErrorKind::kConfig,
                  "unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

IngestConfig BinningOptions::to_config(std::uint64_t seed) const {
  IngestConfig c;
  c.period_months = period_months;
  const auto parsed = YearMonth::parse(epoch);
  if (!parsed) {
    throw Error(ErrorKind::kConfig, "--epoch must be YYYY-MM, got " + epoch);
  }
  c.epoch = *parsed;
  c.periods = periods;
  c.seed = seed;
  c.price_min = price_min;
  c.drop_whole_house = drop_whole_house;
  c.validate();
  return c;
}

void run_fit(const FitOptions& opt, RunManifest& run) {
  run.config = {{"model", opt.model},
                {"binning", binning_json(opt.binning)},
                {"max_iters", opt.max_iters},
                {"tau_prior_factor", opt.tau_prior_factor},
                {"allow_nonconverged", opt.allow_nonconverged}};
  run.inputs.push_back(opt.input);
  const ModelKind kind = parse_model_kind(opt.model);
  run.artifacts["model"] = format_tag(kind);

  const IngestConfig ingest = opt.binning.to_config();
  const LoadResult loaded = load_panel(opt.input, ingest);
  run.config["rows_read"] = loaded.rejections.rows_read;
  run.config["sales_kept"] = loaded.filter.kept;

  SavedModel saved =
      fit_model(kind, loaded.panel, opt.max_iters, opt.tau_prior_factor);
  saved.epoch = ingest.epoch;
  saved.period_months = ingest.period_months;
  if (!converged(saved) && !opt.allow_nonconverged) {
    throw Error(ErrorKind::kConvergence,
                std::string(to_string(kind)) + " fit did not converge (" +
                    stop_reason(saved) + "); rerun with --allow-nonconverged "
                    "to keep the estimate");
  }
  save_model(opt.out, saved);
  run.outputs.push_back(opt.out);
}

void run_evaluate(const EvaluateOptions& opt, RunManifest& run) {
  run.config = {{"models", opt.models},
                {"binning", binning_json(opt.binning)},
                {"max_iters", opt.max_iters},
                {"tau_prior_factor", opt.tau_prior_factor}};
  run.seed = opt.seed;
  run.inputs.push_back(opt.input);
  std::vector<ModelKind> kinds;
  for (const auto& name : opt.models) kinds.push_back(parse_model_kind(name));

  const IngestConfig ingest = opt.binning.to_config(opt.seed);
  const LoadResult loaded = load_panel(opt.input, ingest);
  const TrainTestSplit split = split_train_test(loaded.panel, opt.seed);

  const fs::path dir(opt.out_dir);
  EvalReport report;
  report.seed = opt.seed;
  report.n_train = split.train.size();
  report.n_test = split.test.size();
  std::vector<double> actual;
  for (const TestSale& t : split.test) actual.push_back(t.sale.price);

  std::optional<Error> first_failure;
  for (ModelKind kind : kinds) {
    const std::string name(to_string(kind));
    run.artifacts[name] = format_tag(kind);
    ModelScore score;
    score.model = name;
    try {
      SavedModel m = fit_model(kind, split.train, opt.max_iters,
                               opt.tau_prior_factor);
      if (!converged(m)) {
        throw Error(ErrorKind::kConvergence,
                    name + " fit did not converge (" + stop_reason(m) + ")");
      }
      std::vector<double> predicted;
      predicted.reserve(split.test.size());
      for (const TestSale& t : split.test) {
        predicted.push_back(predict_test_sale(m, t));
      }
      score.n_predicted = predicted.size();
      score.rmse_dollars = rmse(predicted, actual);
      write_index_file(dir / ("index_" + name + ".csv"), index_of(m), run);
      write_diagnostics(m, split.train, dir, true, run, &report);
    } catch (const Error& e) {
      score.failure = failure_text(e);
      if (!first_failure) first_failure = e;
    }
    report.scores.push_back(score);
  }

  try {
    write_index_file(dir / "index_mean.csv", mean_index(split.train), run);
  } catch (const Error&) {
    // A quarter with no training sales has no mean; the file is omitted.
  }

  const fs::path eval_path = dir / "eval.json";
  auto out = open_output(eval_path);
  out << report.to_json() << '\n';
  out.close();
  run.outputs.push_back(eval_path.string());

  const bool any_ok = std::any_of(
      report.scores.begin(), report.scores.end(),
      [](const ModelScore& s) { return s.rmse_dollars.has_value(); });
  if (!any_ok && first_failure) {
    throw Error(first_failure->kind(),
                std::string("every model failed; first failure: ") +
                    first_failure->what());
  }
}

void run_index(const IndexOptions& opt, RunManifest& run) {
  run.inputs.push_back(opt.model);
  const SavedModel model = load_model(opt.model);
  run.artifacts["model"] = format_tag(model.kind);
  write_index_file(opt.out, index_of(model), run);
}

void run_predict(const PredictOptions& opt, RunManifest& run) {
  run.inputs = {opt.model, opt.sales};
  const SavedModel model = load_model(opt.model);
  run.artifacts["model"] = format_tag(model.kind);
  const IngestConfig binning = model_binning(model);
  const ParseResult parsed = parse_sales_file(opt.sales, binning);
  const int periods = model.periods();

  struct Row {
    int quarter;
    double price;
  };
  std::map<std::string, std::vector<Row>> history;
  for (const RawSale& s : parsed.sales) {
    history[s.house_id].push_back({binning.period_of(s.date), s.price});
  }
  for (auto& [house, rows] : history) {
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return a.quarter < b.quarter;
    });
  }

  auto out = open_output(opt.out);
  out << "house_id,zip,date,quarter,price,predicted,status\n";
  out << std::setprecision(17);
  for (const RawSale& s : parsed.sales) {
    const int q = binning.period_of(s.date);
    std::optional<Row> prev;
    for (const Row& r : history[s.house_id]) {
      if (r.quarter < q) prev = r;
    }
    std::optional<double> predicted;
    std::string status = "ok";
    if (q < 1 || q > periods || (prev && prev->quarter < 1)) {
      status = "out_of_range";
    } else {
      switch (model.kind) {
        case ModelKind::kAr: {
          std::optional<PriorSale> prior;
          if (prev) prior = PriorSale{prev->quarter, std::log(prev->price)};
          const ArPrediction p = predict_ar(*model.ar, prior, s.zip, q);
          predicted = p.price;
          if (p.unseen_zip) status = "unseen_zip";
          break;
        }
        case ModelKind::kMixed: {
          const MixedPrediction p = predict_mixed(*model.mixed, s.house_id,
                                                  s.zip, q);
          predicted = p.price;
          if (p.unseen_house) status = "unseen_house";
          if (p.unseen_zip) status = "unseen_zip";
          break;
        }
        case ModelKind::kCs:
          if (prev) {
            predicted = predict_cs(*model.cs, prev->quarter, prev->price, q);
          } else {
            status = std::string(to_string(ErrorKind::kUnsupportedPrediction));
          }
          break;
      }
    }
    out << s.house_id << ',' << s.zip << ',' << s.date.to_string() << ','
        << q << ',' << s.price << ',';
    if (predicted) out << *predicted;
    out << ',' << status << '\n';
  }
  out.close();
  run.outputs.push_back(opt.out);
}

void run_simulate(const SimulateOptions& opt, RunManifest& run) {
  run.inputs.push_back(opt.config);
  std::ifstream in(opt.config);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + opt.config);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, opt.config + ": " + e.what());
  }

  try {
    reject_unknown_keys(j,
                        {"model", "periods", "zips", "houses_per_zip",
                         "sale_count_probs", "timing", "mean_gap", "seed",
                         "epoch", "period_months", "truth"},
                        opt.config);
    SimConfig sim = sim_config_from(j);
    if (opt.seed) sim.seed = *opt.seed;
    run.seed = sim.seed;
    run.config = j;
    run.config["seed"] = sim.seed;

    BinningOptions b;
    b.epoch = j.value("epoch", b.epoch);
    b.period_months = j.value("period_months", b.period_months);
    b.periods = sim.periods;
    const IngestConfig ingest = b.to_config(sim.seed);

    const std::string model = j.value("model", std::string("ar"));
    const json truth_in = j.value("truth", json::object());
    const auto beta = truth_in.value("beta", std::vector<double>{});
    json truth_out;
    PanelDataset panel;
    switch (parse_model_kind(model)) {
      case ModelKind::kAr: {
        reject_unknown_keys(truth_in,
                            {"mu", "beta", "phi", "sigma2_eps", "sigma2_tau"},
                            "truth");
        ARParams p;
        p.mu = truth_in.value("mu", 12.0);
        p.beta = beta;
        p.phi = truth_in.value("phi", 0.99);
        p.sigma2_eps = truth_in.value("sigma2_eps", 0.0015);
        p.sigma2_tau = truth_in.value("sigma2_tau", 0.1);
        ArSimulation s = simulate_ar_panel(sim, p);
        truth_out = {{"mu", s.truth.mu},
                     {"beta", s.truth.beta},
                     {"phi", s.truth.phi},
                     {"sigma2_eps", s.truth.sigma2_eps},
                     {"sigma2_tau", s.truth.sigma2_tau},
                     {"tau", s.tau}};
        panel = std::move(s.panel);
        break;
      }
      case ModelKind::kMixed: {
        reject_unknown_keys(
            truth_in,
            {"mu", "beta", "sigma2_alpha", "sigma2_tau", "sigma2_eps"},
            "truth");
        MixedParams p;
        p.mu = truth_in.value("mu", 12.0);
        p.beta = beta;
        p.sigma2_alpha = truth_in.value("sigma2_alpha", 0.05);
        p.sigma2_tau = truth_in.value("sigma2_tau", 0.1);
        p.sigma2_eps = truth_in.value("sigma2_eps", 0.01);
        MixedSimulation s = simulate_mixed_panel(sim, p);
        truth_out = {{"mu", s.truth.mu},
                     {"beta", s.truth.beta},
                     {"sigma2_alpha", s.truth.sigma2_alpha},
                     {"sigma2_tau", s.truth.sigma2_tau},
                     {"sigma2_eps", s.truth.sigma2_eps},
                     {"tau", s.tau}};
        panel = std::move(s.panel);
        break;
      }
      case ModelKind::kCs: {
        reject_unknown_keys(truth_in, {"mu", "beta", "sigma2_u", "sigma2_v"},
                            "truth");
        RandomWalkParams p;
        p.mu = truth_in.value("mu", 12.0);
        p.beta = beta;
        p.sigma2_u = truth_in.value("sigma2_u", 0.004);
        p.sigma2_v = truth_in.value("sigma2_v", 0.0004);
        RandomWalkSimulation s = simulate_cs_panel(sim, p);
        truth_out = {{"mu", s.truth.mu},
                     {"beta", s.truth.beta},
                     {"sigma2_u", s.truth.sigma2_u},
                     {"sigma2_v", s.truth.sigma2_v}};
        panel = std::move(s.panel);
        break;
      }
    }
    write_panel_csv(fs::path(opt.out), panel, ingest);
    run.outputs.push_back(opt.out);
    if (!opt.truth_out.empty()) {
      truth_out["format"] = "sim-truth/1";
      truth_out["model"] = model;
      truth_out["seed"] = sim.seed;
      auto t = open_output(opt.truth_out);
      t << truth_out.dump(2) << '\n';
      t.close();
      run.outputs.push_back(opt.truth_out);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, opt.config + ": " + e.what());
  }
}

void run_diagnose(const DiagnoseOptions& opt, RunManifest& run) {
  run.inputs = {opt.model, opt.train};
  const SavedModel model = load_model(opt.model);
  run.artifacts["model"] = format_tag(model.kind);
  const LoadResult loaded = load_panel(opt.train, model_binning(model));
  write_diagnostics(model, loaded.panel, opt.out_dir, false, run, nullptr);
}

}  // namespace rsindex::cli
