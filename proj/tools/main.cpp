#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "manifest.hpp"
#include "rsindex/errors.hpp"

namespace {

namespace fs = std::filesystem;
using namespace rsindex;
using namespace rsindex::cli;

void print_error(std::string_view kind, const std::string& message, int code) {
  const nlohmann::json j = {
      {"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
  std::cerr << j.dump() << '\n';
}

void add_binning(CLI::App* cmd, BinningOptions& b) {
  cmd->add_option("--period-months", b.period_months,
                  "Months per index period")
      ->capture_default_str()
      ->check(CLI::Range(1, 120));
  cmd->add_option("--epoch", b.epoch, "First month of period 1 (YYYY-MM)")
      ->capture_default_str();
  cmd->add_option("--periods", b.periods,
                  "Number of periods T (default: last period observed)");
  cmd->add_option("--price-min", b.price_min,
                  "Reject rows with price <= this value")
      ->capture_default_str();
  cmd->add_flag("--drop-whole-house", b.drop_whole_house,
                "Drop every sale of a house that sells twice in one period");
}

int run_cli(std::vector<std::string> args);

// Re-executes a recorded run from its working directory and checks every
// recorded output digest.
int run_rerun(const std::string& manifest_path, std::string rerun_manifest) {
  const LoadedManifest m = read_manifest(manifest_path);
  if (rerun_manifest.empty()) {
    fs::path p = fs::absolute(manifest_path);
    rerun_manifest = (p.parent_path() / (p.stem().string() + ".rerun.json"))
                         .string();
  } else {
    rerun_manifest = fs::absolute(rerun_manifest).string();
  }
  const fs::path previous_cwd = fs::current_path();
  if (!m.cwd.empty()) fs::current_path(m.cwd);

  std::vector<std::string> args = m.argv;
  args.push_back("--manifest");
  args.push_back(rerun_manifest);
  nlohmann::json inputs_changed = nlohmann::json::array();
  for (const FileDigest& want : m.inputs) {
    if (digest_file(want.path).fnv1a64 != want.fnv1a64) {
      inputs_changed.push_back(want.path);
    }
  }
  const int code = run_cli(args);

  nlohmann::json mismatches = nlohmann::json::array();
  for (const FileDigest& want : m.outputs) {
    const FileDigest got = digest_file(want.path);
    if (got.fnv1a64 != want.fnv1a64 || got.bytes != want.bytes) {
      mismatches.push_back(want.path);
    }
  }
  fs::current_path(previous_cwd);
  const bool reproduced = code == 0 && mismatches.empty();
  const nlohmann::json summary = {{"rerun_manifest", rerun_manifest},
                                  {"exit_code", code},
                                  {"inputs_changed", inputs_changed},
                                  {"outputs_checked", m.outputs.size()},
                                  {"mismatches", mismatches},
                                  {"reproduced", reproduced}};
  std::cout << summary.dump(2) << '\n';
  if (code != 0) return code;
  if (!mismatches.empty()) {
    print_error("not_reproduced",
                std::to_string(mismatches.size()) +
                    " output(s) differ from the recorded run",
                2);
    return 2;
  }
  return 0;
}

int run_cli(std::vector<std::string> args) {
  CLI::App app{"Repeat-sales house price indices: fit, evaluate, simulate"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(RSINDEX_VERSION));

  std::string manifest_path;
  app.add_option("--manifest", manifest_path,
                 "Where to write the run manifest (default: next to the "
                 "primary output)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one model to a sales CSV");
  fit_cmd->add_option("input", fit.input, "Sales CSV (house_id,zip,date,price)")
      ->required();
  fit_cmd->add_option("--model", fit.model, "Model to fit")
      ->check(CLI::IsMember({"ar", "mixed", "cs"}))
      ->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Model JSON to write")->required();
  fit_cmd->add_option("--max-iters", fit.max_iters,
                      "Coordinate-ascent iteration cap")
      ->capture_default_str();
  fit_cmd->add_option("--tau-prior-factor", fit.tau_prior_factor,
                      "Prior-precision multiplier in the AR ZIP effect "
                      "estimate (1 gives the Henderson BLUP)")
      ->capture_default_str();
  fit_cmd->add_flag("--allow-nonconverged", fit.allow_nonconverged,
                    "Write the model even if the fit hit the iteration cap");
  add_binning(fit_cmd, fit.binning);

  EvaluateOptions ev;
  auto* ev_cmd = app.add_subcommand(
      "evaluate", "Split, fit each model, score held-out sales, diagnose");
  ev_cmd->add_option("input", ev.input, "Sales CSV")->required();
  ev_cmd->add_option("--seed", ev.seed, "Seed for the train/test split")
      ->capture_default_str();
  ev_cmd->add_option("--models", ev.models, "Comma-separated models")
      ->delimiter(',')
      ->check(CLI::IsMember({"ar", "mixed", "cs"}))
      ->capture_default_str();
  ev_cmd->add_option("--out", ev.out_dir,
                     "Directory for eval.json and diagnostic CSVs")
      ->required();
  ev_cmd->add_option("--max-iters", ev.max_iters,
                     "Coordinate-ascent iteration cap")
      ->capture_default_str();
  ev_cmd->add_option("--tau-prior-factor", ev.tau_prior_factor,
                     "Prior-precision multiplier in the AR ZIP effect estimate")
      ->capture_default_str();
  add_binning(ev_cmd, ev.binning);

  IndexOptions idx;
  auto* idx_cmd = app.add_subcommand("index", "Write a model's price index");
  idx_cmd->add_option("model", idx.model, "Model JSON")->required();
  idx_cmd->add_option("--out", idx.out, "CSV with quarter,index")->required();

  PredictOptions pred;
  auto* pred_cmd = app.add_subcommand(
      "predict", "Predict every sale in a CSV from the house's previous sale");
  pred_cmd->add_option("model", pred.model, "Model JSON")->required();
  pred_cmd->add_option("sales", pred.sales, "Sales CSV")->required();
  pred_cmd->add_option("--out", pred.out, "Prediction CSV")->required();

  SimulateOptions sim;
  auto* sim_cmd =
      app.add_subcommand("simulate", "Generate a synthetic sales panel");
  sim_cmd->add_option("config", sim.config, "Simulation config JSON")
      ->required();
  sim_cmd->add_option("--out", sim.out, "Sales CSV to write")->required();
  sim_cmd->add_option("--truth-out", sim.truth_out,
                      "Also write the true parameters as JSON");
  sim_cmd->add_option("--seed", sim.seed, "Override the config seed");

  DiagnoseOptions diag;
  auto* diag_cmd = app.add_subcommand(
      "diagnose", "Gap-time and random-effect diagnostics for a fitted model");
  diag_cmd->add_option("model", diag.model, "Model JSON")->required();
  diag_cmd->add_option("train", diag.train, "Training sales CSV")->required();
  diag_cmd->add_option("--out", diag.out_dir, "Output directory")->required();

  std::string rerun_path;
  auto* rerun_cmd = app.add_subcommand(
      "rerun", "Repeat a recorded run and verify its outputs bit for bit");
  rerun_cmd->add_option("manifest", rerun_path, "Run manifest JSON")
      ->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what(), 1);
    return 1;
  }

  if (rerun_cmd->parsed()) {
    try {
      return run_rerun(rerun_path, manifest_path);
    } catch (const Error& e) {
      print_error(to_string(e.kind()), e.what(), exit_code(e.kind()));
      return exit_code(e.kind());
    }
  }

  RunManifest run;
  run.argv = args;
  run.cwd = fs::current_path().string();
  fs::path default_manifest;
  std::function<void()> body;
  if (fit_cmd->parsed()) {
    run.command = "fit";
    default_manifest = fit.out + ".manifest.json";
    body = [&] { run_fit(fit, run); };
  } else if (ev_cmd->parsed()) {
    run.command = "evaluate";
    default_manifest = fs::path(ev.out_dir) / "manifest.json";
    body = [&] { run_evaluate(ev, run); };
  } else if (idx_cmd->parsed()) {
    run.command = "index";
    default_manifest = idx.out + ".manifest.json";
    body = [&] { run_index(idx, run); };
  } else if (pred_cmd->parsed()) {
    run.command = "predict";
    default_manifest = pred.out + ".manifest.json";
    body = [&] { run_predict(pred, run); };
  } else if (sim_cmd->parsed()) {
    run.command = "simulate";
    default_manifest = sim.out + ".manifest.json";
    body = [&] { run_simulate(sim, run); };
  } else {
    run.command = "diagnose";
    default_manifest = fs::path(diag.out_dir) / "manifest.json";
    body = [&] { run_diagnose(diag, run); };
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const Error& e) {
    run.exit_code = exit_code(e.kind());
    run.error = {{"kind", to_string(e.kind())}, {"message", e.what()}};
  } catch (const std::exception& e) {
    run.exit_code = 2;
    run.error = {{"kind", "internal"}, {"message", e.what()}};
  }
  run.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  const fs::path manifest_out =
      manifest_path.empty() ? default_manifest : fs::path(manifest_path);
  try {
    run.write(manifest_out);
  } catch (const Error& e) {
    if (run.exit_code == 0) {
      print_error(to_string(e.kind()), e.what(), exit_code(e.kind()));
      return exit_code(e.kind());
    }
  }
  if (run.exit_code != 0) {
    print_error(run.error.at("kind").get<std::string>(),
                run.error.at("message").get<std::string>(), run.exit_code);
  }
  return run.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(std::move(args));
}
