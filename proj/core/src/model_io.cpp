#include "rsindex/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rsindex/errors.hpp"

namespace rsindex {
namespace {

using nlohmann::json;

constexpr std::string_view kArFormat = "ar-model/1";
constexpr std::string_view kMixedFormat = "mixed-model/1";
constexpr std::string_view kCsFormat = "cs-fit/1";

json ar_json(const FittedARModel& m) {
  const ARParams& p = m.params;
  return {{"params",
           {{"mu", p.mu},
            {"beta", p.beta},
            {"phi", p.phi},
            {"sigma2_eps", p.sigma2_eps},
            {"sigma2_tau", p.sigma2_tau}}},
          {"tau_hat", m.tau_hat},
          {"zip_sales", m.zip_sales},
          {"msr", m.msr},
          {"iterations", m.iterations},
          {"converged", m.converged},
          {"stop_reason", m.stop_reason},
          {"tau_prior_factor", m.tau_prior_factor},
          {"loglik_trace", m.loglik_trace}};
}

FittedARModel ar_from(const json& j) {
  FittedARModel m;
  const json& p = j.at("params");
  m.params.mu = p.at("mu").get<double>();
  m.params.beta = p.at("beta").get<std::vector<double>>();
  m.params.phi = p.at("phi").get<double>();
  m.params.sigma2_eps = p.at("sigma2_eps").get<double>();
  m.params.sigma2_tau = p.at("sigma2_tau").get<double>();
  m.tau_hat = j.at("tau_hat").get<std::map<std::string, double>>();
  m.zip_sales = j.value("zip_sales", std::map<std::string, std::size_t>{});
  m.msr = j.at("msr").get<double>();
  m.iterations = j.value("iterations", 0);
  m.converged = j.value("converged", false);
  m.stop_reason = j.value("stop_reason", std::string{});
  m.tau_prior_factor = j.value("tau_prior_factor", 2.0);
  m.loglik_trace = j.value("loglik_trace", std::vector<double>{});
  return m;
}

json mixed_json(const FittedMixedModel& m) {
  const MixedParams& p = m.params;
  return {{"params",
           {{"mu", p.mu},
            {"beta", p.beta},
            {"sigma2_alpha", p.sigma2_alpha},
            {"sigma2_tau", p.sigma2_tau},
            {"sigma2_eps", p.sigma2_eps}}},
          {"alpha_hat", m.alpha_hat},
          {"tau_hat", m.tau_hat},
          {"zip_sales", m.zip_sales},
          {"msr", m.msr},
          {"iterations", m.iterations},
          {"blup_sweeps", m.blup_sweeps},
          {"converged", m.converged},
          {"loglik_trace", m.loglik_trace}};
}

FittedMixedModel mixed_from(const json& j) {
  FittedMixedModel m;
  const json& p = j.at("params");
  m.params.mu = p.at("mu").get<double>();
  m.params.beta = p.at("beta").get<std::vector<double>>();
  m.params.sigma2_alpha = p.at("sigma2_alpha").get<double>();
  m.params.sigma2_tau = p.at("sigma2_tau").get<double>();
  m.params.sigma2_eps = p.at("sigma2_eps").get<double>();
  m.alpha_hat = j.at("alpha_hat").get<std::map<std::string, double>>();
  m.tau_hat = j.at("tau_hat").get<std::map<std::string, double>>();
  m.zip_sales = j.value("zip_sales", std::map<std::string, std::size_t>{});
  m.msr = j.at("msr").get<double>();
  m.iterations = j.value("iterations", 0);
  m.blup_sweeps = j.value("blup_sweeps", 0);
  m.converged = j.value("converged", false);
  m.loglik_trace = j.value("loglik_trace", std::vector<double>{});
  return m;
}

json cs_json(const CSFit& f) {
  return {{"b", f.b},
          {"B", f.B},
          {"alpha0", f.alpha0},
          {"alpha1", f.alpha1},
          {"pair_count", f.pair_count},
          {"weighted", f.weighted}};
}

CSFit cs_from(const json& j) {
  CSFit f;
  f.b = j.at("b").get<std::vector<double>>();
  f.B = j.at("B").get<std::vector<double>>();
  f.alpha0 = j.at("alpha0").get<double>();
  f.alpha1 = j.at("alpha1").get<double>();
  f.pair_count = j.value("pair_count", std::size_t{0});
  f.weighted = j.value("weighted", true);
  if (f.B.size() != f.b.size() + 1) {
    throw Error(ErrorKind::kMalformedSeries, "cs-fit has |B| != |b| + 1");
  }
  return f;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kAr:
      return "ar";
    case ModelKind::kMixed:
      return "mixed";
    case ModelKind::kCs:
      return "cs";
  }
  return "unknown";
}

std::string_view format_tag(ModelKind kind) {
  switch (kind) {
    case ModelKind::kAr:
      return kArFormat;
    case ModelKind::kMixed:
      return kMixedFormat;
    case ModelKind::kCs:
      return kCsFormat;
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "ar") return ModelKind::kAr;
  if (name == "mixed") return ModelKind::kMixed;
  if (name == "cs") return ModelKind::kCs;
  throw Error(ErrorKind::kConfig,
              "unknown model '" + std::string(name) + "' (ar, mixed, cs)");
}

int SavedModel::periods() const {
  switch (kind) {
    case ModelKind::kAr:
      return ar ? ar->periods() : 0;
    case ModelKind::kMixed:
      return mixed ? mixed->periods() : 0;
    case ModelKind::kCs:
      return cs ? cs->periods() : 0;
  }
  return 0;
}

std::string serialize_model(const SavedModel& model) {
  json j;
  switch (model.kind) {
    case ModelKind::kAr:
      j = ar_json(model.ar.value());
      j["format"] = kArFormat;
      break;
    case ModelKind::kMixed:
      j = mixed_json(model.mixed.value());
      j["format"] = kMixedFormat;
      break;
    case ModelKind::kCs:
      j = cs_json(model.cs.value());
      j["format"] = kCsFormat;
      break;
  }
  j["binning"] = {{"epoch", model.epoch.to_string()},
                  {"period_months", model.period_months}};
  return j.dump(2);
}

SavedModel parse_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kMalformedSeries,
                std::string("model file is not JSON: ") + e.what());
  }
  const std::string format = j.value("format", std::string{});
  SavedModel out;
  try {
    if (format == kArFormat) {
      out.kind = ModelKind::kAr;
      out.ar = ar_from(j);
    } else if (format == kMixedFormat) {
      out.kind = ModelKind::kMixed;
      out.mixed = mixed_from(j);
    } else if (format == kCsFormat) {
      out.kind = ModelKind::kCs;
      out.cs = cs_from(j);
    } else {
      throw Error(ErrorKind::kVersion,
                  "unsupported model format '" + format + "'");
    }
    if (j.contains("binning")) {
      const json& b = j.at("binning");
      const auto epoch = YearMonth::parse(b.at("epoch").get<std::string>());
      if (!epoch) {
        throw Error(ErrorKind::kMalformedSeries, "bad binning epoch");
      }
      out.epoch = *epoch;
      out.period_months = b.at("period_months").get<int>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kMalformedSeries,
                std::string("model file is missing fields: ") + e.what());
  }
  return out;
}

void save_model(const std::filesystem::path& path, const SavedModel& model) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorKind::kIo, "cannot write " + path.string());
  }
  out << serialize_model(model) << '\n';
}

SavedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::kIo, "cannot read " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace rsindex
