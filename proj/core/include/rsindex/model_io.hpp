#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "rsindex/ar_model.hpp"
#include "rsindex/case_shiller.hpp"
#include "rsindex/ingest.hpp"
#include "rsindex/mixed_model.hpp"

namespace rsindex {

enum class ModelKind { kAr, kMixed, kCs };

std::string_view to_string(ModelKind kind);
// The "format" tag written for a model kind, e.g. "ar-model/1".
std::string_view format_tag(ModelKind kind);
// Throws kConfig for anything but "ar", "mixed" or "cs".
ModelKind parse_model_kind(std::string_view name);

// A fitted model of any kind plus the calendar binning it was trained
// under, so predictions can map dates back to periods.
struct SavedModel {
  ModelKind kind = ModelKind::kAr;
  std::optional<FittedARModel> ar;
  std::optional<FittedMixedModel> mixed;
  std::optional<CSFit> cs;
  YearMonth epoch{1985, 7};
  int period_months = 3;

  int periods() const;
};

// JSON tagged "ar-model/1", "mixed-model/1" or "cs-fit/1". Doubles are
// written with round-trip precision.
std::string serialize_model(const SavedModel& model);

// Throws kVersion for an unknown format tag and kMalformedSeries for a
// document missing required fields.
SavedModel parse_model(std::string_view json);

void save_model(const std::filesystem::path& path, const SavedModel& model);
SavedModel load_model(const std::filesystem::path& path);

}  // namespace rsindex
