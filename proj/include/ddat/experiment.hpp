#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddat/data_model.hpp"
#include "ddat/difficulty.hpp"
#include "ddat/network.hpp"
#include "ddat/training.hpp"

namespace ddat {

enum class System { baseline, mtl_re, mtl_pu, ddat_re_vector, ddat_re_sum, ddat_pu };

std::string_view to_string(System s);
System parse_system(std::string_view s);

/// Error annotated with the pipeline stage that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::string label = "features";  // feature set / modality name used in reports
  System system = System::baseline;
  Dimension dimension = Dimension::arousal;
  bool grid_search = false;
  int num_layers = 1;
  int units_per_layer = 40;
  TrainingConfig training;
  MtlWeights weights;
  ReSumConvention re_sum = ReSumConvention::signed_sum;
  bool postprocess = true;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// 64-bit FNV-1a of the canonical JSON serialization, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Runs one system end to end and writes into `out_dir`:
///   record.json, predictions.csv, checkpoints/stage*.ckpt and, for
///   systems with a difficulty stage, indicators/<subject>.csv.
/// Returns the record.
nlohmann::json run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);
nlohmann::json run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                              const std::filesystem::path& out_dir);

/// Scenario JSON:
///   { "dimension": "arousal", "column": "pred_raw", "seed": 0,
///     "streams": [ { "name": "...", "predictions": "path.csv",
///                    "dynamic_tuning": false } ] }
/// Paths are relative to the scenario file. Writes fused.csv and
/// fusion_report.json into `out_dir` and returns the report.
nlohmann::json run_fusion(const std::filesystem::path& scenario, const std::filesystem::path& out_dir);
nlohmann::json run_fusion(const nlohmann::json& scenario, const std::filesystem::path& base_dir,
                          const std::filesystem::path& out_dir);

struct ReportCell {
  double ccc = 0.0;
  Eigen::Index n = 0;
  bool starred = false;
  double p = 0.5;
};

struct ReportRow {
  std::string label;
  std::string system;
  std::string dimension;
  ReportCell dev_raw, dev_post, test_raw, test_post;
};

struct Report {
  std::vector<ReportRow> rows;
  std::string reference;
  std::string text;
  nlohmann::json json;
};

/// CCC table by system x dimension x partition. A cell is starred when the
/// one-tailed Fisher test against the reference system's cell (same label
/// and dimension) gives p < .05.
Report emit_report(const std::vector<nlohmann::json>& records, const std::string& reference = "baseline");

/// Table of PCC(eps, dc), PCC(mu, dc), PCC(eps, mu). Needs, per label and
/// dimension, a baseline record, an RE-based DDAT record and the PU-based
/// DDAT record; `record_dirs` locate each record's predictions.csv.
std::string emit_analysis(const std::vector<nlohmann::json>& records,
                          const std::vector<std::filesystem::path>& record_dirs);

/// Writes trace_<label>_<system>_<dimension>_<subject>.svg per record (two
/// panels: raw and post-processed prediction against the gold standard)
/// and contributions_<n>.svg per fusion report. Throws, writing nothing,
/// when both inputs are empty. Returns the written paths.
std::vector<std::filesystem::path> emit_plots(const std::vector<nlohmann::json>& records,
                                              const std::vector<std::filesystem::path>& record_dirs,
                                              const std::vector<nlohmann::json>& fusion_reports,
                                              const std::filesystem::path& out_dir,
                                              const std::string& subject = {});

/// Reads predictions.csv rows of one partition into per-subject vectors of
/// the named column, in file order.
struct PredictionTable {
  std::vector<std::string> subjects;
  std::vector<Partition> partitions;
  std::vector<Eigen::VectorXd> gold;
  std::vector<Eigen::VectorXd> values;
};
PredictionTable read_predictions(const std::filesystem::path& path, Partition partition, const std::string& column);

}  // namespace ddat
