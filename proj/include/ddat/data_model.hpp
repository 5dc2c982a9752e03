#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ddat/types.hpp"

namespace ddat {

/// T frames by r feature dimensions sampled at a fixed frame period.
struct FeatureSequence {
  std::string subject_id;
  Partition partition = Partition::train;
  double frame_period = 0.04;
  double start_time = 0.0;
  Eigen::MatrixXd values;  // T x r

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index width() const { return values.cols(); }
  void validate() const;
};

/// K rater traces for one subject and one affect dimension.
struct RaterAnnotations {
  std::string subject_id;
  Dimension dimension = Dimension::arousal;
  double frame_period = 0.04;
  Eigen::MatrixXd traces;  // K x T

  Eigen::Index raters() const { return traces.rows(); }
  Eigen::Index frames() const { return traces.cols(); }
  void validate() const;
};

struct GoldStandard {
  Eigen::VectorXd mean_trace;
  Eigen::VectorXd uncertainty_trace;
  Dimension dimension = Dimension::arousal;
  double frame_period = 0.04;
  double delay_applied = 0.0;
};

struct StandardizationStats {
  static constexpr double kDefaultFloor = 1e-8;

  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  double epsilon_floor = kDefaultFloor;
};

FeatureSequence load_features(const std::filesystem::path& path, double frame_period,
                              std::string subject_id = {}, Partition partition = Partition::train);
void save_features(const std::filesystem::path& path, const FeatureSequence& seq);

/// Reads a `time_s,rater_1..rater_K` file and resamples it onto `frames`
/// feature frames starting at `start_time` (nearest annotation row).
RaterAnnotations load_annotations(const std::filesystem::path& path, Dimension dimension,
                                  double frame_period, Eigen::Index frames,
                                  double start_time = 0.0, std::string subject_id = {});
void save_annotations(const std::filesystem::path& path, const RaterAnnotations& ann);

/// Nearest-frame resampling of irregular or differently clocked samples.
/// `times` has one entry per column of `samples`.
Eigen::MatrixXd resample_nearest(const Eigen::VectorXd& times, const Eigen::MatrixXd& samples,
                                 double frame_period, Eigen::Index frames, double start_time);

GoldStandard compute_gold_standard(const RaterAnnotations& annotations);

/// Shifts the gold standard `delay` seconds earlier; the last frame is
/// replicated into the vacated tail.
GoldStandard compensate_delay(const GoldStandard& gold, double delay);

StandardizationStats fit_standardization(std::span<const FeatureSequence> train,
                                         double epsilon_floor = StandardizationStats::kDefaultFloor);
StandardizationStats fit_standardization(std::span<const Eigen::MatrixXd> train,
                                         double epsilon_floor = StandardizationStats::kDefaultFloor);
FeatureSequence apply_standardization(const FeatureSequence& seq, const StandardizationStats& stats);
Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& values, const StandardizationStats& stats);

// ---------------------------------------------------------------------------
// Datasets

struct SubjectRecord {
  FeatureSequence features;
  std::map<Dimension, RaterAnnotations> annotations;
};

struct Dataset {
  double frame_period = 0.04;
  double delay = 2.4;
  std::vector<SubjectRecord> subjects;

  std::size_t count(Partition p) const;
};

/// Manifest is a JSON document:
///   { "frame_period": 0.04, "delay_s": 2.4,
///     "subjects": [ { "id": "...", "partition": "train",
///                     "features": "rel/path.csv",
///                     "annotations": { "arousal": "...", "valence": "..." } } ] }
/// Relative paths resolve against the manifest's directory.
Dataset load_manifest(const std::filesystem::path& manifest);
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct SyntheticConfig {
  int subjects_per_partition = 9;
  int frames = 1500;
  int feature_dim = 20;
  int raters = 6;
  double frame_period = 0.04;
  /// Raters respond this many seconds after the latent state they rate.
  double rater_lag = 2.4;
  int smoothing_window = 25;
  double walk_decay = 0.995;
  double latent_scale = 0.4;
  int nuisance_factors = 2;
  double feature_noise = 0.1;
  double rater_noise_base = 0.05;
  double rater_noise_amplitude = 0.25;
  /// Extra feature noise in proportion to the current rater noise level.
  double noise_coupling = 1.0;

  void validate() const;
};

Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Model-ready view of a dataset for one affect dimension.

struct SequenceExample {
  std::string subject_id;
  Partition partition = Partition::train;
  Eigen::MatrixXd inputs;       // T x r, standardized
  Eigen::VectorXd target;       // gold mean trace after delay compensation
  Eigen::VectorXd uncertainty;  // perception uncertainty after delay compensation
};

struct Corpus {
  Dimension dimension = Dimension::arousal;
  double frame_period = 0.04;
  StandardizationStats input_stats;
  std::vector<SequenceExample> sequences;

  Eigen::Index input_dim() const;
  std::vector<const SequenceExample*> partition(Partition p) const;
};

Corpus build_corpus(const Dataset& dataset, Dimension dimension);

}  // namespace ddat
