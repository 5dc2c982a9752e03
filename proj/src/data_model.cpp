#include "ddat/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"

namespace ddat {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::dev: return "dev";
    case Partition::test: return "test";
  }
  return "?";
}

std::string_view to_string(Dimension d) {
  return d == Dimension::arousal ? "arousal" : "valence";
}

Partition parse_partition(std::string_view s) {
  if (s == "train") return Partition::train;
  if (s == "dev" || s == "devel" || s == "development") return Partition::dev;
  if (s == "test") return Partition::test;
  throw std::invalid_argument("unknown partition '" + std::string(s) + "'");
}

Dimension parse_dimension(std::string_view s) {
  if (s == "arousal") return Dimension::arousal;
  if (s == "valence") return Dimension::valence;
  throw std::invalid_argument("unknown dimension '" + std::string(s) + "'");
}

void FeatureSequence::validate() const {
  if (values.rows() < 1 || values.cols() < 1)
    throw std::invalid_argument("feature sequence '" + subject_id + "' is empty");
  if (!(frame_period > 0.0)) throw std::invalid_argument("frame period must be positive");
  if (!values.allFinite())
    throw std::invalid_argument("feature sequence '" + subject_id + "' has non-finite values");
}

void RaterAnnotations::validate() const {
  if (traces.rows() < 2)
    throw std::invalid_argument("annotations for '" + subject_id + "' need at least two raters");
  if (traces.cols() < 1) throw std::invalid_argument("annotations for '" + subject_id + "' are empty");
  if (!traces.allFinite())
    throw std::invalid_argument("annotations for '" + subject_id + "' have non-finite values");
}

// ---------------------------------------------------------------------------
// File IO

FeatureSequence load_features(const fs::path& path, double frame_period, std::string subject_id,
                              Partition partition) {
  if (!fs::exists(path)) throw DataError(path.string() + ": file not found");
  const auto table = csv::read(path);
  if (table.header.size() < 2 || table.header.front() != "time_s")
    throw DataError(path.string() + ": header must be 'time_s' followed by feature columns");
  if (table.rows.empty()) throw DataError(path.string() + ": no data rows");

  FeatureSequence seq;
  seq.subject_id = subject_id.empty() ? path.stem().string() : std::move(subject_id);
  seq.partition = partition;
  seq.frame_period = frame_period;
  const auto T = static_cast<Index>(table.rows.size());
  const auto r = static_cast<Index>(table.header.size() - 1);
  seq.values.resize(T, r);
  for (Index t = 0; t < T; ++t) {
    if (t == 0) seq.start_time = table.number(0, 0);
    else table.number(static_cast<std::size_t>(t), 0);
    for (Index j = 0; j < r; ++j)
      seq.values(t, j) = table.number(static_cast<std::size_t>(t), static_cast<std::size_t>(j + 1));
  }
  seq.validate();
  return seq;
}

void save_features(const fs::path& path, const FeatureSequence& seq) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << "time_s";
  for (Index j = 0; j < seq.width(); ++j) out << ",f" << j + 1;
  out << '\n';
  for (Index t = 0; t < seq.frames(); ++t) {
    out << csv::format(seq.start_time + static_cast<double>(t) * seq.frame_period);
    for (Index j = 0; j < seq.width(); ++j) out << ',' << csv::format(seq.values(t, j));
    out << '\n';
  }
}

MatrixXd resample_nearest(const VectorXd& times, const MatrixXd& samples, double frame_period,
                          Index frames, double start_time) {
  if (times.size() != samples.cols() || times.size() == 0)
    throw std::invalid_argument("resample_nearest: time/sample size mismatch");
  MatrixXd out(samples.rows(), frames);
  Index j = 0;
  for (Index t = 0; t < frames; ++t) {
    const double target = start_time + static_cast<double>(t) * frame_period;
    while (j + 1 < times.size() && std::abs(times(j + 1) - target) <= std::abs(times(j) - target)) ++j;
    out.col(t) = samples.col(j);
  }
  return out;
}

RaterAnnotations load_annotations(const fs::path& path, Dimension dimension, double frame_period,
                                  Index frames, double start_time, std::string subject_id) {
  if (!fs::exists(path)) throw DataError(path.string() + ": file not found");
  const auto table = csv::read(path);
  if (table.header.size() < 3 || table.header.front() != "time_s")
    throw DataError(path.string() + ": header must be 'time_s,rater_1..rater_K' with K >= 2");
  for (std::size_t k = 1; k < table.header.size(); ++k)
    if (table.header[k] != "rater_" + std::to_string(k))
      throw DataError(path.string() + ": column " + std::to_string(k + 1) + " should be named rater_" +
                      std::to_string(k));
  if (table.rows.empty()) throw DataError(path.string() + ": no data rows");

  const auto n = static_cast<Index>(table.rows.size());
  const auto K = static_cast<Index>(table.header.size() - 1);
  VectorXd times(n);
  MatrixXd raw(K, n);
  for (Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    times(i) = table.number(row, 0);
    for (Index k = 0; k < K; ++k) {
      const double v = table.number(row, static_cast<std::size_t>(k + 1));
      if (v < -1.0 || v > 1.0) {
        std::ostringstream msg;
        msg << path.string() << ": row " << table.line_numbers[row] << ", column " << k + 2
            << ": rating " << v << " outside [-1, 1]";
        throw DataError(msg.str());
      }
      raw(k, i) = v;
    }
  }
  for (Index i = 1; i < n; ++i)
    if (!(times(i) > times(i - 1)))
      throw DataError(path.string() + ": row " + std::to_string(table.line_numbers[i]) +
                      ": time_s not strictly increasing");

  RaterAnnotations ann;
  ann.subject_id = subject_id.empty() ? path.stem().string() : std::move(subject_id);
  ann.dimension = dimension;
  ann.frame_period = frame_period;
  ann.traces = resample_nearest(times, raw, frame_period, frames, start_time);
  ann.validate();
  return ann;
}

void save_annotations(const fs::path& path, const RaterAnnotations& ann) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << "time_s";
  for (Index k = 0; k < ann.raters(); ++k) out << ",rater_" << k + 1;
  out << '\n';
  for (Index t = 0; t < ann.frames(); ++t) {
    out << csv::format(static_cast<double>(t) * ann.frame_period);
    for (Index k = 0; k < ann.raters(); ++k) out << ',' << csv::format(ann.traces(k, t));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Gold standard

GoldStandard compute_gold_standard(const RaterAnnotations& annotations) {
  const Index K = annotations.raters();
  if (K < 2) throw std::invalid_argument("perception uncertainty needs at least two raters");
  const Index T = annotations.frames();

  GoldStandard gold;
  gold.dimension = annotations.dimension;
  gold.frame_period = annotations.frame_period;
  gold.mean_trace.resize(T);
  gold.uncertainty_trace.resize(T);
  for (Index t = 0; t < T; ++t) {
    const VectorXd col = annotations.traces.col(t).array() - annotations.traces(0, t);
    const double shift = col.mean();
    const double mean = annotations.traces(0, t) + shift;
    const double ss = (col.array() - shift).square().sum();
    gold.mean_trace(t) = mean;
    gold.uncertainty_trace(t) = std::sqrt(ss / static_cast<double>(K - 1));
  }
  return gold;
}

GoldStandard compensate_delay(const GoldStandard& gold, double delay) {
  if (delay < 0.0) throw std::invalid_argument("delay must be non-negative");
  const Index T = gold.mean_trace.size();
  const auto n = static_cast<Index>(std::llround(delay / gold.frame_period));
  if (n >= T && n > 0)
    throw std::invalid_argument("delay of " + std::to_string(delay) + " s exceeds the sequence duration");

  GoldStandard out = gold;
  out.delay_applied = gold.delay_applied + static_cast<double>(n) * gold.frame_period;
  for (Index t = 0; t < T; ++t) {
    const Index src = std::min(t + n, T - 1);
    out.mean_trace(t) = gold.mean_trace(src);
    out.uncertainty_trace(t) = gold.uncertainty_trace(src);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Standardization

StandardizationStats fit_standardization(std::span<const MatrixXd> train, double epsilon_floor) {
  if (train.empty()) throw std::invalid_argument("standardization needs at least one training sequence");
  const Index r = train.front().cols();
  Index n = 0;
  VectorXd sum = VectorXd::Zero(r);
  for (const auto& m : train) {
    if (m.cols() != r) throw std::invalid_argument("standardization: inconsistent widths");
    sum += m.colwise().sum().transpose();
    n += m.rows();
  }
  if (n == 0) throw std::invalid_argument("standardization: training set has no frames");

  StandardizationStats stats;
  stats.epsilon_floor = epsilon_floor;
  stats.mean = sum / static_cast<double>(n);
  VectorXd ss = VectorXd::Zero(r);
  for (const auto& m : train)
    ss += (m.rowwise() - stats.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  stats.stddev = n > 1 ? VectorXd((ss / static_cast<double>(n - 1)).array().sqrt()) : VectorXd::Zero(r);
  stats.stddev = stats.stddev.cwiseMax(epsilon_floor);
  return stats;
}

StandardizationStats fit_standardization(std::span<const FeatureSequence> train, double epsilon_floor) {
  std::vector<MatrixXd> mats;
  mats.reserve(train.size());
  for (const auto& s : train) mats.push_back(s.values);
  return fit_standardization(std::span<const MatrixXd>(mats), epsilon_floor);
}

MatrixXd apply_standardization(const MatrixXd& values, const StandardizationStats& stats) {
  if (values.cols() != stats.mean.size())
    throw std::invalid_argument("standardization width " + std::to_string(stats.mean.size()) +
                                " does not match input width " + std::to_string(values.cols()));
  return ((values.rowwise() - stats.mean.transpose()).array().rowwise() /
          stats.stddev.transpose().array())
      .matrix();
}

FeatureSequence apply_standardization(const FeatureSequence& seq, const StandardizationStats& stats) {
  FeatureSequence out = seq;
  out.values = apply_standardization(seq.values, stats);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset manifest

std::size_t Dataset::count(Partition p) const {
  return static_cast<std::size_t>(
      std::count_if(subjects.begin(), subjects.end(), [p](const auto& s) { return s.features.partition == p; }));
}

Dataset load_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError(manifest.string() + ": cannot open manifest");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  const fs::path base = manifest.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  Dataset ds;
  try {
    ds.frame_period = doc.value("frame_period", 0.04);
    ds.delay = doc.value("delay_s", 2.4);
    for (const auto& s : doc.at("subjects")) {
      SubjectRecord rec;
      const auto id = s.at("id").get<std::string>();
      const auto part = parse_partition(s.at("partition").get<std::string>());
      rec.features = load_features(resolve(s.at("features").get<std::string>()), ds.frame_period, id, part);
      if (s.contains("annotations")) {
        for (const auto& [dim, path] : s.at("annotations").items()) {
          const auto d = parse_dimension(dim);
          rec.annotations.emplace(d, load_annotations(resolve(path.get<std::string>()), d, ds.frame_period,
                                                      rec.features.frames(), rec.features.start_time, id));
        }
      }
      ds.subjects.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  if (!(ds.frame_period > 0.0)) throw DataError(manifest.string() + ": frame_period must be positive");
  return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "annotations");
  nlohmann::json doc;
  doc["frame_period"] = dataset.frame_period;
  doc["delay_s"] = dataset.delay;
  doc["subjects"] = nlohmann::json::array();
  for (const auto& s : dataset.subjects) {
    const auto& id = s.features.subject_id;
    const auto feat = fs::path("features") / (id + ".csv");
    save_features(dir / feat, s.features);
    nlohmann::json entry{{"id", id}, {"partition", to_string(s.features.partition)}, {"features", feat.string()}};
    for (const auto& [dim, ann] : s.annotations) {
      const auto rel = fs::path("annotations") / (id + "_" + std::string(to_string(dim)) + ".csv");
      save_annotations(dir / rel, ann);
      entry["annotations"][std::string(to_string(dim))] = rel.string();
    }
    doc["subjects"].push_back(std::move(entry));
  }
  std::ofstream out(dir / "manifest.json");
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic data

void SyntheticConfig::validate() const {
  if (subjects_per_partition < 1 || frames < 2 || feature_dim < 1 || raters < 2 || smoothing_window < 1 ||
      nuisance_factors < 0)
    throw std::invalid_argument("synthetic config: dimensions must be positive (raters >= 2)");
  if (!(frame_period > 0.0) || rater_lag < 0.0)
    throw std::invalid_argument("synthetic config: frame period must be positive and lag non-negative");
}

namespace {

/// Leaky random walk smoothed with a centred moving average, rescaled to
/// zero mean and unit standard deviation.
VectorXd smooth_process(std::mt19937_64& rng, Index n, int window, double decay) {
  std::normal_distribution<double> step(0.0, 1.0);
  VectorXd walk(n);
  double x = 0.0;
  for (Index t = 0; t < n; ++t) {
    x = decay * x + step(rng);
    walk(t) = x;
  }
  VectorXd out(n);
  const Index half = window / 2;
  for (Index t = 0; t < n; ++t) {
    const Index lo = std::max<Index>(0, t - half);
    const Index hi = std::min<Index>(n - 1, t + half);
    out(t) = walk.segment(lo, hi - lo + 1).mean();
  }
  out.array() -= out.mean();
  const double sd = std::sqrt(out.squaredNorm() / static_cast<double>(n));
  if (sd > 0.0) out /= sd;
  return out;
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);

  const Index T = config.frames;
  const Index r = config.feature_dim;
  const auto lag = static_cast<Index>(std::llround(config.rater_lag / config.frame_period));
  const Index span = T + lag;
  const Index factors = 2 + config.nuisance_factors;

  MatrixXd mixing(r, factors);
  for (Index j = 0; j < r; ++j)
    for (Index k = 0; k < factors; ++k) mixing(j, k) = 2.0 * gauss(rng);
  VectorXd offsets(r);
  for (Index j = 0; j < r; ++j) offsets(j) = unif(rng);

  Dataset ds;
  ds.frame_period = config.frame_period;
  ds.delay = static_cast<double>(lag) * config.frame_period;

  for (Partition part : {Partition::train, Partition::dev, Partition::test}) {
    for (int s = 0; s < config.subjects_per_partition; ++s) {
      // Latent states indexed by stimulus time; feature frame t sees
      // stimulus t + lag, a rating reported at frame t describes stimulus t.
      MatrixXd latent(factors, span);
      for (Index k = 0; k < factors; ++k)
        latent.row(k) = config.latent_scale *
                        smooth_process(rng, span, config.smoothing_window, config.walk_decay).transpose();
      MatrixXd level(2, span);
      for (Index d = 0; d < 2; ++d) {
        const VectorXd p = smooth_process(rng, span, 4 * config.smoothing_window, config.walk_decay);
        level.row(d) = (1.0 / (1.0 + (-2.0 * p.array()).exp())).transpose();
      }

      SubjectRecord rec;
      std::ostringstream id;
      id << to_string(part) << '_' << (s < 9 ? "0" : "") << s + 1;
      rec.features.subject_id = id.str();
      rec.features.partition = part;
      rec.features.frame_period = config.frame_period;
      rec.features.values.resize(T, r);
      for (Index t = 0; t < T; ++t) {
        const Index stim = t + lag;
        const double difficulty = 0.5 * (level(0, stim) + level(1, stim));
        const double sigma = config.feature_noise * (1.0 + config.noise_coupling * difficulty);
        const VectorXd pre = mixing * latent.col(stim) + offsets;
        for (Index j = 0; j < r; ++j) rec.features.values(t, j) = std::tanh(pre(j)) + sigma * gauss(rng);
      }

      for (Dimension dim : {Dimension::arousal, Dimension::valence}) {
        const Index d = dim == Dimension::arousal ? 0 : 1;
        RaterAnnotations ann;
        ann.subject_id = rec.features.subject_id;
        ann.dimension = dim;
        ann.frame_period = config.frame_period;
        ann.traces.resize(config.raters, T);
        for (Index k = 0; k < config.raters; ++k) {
          const double bias = 0.05 * gauss(rng);
          const VectorXd noise = smooth_process(rng, T, 5, 0.0);
          for (Index t = 0; t < T; ++t) {
            const double sigma = config.rater_noise_base + config.rater_noise_amplitude * level(d, t);
            ann.traces(k, t) = std::clamp(latent(d, t) + bias + sigma * noise(t), -1.0, 1.0);
          }
        }
        rec.annotations.emplace(dim, std::move(ann));
      }
      ds.subjects.push_back(std::move(rec));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Corpus

Index Corpus::input_dim() const { return sequences.empty() ? 0 : sequences.front().inputs.cols(); }

std::vector<const SequenceExample*> Corpus::partition(Partition p) const {
  std::vector<const SequenceExample*> out;
  for (const auto& s : sequences)
    if (s.partition == p) out.push_back(&s);
  return out;
}

Corpus build_corpus(const Dataset& dataset, Dimension dimension) {
  std::vector<FeatureSequence> train;
  for (const auto& s : dataset.subjects)
    if (s.features.partition == Partition::train) train.push_back(s.features);
  if (train.empty()) throw std::invalid_argument("dataset has no training subjects");

  Corpus corpus;
  corpus.dimension = dimension;
  corpus.frame_period = dataset.frame_period;
  corpus.input_stats = fit_standardization(std::span<const FeatureSequence>(train));
  for (const auto& s : dataset.subjects) {
    const auto it = s.annotations.find(dimension);
    if (it == s.annotations.end())
      throw std::invalid_argument("subject '" + s.features.subject_id + "' has no " +
                                  std::string(to_string(dimension)) + " annotations");
    if (it->second.frames() != s.features.frames())
      throw std::invalid_argument("subject '" + s.features.subject_id + "': annotation/feature length mismatch");
    const auto gold = compensate_delay(compute_gold_standard(it->second), dataset.delay);
    SequenceExample ex;
    ex.subject_id = s.features.subject_id;
    ex.partition = s.features.partition;
    ex.inputs = apply_standardization(s.features.values, corpus.input_stats);
    ex.target = gold.mean_trace;
    ex.uncertainty = gold.uncertainty_trace;
    corpus.sequences.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace ddat
