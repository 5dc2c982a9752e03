#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "ddat/types.hpp"

namespace ddat {

struct MetricReport {
  double ccc = 0.0;
  /// Pearson coefficient; NaN when either series is constant.
  double pcc = 0.0;
  double mean_x = 0.0;
  double mean_y = 0.0;
  double sd_x = 0.0;
  double sd_y = 0.0;
  Eigen::Index n = 0;
};

/// Concordance correlation coefficient with population (1/N) moments.
/// Two constant series score 1 when equal and 0 otherwise.
MetricReport ccc(const Eigen::VectorXd& pred, const Eigen::VectorXd& gold);

/// Throws std::domain_error when either series is constant.
double pcc(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Standard normal CDF.
double normal_cdf(double z);

struct FisherTest {
  double m1 = 0.0;
  double m2 = 0.0;
  double se1 = 0.0;
  double se2 = 0.0;
  double z = 0.0;
  double p = 0.5;  // one-tailed, H1: r1 > r2
  Eigen::Index n1 = 0;
  Eigen::Index n2 = 0;

  bool significant(double alpha = 0.05) const { return p < alpha; }
};

/// Fisher r-to-z comparison of two correlation (or concordance)
/// coefficients estimated on n1 and n2 samples.
FisherTest fisher_compare(double r1, Eigen::Index n1, double r2, Eigen::Index n2);

struct DeltaTrace {
  /// |baseline - gold| - |ddat - gold| per frame; positive where the
  /// difficulty-aware system is closer to the gold standard.
  Eigen::VectorXd delta;
};

DeltaTrace improvement_delta(const Eigen::VectorXd& pred_baseline, const Eigen::VectorXd& pred_ddat,
                             const Eigen::VectorXd& gold);

/// Aligned traces for one (partition, dimension) cell of the analysis.
struct IndicatorAnalysisInput {
  std::string stream;  // e.g. modality or feature set name
  Partition partition = Partition::dev;
  Dimension dimension = Dimension::arousal;
  Eigen::VectorXd reconstruction_error;  // epsilon
  Eigen::VectorXd uncertainty;           // mu
  Eigen::VectorXd delta_re;              // delta_c of the RE-based system
  Eigen::VectorXd delta_pu;              // delta_c of the PU-based system
};

struct CorrelationCell {
  std::string pair;  // "PCC(eps,dc)", "PCC(mu,dc)" or "PCC(eps,mu)"
  std::string stream;
  Partition partition = Partition::dev;
  Dimension dimension = Dimension::arousal;
  double value = 0.0;
};

struct CorrelationTable {
  std::vector<CorrelationCell> cells;

  /// Grouped by pair, one line per stream, columns aro-dev, aro-test,
  /// val-dev, val-test.
  std::string format() const;
};

CorrelationTable indicator_correlation_table(std::span<const IndicatorAnalysisInput> inputs);

}  // namespace ddat
