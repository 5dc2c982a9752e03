#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ddat {

struct FusionModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;                   // one per stream
  std::optional<double> difficulty_coefficient;  // dynamic tuning only
  std::string fitted_on = "dev";
  bool used_ridge = false;

  Eigen::Index streams() const { return coefficients.size(); }
};

struct FusionOptions {
  /// Ridge penalty used when the design matrix is rank deficient. The
  /// intercept is never penalized.
  double ridge_lambda = 1e-6;
  bool allow_ridge = true;
};

/// Least-squares fit of gold = intercept + sum_i coef_i * stream_i.
FusionModel fit_slr(std::span<const Eigen::VectorXd> dev_streams, const Eigen::VectorXd& dev_gold,
                    const FusionOptions& options = {});
Eigen::VectorXd apply_slr(const FusionModel& model, std::span<const Eigen::VectorXd> streams);

/// gold = intercept + coef * stream + coef_d * difficulty.
FusionModel fit_dynamic_tuning(const Eigen::VectorXd& stream, const Eigen::VectorXd& difficulty,
                               const Eigen::VectorXd& dev_gold, const FusionOptions& options = {});
Eigen::VectorXd apply_dynamic_tuning(const FusionModel& model, const Eigen::VectorXd& stream,
                                     const Eigen::VectorXd& difficulty);

/// Percentage share per stream: |coef_i| * sd(stream_i), normalized to 100.
Eigen::VectorXd contribution_analysis(const FusionModel& model, std::span<const Eigen::VectorXd> streams);

}  // namespace ddat
