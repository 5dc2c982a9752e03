#include "ddat/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace ddat {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct LinearFit {
  VectorXd beta;  // intercept first
  bool ridge = false;
};

LinearFit least_squares(const MatrixXd& design, const VectorXd& y, const FusionOptions& options) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  if (qr.rank() == design.cols()) return {qr.solve(y), false};
  if (!options.allow_ridge)
    throw std::runtime_error("fusion: design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                             std::to_string(design.cols()) + ")");
  // Ridge as an augmented least-squares problem, which avoids squaring the
  // condition number through the normal equations.
  const Index N = design.rows(), P = design.cols();
  MatrixXd aug = MatrixXd::Zero(N + P - 1, P);
  aug.topRows(N) = design;
  aug.bottomRightCorner(P - 1, P - 1).diagonal().setConstant(std::sqrt(options.ridge_lambda));
  VectorXd rhs = VectorXd::Zero(N + P - 1);
  rhs.head(N) = y;
  return {Eigen::ColPivHouseholderQR<MatrixXd>(aug).solve(rhs), true};
}

}  // namespace

FusionModel fit_slr(std::span<const VectorXd> dev_streams, const VectorXd& dev_gold, const FusionOptions& options) {
  if (dev_streams.empty()) throw std::invalid_argument("fit_slr: no streams");
  const Index N = dev_gold.size();
  if (N < 2) throw std::invalid_argument("fit_slr: need at least two frames");
  MatrixXd design(N, static_cast<Index>(dev_streams.size()) + 1);
  design.col(0).setOnes();
  for (std::size_t i = 0; i < dev_streams.size(); ++i) {
    if (dev_streams[i].size() != N)
      throw std::invalid_argument("fit_slr: stream " + std::to_string(i) + " is not aligned with the gold standard");
    design.col(static_cast<Index>(i) + 1) = dev_streams[i];
  }
  const auto fit = least_squares(design, dev_gold, options);
  FusionModel m;
  m.intercept = fit.beta(0);
  m.coefficients = fit.beta.tail(fit.beta.size() - 1);
  m.used_ridge = fit.ridge;
  return m;
}

VectorXd apply_slr(const FusionModel& model, std::span<const VectorXd> streams) {
  if (static_cast<Index>(streams.size()) != model.streams())
    throw std::invalid_argument("apply_slr: model has " + std::to_string(model.streams()) + " streams, got " +
                                std::to_string(streams.size()));
  if (streams.empty()) throw std::invalid_argument("apply_slr: no streams");
  VectorXd out = VectorXd::Constant(streams.front().size(), model.intercept);
  for (std::size_t i = 0; i < streams.size(); ++i) {
    if (streams[i].size() != out.size()) throw std::invalid_argument("apply_slr: streams have different lengths");
    out += model.coefficients(static_cast<Index>(i)) * streams[i];
  }
  return out;
}

FusionModel fit_dynamic_tuning(const VectorXd& stream, const VectorXd& difficulty, const VectorXd& dev_gold,
                               const FusionOptions& options) {
  const Index N = dev_gold.size();
  if (stream.size() != N || difficulty.size() != N)
    throw std::invalid_argument("fit_dynamic_tuning: traces are not aligned");
  if (N < 3) throw std::invalid_argument("fit_dynamic_tuning: need at least three frames");
  MatrixXd design(N, 3);
  design.col(0).setOnes();
  design.col(1) = stream;
  design.col(2) = difficulty;
  const auto fit = least_squares(design, dev_gold, options);
  FusionModel m;
  m.intercept = fit.beta(0);
  m.coefficients = fit.beta.segment(1, 1);
  m.difficulty_coefficient = fit.beta(2);
  m.used_ridge = fit.ridge;
  return m;
}

VectorXd apply_dynamic_tuning(const FusionModel& model, const VectorXd& stream, const VectorXd& difficulty) {
  if (model.streams() != 1 || !model.difficulty_coefficient)
    throw std::invalid_argument("apply_dynamic_tuning: not a dynamic-tuning model");
  if (stream.size() != difficulty.size()) throw std::invalid_argument("apply_dynamic_tuning: length mismatch");
  return (model.intercept + model.coefficients(0) * stream.array() +
          *model.difficulty_coefficient * difficulty.array())
      .matrix();
}

VectorXd contribution_analysis(const FusionModel& model, std::span<const VectorXd> streams) {
  if (static_cast<Index>(streams.size()) != model.streams())
    throw std::invalid_argument("contribution_analysis: stream count mismatch");
  VectorXd weight(model.streams());
  for (Index i = 0; i < weight.size(); ++i) {
    const auto& s = streams[static_cast<std::size_t>(i)];
    const double sd = std::sqrt((s.array() - s.mean()).square().mean());
    weight(i) = std::abs(model.coefficients(i)) * sd;
  }
  const double total = weight.sum();
  if (!(total > 0.0)) throw std::invalid_argument("contribution_analysis: all coefficients are zero");
  return 100.0 * weight / total;
}

}  // namespace ddat
