#include "ddat/difficulty.hpp"

#include <fstream>
#include <stdexcept>

#include "csv.hpp"

namespace ddat {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(DifficultyMode m) {
  switch (m) {
    case DifficultyMode::re_vector: return "re_vector";
    case DifficultyMode::re_sum: return "re_sum";
    case DifficultyMode::pu: return "pu";
  }
  return "?";
}

DifficultyMode parse_difficulty_mode(std::string_view s) {
  if (s == "re_vector") return DifficultyMode::re_vector;
  if (s == "re_sum") return DifficultyMode::re_sum;
  if (s == "pu") return DifficultyMode::pu;
  throw std::invalid_argument("unknown difficulty mode '" + std::string(s) + "'");
}

void DifficultyIndicator::validate() const {
  if (mode != DifficultyMode::re_vector && trace.cols() != 1)
    throw std::invalid_argument("scalar difficulty indicator must have width 1");
  if (!trace.allFinite()) throw std::invalid_argument("difficulty indicator has non-finite values");
}

VectorXd re_vector(const VectorXd& x, const VectorXd& x_hat) {
  if (x.size() != x_hat.size()) throw std::invalid_argument("re_vector: width mismatch");
  return x - x_hat;
}

double re_sum(const VectorXd& x, const VectorXd& x_hat, ReSumConvention convention) {
  const VectorXd e = re_vector(x, x_hat);
  return convention == ReSumConvention::signed_sum ? e.sum() : e.cwiseAbs().sum();
}

DifficultyIndicator reconstruction_indicator(const MatrixXd& inputs, const MatrixXd& reconstruction,
                                             DifficultyMode mode, ReSumConvention convention) {
  if (mode == DifficultyMode::pu) throw std::invalid_argument("reconstruction_indicator: pu is not an RE mode");
  if (inputs.rows() != reconstruction.rows() || inputs.cols() != reconstruction.cols())
    throw std::invalid_argument("reconstruction_indicator: reconstruction shape does not match the inputs");
  DifficultyIndicator d;
  d.mode = mode;
  const MatrixXd e = inputs - reconstruction;
  if (mode == DifficultyMode::re_vector) d.trace = e;
  else if (convention == ReSumConvention::signed_sum) d.trace = e.rowwise().sum();
  else d.trace = e.cwiseAbs().rowwise().sum();
  return d;
}

DifficultyIndicator uncertainty_indicator(const MatrixXd& uncertainty_head) {
  if (uncertainty_head.cols() != 1) throw std::invalid_argument("uncertainty_indicator: head must have width 1");
  return {DifficultyMode::pu, uncertainty_head, {}};
}

MatrixXd augment(const MatrixXd& inputs, const DifficultyIndicator& d) {
  if (inputs.rows() != d.trace.rows())
    throw std::invalid_argument("augment: indicator has " + std::to_string(d.trace.rows()) +
                                " frames, sequence has " + std::to_string(inputs.rows()));
  MatrixXd out(inputs.rows(), inputs.cols() + d.trace.cols());
  out << inputs, d.trace;
  return out;
}

FeatureSequence augment(const FeatureSequence& seq, const DifficultyIndicator& d) {
  FeatureSequence out = seq;
  out.values = augment(seq.values, d);
  return out;
}

void save_indicator(const std::filesystem::path& path, const DifficultyIndicator& d, double frame_period,
                    double start_time) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << "time_s";
  for (Index j = 0; j < d.width(); ++j) out << ",d_" << j + 1;
  out << '\n';
  for (Index t = 0; t < d.trace.rows(); ++t) {
    out << csv::format(start_time + static_cast<double>(t) * frame_period);
    for (Index j = 0; j < d.width(); ++j) out << ',' << csv::format(d.trace(t, j));
    out << '\n';
  }
}

DifficultyIndicator load_indicator(const std::filesystem::path& path, DifficultyMode mode) {
  const auto table = csv::read(path);
  if (table.header.size() < 2 || table.header.front() != "time_s")
    throw DataError(path.string() + ": header must be 'time_s,d_1..d_w'");
  DifficultyIndicator d;
  d.mode = mode;
  d.trace.resize(static_cast<Index>(table.rows.size()), static_cast<Index>(table.header.size() - 1));
  for (std::size_t t = 0; t < table.rows.size(); ++t)
    for (std::size_t j = 1; j < table.header.size(); ++j)
      d.trace(static_cast<Index>(t), static_cast<Index>(j - 1)) = table.number(t, j);
  d.validate();
  return d;
}

}  // namespace ddat
