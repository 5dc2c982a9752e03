#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>

#include "ddat/data_model.hpp"

namespace ddat {

enum class DifficultyMode { re_vector, re_sum, pu };

std::string_view to_string(DifficultyMode m);
DifficultyMode parse_difficulty_mode(std::string_view s);

/// How the scalar reconstruction error aggregates the error vector.
enum class ReSumConvention { signed_sum, absolute_sum };

struct DifficultyIndicator {
  DifficultyMode mode = DifficultyMode::re_sum;
  Eigen::MatrixXd trace;  // T x w_d
  std::string source_model;

  Eigen::Index width() const { return trace.cols(); }
  void validate() const;
};

/// e = x - x_hat.
Eigen::VectorXd re_vector(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat);
/// E = sum_i (x_i - x_hat_i), or sum_i |x_i - x_hat_i|.
double re_sum(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat,
              ReSumConvention convention = ReSumConvention::signed_sum);

/// Frame-wise indicators for a whole sequence. `inputs` and
/// `reconstruction` are T x r; `uncertainty_head` is T x 1.
DifficultyIndicator reconstruction_indicator(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& reconstruction,
                                             DifficultyMode mode,
                                             ReSumConvention convention = ReSumConvention::signed_sum);
DifficultyIndicator uncertainty_indicator(const Eigen::MatrixXd& uncertainty_head);

/// x'_t = [x_t, d_t].
Eigen::MatrixXd augment(const Eigen::MatrixXd& inputs, const DifficultyIndicator& d);
FeatureSequence augment(const FeatureSequence& seq, const DifficultyIndicator& d);

/// One row per frame: time_s,d_1..d_w.
void save_indicator(const std::filesystem::path& path, const DifficultyIndicator& d, double frame_period,
                    double start_time = 0.0);
DifficultyIndicator load_indicator(const std::filesystem::path& path, DifficultyMode mode);

}  // namespace ddat
