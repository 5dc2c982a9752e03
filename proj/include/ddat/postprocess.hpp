#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace ddat {

/// Dev-set moment matching: y' = (y - pred_mean) * ratio + gold_mean.
struct CenterScale {
  double pred_mean = 0.0;
  double gold_mean = 0.0;
  double ratio = 1.0;

  friend bool operator==(const CenterScale&, const CenterScale&) = default;
};

struct PostProcessParams {
  std::optional<double> window;  // median filter W, seconds
  std::optional<double> shift;   // time shift D, seconds
  std::optional<CenterScale> center_scale;

  int active_steps() const;
  void validate() const;
  friend bool operator==(const PostProcessParams&, const PostProcessParams&) = default;
};

/// Filter-window grid 0.12..0.44 s (step 0.08) and shift grid 0.04..0.60 s
/// (step 0.04), without the no-op entries.
std::vector<double> median_window_grid();
std::vector<double> shift_grid();

/// Window length in frames: W / frame_period rounded, then bumped to odd.
Eigen::Index median_window_frames(double window, double frame_period);

/// Sliding median of odd length, edges replicated.
Eigen::VectorXd median_filter(const Eigen::VectorXd& pred, double window, double frame_period);
Eigen::VectorXd median_filter_frames(const Eigen::VectorXd& pred, Eigen::Index n);

CenterScale fit_center_scale(std::span<const Eigen::VectorXd> dev_preds, std::span<const Eigen::VectorXd> dev_gold);
Eigen::VectorXd center_scale(const Eigen::VectorXd& pred, const CenterScale& cs);

/// pred'_t = pred_{t-n}; the first n frames repeat pred_0.
Eigen::VectorXd time_shift(const Eigen::VectorXd& pred, double shift, double frame_period);

/// Median filter, then centering/scaling, then time shift.
Eigen::VectorXd apply_chain(const Eigen::VectorXd& pred, const PostProcessParams& params, double frame_period);

struct ChainSelection {
  PostProcessParams params;
  double dev_ccc = 0.0;
  double raw_dev_ccc = 0.0;
  std::size_t candidates = 0;
};

/// Exhaustive search over {none, W grid} x {none, D grid} x {center/scale
/// off, on}, maximizing the CCC of the concatenated dev sequences. Ties go
/// to the candidate with fewer active steps.
ChainSelection optimize_chain(std::span<const Eigen::VectorXd> dev_preds, std::span<const Eigen::VectorXd> dev_gold,
                              double frame_period);

Eigen::VectorXd concatenate(std::span<const Eigen::VectorXd> parts);

}  // namespace ddat
