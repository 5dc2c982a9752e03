#include "ddat/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ddat/metrics.hpp"

namespace ddat {

using Eigen::Index;
using Eigen::VectorXd;

int PostProcessParams::active_steps() const {
  return (window ? 1 : 0) + (shift ? 1 : 0) + (center_scale ? 1 : 0);
}

void PostProcessParams::validate() const {
  if (window && !(*window > 0.0)) throw std::invalid_argument("post-processing: window must be positive");
  if (shift && *shift < 0.0) throw std::invalid_argument("post-processing: shift must be non-negative");
  if (center_scale && !(center_scale->ratio > 0.0))
    throw std::invalid_argument("post-processing: scale ratio must be positive");
}

std::vector<double> median_window_grid() {
  std::vector<double> g;
  for (int i = 0; i < 5; ++i) g.push_back(0.12 + 0.08 * i);
  return g;
}

std::vector<double> shift_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 15; ++i) g.push_back(0.04 * i);
  return g;
}

Index median_window_frames(double window, double frame_period) {
  auto n = static_cast<Index>(std::llround(window / frame_period));
  if (n < 1) n = 1;
  if (n % 2 == 0) ++n;
  return n;
}

VectorXd median_filter_frames(const VectorXd& pred, Index n) {
  if (pred.size() == 0) throw std::invalid_argument("median_filter: empty series");
  if (n < 1 || n % 2 == 0) throw std::invalid_argument("median_filter: window length must be odd");
  const Index T = pred.size();
  const Index half = n / 2;
  VectorXd out(T);
  std::vector<double> buf(static_cast<std::size_t>(n));
  for (Index t = 0; t < T; ++t) {
    for (Index k = -half; k <= half; ++k) buf[static_cast<std::size_t>(k + half)] = pred(std::clamp<Index>(t + k, 0, T - 1));
    auto mid = buf.begin() + half;
    std::nth_element(buf.begin(), mid, buf.end());
    out(t) = *mid;
  }
  return out;
}

VectorXd median_filter(const VectorXd& pred, double window, double frame_period) {
  return median_filter_frames(pred, median_window_frames(window, frame_period));
}

VectorXd concatenate(std::span<const VectorXd> parts) {
  Index n = 0;
  for (const auto& p : parts) n += p.size();
  VectorXd out(n);
  Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

CenterScale fit_center_scale(std::span<const VectorXd> dev_preds, std::span<const VectorXd> dev_gold) {
  const VectorXd p = concatenate(dev_preds);
  const VectorXd g = concatenate(dev_gold);
  if (p.size() != g.size() || p.size() < 2) throw std::invalid_argument("center_scale: misaligned dev data");
  const double n = static_cast<double>(p.size());
  CenterScale cs;
  const VectorXd sp0 = p.array() - p(0);
  const VectorXd sg0 = g.array() - g(0);
  cs.pred_mean = p(0) + sp0.mean();
  cs.gold_mean = g(0) + sg0.mean();
  const double sp = std::sqrt((sp0.array() - sp0.mean()).square().sum() / n);
  const double sg = std::sqrt((sg0.array() - sg0.mean()).square().sum() / n);
  if (!(sp > 0.0)) throw std::invalid_argument("center_scale: dev predictions have zero variance");
  if (!(sg > 0.0)) throw std::invalid_argument("center_scale: dev gold standard has zero variance");
  cs.ratio = sg / sp;
  return cs;
}

VectorXd center_scale(const VectorXd& pred, const CenterScale& cs) {
  return ((pred.array() - cs.pred_mean) * cs.ratio + cs.gold_mean).matrix();
}

namespace {

VectorXd shift_frames(const VectorXd& pred, Index n) {
  const Index T = pred.size();
  if (n == 0) return pred;
  if (n >= T) throw std::invalid_argument("time_shift: shift of " + std::to_string(n) + " frames exceeds length");
  VectorXd out(T);
  out.head(n).setConstant(pred(0));
  out.tail(T - n) = pred.head(T - n);
  return out;
}

Index shift_frame_count(double shift, double frame_period) {
  if (shift < 0.0) throw std::invalid_argument("time_shift: negative shift");
  return static_cast<Index>(std::llround(shift / frame_period));
}

}  // namespace

VectorXd time_shift(const VectorXd& pred, double shift, double frame_period) {
  return shift_frames(pred, shift_frame_count(shift, frame_period));
}

VectorXd apply_chain(const VectorXd& pred, const PostProcessParams& params, double frame_period) {
  params.validate();
  VectorXd out = pred;
  if (params.window) out = median_filter(out, *params.window, frame_period);
  if (params.center_scale) out = center_scale(out, *params.center_scale);
  if (params.shift) out = time_shift(out, *params.shift, frame_period);
  return out;
}

ChainSelection optimize_chain(std::span<const VectorXd> dev_preds, std::span<const VectorXd> dev_gold,
                              double frame_period) {
  if (dev_preds.size() != dev_gold.size() || dev_preds.empty())
    throw std::invalid_argument("optimize_chain: predictions and gold standards are not aligned");
  for (std::size_t i = 0; i < dev_preds.size(); ++i)
    if (dev_preds[i].size() != dev_gold[i].size())
      throw std::invalid_argument("optimize_chain: sequence " + std::to_string(i) + " length mismatch");
  const VectorXd gold = concatenate(dev_gold);
  if (gold.size() < 2 || (gold.array() == gold(0)).all())
    throw std::invalid_argument("optimize_chain: dev gold standard is constant");

  ChainSelection best;
  best.raw_dev_ccc = ccc(concatenate(dev_preds), gold).ccc;
  best.dev_ccc = -std::numeric_limits<double>::infinity();

  std::vector<std::optional<double>> windows{std::nullopt};
  for (double w : median_window_grid()) windows.emplace_back(w);
  std::vector<std::optional<double>> shifts{std::nullopt};
  for (double d : shift_grid()) shifts.emplace_back(d);

  const std::size_t S = dev_preds.size();
  std::vector<VectorXd> filtered(S), scaled(S), shifted(S);
  for (const auto& w : windows) {
    for (std::size_t i = 0; i < S; ++i)
      filtered[i] = w ? median_filter(dev_preds[i], *w, frame_period) : dev_preds[i];
    for (bool use_cs : {false, true}) {
      PostProcessParams cand;
      cand.window = w;
      if (use_cs) {
        const VectorXd all = concatenate(filtered);
        if ((all.array() == all(0)).all()) continue;
        cand.center_scale = fit_center_scale(filtered, dev_gold);
        for (std::size_t i = 0; i < S; ++i) scaled[i] = center_scale(filtered[i], *cand.center_scale);
      } else {
        scaled = filtered;
      }
      for (const auto& d : shifts) {
        cand.shift = d;
        const Index n = d ? shift_frame_count(*d, frame_period) : 0;
        for (std::size_t i = 0; i < S; ++i) shifted[i] = shift_frames(scaled[i], n);
        const double score = ccc(concatenate(shifted), gold).ccc;
        ++best.candidates;
        if (score > best.dev_ccc ||
            (score == best.dev_ccc && cand.active_steps() < best.params.active_steps())) {
          best.dev_ccc = score;
          best.params = cand;
        }
      }
    }
  }
  return best;
}

}  // namespace ddat
