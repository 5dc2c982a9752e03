#include "ddat/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ddat {

using Eigen::Index;
using Eigen::VectorXd;

namespace {

void check_pair(const VectorXd& a, const VectorXd& b, const char* what) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  if (a.size() < 2) throw std::invalid_argument(std::string(what) + ": need at least two samples");
}

}  // namespace

MetricReport ccc(const VectorXd& pred, const VectorXd& gold) {
  check_pair(pred, gold, "ccc");
  const auto n = static_cast<double>(pred.size());
  MetricReport rep;
  rep.n = pred.size();
  // Shifted by the first sample so constant series centre to exact zeros.
  const VectorXd sx = pred.array() - pred(0);
  const VectorXd sy = gold.array() - gold(0);
  rep.mean_x = pred(0) + sx.mean();
  rep.mean_y = gold(0) + sy.mean();
  const VectorXd dx = sx.array() - sx.mean();
  const VectorXd dy = sy.array() - sy.mean();
  const double vx = dx.squaredNorm() / n;
  const double vy = dy.squaredNorm() / n;
  const double cov = dx.dot(dy) / n;
  rep.sd_x = std::sqrt(vx);
  rep.sd_y = std::sqrt(vy);
  rep.pcc = (vx > 0.0 && vy > 0.0) ? cov / (rep.sd_x * rep.sd_y) : std::numeric_limits<double>::quiet_NaN();

  const double mdiff = rep.mean_x - rep.mean_y;
  const double denom = vx + vy + mdiff * mdiff;
  rep.ccc = denom > 0.0 ? 2.0 * cov / denom : 1.0;
  return rep;
}

double pcc(const VectorXd& a, const VectorXd& b) {
  check_pair(a, b, "pcc");
  const VectorXd sa = a.array() - a(0);
  const VectorXd sb = b.array() - b(0);
  const VectorXd da = sa.array() - sa.mean();
  const VectorXd db = sb.array() - sb.mean();
  const double saa = da.squaredNorm();
  const double sbb = db.squaredNorm();
  if (saa == 0.0 || sbb == 0.0) throw std::domain_error("pcc: undefined for a constant series");
  return da.dot(db) / std::sqrt(saa * sbb);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

FisherTest fisher_compare(double r1, Index n1, double r2, Index n2) {
  if (!(std::abs(r1) < 1.0) || !(std::abs(r2) < 1.0))
    throw std::invalid_argument("fisher_compare: coefficients must lie strictly inside (-1, 1)");
  if (n1 <= 3 || n2 <= 3) throw std::invalid_argument("fisher_compare: sample sizes must exceed 3");
  FisherTest f;
  f.n1 = n1;
  f.n2 = n2;
  f.m1 = std::atanh(r1);
  f.m2 = std::atanh(r2);
  f.se1 = 1.0 / std::sqrt(static_cast<double>(n1 - 3));
  f.se2 = 1.0 / std::sqrt(static_cast<double>(n2 - 3));
  f.z = (f.m1 - f.m2) / std::sqrt(f.se1 * f.se1 + f.se2 * f.se2);
  // Upper tail without cancellation: 1 - Phi(z) = Phi(-z).
  f.p = 0.5 * std::erfc(f.z / std::sqrt(2.0));
  return f;
}

DeltaTrace improvement_delta(const VectorXd& pred_baseline, const VectorXd& pred_ddat, const VectorXd& gold) {
  if (pred_baseline.size() != gold.size() || pred_ddat.size() != gold.size())
    throw std::invalid_argument("improvement_delta: length mismatch");
  return {((pred_baseline - gold).array().abs() - (pred_ddat - gold).array().abs()).matrix()};
}

CorrelationTable indicator_correlation_table(std::span<const IndicatorAnalysisInput> inputs) {
  CorrelationTable table;
  for (const char* pair : {"PCC(eps,dc)", "PCC(mu,dc)", "PCC(eps,mu)"}) {
    for (const auto& in : inputs) {
      const std::string p(pair);
      double v = 0.0;
      if (p == "PCC(eps,dc)") v = pcc(in.reconstruction_error, in.delta_re);
      else if (p == "PCC(mu,dc)") v = pcc(in.uncertainty, in.delta_pu);
      else v = pcc(in.reconstruction_error, in.uncertainty);
      table.cells.push_back({p, in.stream, in.partition, in.dimension, v});
    }
  }
  return table;
}

std::string CorrelationTable::format() const {
  // pair -> stream -> column
  std::map<std::string, std::map<std::string, std::map<int, double>>> grid;
  std::vector<std::string> pair_order;
  std::map<std::string, std::vector<std::string>> stream_order;
  for (const auto& c : cells) {
    if (!grid.count(c.pair)) pair_order.push_back(c.pair);
    auto& streams = grid[c.pair];
    if (!streams.count(c.stream)) stream_order[c.pair].push_back(c.stream);
    const int col = (c.dimension == Dimension::arousal ? 0 : 2) + (c.partition == Partition::test ? 1 : 0);
    streams[c.stream][col] = c.value;
  }
  std::ostringstream out;
  out << std::left << std::setw(24) << "" << std::right << std::setw(9) << "aro-dev" << std::setw(9) << "aro-test"
      << std::setw(9) << "val-dev" << std::setw(9) << "val-test" << '\n';
  for (const auto& pair : pair_order) {
    out << pair << '\n';
    for (const auto& stream : stream_order[pair]) {
      out << "  " << std::left << std::setw(22) << stream << std::right;
      const auto& cols = grid[pair][stream];
      for (int col = 0; col < 4; ++col) {
        const auto it = cols.find(col);
        if (it == cols.end()) out << std::setw(9) << "-";
        else out << std::setw(9) << std::fixed << std::setprecision(3) << it->second;
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace ddat
