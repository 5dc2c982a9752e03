#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ddat/experiment.hpp"

namespace ddat {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr double kWidth = 720, kPanelHeight = 220, kMargin = 48;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string polyline(const VectorXd& y, double x0, double y0, double w, double h, double lo, double hi,
                     const char* color) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
  const Index n = y.size();
  for (Index t = 0; t < n; ++t) {
    const double px = x0 + (n > 1 ? w * static_cast<double>(t) / static_cast<double>(n - 1) : 0.0);
    const double py = y0 + h * (1.0 - (y(t) - lo) / (hi - lo));
    s << num(px) << ',' << num(py) << (t + 1 < n ? " " : "");
  }
  s << "\"/>\n";
  return s.str();
}

std::string panel(const VectorXd& gold, const VectorXd& pred, double top, const std::string& title) {
  double lo = std::min(gold.minCoeff(), pred.minCoeff());
  double hi = std::max(gold.maxCoeff(), pred.maxCoeff());
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double x0 = kMargin, w = kWidth - 2 * kMargin, y0 = top + 24, h = kPanelHeight - 48;
  std::ostringstream s;
  s << "<text x=\"" << num(x0) << "\" y=\"" << num(top + 16) << "\" font-size=\"13\">" << title << "</text>\n";
  s << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
    << "\" fill=\"none\" stroke=\"#999\"/>\n";
  s << "<text x=\"4\" y=\"" << num(y0 + 10) << "\" font-size=\"10\">" << num(hi) << "</text>\n";
  s << "<text x=\"4\" y=\"" << num(y0 + h) << "\" font-size=\"10\">" << num(lo) << "</text>\n";
  s << polyline(gold, x0, y0, w, h, lo, hi, "#222");
  s << polyline(pred, x0, y0, w, h, lo, hi, "#d62728");
  return s.str();
}

std::string header(double height, const std::string& hash, std::uint64_t seed) {
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<!-- config_hash=" << hash << " seed=" << seed << " -->\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(height)
    << "\" font-family=\"sans-serif\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

struct PendingFile {
  fs::path path;
  std::string content;
};

PendingFile trace_figure(const json& record, const fs::path& dir, const std::string& subject, const fs::path& out_dir) {
  const auto preds = dir / "predictions.csv";
  auto raw = read_predictions(preds, Partition::test, "pred_raw");
  auto post = read_predictions(preds, Partition::test, "pred_post");
  if (raw.subjects.empty()) throw DataError(preds.string() + ": no test predictions");
  std::size_t idx = 0;
  if (!subject.empty()) {
    const auto it = std::find(raw.subjects.begin(), raw.subjects.end(), subject);
    if (it == raw.subjects.end()) throw DataError(preds.string() + ": no test subject '" + subject + "'");
    idx = static_cast<std::size_t>(it - raw.subjects.begin());
  }
  const auto label = record.value("label", std::string("features"));
  const auto system = record.at("system").get<std::string>();
  const auto dimension = record.at("dimension").get<std::string>();
  const auto& id = raw.subjects[idx];

  std::ostringstream s;
  s << header(2 * kPanelHeight + 30, record.value("config_hash", std::string()), record.value("seed", std::uint64_t{0}));
  s << panel(raw.gold[idx], raw.values[idx], 0, "(a) " + dimension + " " + id + ", raw prediction (red) vs gold (black)");
  s << panel(post.gold[idx], post.values[idx], kPanelHeight,
             "(b) " + dimension + " " + id + ", post-processed prediction (red) vs gold (black)");
  s << "<text x=\"" << num(kMargin) << "\" y=\"" << num(2 * kPanelHeight + 20) << "\" font-size=\"11\">" << label
    << " / " << system << "</text>\n</svg>\n";
  return {out_dir / ("trace_" + label + "_" + system + "_" + dimension + "_" + id + ".svg"), s.str()};
}

PendingFile contribution_figure(const json& report, std::size_t n, const fs::path& out_dir) {
  const auto& streams = report.at("streams");
  const auto shares = report.at("fusion").at("contributions_percent").get<std::vector<double>>();
  if (shares.size() != streams.size()) throw DataError("fusion report: contributions do not match streams");
  const double bar_h = 26, top = 40;
  const double height = top + bar_h * static_cast<double>(shares.size()) + 30;
  const double x0 = 200, w = kWidth - x0 - 70;
  std::ostringstream s;
  s << header(height, report.value("config_hash", std::string()), report.value("seed", std::uint64_t{0}));
  s << "<text x=\"12\" y=\"22\" font-size=\"13\">Contribution to the fused prediction (%)";
  if (report.contains("dimension")) s << ", " << report.at("dimension").get<std::string>();
  s << "</text>\n";
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double y = top + bar_h * static_cast<double>(i);
    s << "<text x=\"12\" y=\"" << num(y + 17) << "\" font-size=\"12\">" << streams[i].at("name").get<std::string>()
      << "</text>\n";
    s << "<rect x=\"" << num(x0) << "\" y=\"" << num(y + 4) << "\" width=\"" << num(w * shares[i] / 100.0)
      << "\" height=\"" << num(bar_h - 8) << "\" fill=\"#1f77b4\"/>\n";
    s << "<text x=\"" << num(x0 + w * shares[i] / 100.0 + 6) << "\" y=\"" << num(y + 17) << "\" font-size=\"11\">"
      << num(shares[i]) << "</text>\n";
  }
  s << "</svg>\n";
  return {out_dir / ("contributions_" + std::to_string(n) + ".svg"), s.str()};
}

}  // namespace

std::vector<fs::path> emit_plots(const std::vector<json>& records, const std::vector<fs::path>& record_dirs,
                                 const std::vector<json>& fusion_reports, const fs::path& out_dir,
                                 const std::string& subject) {
  if (records.empty() && fusion_reports.empty()) throw std::invalid_argument("emit_plots: nothing to plot");
  if (records.size() != record_dirs.size()) throw std::invalid_argument("emit_plots: records and directories differ");
  // Render everything first so a failure leaves no partial output.
  std::vector<PendingFile> files;
  for (std::size_t i = 0; i < records.size(); ++i) files.push_back(trace_figure(records[i], record_dirs[i], subject, out_dir));
  for (std::size_t i = 0; i < fusion_reports.size(); ++i) files.push_back(contribution_figure(fusion_reports[i], i, out_dir));
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& f : files) {
    std::ofstream out(f.path, std::ios::binary);
    if (!out) throw DataError(f.path.string() + ": cannot write");
    out << f.content;
    written.push_back(f.path);
  }
  return written;
}

}  // namespace ddat
