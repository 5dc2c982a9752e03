#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "ddat/experiment.hpp"
#include "ddat/metrics.hpp"
#include "ddat/postprocess.hpp"

namespace ddat {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

ReportCell cell_from(const json& record, const char* partition, const char* kind) {
  const auto& m = record.at("results").at(partition).at(kind);
  return {m.at("ccc").get<double>(), m.at("n").get<Index>(), false, 0.5};
}

void mark(ReportCell& cell, const ReportCell& ref) {
  try {
    const auto test = fisher_compare(cell.ccc, cell.n, ref.ccc, ref.n);
    cell.p = test.p;
    cell.starred = test.significant();
  } catch (const std::invalid_argument&) {
    // |r| = 1 or too few frames: the test is undefined, leave unstarred.
    cell.p = 0.5;
    cell.starred = false;
  }
}

std::string fmt(const ReportCell& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f%s", c.ccc, c.starred ? "*" : " ");
  return buf;
}

json cell_json(const ReportCell& c) { return {{"ccc", c.ccc}, {"n", c.n}, {"p", c.p}, {"starred", c.starred}}; }

}  // namespace

Report emit_report(const std::vector<json>& records, const std::string& reference) {
  Report rep;
  rep.reference = reference;
  for (const auto& r : records) {
    ReportRow row;
    row.label = r.value("label", std::string("features"));
    row.system = r.at("system").get<std::string>();
    row.dimension = r.at("dimension").get<std::string>();
    row.dev_raw = cell_from(r, "dev", "raw");
    row.dev_post = cell_from(r, "dev", "post");
    row.test_raw = cell_from(r, "test", "raw");
    row.test_post = cell_from(r, "test", "post");
    rep.rows.push_back(row);
  }
  for (auto& row : rep.rows) {
    if (row.system == reference) continue;
    const ReportRow* ref = nullptr;
    for (const auto& other : rep.rows)
      if (other.system == reference && other.label == row.label && other.dimension == row.dimension) ref = &other;
    if (!ref) continue;
    mark(row.dev_raw, ref->dev_raw);
    mark(row.dev_post, ref->dev_post);
    mark(row.test_raw, ref->test_raw);
    mark(row.test_post, ref->test_post);
  }

  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-16s %-9s %9s %9s %9s %9s\n", "label", "system", "dim", "dev-raw",
                "dev-post", "test-raw", "test-post");
  out << line;
  for (const auto& row : rep.rows) {
    std::snprintf(line, sizeof line, "%-14s %-16s %-9s %9s %9s %9s %9s\n", row.label.c_str(), row.system.c_str(),
                  row.dimension.c_str(), fmt(row.dev_raw).c_str(), fmt(row.dev_post).c_str(),
                  fmt(row.test_raw).c_str(), fmt(row.test_post).c_str());
    out << line;
  }
  out << "* one-tailed Fisher r-to-z p < .05 against '" << reference << "'\n";
  rep.text = out.str();

  rep.json = {{"reference", reference}, {"rows", json::array()}};
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    rep.json["rows"].push_back({{"label", row.label},
                                {"system", row.system},
                                {"dimension", row.dimension},
                                {"config_hash", records[i].value("config_hash", std::string())},
                                {"seed", records[i].value("seed", std::uint64_t{0})},
                                {"dev", {{"raw", cell_json(row.dev_raw)}, {"post", cell_json(row.dev_post)}}},
                                {"test", {{"raw", cell_json(row.test_raw)}, {"post", cell_json(row.test_post)}}}});
  }
  return rep;
}

std::string emit_analysis(const std::vector<json>& records, const std::vector<fs::path>& record_dirs) {
  if (records.size() != record_dirs.size()) throw std::invalid_argument("emit_analysis: records and directories differ");
  struct Group {
    std::optional<std::size_t> baseline, re, pu;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto system = records[i].at("system").get<std::string>();
    auto& g = groups[{records[i].value("label", std::string("features")), records[i].at("dimension").get<std::string>()}];
    if (system == "baseline") g.baseline = i;
    else if (system == "ddat_re_sum" || system == "ddat_re_vector") g.re = i;
    else if (system == "ddat_pu") g.pu = i;
  }

  std::vector<IndicatorAnalysisInput> inputs;
  for (const auto& [key, g] : groups) {
    if (!g.baseline || !g.re || !g.pu) continue;
    for (Partition part : {Partition::dev, Partition::test}) {
      auto load = [&](std::size_t i, const char* column) {
        return read_predictions(record_dirs[i] / "predictions.csv", part, column);
      };
      const auto base = load(*g.baseline, "pred_raw");
      const auto re = load(*g.re, "pred_raw");
      const auto pu = load(*g.pu, "pred_raw");
      const auto eps = load(*g.re, "difficulty");
      const auto mu = load(*g.pu, "difficulty");
      if (base.subjects != re.subjects || base.subjects != pu.subjects)
        throw DataError("emit_analysis: records for '" + key.first + "' cover different subjects");
      const VectorXd gold = concatenate(base.gold);
      IndicatorAnalysisInput in;
      in.stream = key.first;
      in.partition = part;
      in.dimension = parse_dimension(key.second);
      in.reconstruction_error = concatenate(eps.values);
      in.uncertainty = concatenate(mu.values);
      const VectorXd b = concatenate(base.values);
      in.delta_re = improvement_delta(b, concatenate(re.values), gold).delta;
      in.delta_pu = improvement_delta(b, concatenate(pu.values), gold).delta;
      inputs.push_back(std::move(in));
    }
  }
  if (inputs.empty())
    throw std::invalid_argument(
        "emit_analysis: needs baseline, RE-based DDAT and PU-based DDAT records for the same label and dimension");
  return indicator_correlation_table(inputs).format();
}

}  // namespace ddat
