#include "ddat/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "csv.hpp"
#include "ddat/fusion.hpp"
#include "ddat/metrics.hpp"
#include "ddat/postprocess.hpp"

namespace ddat {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::string_view to_string(System s) {
  switch (s) {
    case System::baseline: return "baseline";
    case System::mtl_re: return "mtl_re";
    case System::mtl_pu: return "mtl_pu";
    case System::ddat_re_vector: return "ddat_re_vector";
    case System::ddat_re_sum: return "ddat_re_sum";
    case System::ddat_pu: return "ddat_pu";
  }
  return "?";
}

System parse_system(std::string_view s) {
  for (System sys : {System::baseline, System::mtl_re, System::mtl_pu, System::ddat_re_vector, System::ddat_re_sum,
                     System::ddat_pu})
    if (to_string(sys) == s) return sys;
  throw std::invalid_argument("unknown system '" + std::string(s) + "'");
}

json ExperimentConfig::to_json() const {
  return {
      {"manifest", manifest.string()},
      {"label", label},
      {"system", to_string(system)},
      {"dimension", to_string(dimension)},
      {"grid_search", grid_search},
      {"network", {{"layers", num_layers}, {"units", units_per_layer}}},
      {"training",
       {{"stage1_epochs", training.stage1_epochs},
        {"stage2_epochs", training.stage2_epochs},
        {"learning_rate", training.learning_rate},
        {"chunk_length", training.chunk_length},
        {"batch_size", training.batch_size},
        {"clip_norm", training.clip_norm},
        {"pu_loss", training.pu_loss == PuLoss::absolute ? "absolute" : "squared"}}},
      {"mtl",
       {{"w1", weights.w1},
        {"w2", weights.w2},
        {"lambda", weights.lambda},
        {"regularizer", weights.regularizer == Regularizer::l2 ? "l2" : "none"}}},
      {"re_sum", re_sum == ReSumConvention::signed_sum ? "signed" : "absolute"},
      {"postprocess", postprocess},
      {"seed", seed},
  };
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
  c.label = j.value("label", c.label);
  if (j.contains("system")) c.system = parse_system(j.at("system").get<std::string>());
  if (j.contains("dimension")) c.dimension = parse_dimension(j.at("dimension").get<std::string>());
  c.grid_search = j.value("grid_search", c.grid_search);
  if (j.contains("network")) {
    const auto& n = j.at("network");
    c.num_layers = n.value("layers", c.num_layers);
    c.units_per_layer = n.value("units", c.units_per_layer);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    auto& tc = c.training;
    tc.stage1_epochs = t.value("stage1_epochs", tc.stage1_epochs);
    tc.stage2_epochs = t.value("stage2_epochs", tc.stage2_epochs);
    tc.learning_rate = t.value("learning_rate", tc.learning_rate);
    tc.chunk_length = t.value("chunk_length", tc.chunk_length);
    tc.batch_size = t.value("batch_size", tc.batch_size);
    tc.clip_norm = t.value("clip_norm", tc.clip_norm);
    const auto pu = t.value("pu_loss", std::string("absolute"));
    if (pu != "absolute" && pu != "squared") throw std::invalid_argument("pu_loss must be 'absolute' or 'squared'");
    tc.pu_loss = pu == "absolute" ? PuLoss::absolute : PuLoss::squared;
  }
  if (j.contains("mtl")) {
    const auto& m = j.at("mtl");
    c.weights.w1 = m.value("w1", c.weights.w1);
    c.weights.w2 = m.value("w2", c.weights.w2);
    c.weights.lambda = m.value("lambda", c.weights.lambda);
    const auto reg = m.value("regularizer", std::string("none"));
    if (reg != "none" && reg != "l2") throw std::invalid_argument("regularizer must be 'none' or 'l2'");
    c.weights.regularizer = reg == "l2" ? Regularizer::l2 : Regularizer::none;
  }
  const auto rs = j.value("re_sum", std::string("signed"));
  if (rs != "signed" && rs != "absolute") throw std::invalid_argument("re_sum must be 'signed' or 'absolute'");
  c.re_sum = rs == "signed" ? ReSumConvention::signed_sum : ReSumConvention::absolute_sum;
  c.postprocess = j.value("postprocess", c.postprocess);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  return c;
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

bool has_stage2(System s) {
  return s == System::ddat_re_vector || s == System::ddat_re_sum || s == System::ddat_pu;
}

AuxHead stage1_head(System s) {
  switch (s) {
    case System::baseline: return AuxHead::none;
    case System::mtl_re:
    case System::ddat_re_vector:
    case System::ddat_re_sum: return AuxHead::reconstruction;
    case System::mtl_pu:
    case System::ddat_pu: return AuxHead::uncertainty;
  }
  return AuxHead::none;
}

DifficultyMode difficulty_mode(System s) {
  switch (s) {
    case System::ddat_re_vector: return DifficultyMode::re_vector;
    case System::mtl_pu:
    case System::ddat_pu: return DifficultyMode::pu;
    default: return DifficultyMode::re_sum;
  }
}

template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

json run_to_json(const TrainRun& run, const std::string& checkpoint) {
  const auto& c = run.best_model.config();
  json j{{"stage", run.stage},
         {"network",
          {{"layers", c.num_layers},
           {"units", c.units_per_layer},
           {"input_width", c.input_dim},
           {"aux_head", to_string(c.aux_head)},
           {"parameters", c.parameter_count()}}},
         {"best_epoch", run.best_epoch},
         {"best_dev_ccc", run.best_dev_ccc},
         {"initial_train_loss", run.initial_train_loss},
         {"initial_dev_ccc", run.initial_dev_ccc},
         {"train_loss", run.train_loss},
         {"dev_ccc", run.dev_ccc},
         {"skipped_steps", run.skipped_steps},
         {"checkpoint", checkpoint}};
  return j;
}

json params_to_json(const PostProcessParams& p) {
  json j = json::object();
  j["window_s"] = p.window ? json(*p.window) : json(nullptr);
  j["shift_s"] = p.shift ? json(*p.shift) : json(nullptr);
  if (p.center_scale)
    j["center_scale"] = {{"pred_mean", p.center_scale->pred_mean},
                         {"gold_mean", p.center_scale->gold_mean},
                         {"ratio", p.center_scale->ratio}};
  else
    j["center_scale"] = nullptr;
  return j;
}

std::string header_comment(const std::string& hash, std::uint64_t seed) {
  return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << text;
}

}  // namespace

json run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  const auto dataset = in_stage("load-data", [&] { return load_manifest(config.manifest); });
  return run_experiment(config, dataset, out_dir);
}

json run_experiment(const ExperimentConfig& config, const Dataset& dataset, const fs::path& out_dir) {
  const json cfg_json = config.to_json();
  const std::string hash = config_hash(cfg_json);
  const auto corpus = in_stage("prepare", [&] { return build_corpus(dataset, config.dimension); });
  fs::create_directories(out_dir / "checkpoints");

  TrainingConfig tcfg = config.training;
  tcfg.seed = config.seed;
  NetworkConfig base;
  base.num_layers = config.num_layers;
  base.units_per_layer = config.units_per_layer;
  base.input_dim = static_cast<int>(corpus.input_dim());
  base.seed = config.seed;

  const AuxHead head = stage1_head(config.system);
  const MtlWeights weights = head == AuxHead::none
                                 ? MtlWeights{1.0, 0.0, config.weights.lambda, config.weights.regularizer}
                                 : config.weights;

  json record;
  record["config"] = cfg_json;
  record["config_hash"] = hash;
  record["seed"] = config.seed;
  record["label"] = config.label;
  record["system"] = to_string(config.system);
  record["dimension"] = to_string(config.dimension);
  record["stages"] = json::array();

  auto search = [&](const char* stage, NetworkConfig net_base,
                    const std::function<TrainRun(const NetworkConfig&)>& trainer, json& grid_out) {
    return in_stage(stage, [&] {
      if (!config.grid_search) return trainer(net_base);
      const auto grid = default_structure_grid(net_base);
      auto result = grid_search_structure(grid, trainer, config.threads);
      for (const auto& [c, score] : result.scores)
        grid_out.push_back({{"layers", c.num_layers}, {"units", c.units_per_layer}, {"best_dev_ccc", score}});
      return std::move(result.best_run);
    });
  };

  json grid1 = json::array();
  TrainRun stage1 = search("stage1-training", base,
                           [&](const NetworkConfig& c) { return train_stage1(corpus, c, weights, tcfg, head); }, grid1);
  save_checkpoint(out_dir / "checkpoints" / "stage1.ckpt", stage1.best_model, stage1.best_adam);
  record["stages"].push_back(run_to_json(stage1, "checkpoints/stage1.ckpt"));
  if (config.grid_search) record["stages"].back()["grid"] = grid1;

  // Scalar difficulty summary per sequence, from the stage-1 auxiliary head.
  std::vector<DifficultyIndicator> indicators;
  std::vector<VectorXd> difficulty_summary;
  if (head != AuxHead::none) {
    indicators = in_stage("difficulty", [&] {
      return extract_difficulty(stage1, corpus, difficulty_mode(config.system), config.re_sum);
    });
    for (const auto& d : indicators) difficulty_summary.push_back(d.trace.rowwise().sum());
  }

  const GruNetwork* final_model = &stage1.best_model;
  const Corpus* final_corpus = &corpus;
  std::optional<TrainRun> stage2;
  Corpus augmented;
  if (has_stage2(config.system)) {
    fs::create_directories(out_dir / "indicators");
    for (std::size_t i = 0; i < indicators.size(); ++i)
      save_indicator(out_dir / "indicators" / (corpus.sequences[i].subject_id + ".csv"), indicators[i],
                     corpus.frame_period);
    augmented = in_stage("augment", [&] { return augment_corpus(corpus, indicators); });
    NetworkConfig base2 = base;
    base2.seed = config.seed + 1;
    json grid2 = json::array();
    stage2.emplace(search(
        "stage2-training", base2,
        [&](const NetworkConfig& c) { return train_stage2(corpus, indicators, c, tcfg); }, grid2));
    save_checkpoint(out_dir / "checkpoints" / "stage2.ckpt", stage2->best_model, stage2->best_adam);
    record["stages"].push_back(run_to_json(*stage2, "checkpoints/stage2.ckpt"));
    if (config.grid_search) record["stages"].back()["grid"] = grid2;
    final_model = &stage2->best_model;
    final_corpus = &augmented;
  }

  // Predictions on dev and test.
  struct PartitionPreds {
    std::vector<std::size_t> index;
    std::vector<VectorXd> raw, post, gold;
  };
  PartitionPreds dev, test;
  for (std::size_t i = 0; i < final_corpus->sequences.size(); ++i) {
    const auto& s = final_corpus->sequences[i];
    PartitionPreds* target = s.partition == Partition::dev ? &dev : s.partition == Partition::test ? &test : nullptr;
    if (!target) continue;
    target->index.push_back(i);
    target->raw.push_back(predict(*final_model, s.inputs));
    target->gold.push_back(s.target);
  }
  if (test.index.empty()) throw StageError("predict", "dataset has no test subjects");

  json pp = nullptr;
  PostProcessParams params;
  double dev_post_ccc = 0.0;
  if (config.postprocess) {
    const auto sel = in_stage("postprocess", [&] { return optimize_chain(dev.raw, dev.gold, corpus.frame_period); });
    params = sel.params;
    dev_post_ccc = sel.dev_ccc;
    pp = params_to_json(params);
    pp["candidates"] = sel.candidates;
  }
  for (auto* part : {&dev, &test})
    for (const auto& r : part->raw) part->post.push_back(config.postprocess ? apply_chain(r, params, corpus.frame_period) : r);
  if (!config.postprocess) dev_post_ccc = ccc(concatenate(dev.post), concatenate(dev.gold)).ccc;
  record["postprocess"] = pp;

  auto metric = [](const std::vector<VectorXd>& p, const std::vector<VectorXd>& g) {
    const auto rep = ccc(concatenate(p), concatenate(g));
    return json{{"ccc", rep.ccc}, {"pcc", std::isnan(rep.pcc) ? json(nullptr) : json(rep.pcc)}, {"n", rep.n}};
  };
  record["results"] = {
      {"dev", {{"raw", metric(dev.raw, dev.gold)}, {"post", metric(dev.post, dev.gold)}}},
      {"test", {{"raw", metric(test.raw, test.gold)}, {"post", metric(test.post, test.gold)}}},
  };
  record["results"]["dev"]["post"]["ccc"] = dev_post_ccc;

  // predictions.csv
  std::ostringstream csv_out;
  csv_out << header_comment(hash, config.seed);
  csv_out << "subject_id,partition,frame,time_s,gold,uncertainty,pred_raw,pred_post";
  if (!difficulty_summary.empty()) csv_out << ",difficulty";
  csv_out << '\n';
  for (const auto* part : {&dev, &test}) {
    for (std::size_t k = 0; k < part->index.size(); ++k) {
      const std::size_t i = part->index[k];
      const auto& s = corpus.sequences[i];
      for (Index t = 0; t < s.target.size(); ++t) {
        csv_out << s.subject_id << ',' << to_string(s.partition) << ',' << t << ','
                << csv::format(static_cast<double>(t) * corpus.frame_period) << ',' << csv::format(s.target(t)) << ','
                << csv::format(s.uncertainty(t)) << ',' << csv::format(part->raw[k](t)) << ','
                << csv::format(part->post[k](t));
        if (!difficulty_summary.empty()) csv_out << ',' << csv::format(difficulty_summary[i](t));
        csv_out << '\n';
      }
    }
  }
  write_text(out_dir / "predictions.csv", csv_out.str());
  record["predictions"] = "predictions.csv";
  if (has_stage2(config.system)) record["indicators"] = "indicators";
  write_text(out_dir / "record.json", record.dump(2) + "\n");
  return record;
}

// ---------------------------------------------------------------------------
// Fusion

json run_fusion(const fs::path& scenario, const fs::path& out_dir) {
  std::ifstream in(scenario);
  if (!in) throw StageError("fusion", scenario.string() + ": cannot open scenario");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw StageError("fusion", scenario.string() + ": " + e.what());
  }
  return run_fusion(doc, scenario.parent_path(), out_dir);
}

json run_fusion(const json& scenario, const fs::path& base_dir, const fs::path& out_dir) {
  return in_stage("fusion", [&] {
    const std::string column = scenario.value("column", std::string("pred_raw"));
    const auto seed = scenario.value("seed", std::uint64_t{0});
    const std::string hash = config_hash(scenario);
    if (!scenario.contains("streams") || scenario.at("streams").empty())
      throw std::invalid_argument("scenario lists no streams");

    struct Stream {
      std::string name;
      bool tuned = false;
      PredictionTable dev, test;
      VectorXd dev_values, test_values;
    };
    std::vector<Stream> streams;
    for (const auto& s : scenario.at("streams")) {
      Stream st;
      st.name = s.at("name").get<std::string>();
      st.tuned = s.value("dynamic_tuning", false);
      fs::path path = s.at("predictions").get<std::string>();
      if (path.is_relative()) path = base_dir / path;
      if (!fs::exists(path)) throw DataError(path.string() + ": prediction file not found");
      st.dev = read_predictions(path, Partition::dev, column);
      st.test = read_predictions(path, Partition::test, column);
      streams.push_back(std::move(st));
    }
    const auto& ref = streams.front();
    for (const auto& st : streams) {
      for (const auto* pair : {&st.dev, &st.test}) {
        const auto& other = pair == &st.dev ? ref.dev : ref.test;
        if (pair->subjects != other.subjects)
          throw DataError("stream '" + st.name + "' covers different subjects than '" + ref.name + "'");
        for (std::size_t i = 0; i < pair->gold.size(); ++i)
          if (pair->gold[i].size() != other.gold[i].size())
            throw DataError("stream '" + st.name + "' is misaligned for subject '" + pair->subjects[i] + "'");
      }
    }
    const VectorXd dev_gold = concatenate(ref.dev.gold);
    const VectorXd test_gold = concatenate(ref.test.gold);

    json report;
    report["config_hash"] = hash;
    report["seed"] = seed;
    report["column"] = column;
    report["streams"] = json::array();
    std::vector<VectorXd> dev_inputs, test_inputs;
    for (auto& st : streams) {
      st.dev_values = concatenate(st.dev.values);
      st.test_values = concatenate(st.test.values);
      json entry{{"name", st.name}, {"dynamic_tuning", st.tuned}};
      if (st.tuned) {
        // Same files, difficulty column.
        fs::path path = scenario.at("streams")[static_cast<std::size_t>(&st - streams.data())].at("predictions").get<std::string>();
        if (path.is_relative()) path = base_dir / path;
        const VectorXd d_dev = concatenate(read_predictions(path, Partition::dev, "difficulty").values);
        const VectorXd d_test = concatenate(read_predictions(path, Partition::test, "difficulty").values);
        const auto model = fit_dynamic_tuning(st.dev_values, d_dev, dev_gold);
        st.dev_values = apply_dynamic_tuning(model, st.dev_values, d_dev);
        st.test_values = apply_dynamic_tuning(model, st.test_values, d_test);
        entry["tuning"] = {{"intercept", model.intercept},
                           {"gamma", model.coefficients(0)},
                           {"gamma_d", *model.difficulty_coefficient},
                           {"ridge", model.used_ridge}};
      }
      entry["dev_ccc"] = ccc(st.dev_values, dev_gold).ccc;
      entry["test_ccc"] = ccc(st.test_values, test_gold).ccc;
      report["streams"].push_back(entry);
      dev_inputs.push_back(st.dev_values);
      test_inputs.push_back(st.test_values);
    }

    const auto model = fit_slr(dev_inputs, dev_gold);
    const VectorXd fused_dev = apply_slr(model, dev_inputs);
    const VectorXd fused_test = apply_slr(model, test_inputs);
    const VectorXd shares = contribution_analysis(model, dev_inputs);
    report["fusion"] = {{"intercept", model.intercept},
                        {"coefficients", std::vector<double>(model.coefficients.data(),
                                                             model.coefficients.data() + model.coefficients.size())},
                        {"contributions_percent", std::vector<double>(shares.data(), shares.data() + shares.size())},
                        {"ridge", model.used_ridge},
                        {"fitted_on", model.fitted_on}};
    report["dev_ccc"] = ccc(fused_dev, dev_gold).ccc;
    report["test_ccc"] = ccc(fused_test, test_gold).ccc;
    report["n_dev"] = dev_gold.size();
    report["n_test"] = test_gold.size();
    if (scenario.contains("dimension")) report["dimension"] = scenario.at("dimension");

    fs::create_directories(out_dir);
    std::ostringstream out;
    out << header_comment(hash, seed) << "subject_id,partition,frame,gold,fused\n";
    Index at = 0;
    for (const auto* part : {&ref.dev, &ref.test}) {
      const VectorXd& fused = part == &ref.dev ? fused_dev : fused_test;
      if (part == &ref.test) at = 0;
      for (std::size_t i = 0; i < part->subjects.size(); ++i)
        for (Index t = 0; t < part->gold[i].size(); ++t, ++at)
          out << part->subjects[i] << ',' << (part == &ref.dev ? "dev" : "test") << ',' << t << ','
              << csv::format(part->gold[i](t)) << ',' << csv::format(fused(at)) << '\n';
    }
    write_text(out_dir / "fused.csv", out.str());
    write_text(out_dir / "fusion_report.json", report.dump(2) + "\n");
    return report;
  });
}

PredictionTable read_predictions(const fs::path& path, Partition partition, const std::string& column) {
  const auto table = csv::read(path);
  const auto c_subject = table.column("subject_id");
  const auto c_part = table.column("partition");
  const auto c_gold = table.column("gold");
  const auto c_value = table.column(column);
  PredictionTable out;
  std::vector<std::vector<double>> gold, values;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (parse_partition(table.rows[r][c_part]) != partition) continue;
    const auto& subject = table.rows[r][c_subject];
    if (out.subjects.empty() || out.subjects.back() != subject) {
      out.subjects.push_back(subject);
      out.partitions.push_back(partition);
      gold.emplace_back();
      values.emplace_back();
    }
    gold.back().push_back(table.number(r, c_gold));
    values.back().push_back(table.number(r, c_value));
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    out.gold.push_back(Eigen::Map<const VectorXd>(gold[i].data(), static_cast<Index>(gold[i].size())));
    out.values.push_back(Eigen::Map<const VectorXd>(values[i].data(), static_cast<Index>(values[i].size())));
  }
  return out;
}

}  // namespace ddat
