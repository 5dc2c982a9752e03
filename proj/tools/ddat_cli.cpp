// Command-line front end: synth-data, prepare-data, train, fuse, report, plot.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "../src/csv.hpp"
#include "ddat/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ddat::DataError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ddat::DataError(path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ddat::DataError(path.string() + ": cannot write");
  out << text;
}

// Records are addressed by their run directory.
std::vector<json> load_records(const std::vector<std::string>& dirs) {
  std::vector<json> out;
  for (const auto& d : dirs) out.push_back(read_json(fs::path(d) / "record.json"));
  return out;
}

template <typename F>
void stage(const char* name, F&& f) {
  try {
    f();
  } catch (const ddat::StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw ddat::StageError(name, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Difficulty-aware continuous emotion prediction"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic dataset with manifest");
  ddat::SyntheticConfig scfg;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--subjects", scfg.subjects_per_partition, "Subjects per partition");
  synth->add_option("--frames", scfg.frames, "Frames per subject");
  synth->add_option("--features", scfg.feature_dim, "Feature dimension");
  synth->add_option("--raters", scfg.raters, "Raters per subject");
  synth->add_option("--frame-period", scfg.frame_period, "Seconds per frame");
  synth->add_option("--rater-lag", scfg.rater_lag, "Rater reaction lag in seconds");

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "Validate a manifest and write gold standards and statistics");
  std::string prep_manifest, prep_out;
  prep->add_option("--manifest", prep_manifest, "Dataset manifest")->required();
  prep->add_option("--out", prep_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Run one system end to end");
  std::string cfg_path, train_out, manifest, system, dimension, label, pu_loss, re_sum, regularizer;
  std::optional<std::uint64_t> seed;
  std::optional<int> layers, units, epochs1, epochs2, chunk, batch;
  std::optional<double> lr, w1, w2, lambda;
  std::optional<unsigned> threads;
  bool grid = false, no_post = false, print_config = false;
  train->add_option("--config", cfg_path, "Experiment config (JSON); flags override it");
  train->add_option("--out", train_out, "Run directory");
  train->add_option("--manifest", manifest, "Dataset manifest");
  train->add_option("--system", system, "baseline|mtl_re|mtl_pu|ddat_re_vector|ddat_re_sum|ddat_pu");
  train->add_option("--dimension", dimension, "arousal|valence");
  train->add_option("--label", label, "Feature set name used in reports");
  train->add_option("--seed", seed, "Random seed");
  train->add_option("--layers", layers, "GRU layers");
  train->add_option("--units", units, "Units per layer");
  train->add_flag("--grid", grid, "Grid search the network structure");
  train->add_option("--stage1-epochs", epochs1);
  train->add_option("--stage2-epochs", epochs2);
  train->add_option("--lr", lr, "Adam learning rate");
  train->add_option("--chunk", chunk, "Frames per training chunk");
  train->add_option("--batch", batch, "Chunks per optimizer step");
  train->add_option("--w1", w1, "Emotion loss weight");
  train->add_option("--w2", w2, "Auxiliary loss weight");
  train->add_option("--lambda", lambda, "Regularization weight");
  train->add_option("--regularizer", regularizer, "none|l2");
  train->add_option("--pu-loss", pu_loss, "absolute|squared");
  train->add_option("--re-sum", re_sum, "signed|absolute");
  train->add_flag("--no-postprocess", no_post, "Skip the post-processing chain");
  train->add_option("--threads", threads, "Worker threads for the grid search");
  train->add_flag("--print-config", print_config, "Print the effective config and exit");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Late fusion of prediction streams");
  std::string scenario, fuse_out;
  fuse->add_option("--scenario", scenario, "Fusion scenario (JSON)")->required();
  fuse->add_option("--out", fuse_out, "Output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "CCC comparison table with significance marks");
  std::vector<std::string> report_runs;
  std::string reference = "baseline", report_out;
  bool analysis = false;
  report->add_option("--run", report_runs, "Run directories")->required();
  report->add_option("--reference", reference, "Reference system for the Fisher test");
  report->add_option("--out", report_out, "Write report.txt and report.json here");
  report->add_flag("--analysis", analysis, "Also emit the difficulty indicator correlation table");

  // plot
  auto* plot = app.add_subcommand("plot", "SVG trace and contribution figures");
  std::vector<std::string> plot_runs, plot_fusion;
  std::string plot_out, subject;
  plot->add_option("--run", plot_runs, "Run directories");
  plot->add_option("--fusion", plot_fusion, "fusion_report.json files");
  plot->add_option("--out", plot_out, "Output directory")->required();
  plot->add_option("--subject", subject, "Test subject to plot (default: first)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      stage("synth-data", [&] {
        const auto ds = ddat::generate_synthetic(scfg, synth_seed);
        ddat::write_dataset(ds, synth_out);
        std::cout << "wrote " << (fs::path(synth_out) / "manifest.json").string() << '\n';
      });
    } else if (*prep) {
      stage("prepare-data", [&] {
        const auto ds = ddat::load_manifest(prep_manifest);
        json summary{{"manifest", prep_manifest}, {"dimensions", json::object()}};
        for (auto dim : {ddat::Dimension::arousal, ddat::Dimension::valence}) {
          bool present = true;
          for (const auto& s : ds.subjects) present = present && s.annotations.count(dim) > 0;
          if (!present) continue;
          const auto corpus = ddat::build_corpus(ds, dim);
          const auto dir = fs::path(prep_out) / "gold" / std::string(ddat::to_string(dim));
          fs::create_directories(dir);
          for (const auto& seq : corpus.sequences) {
            std::ostringstream out;
            out << "time_s,gold,uncertainty\n";
            for (Eigen::Index t = 0; t < seq.target.size(); ++t)
              out << ddat::csv::format(static_cast<double>(t) * corpus.frame_period) << ','
                  << ddat::csv::format(seq.target(t)) << ',' << ddat::csv::format(seq.uncertainty(t)) << '\n';
            write_file(dir / (seq.subject_id + ".csv"), out.str());
          }
          const auto& st = corpus.input_stats;
          summary["dimensions"][std::string(ddat::to_string(dim))] = {
              {"subjects", corpus.sequences.size()},
              {"input_dim", corpus.input_dim()},
              {"standardization",
               {{"mean", std::vector<double>(st.mean.data(), st.mean.data() + st.mean.size())},
                {"stddev", std::vector<double>(st.stddev.data(), st.stddev.data() + st.stddev.size())}}}};
        }
        write_file(fs::path(prep_out) / "prepared.json", summary.dump(2) + "\n");
        std::cout << "wrote " << (fs::path(prep_out) / "prepared.json").string() << '\n';
      });
    } else if (*train) {
      ddat::ExperimentConfig cfg;
      stage("config", [&] {
        if (!cfg_path.empty()) {
          cfg = ddat::ExperimentConfig::from_json(read_json(cfg_path));
          if (!cfg.manifest.empty() && cfg.manifest.is_relative())
            cfg.manifest = fs::path(cfg_path).parent_path() / cfg.manifest;
        }
        if (!manifest.empty()) cfg.manifest = manifest;
        if (!system.empty()) cfg.system = ddat::parse_system(system);
        if (!dimension.empty()) cfg.dimension = ddat::parse_dimension(dimension);
        if (!label.empty()) cfg.label = label;
        if (seed) cfg.seed = *seed;
        if (layers) cfg.num_layers = *layers;
        if (units) cfg.units_per_layer = *units;
        if (grid) cfg.grid_search = true;
        if (epochs1) cfg.training.stage1_epochs = *epochs1;
        if (epochs2) cfg.training.stage2_epochs = *epochs2;
        if (lr) cfg.training.learning_rate = *lr;
        if (chunk) cfg.training.chunk_length = *chunk;
        if (batch) cfg.training.batch_size = *batch;
        if (w1) cfg.weights.w1 = *w1;
        if (w2) cfg.weights.w2 = *w2;
        if (lambda) cfg.weights.lambda = *lambda;
        if (threads) cfg.threads = *threads;
        if (no_post) cfg.postprocess = false;
        // Round trip through JSON so string-valued flags share one parser.
        json j = cfg.to_json();
        if (!regularizer.empty()) j["mtl"]["regularizer"] = regularizer;
        if (!pu_loss.empty()) j["training"]["pu_loss"] = pu_loss;
        if (!re_sum.empty()) j["re_sum"] = re_sum;
        j["threads"] = cfg.threads;
        cfg = ddat::ExperimentConfig::from_json(j);
        cfg.training.validate();
        cfg.weights.validate();
      });
      if (print_config) {
        std::cout << cfg.to_json().dump(2) << '\n';
        return 0;
      }
      if (cfg.manifest.empty()) throw ddat::StageError("config", "no dataset manifest given");
      if (train_out.empty()) throw ddat::StageError("config", "no output directory given (--out)");
      const auto record = ddat::run_experiment(cfg, train_out);
      const auto& r = record.at("results");
      std::cout << record.at("system").get<std::string>() << ' ' << record.at("dimension").get<std::string>()
                << " dev " << r["dev"]["raw"]["ccc"] << " -> " << r["dev"]["post"]["ccc"] << ", test "
                << r["test"]["raw"]["ccc"] << " -> " << r["test"]["post"]["ccc"] << '\n';
    } else if (*fuse) {
      const auto rep = ddat::run_fusion(fs::path(scenario), fs::path(fuse_out));
      std::cout << "fused dev " << rep.at("dev_ccc") << ", test " << rep.at("test_ccc") << '\n';
    } else if (*report) {
      stage("report", [&] {
        const auto records = load_records(report_runs);
        if (records.empty()) throw std::invalid_argument("no records");
        const auto rep = ddat::emit_report(records, reference);
        std::string text = rep.text;
        if (analysis) {
          std::vector<fs::path> dirs(report_runs.begin(), report_runs.end());
          text += "\n" + ddat::emit_analysis(records, dirs);
        }
        std::cout << text;
        if (!report_out.empty()) {
          write_file(fs::path(report_out) / "report.txt", text);
          write_file(fs::path(report_out) / "report.json", rep.json.dump(2) + "\n");
        }
      });
    } else if (*plot) {
      stage("plot", [&] {
        const auto records = load_records(plot_runs);
        std::vector<json> fusion;
        for (const auto& f : plot_fusion) fusion.push_back(read_json(f));
        std::vector<fs::path> dirs(plot_runs.begin(), plot_runs.end());
        for (const auto& p : ddat::emit_plots(records, dirs, fusion, plot_out, subject)) std::cout << p.string() << '\n';
      });
    }
  } catch (const ddat::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: [cli] " << e.what() << '\n';
    return 1;
  }
  return 0;
}
