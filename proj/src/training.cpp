#include "ddat/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>

#include "ddat/metrics.hpp"
#include "ddat/postprocess.hpp"

namespace ddat {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void MtlWeights::validate() const {
  if (w1 < 0.0 || w2 < 0.0 || lambda < 0.0) throw std::invalid_argument("MTL weights must be non-negative");
  if (!(w1 + w2 > 0.0)) throw std::invalid_argument("MTL weights: w1 + w2 must be positive");
}

void TrainingConfig::validate() const {
  if (stage1_epochs < 0 || stage2_epochs < 0) throw std::invalid_argument("training: epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("training: learning rate must be positive");
  if (chunk_length < 1 || batch_size < 1) throw std::invalid_argument("training: chunk length and batch size must be positive");
}

LossTerms joint_loss(const PredictionBundle& bundle, const VectorXd& gold, const MatrixXd& inputs,
                     const VectorXd& uncertainty, const MtlWeights& weights, AuxHead aux, PuLoss pu_loss,
                     double normalizer) {
  const Index T = bundle.frames();
  if (gold.size() != T) throw std::invalid_argument("joint_loss: gold standard length does not match predictions");
  const double norm = normalizer > 0.0 ? normalizer : static_cast<double>(T);

  LossTerms out;
  const VectorXd err = bundle.emotion - gold;
  out.emotion = err.squaredNorm() / norm;
  out.grads.emotion = (2.0 * weights.w1 / norm) * err;

  switch (aux) {
    case AuxHead::none:
      out.grads.aux.resize(T, 0);
      break;
    case AuxHead::reconstruction: {
      if (bundle.aux.rows() != T || bundle.aux.cols() != inputs.cols() || inputs.rows() != T)
        throw std::invalid_argument("joint_loss: reconstruction does not match the inputs");
      const MatrixXd diff = bundle.aux - inputs;
      out.aux = diff.squaredNorm() / norm;
      out.grads.aux = (2.0 * weights.w2 / norm) * diff;
      break;
    }
    case AuxHead::uncertainty: {
      if (bundle.aux.rows() != T || bundle.aux.cols() != 1 || uncertainty.size() != T)
        throw std::invalid_argument("joint_loss: uncertainty head or labels have the wrong length");
      const VectorXd diff = bundle.aux.col(0) - uncertainty;
      if (pu_loss == PuLoss::absolute) {
        out.aux = diff.cwiseAbs().sum() / norm;
        out.grads.aux = (weights.w2 / norm) * diff.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
      } else {
        out.aux = diff.squaredNorm() / norm;
        out.grads.aux = (2.0 * weights.w2 / norm) * diff;
      }
      break;
    }
  }
  out.total = combine_losses(weights, out.emotion, out.aux, 0.0);
  return out;
}

double combine_losses(const MtlWeights& weights, double emotion, double aux, double regularizer) {
  return weights.w1 * emotion + weights.w2 * aux + weights.lambda * regularizer;
}

double regularization(const GruNetwork& net, const MtlWeights& weights) {
  if (weights.regularizer == Regularizer::none || weights.lambda == 0.0) return 0.0;
  return weights.lambda * net.parameters().head(net.shared_size()).squaredNorm();
}

void add_regularization_gradient(const GruNetwork& net, const MtlWeights& weights, VectorXd& grads) {
  if (weights.regularizer == Regularizer::none || weights.lambda == 0.0) return;
  grads.head(net.shared_size()) += 2.0 * weights.lambda * net.parameters().head(net.shared_size());
}

VectorXd predict(const GruNetwork& net, const MatrixXd& inputs) { return forward(net, inputs, false).emotion; }

double evaluate_ccc(const GruNetwork& net, std::span<const SequenceExample* const> sequences) {
  std::vector<VectorXd> preds, golds;
  for (const auto* s : sequences) {
    preds.push_back(predict(net, s->inputs));
    golds.push_back(s->target);
  }
  return ccc(concatenate(preds), concatenate(golds)).ccc;
}

namespace {

double mean_loss(const GruNetwork& net, std::span<const SequenceExample* const> seqs, const MtlWeights& weights,
                 const TrainingConfig& tcfg) {
  double sum = 0.0;
  double frames = 0.0;
  const auto aux = net.config().aux_head;
  for (const auto* s : seqs) {
    const auto bundle = forward(net, s->inputs, false);
    sum += joint_loss(bundle, s->target, s->inputs, s->uncertainty, weights, aux, tcfg.pu_loss, 1.0).total;
    frames += static_cast<double>(s->inputs.rows());
  }
  return sum / frames + regularization(net, weights);
}

struct Chunk {
  const SequenceExample* seq;
  Index start;
  Index length;
};

}  // namespace

TrainRun train_network(GruNetwork net, const Corpus& corpus, const MtlWeights& weights, const TrainingConfig& tcfg,
                       int epochs, int stage) {
  weights.validate();
  tcfg.validate();
  if (epochs < 0) throw std::invalid_argument("training: epochs must be non-negative");
  const auto train = corpus.partition(Partition::train);
  const auto dev = corpus.partition(Partition::dev);
  if (train.empty()) throw std::invalid_argument("training: empty train partition");
  if (dev.empty()) throw std::invalid_argument("training: empty dev partition");
  const auto aux = net.config().aux_head;
  if (aux == AuxHead::uncertainty)
    for (const auto* s : train)
      if (s->uncertainty.size() != s->target.size())
        throw std::invalid_argument("training: uncertainty labels missing for '" + s->subject_id + "'");

  AdamState adam;
  adam.learning_rate = tcfg.learning_rate;
  TrainRun run{net, adam, 0, -std::numeric_limits<double>::infinity(), 0.0, 0.0, {}, {}, stage, 0};
  run.initial_train_loss = mean_loss(net, train, weights, tcfg);
  run.initial_dev_ccc = evaluate_ccc(net, dev);
  if (epochs == 0) run.best_dev_ccc = run.initial_dev_ccc;

  std::mt19937_64 rng(tcfg.seed);
  std::vector<const SequenceExample*> order(train.begin(), train.end());
  const auto P = static_cast<Index>(net.parameters().size());

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Chunk> chunks;
    for (const auto* s : order)
      for (Index start = 0; start < s->inputs.rows(); start += tcfg.chunk_length)
        chunks.push_back({s, start, std::min<Index>(tcfg.chunk_length, s->inputs.rows() - start)});

    VectorXd acc = VectorXd::Zero(P);
    double acc_frames = 0.0;
    int in_batch = 0;
    double epoch_loss = 0.0;
    double epoch_frames = 0.0;
    HiddenState carry;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto& c = chunks[i];
      if (c.start == 0) carry.clear();
      const MatrixXd x = c.seq->inputs.middleRows(c.start, c.length);
      const auto bundle = forward(net, x, true, carry);
      carry = bundle.final_state;
      const VectorXd u = c.seq->uncertainty.size() ? VectorXd(c.seq->uncertainty.segment(c.start, c.length)) : VectorXd();
      const auto loss =
          joint_loss(bundle, c.seq->target.segment(c.start, c.length), x, u, weights, aux, tcfg.pu_loss, 1.0);
      acc += backward(net, bundle, loss.grads);
      acc_frames += static_cast<double>(c.length);
      epoch_loss += loss.total;
      epoch_frames += static_cast<double>(c.length);

      if (++in_batch == tcfg.batch_size || i + 1 == chunks.size()) {
        acc /= acc_frames;
        add_regularization_gradient(net, weights, acc);
        clip_global_norm(acc, tcfg.clip_norm);
        if (!adam_step(net, acc, adam)) ++run.skipped_steps;
        acc.setZero();
        acc_frames = 0.0;
        in_batch = 0;
      }
    }
    run.train_loss.push_back(epoch_loss / epoch_frames + regularization(net, weights));
    const double score = evaluate_ccc(net, dev);
    run.dev_ccc.push_back(score);
    if (score > run.best_dev_ccc) {
      run.best_dev_ccc = score;
      run.best_epoch = epoch;
      run.best_model = net;
      run.best_adam = adam;
    }
  }
  return run;
}

TrainRun train_stage1(const Corpus& corpus, NetworkConfig net_config, const MtlWeights& weights,
                      const TrainingConfig& tcfg, AuxHead aux) {
  net_config.input_dim = static_cast<int>(corpus.input_dim());
  net_config.aux_head = aux;
  net_config.reconstruction_dim = aux == AuxHead::reconstruction ? net_config.input_dim : 0;
  return train_network(init_network(net_config), corpus, weights, tcfg, tcfg.stage1_epochs, 1);
}

std::vector<DifficultyIndicator> extract_difficulty(const TrainRun& run, const Corpus& corpus, DifficultyMode mode,
                                                    ReSumConvention convention) {
  const auto head = run.best_model.config().aux_head;
  const bool consistent = mode == DifficultyMode::pu ? head == AuxHead::uncertainty : head == AuxHead::reconstruction;
  if (!consistent)
    throw std::invalid_argument("extract_difficulty: mode " + std::string(to_string(mode)) +
                                " needs a different auxiliary head than '" + std::string(to_string(head)) + "'");
  std::vector<DifficultyIndicator> out;
  out.reserve(corpus.sequences.size());
  for (const auto& s : corpus.sequences) {
    const auto bundle = forward(run.best_model, s.inputs, false);
    auto d = mode == DifficultyMode::pu ? uncertainty_indicator(bundle.aux)
                                        : reconstruction_indicator(s.inputs, bundle.aux, mode, convention);
    d.source_model = "stage1/epoch" + std::to_string(run.best_epoch);
    out.push_back(std::move(d));
  }
  return out;
}

Corpus augment_corpus(const Corpus& corpus, std::span<const DifficultyIndicator> indicators) {
  if (indicators.size() != corpus.sequences.size())
    throw std::invalid_argument("augment_corpus: one indicator per sequence required");
  std::vector<MatrixXd> train;
  for (std::size_t i = 0; i < indicators.size(); ++i) {
    if (indicators[i].trace.rows() != corpus.sequences[i].inputs.rows())
      throw std::invalid_argument("augment_corpus: indicator length mismatch for '" +
                                  corpus.sequences[i].subject_id + "'");
    if (corpus.sequences[i].partition == Partition::train) train.push_back(indicators[i].trace);
  }
  const auto stats = fit_standardization(std::span<const MatrixXd>(train));
  Corpus out = corpus;
  for (std::size_t i = 0; i < indicators.size(); ++i) {
    DifficultyIndicator scaled = indicators[i];
    scaled.trace = apply_standardization(indicators[i].trace, stats);
    out.sequences[i].inputs = augment(corpus.sequences[i].inputs, scaled);
  }
  return out;
}

TrainRun train_stage2(const Corpus& corpus, std::span<const DifficultyIndicator> indicators,
                      NetworkConfig net_config, const TrainingConfig& tcfg) {
  if (indicators.empty()) throw std::invalid_argument("train_stage2: no indicators");
  const Index wd = indicators.front().width();
  if (wd != 1 && wd != corpus.input_dim())
    throw std::invalid_argument("train_stage2: indicator width must be 1 or the feature width");
  const Corpus augmented = augment_corpus(corpus, indicators);
  net_config.input_dim = static_cast<int>(augmented.input_dim());
  net_config.aux_head = AuxHead::none;
  net_config.reconstruction_dim = 0;
  const MtlWeights emotion_only{1.0, 0.0, 0.0, Regularizer::none};
  return train_network(init_network(net_config), augmented, emotion_only, tcfg, tcfg.stage2_epochs, 2);
}

std::vector<NetworkConfig> default_structure_grid(const NetworkConfig& base) {
  std::vector<NetworkConfig> grid;
  for (int layers : {1, 3, 5, 7, 9})
    for (int units : {40, 80, 120}) {
      NetworkConfig c = base;
      c.num_layers = layers;
      c.units_per_layer = units;
      grid.push_back(c);
    }
  return grid;
}

GridResult grid_search_structure(std::span<const NetworkConfig> grid,
                                 const std::function<TrainRun(const NetworkConfig&)>& trainer, unsigned threads) {
  if (grid.empty()) throw std::invalid_argument("grid_search_structure: empty grid");
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(grid.size()));

  std::vector<std::optional<TrainRun>> runs(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < grid.size();) {
      try {
        runs[i].emplace(trainer(grid[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double a = runs[i]->best_dev_ccc;
    const double b = runs[best]->best_dev_ccc;
    if (a > b || (a == b && grid[i].parameter_count() < grid[best].parameter_count())) best = i;
  }
  GridResult result{grid[best], std::move(*runs[best]), {}};
  for (std::size_t i = 0; i < grid.size(); ++i) result.scores.emplace_back(grid[i], runs[i]->best_dev_ccc);
  return result;
}

}  // namespace ddat
