#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "ddat/data_model.hpp"
#include "ddat/difficulty.hpp"
#include "ddat/network.hpp"

namespace ddat {

enum class Regularizer { none, l2 };
/// Penalty applied to the uncertainty head: |u_hat - u| or (u_hat - u)^2.
enum class PuLoss { absolute, squared };

struct MtlWeights {
  double w1 = 0.5;  // emotion
  double w2 = 0.5;  // auxiliary
  double lambda = 0.0;
  Regularizer regularizer = Regularizer::none;

  void validate() const;
};

struct TrainingConfig {
  int stage1_epochs = 50;
  int stage2_epochs = 50;
  double learning_rate = 0.001;
  int chunk_length = 300;
  /// Chunks whose gradients are accumulated per optimizer step.
  int batch_size = 4;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  PuLoss pu_loss = PuLoss::absolute;

  void validate() const;
};

struct LossTerms {
  double total = 0.0;    // w1 * emotion + w2 * aux
  double emotion = 0.0;  // sum_t (y_hat - y)^2 / normalizer
  double aux = 0.0;      // reconstruction or uncertainty term / normalizer
  LossGradients grads;
};

/// Weighted multi-task loss over one prediction bundle. `inputs` is only
/// read for the reconstruction head and `uncertainty` only for the
/// uncertainty head. Sums are divided by `normalizer`, which defaults to
/// the number of frames. The regularizer is handled separately because it
/// depends on the parameters, not on the predictions.
LossTerms joint_loss(const PredictionBundle& bundle, const Eigen::VectorXd& gold, const Eigen::MatrixXd& inputs,
                     const Eigen::VectorXd& uncertainty, const MtlWeights& weights, AuxHead aux,
                     PuLoss pu_loss = PuLoss::absolute, double normalizer = 0.0);

double combine_losses(const MtlWeights& weights, double emotion, double aux, double regularizer);

/// lambda * ||theta_0||^2 over the shared recurrent parameters.
double regularization(const GruNetwork& net, const MtlWeights& weights);
void add_regularization_gradient(const GruNetwork& net, const MtlWeights& weights, Eigen::VectorXd& grads);

struct TrainRun {
  GruNetwork best_model;
  AdamState best_adam;
  int best_epoch = 0;  // 0: the initial network
  double best_dev_ccc = -std::numeric_limits<double>::infinity();
  double initial_train_loss = 0.0;
  double initial_dev_ccc = 0.0;
  std::vector<double> train_loss;
  std::vector<double> dev_ccc;
  int stage = 1;
  std::size_t skipped_steps = 0;  // optimizer steps dropped for non-finite gradients
};

/// Generic loop behind both stages: optimize on the train partition, score
/// the emotion head on dev after every epoch, keep the model whenever the
/// dev CCC improves on the best so far.
TrainRun train_network(GruNetwork net, const Corpus& corpus, const MtlWeights& weights, const TrainingConfig& tcfg,
                       int epochs, int stage);

/// Stage 1: emotion plus an auxiliary head (reconstruction or uncertainty).
/// AuxHead::none with weights {1, 0} gives the single-task baseline.
TrainRun train_stage1(const Corpus& corpus, NetworkConfig net_config, const MtlWeights& weights,
                      const TrainingConfig& tcfg, AuxHead aux);

std::vector<DifficultyIndicator> extract_difficulty(const TrainRun& run, const Corpus& corpus, DifficultyMode mode,
                                                    ReSumConvention convention = ReSumConvention::signed_sum);

/// Standardizes the indicators with train-partition statistics and appends
/// them to each sequence's inputs.
Corpus augment_corpus(const Corpus& corpus, std::span<const DifficultyIndicator> indicators);

/// Stage 2: fresh single-task network on [x, d].
TrainRun train_stage2(const Corpus& corpus, std::span<const DifficultyIndicator> indicators,
                      NetworkConfig net_config, const TrainingConfig& tcfg);

Eigen::VectorXd predict(const GruNetwork& net, const Eigen::MatrixXd& inputs);
/// CCC of the emotion head over the concatenated sequences.
double evaluate_ccc(const GruNetwork& net, std::span<const SequenceExample* const> sequences);

struct GridResult {
  NetworkConfig best_config;
  TrainRun best_run;
  std::vector<std::pair<NetworkConfig, double>> scores;  // best dev CCC per config
};

/// {1,3,5,7,9} layers x {40,80,120} units on top of `base`.
std::vector<NetworkConfig> default_structure_grid(const NetworkConfig& base);

/// Trains every config (concurrently, up to `threads` at a time) and keeps
/// the one with the highest best-dev CCC; ties go to fewer parameters.
GridResult grid_search_structure(std::span<const NetworkConfig> grid,
                                 const std::function<TrainRun(const NetworkConfig&)>& trainer, unsigned threads = 0);

}  // namespace ddat
