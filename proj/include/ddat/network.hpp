#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace ddat {

enum class AuxHead { none, reconstruction, uncertainty };

std::string_view to_string(AuxHead h);

struct NetworkConfig {
  int num_layers = 1;
  int units_per_layer = 40;
  int input_dim = 1;
  AuxHead aux_head = AuxHead::none;
  /// Width of the reconstruction head; ignored for the other head kinds.
  int reconstruction_dim = 0;
  std::uint64_t seed = 0;

  int aux_dim() const;
  /// `grid_mode` additionally restricts depth/width to the structure grid.
  void validate(bool grid_mode = false) const;
  std::size_t parameter_count() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class Gate { update = 0, reset = 1, candidate = 2 };

/// Stacked GRU with an emotion head and an optional auxiliary head, both
/// affine maps of the top layer's hidden state. All parameters live in one
/// flat vector so that optimizers and checkpoints treat them uniformly.
class GruNetwork {
 public:
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;

  /// All parameters zero.
  explicit GruNetwork(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }

  // Per-layer blocks. Input weights are units x layer_input, recurrent
  // weights units x units.
  ConstMatrixMap input_weights(int layer, Gate g) const;
  ConstMatrixMap recurrent_weights(int layer, Gate g) const;
  ConstVectorMap bias(int layer, Gate g) const;
  MatrixMap input_weights(int layer, Gate g);
  MatrixMap recurrent_weights(int layer, Gate g);
  VectorMap bias(int layer, Gate g);

  ConstMatrixMap emotion_weights() const;  // 1 x units
  double emotion_bias() const;
  MatrixMap emotion_weights();
  double& emotion_bias();
  ConstMatrixMap aux_weights() const;  // aux_dim x units
  ConstVectorMap aux_bias() const;
  MatrixMap aux_weights();
  VectorMap aux_bias();

  int layer_input_dim(int layer) const;

  /// Offsets into the flat vector for gradient bookkeeping.
  struct LayerLayout {
    Eigen::Index input[3];
    Eigen::Index recurrent[3];
    Eigen::Index bias[3];
  };
  const LayerLayout& layout(int layer) const { return layers_[static_cast<std::size_t>(layer)]; }
  Eigen::Index emotion_offset() const { return emotion_offset_; }
  Eigen::Index aux_offset() const { return aux_offset_; }
  /// Offset where head parameters begin; everything before is recurrent.
  Eigen::Index shared_size() const { return emotion_offset_; }

 private:
  NetworkConfig config_;
  std::vector<LayerLayout> layers_;
  Eigen::Index emotion_offset_ = 0;
  Eigen::Index aux_offset_ = 0;
  Eigen::VectorXd params_;
};

/// Uniform +/- sqrt(6 / (fan_in + fan_out)) weights, zero biases.
GruNetwork init_network(const NetworkConfig& config);

/// Activations kept from a forward pass for backpropagation.
struct LayerTrace {
  Eigen::MatrixXd inputs;       // in x T
  Eigen::MatrixXd hidden_prev;  // units x T (h_{t-1})
  Eigen::MatrixXd update;       // z
  Eigen::MatrixXd reset;        // r
  Eigen::MatrixXd candidate;    // h~
  Eigen::MatrixXd hidden;       // h
};

struct PredictionBundle {
  Eigen::VectorXd emotion;  // T
  Eigen::MatrixXd aux;      // T x aux_dim
  std::vector<Eigen::VectorXd> final_state;
  std::vector<LayerTrace> layers;
  bool retains_state = false;

  Eigen::Index frames() const { return emotion.size(); }
};

using HiddenState = std::vector<Eigen::VectorXd>;

/// `frames` is T x input_dim. An empty `initial` means h_0 = 0 everywhere.
PredictionBundle forward(const GruNetwork& net, const Eigen::MatrixXd& frames, bool retain_state = true,
                         const HiddenState& initial = {});

struct LossGradients {
  Eigen::VectorXd emotion;  // dL/dy_hat, T
  Eigen::MatrixXd aux;      // dL/daux, T x aux_dim (may be empty)
};

/// Exact BPTT over the bundle's frames. The gradient into the initial
/// hidden state is dropped.
Eigen::VectorXd backward(const GruNetwork& net, const PredictionBundle& bundle, const LossGradients& grads);

struct AdamState {
  std::int64_t step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update. Returns false, leaving net and state
/// untouched, when the gradient has non-finite entries.
[[nodiscard]] bool adam_step(GruNetwork& net, const Eigen::VectorXd& grads, AdamState& state);

/// Rescales `grads` in place so its L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
double clip_global_norm(Eigen::VectorXd& grads, double max_norm);

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& loss,
                                 const Eigen::VectorXd& theta, double h = 1e-4);

// ---------------------------------------------------------------------------
// Checkpoints: little-endian binary record of config, parameters and Adam
// state. Doubles are stored as raw IEEE-754 bits.

struct Checkpoint {
  GruNetwork network;
  AdamState adam;
};

std::string serialize_checkpoint(const GruNetwork& net, const AdamState& adam);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const GruNetwork& net, const AdamState& adam);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ddat
