#include "ddat/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace ddat {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(AuxHead h) {
  switch (h) {
    case AuxHead::none: return "none";
    case AuxHead::reconstruction: return "reconstruction";
    case AuxHead::uncertainty: return "uncertainty";
  }
  return "?";
}

int NetworkConfig::aux_dim() const {
  switch (aux_head) {
    case AuxHead::none: return 0;
    case AuxHead::reconstruction: return reconstruction_dim;
    case AuxHead::uncertainty: return 1;
  }
  return 0;
}

void NetworkConfig::validate(bool grid_mode) const {
  if (num_layers < 1 || units_per_layer < 1 || input_dim < 1)
    throw std::invalid_argument("network config: layers, units and input width must be positive");
  if (aux_head == AuxHead::reconstruction && reconstruction_dim < 1)
    throw std::invalid_argument("network config: reconstruction head needs a positive width");
  if (grid_mode) {
    const bool depth_ok = num_layers == 1 || num_layers == 3 || num_layers == 5 || num_layers == 7 || num_layers == 9;
    const bool width_ok = units_per_layer == 40 || units_per_layer == 80 || units_per_layer == 120;
    if (!depth_ok || !width_ok)
      throw std::invalid_argument("network config: structure outside the {1,3,5,7,9} x {40,80,120} grid");
  }
}

std::size_t NetworkConfig::parameter_count() const {
  const auto H = static_cast<std::size_t>(units_per_layer);
  std::size_t n = 0;
  for (int l = 0; l < num_layers; ++l) {
    const auto in = static_cast<std::size_t>(l == 0 ? input_dim : units_per_layer);
    n += 3 * (H * in + H * H + H);
  }
  n += H + 1;
  n += static_cast<std::size_t>(aux_dim()) * (H + 1);
  return n;
}

GruNetwork::GruNetwork(const NetworkConfig& config) : config_(config) {
  config_.validate();
  const Index H = config_.units_per_layer;
  Index offset = 0;
  layers_.resize(static_cast<std::size_t>(config_.num_layers));
  for (int l = 0; l < config_.num_layers; ++l) {
    auto& lay = layers_[static_cast<std::size_t>(l)];
    const Index in = layer_input_dim(l);
    for (int g = 0; g < 3; ++g) {
      lay.input[g] = offset;
      offset += H * in;
    }
    for (int g = 0; g < 3; ++g) {
      lay.recurrent[g] = offset;
      offset += H * H;
    }
    for (int g = 0; g < 3; ++g) {
      lay.bias[g] = offset;
      offset += H;
    }
  }
  emotion_offset_ = offset;
  offset += H + 1;
  aux_offset_ = offset;
  offset += static_cast<Index>(config_.aux_dim()) * (H + 1);
  params_ = VectorXd::Zero(offset);
}

int GruNetwork::layer_input_dim(int layer) const {
  return layer == 0 ? config_.input_dim : config_.units_per_layer;
}

GruNetwork::ConstMatrixMap GruNetwork::input_weights(int layer, Gate g) const {
  return {params_.data() + layout(layer).input[static_cast<int>(g)], config_.units_per_layer,
          layer_input_dim(layer)};
}
GruNetwork::ConstMatrixMap GruNetwork::recurrent_weights(int layer, Gate g) const {
  return {params_.data() + layout(layer).recurrent[static_cast<int>(g)], config_.units_per_layer,
          config_.units_per_layer};
}
GruNetwork::ConstVectorMap GruNetwork::bias(int layer, Gate g) const {
  return {params_.data() + layout(layer).bias[static_cast<int>(g)], config_.units_per_layer};
}
GruNetwork::MatrixMap GruNetwork::input_weights(int layer, Gate g) {
  return {params_.data() + layout(layer).input[static_cast<int>(g)], config_.units_per_layer,
          layer_input_dim(layer)};
}
GruNetwork::MatrixMap GruNetwork::recurrent_weights(int layer, Gate g) {
  return {params_.data() + layout(layer).recurrent[static_cast<int>(g)], config_.units_per_layer,
          config_.units_per_layer};
}
GruNetwork::VectorMap GruNetwork::bias(int layer, Gate g) {
  return {params_.data() + layout(layer).bias[static_cast<int>(g)], config_.units_per_layer};
}

GruNetwork::ConstMatrixMap GruNetwork::emotion_weights() const {
  return {params_.data() + emotion_offset_, 1, config_.units_per_layer};
}
double GruNetwork::emotion_bias() const { return params_(emotion_offset_ + config_.units_per_layer); }
GruNetwork::MatrixMap GruNetwork::emotion_weights() {
  return {params_.data() + emotion_offset_, 1, config_.units_per_layer};
}
double& GruNetwork::emotion_bias() { return params_(emotion_offset_ + config_.units_per_layer); }

GruNetwork::ConstMatrixMap GruNetwork::aux_weights() const {
  return {params_.data() + aux_offset_, config_.aux_dim(), config_.units_per_layer};
}
GruNetwork::ConstVectorMap GruNetwork::aux_bias() const {
  return {params_.data() + aux_offset_ + Index{config_.aux_dim()} * config_.units_per_layer, config_.aux_dim()};
}
GruNetwork::MatrixMap GruNetwork::aux_weights() {
  return {params_.data() + aux_offset_, config_.aux_dim(), config_.units_per_layer};
}
GruNetwork::VectorMap GruNetwork::aux_bias() {
  return {params_.data() + aux_offset_ + Index{config_.aux_dim()} * config_.units_per_layer, config_.aux_dim()};
}

GruNetwork init_network(const NetworkConfig& config) {
  GruNetwork net(config);
  std::mt19937_64 rng(config.seed);
  auto fill = [&](auto block) {
    const double limit = std::sqrt(6.0 / static_cast<double>(block.rows() + block.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index j = 0; j < block.cols(); ++j)
      for (Index i = 0; i < block.rows(); ++i) block(i, j) = dist(rng);
  };
  for (int l = 0; l < config.num_layers; ++l) {
    for (Gate g : {Gate::update, Gate::reset, Gate::candidate}) fill(net.input_weights(l, g));
    for (Gate g : {Gate::update, Gate::reset, Gate::candidate}) fill(net.recurrent_weights(l, g));
  }
  fill(net.emotion_weights());
  if (config.aux_dim() > 0) fill(net.aux_weights());
  return net;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

PredictionBundle forward(const GruNetwork& net, const MatrixXd& frames, bool retain_state,
                         const HiddenState& initial) {
  const auto& cfg = net.config();
  if (frames.cols() != cfg.input_dim)
    throw std::invalid_argument("forward: input width " + std::to_string(frames.cols()) +
                                " does not match network input " + std::to_string(cfg.input_dim));
  if (!frames.allFinite()) throw std::invalid_argument("forward: non-finite input");
  if (!initial.empty() && initial.size() != static_cast<std::size_t>(cfg.num_layers))
    throw std::invalid_argument("forward: initial state has the wrong number of layers");

  const Index T = frames.rows();
  const Index H = cfg.units_per_layer;
  PredictionBundle out;
  out.retains_state = retain_state;
  out.final_state.resize(static_cast<std::size_t>(cfg.num_layers));
  if (retain_state) out.layers.resize(static_cast<std::size_t>(cfg.num_layers));

  MatrixXd x = frames.transpose();
  for (int l = 0; l < cfg.num_layers; ++l) {
    const MatrixXd az_in = (net.input_weights(l, Gate::update) * x).colwise() + net.bias(l, Gate::update);
    const MatrixXd ar_in = (net.input_weights(l, Gate::reset) * x).colwise() + net.bias(l, Gate::reset);
    const MatrixXd ac_in =
        (net.input_weights(l, Gate::candidate) * x).colwise() + net.bias(l, Gate::candidate);
    const auto Uz = net.recurrent_weights(l, Gate::update);
    const auto Ur = net.recurrent_weights(l, Gate::reset);
    const auto Uc = net.recurrent_weights(l, Gate::candidate);

    MatrixXd hidden(H, T), z(H, T), r(H, T), c(H, T), hprev(H, T);
    VectorXd h = initial.empty() ? VectorXd::Zero(H) : initial[static_cast<std::size_t>(l)];
    if (h.size() != H) throw std::invalid_argument("forward: initial state has the wrong width");
    for (Index t = 0; t < T; ++t) {
      hprev.col(t) = h;
      const VectorXd zt = (az_in.col(t) + Uz * h).unaryExpr(&sigmoid);
      const VectorXd rt = (ar_in.col(t) + Ur * h).unaryExpr(&sigmoid);
      const VectorXd ct = (ac_in.col(t) + Uc * rt.cwiseProduct(h)).array().tanh().matrix();
      h = h + zt.cwiseProduct(ct - h);
      z.col(t) = zt;
      r.col(t) = rt;
      c.col(t) = ct;
      hidden.col(t) = h;
    }
    out.final_state[static_cast<std::size_t>(l)] = h;
    if (retain_state) {
      auto& tr = out.layers[static_cast<std::size_t>(l)];
      tr.inputs = std::move(x);
      tr.hidden_prev = std::move(hprev);
      tr.update = std::move(z);
      tr.reset = std::move(r);
      tr.candidate = std::move(c);
      tr.hidden = hidden;
    }
    x = std::move(hidden);
  }

  out.emotion = (net.emotion_weights() * x).transpose().array() + net.emotion_bias();
  if (cfg.aux_dim() > 0) out.aux = ((net.aux_weights() * x).colwise() + net.aux_bias()).transpose();
  else out.aux.resize(T, 0);
  return out;
}

VectorXd backward(const GruNetwork& net, const PredictionBundle& bundle, const LossGradients& grads) {
  if (!bundle.retains_state || bundle.layers.empty())
    throw std::logic_error("backward: forward pass did not retain its state");
  const auto& cfg = net.config();
  const Index T = bundle.frames();
  const Index H = cfg.units_per_layer;
  if (grads.emotion.size() != T) throw std::invalid_argument("backward: emotion gradient length mismatch");
  const bool has_aux = cfg.aux_dim() > 0 && grads.aux.size() > 0;
  if (has_aux && (grads.aux.rows() != T || grads.aux.cols() != cfg.aux_dim()))
    throw std::invalid_argument("backward: auxiliary gradient shape mismatch");

  VectorXd g = VectorXd::Zero(net.parameters().size());
  const auto& top = bundle.layers.back().hidden;

  // Heads.
  {
    Eigen::Map<MatrixXd> dWe(g.data() + net.emotion_offset(), 1, H);
    dWe.noalias() = grads.emotion.transpose() * top.transpose();
    g(net.emotion_offset() + H) = grads.emotion.sum();
  }
  MatrixXd dH = net.emotion_weights().transpose() * grads.emotion.transpose();  // H x T
  if (has_aux) {
    const Index A = cfg.aux_dim();
    Eigen::Map<MatrixXd> dWa(g.data() + net.aux_offset(), A, H);
    dWa.noalias() = grads.aux.transpose() * top.transpose();
    Eigen::Map<VectorXd>(g.data() + net.aux_offset() + A * H, A) = grads.aux.colwise().sum().transpose();
    dH.noalias() += net.aux_weights().transpose() * grads.aux.transpose();
  }

  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const auto& tr = bundle.layers[static_cast<std::size_t>(l)];
    const auto& lay = net.layout(l);
    const auto Uz = net.recurrent_weights(l, Gate::update);
    const auto Ur = net.recurrent_weights(l, Gate::reset);
    const auto Uc = net.recurrent_weights(l, Gate::candidate);

    MatrixXd daz(H, T), dar(H, T), dac(H, T);
    VectorXd dnext = VectorXd::Zero(H);
    for (Index t = T - 1; t >= 0; --t) {
      const VectorXd dh = dH.col(t) + dnext;
      const auto z = tr.update.col(t);
      const auto r = tr.reset.col(t);
      const auto c = tr.candidate.col(t);
      const auto hp = tr.hidden_prev.col(t);

      const VectorXd ac = dh.cwiseProduct(z).cwiseProduct((1.0 - c.array().square()).matrix());
      const VectorXd drh = Uc.transpose() * ac;
      const VectorXd az =
          dh.cwiseProduct(c - hp).cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
      const VectorXd ar =
          drh.cwiseProduct(hp).cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));

      dnext = dh.cwiseProduct((1.0 - z.array()).matrix()) + drh.cwiseProduct(r);
      dnext.noalias() += Uz.transpose() * az;
      dnext.noalias() += Ur.transpose() * ar;
      daz.col(t) = az;
      dar.col(t) = ar;
      dac.col(t) = ac;
    }

    const Index in = net.layer_input_dim(l);
    const MatrixXd rh = tr.reset.cwiseProduct(tr.hidden_prev);
    const MatrixXd* da[3] = {&daz, &dar, &dac};
    for (int gi = 0; gi < 3; ++gi) {
      Eigen::Map<MatrixXd>(g.data() + lay.input[gi], H, in).noalias() = *da[gi] * tr.inputs.transpose();
      Eigen::Map<MatrixXd>(g.data() + lay.recurrent[gi], H, H).noalias() =
          *da[gi] * (gi == 2 ? rh : tr.hidden_prev).transpose();
      Eigen::Map<VectorXd>(g.data() + lay.bias[gi], H) = da[gi]->rowwise().sum();
    }
    if (l > 0) {
      dH = net.input_weights(l, Gate::update).transpose() * daz;
      dH.noalias() += net.input_weights(l, Gate::reset).transpose() * dar;
      dH.noalias() += net.input_weights(l, Gate::candidate).transpose() * dac;
    }
  }
  return g;
}

bool adam_step(GruNetwork& net, const VectorXd& grads, AdamState& state) {
  auto& theta = net.parameters();
  if (grads.size() != theta.size())
    throw std::invalid_argument("adam_step: gradient has " + std::to_string(grads.size()) +
                                " entries, network has " + std::to_string(theta.size()));
  if (state.m.size() == 0) state.m = VectorXd::Zero(theta.size());
  if (state.v.size() == 0) state.v = VectorXd::Zero(theta.size());
  if (state.m.size() != theta.size() || state.v.size() != theta.size())
    throw std::invalid_argument("adam_step: optimizer state does not match the network");
  if (!grads.allFinite()) return false;

  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  theta.array() -= state.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.epsilon);
  return true;
}

double clip_global_norm(VectorXd& grads, double max_norm) {
  const double norm = grads.norm();
  if (max_norm > 0.0 && norm > max_norm) grads *= max_norm / norm;
  return norm;
}

VectorXd numeric_gradient(const std::function<double(const VectorXd&)>& loss, const VectorXd& theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("numeric_gradient: step must be positive");
  VectorXd g(theta.size());
  VectorXd probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + h;
    const double up = loss(probe);
    probe(i) = theta(i) - h;
    const double down = loss(probe);
    probe(i) = theta(i);
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace ddat
