#include <doctest.h>

#include <cmath>

#include "ddat/network.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"

using namespace ddat;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("parameter count matches the layout") {
    NetworkConfig cfg;
    cfg.num_layers = 2;
    cfg.units_per_layer = 5;
    cfg.input_dim = 3;
    cfg.aux_head = AuxHead::reconstruction;
    cfg.reconstruction_dim = 3;
    // layer 1: 3*(5*3 + 5*5 + 5); layer 2: 3*(5*5 + 5*5 + 5); heads: 5+1, 3*5+3
    const std::size_t expected = 3 * (15 + 25 + 5) + 3 * (25 + 25 + 5) + 6 + 18;
    CHECK(cfg.parameter_count() == expected);
    GruNetwork net(cfg);
    CHECK(static_cast<std::size_t>(net.parameters().size()) == expected);
    CHECK(net.aux_offset() == static_cast<Eigen::Index>(expected - 18));
  }

  TEST_CASE("invalid configs are rejected") {
    NetworkConfig cfg;
    cfg.num_layers = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.num_layers = 2;
    CHECK_THROWS_AS(cfg.validate(true), std::invalid_argument);  // not in the structure grid
    cfg.num_layers = 3;
    cfg.units_per_layer = 80;
    CHECK_NOTHROW(cfg.validate(true));
  }

  TEST_CASE("single-unit forward matches the gate equations") {
    NetworkConfig cfg;
    cfg.units_per_layer = 1;
    cfg.input_dim = 1;
    GruNetwork net(cfg);
    const double wz = 0.3, wr = -0.7, wc = 0.9, uz = 0.2, ur = 0.5, uc = -0.4, bz = 0.1, br = -0.2, bc = 0.05;
    net.input_weights(0, Gate::update)(0, 0) = wz;
    net.input_weights(0, Gate::reset)(0, 0) = wr;
    net.input_weights(0, Gate::candidate)(0, 0) = wc;
    net.recurrent_weights(0, Gate::update)(0, 0) = uz;
    net.recurrent_weights(0, Gate::reset)(0, 0) = ur;
    net.recurrent_weights(0, Gate::candidate)(0, 0) = uc;
    net.bias(0, Gate::update)(0) = bz;
    net.bias(0, Gate::reset)(0) = br;
    net.bias(0, Gate::candidate)(0) = bc;
    net.emotion_weights()(0, 0) = 1.5;
    net.emotion_bias() = -0.25;

    MatrixXd x(3, 1);
    x << 1.0, -0.5, 2.0;
    const auto out = forward(net, x);
    double h = 0.0;
    for (int t = 0; t < 3; ++t) {
      const double z = sigmoid(wz * x(t, 0) + uz * h + bz);
      const double r = sigmoid(wr * x(t, 0) + ur * h + br);
      const double c = std::tanh(wc * x(t, 0) + uc * (r * h) + bc);
      h = (1.0 - z) * h + z * c;
      CHECK(out.emotion(t) == doctest::Approx(1.5 * h - 0.25).epsilon(1e-14));
    }
    CHECK(out.final_state[0](0) == doctest::Approx(h).epsilon(1e-14));
  }

  TEST_CASE("zero parameters give zero hidden state and outputs") {
    NetworkConfig cfg;
    cfg.num_layers = 3;
    cfg.units_per_layer = 4;
    cfg.input_dim = 2;
    cfg.aux_head = AuxHead::uncertainty;
    const GruNetwork net(cfg);
    std::mt19937_64 rng(1);
    const auto out = forward(net, testing::random_matrix(rng, 10, 2, 5.0));
    CHECK(out.emotion.cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.aux.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& l : out.layers) CHECK(l.hidden.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("hidden activations stay inside (-1, 1)") {
    NetworkConfig cfg;
    cfg.num_layers = 2;
    cfg.units_per_layer = 8;
    cfg.input_dim = 4;
    auto net = init_network(cfg);
    std::mt19937_64 rng(2);
    net.parameters() = testing::random_vector(rng, net.parameters().size(), 1.0);
    const auto out = forward(net, testing::random_matrix(rng, 200, 4, 2.0));
    for (const auto& l : out.layers) CHECK(l.hidden.cwiseAbs().maxCoeff() < 1.0);
    // Saturated gates round tanh to exactly 1 in double precision.
    net.parameters() *= 3.0;
    const auto hot = forward(net, testing::random_matrix(rng, 200, 4, 10.0));
    for (const auto& l : hot.layers) CHECK(l.hidden.cwiseAbs().maxCoeff() <= 1.0);
  }

  TEST_CASE("gate shapes") {
    NetworkConfig cfg;
    cfg.units_per_layer = 8;
    cfg.input_dim = 4;
    const GruNetwork net(cfg);
    CHECK(net.input_weights(0, Gate::reset).rows() == 8);
    CHECK(net.input_weights(0, Gate::reset).cols() == 4);
    CHECK(net.recurrent_weights(0, Gate::candidate).cols() == 8);
  }

  TEST_CASE("backward is linear in the loss gradients") {
    NetworkConfig cfg;
    cfg.units_per_layer = 5;
    cfg.input_dim = 3;
    const auto net = init_network(cfg);
    std::mt19937_64 rng(3);
    const auto b = forward(net, testing::random_matrix(rng, 7, 3));
    CHECK(backward(net, b, LossGradients{VectorXd::Zero(7), {}}).cwiseAbs().maxCoeff() == 0.0);
    const VectorXd g1 = testing::random_vector(rng, 7), g2 = testing::random_vector(rng, 7);
    const VectorXd sum = backward(net, b, LossGradients{g1 + g2, {}});
    const VectorXd parts = backward(net, b, LossGradients{g1, {}}) + backward(net, b, LossGradients{g2, {}});
    CHECK((sum - parts).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("numeric gradient of simple functions") {
    VectorXd w(1);
    w << 3.0;
    const auto sq = numeric_gradient([](const VectorXd& v) { return v(0) * v(0); }, w, 1e-4);
    CHECK(std::abs(sq(0) - 6.0) < 1e-7);
    CHECK(numeric_gradient([](const VectorXd&) { return 2.5; }, w)(0) == 0.0);
    CHECK_THROWS_AS(numeric_gradient([](const VectorXd&) { return 0.0; }, w, 0.0), std::invalid_argument);
  }

  TEST_CASE("adam with zero gradients is a fixed point") {
    NetworkConfig cfg;
    cfg.units_per_layer = 3;
    auto net = init_network(cfg);
    const VectorXd before = net.parameters();
    AdamState st;
    for (int i = 0; i < 5; ++i) REQUIRE(adam_step(net, VectorXd::Zero(before.size()), st));
    CHECK(net.parameters() == before);
    CHECK_THROWS_AS((void)adam_step(net, VectorXd::Zero(3), st), std::invalid_argument);
  }

  TEST_CASE("carried state equals running the sequence in one piece") {
    NetworkConfig cfg;
    cfg.num_layers = 2;
    cfg.units_per_layer = 6;
    cfg.input_dim = 3;
    const auto net = init_network(cfg);
    std::mt19937_64 rng(4);
    const MatrixXd x = testing::random_matrix(rng, 20, 3);
    const auto whole = forward(net, x, false);
    const auto a = forward(net, x.topRows(8), false);
    const auto b = forward(net, x.bottomRows(12), false, a.final_state);
    CHECK((whole.emotion.tail(12) - b.emotion).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("forward rejects bad input") {
    NetworkConfig cfg;
    cfg.input_dim = 3;
    const auto net = init_network(cfg);
    CHECK_THROWS_AS(forward(net, MatrixXd::Zero(4, 2)), std::invalid_argument);
    MatrixXd x = MatrixXd::Zero(4, 3);
    x(2, 1) = std::nan("");
    CHECK_THROWS_AS(forward(net, x), std::invalid_argument);
    const auto no_state = forward(net, MatrixXd::Zero(4, 3), false);
    LossGradients g{VectorXd::Ones(4), {}};
    CHECK_THROWS_AS(backward(net, no_state, g), std::logic_error);
  }

  TEST_CASE("initialization is seeded and bounded") {
    NetworkConfig cfg;
    cfg.input_dim = 10;
    cfg.seed = 42;
    const auto a = init_network(cfg);
    const auto b = init_network(cfg);
    CHECK(a.parameters() == b.parameters());
    cfg.seed = 43;
    CHECK(init_network(cfg).parameters() != a.parameters());
    const double bound = std::sqrt(6.0 / (40 + 10));
    CHECK(a.input_weights(0, Gate::update).cwiseAbs().maxCoeff() <= bound);
    CHECK(a.bias(0, Gate::candidate).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("BPTT matches finite differences (two layers, each head)") {
    for (auto head : {AuxHead::none, AuxHead::reconstruction, AuxHead::uncertainty}) {
      MtlWeights w{0.6, head == AuxHead::none ? 0.0 : 0.4, 0.01, Regularizer::l2};
      // Deeper nets have gradients near the 1e-6 floor where the O(h^2)
      // truncation of a 1e-4 step alone reaches 1e-3 relative; use 1e-5.
      const auto r = testing::check_gradients(head, w, 5, 6, 3, 2, 7, PuLoss::absolute, 1e-5);
      CAPTURE(to_string(head));
      CHECK(r.compared > 100);
      CHECK(r.max_rel_error < 1e-4);
    }
    const auto sq = testing::check_gradients(AuxHead::uncertainty, MtlWeights{}, 4, 5, 2, 1, 3, PuLoss::squared);
    CHECK(sq.max_rel_error < 1e-4);
  }

  TEST_CASE("adam: bias-corrected first step and non-finite guard") {
    NetworkConfig cfg;
    cfg.units_per_layer = 2;
    cfg.input_dim = 1;
    GruNetwork net(cfg);
    AdamState st;
    VectorXd g = VectorXd::Constant(net.parameters().size(), 0.5);
    g(0) = -2.0;
    REQUIRE(adam_step(net, g, st));
    // First step moves every parameter by lr * sign(g) (up to eps).
    CHECK(net.parameters()(0) == doctest::Approx(0.001).epsilon(1e-6));
    CHECK(net.parameters()(1) == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(st.step == 1);

    const VectorXd before = net.parameters();
    const AdamState saved = st;
    g(3) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(adam_step(net, g, st));
    CHECK(net.parameters() == before);
    CHECK(st == saved);
  }

  TEST_CASE("global norm clipping") {
    VectorXd g(2);
    g << 3.0, 4.0;
    CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g.norm() == doctest::Approx(1.0));
    VectorXd small(2);
    small << 0.3, 0.4;
    clip_global_norm(small, 5.0);
    CHECK(small(0) == 0.3);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    NetworkConfig cfg;
    cfg.num_layers = 3;
    cfg.units_per_layer = 7;
    cfg.input_dim = 4;
    cfg.aux_head = AuxHead::reconstruction;
    cfg.reconstruction_dim = 4;
    cfg.seed = 99;
    auto net = init_network(cfg);
    AdamState adam;
    std::mt19937_64 rng(2);
    for (int i = 0; i < 3; ++i) REQUIRE(adam_step(net, testing::random_vector(rng, net.parameters().size()), adam));

    testing::TempDir dir("ckpt");
    save_checkpoint(dir / "a.ckpt", net, adam);
    const auto back = load_checkpoint(dir / "a.ckpt");
    CHECK(back.network.config() == cfg);
    CHECK(back.network.parameters() == net.parameters());
    CHECK(back.adam == adam);

    MatrixXd x = testing::random_matrix(rng, 10, 4);
    CHECK(forward(back.network, x, false).emotion == forward(net, x, false).emotion);

    const auto bytes = serialize_checkpoint(net, adam);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), DataError);
    CHECK_THROWS_AS(deserialize_checkpoint("NOTACKPT"), DataError);
  }
}
