#include <doctest.h>

#include <algorithm>

#include "ddat/training.hpp"
#include "helpers.hpp"

using namespace ddat;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PredictionBundle fake_bundle(const VectorXd& emotion, const MatrixXd& aux) {
  PredictionBundle b;
  b.emotion = emotion;
  b.aux = aux;
  return b;
}

TrainingConfig quick(int epochs1, int epochs2 = 0) {
  TrainingConfig t;
  t.stage1_epochs = epochs1;
  t.stage2_epochs = epochs2;
  t.chunk_length = 50;
  t.seed = 5;
  return t;
}

NetworkConfig small_net() {
  NetworkConfig c;
  c.units_per_layer = 6;
  c.seed = 2;
  return c;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("joint loss hand values") {
    MtlWeights w{1.0, 1.0, 0.0, Regularizer::none};
    VectorXd yhat(1), y(1), u(1);
    yhat << 0.3;
    y << 0.1;
    u << 0.2;
    MatrixXd uhat(1, 1);
    uhat << 0.5;
    const auto l = joint_loss(fake_bundle(yhat, uhat), y, MatrixXd(), u, w, AuxHead::uncertainty);
    CHECK(l.total == doctest::Approx(0.34).epsilon(1e-14));
    CHECK(l.emotion == doctest::Approx(0.04).epsilon(1e-14));
    CHECK(l.aux == doctest::Approx(0.3).epsilon(1e-14));

    const auto sq = joint_loss(fake_bundle(yhat, uhat), y, MatrixXd(), u, w, AuxHead::uncertainty, PuLoss::squared);
    CHECK(sq.aux == doctest::Approx(0.09).epsilon(1e-14));

    CHECK(combine_losses(MtlWeights{0.5, 0.5, 0.0, Regularizer::none}, 2.0, 4.0, 0.0) == doctest::Approx(3.0));
  }

  TEST_CASE("reconstruction loss is the per-frame squared error") {
    MatrixXd x(2, 2), xhat(2, 2);
    x << 1, 2, 3, 4;
    xhat << 1, 1, 3, 2;
    VectorXd y = VectorXd::Zero(2);
    const auto l = joint_loss(fake_bundle(y, xhat), y, x, VectorXd(), MtlWeights{}, AuxHead::reconstruction);
    CHECK(l.emotion == 0.0);
    CHECK(l.aux == doctest::Approx((1.0 + 4.0) / 2.0));
    CHECK(l.total == doctest::Approx(0.5 * 2.5));
    CHECK_THROWS_AS(joint_loss(fake_bundle(y, xhat), VectorXd::Zero(3), x, VectorXd(), MtlWeights{},
                               AuxHead::reconstruction),
                    std::invalid_argument);
  }

  TEST_CASE("perfect predictions give zero loss") {
    VectorXd y = VectorXd::LinSpaced(5, -0.5, 0.5);
    const auto l = joint_loss(fake_bundle(y, MatrixXd()), y, MatrixXd(), VectorXd(), MtlWeights{1.0, 0.0},
                              AuxHead::none);
    CHECK(l.total == 0.0);
    CHECK(l.grads.emotion.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("weights are validated") {
    CHECK_THROWS_AS((MtlWeights{0.0, 0.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((MtlWeights{-1.0, 1.0}.validate()), std::invalid_argument);
    TrainingConfig t;
    t.stage1_epochs = -1;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  }

  TEST_CASE("zero epochs keeps the initialized network") {
    const auto corpus = build_corpus(testing::tiny_dataset(), Dimension::arousal);
    const auto run = train_stage1(corpus, small_net(), MtlWeights{}, quick(0), AuxHead::reconstruction);
    CHECK(run.train_loss.empty());
    CHECK(run.dev_ccc.empty());
    CHECK(run.best_epoch == 0);
    NetworkConfig c = small_net();
    c.input_dim = 4;
    c.aux_head = AuxHead::reconstruction;
    c.reconstruction_dim = 4;
    CHECK(run.best_model.parameters() == init_network(c).parameters());
  }

  TEST_CASE("selection keeps the best dev epoch") {
    const auto corpus = build_corpus(testing::tiny_dataset(), Dimension::arousal);
    const auto run = train_stage1(corpus, small_net(), MtlWeights{}, quick(6), AuxHead::reconstruction);
    REQUIRE(run.dev_ccc.size() == 6);
    CHECK(run.train_loss.size() == 6);
    const auto best = std::max_element(run.dev_ccc.begin(), run.dev_ccc.end());
    CHECK(run.best_dev_ccc == *best);
    CHECK(run.best_epoch == 1 + (best - run.dev_ccc.begin()));
    CHECK(evaluate_ccc(run.best_model, corpus.partition(Partition::dev)) == run.best_dev_ccc);
    CHECK(run.train_loss.back() < run.initial_train_loss);
  }

  TEST_CASE("w2 = 0 multi-task training behaves like single-task training") {
    const auto corpus = build_corpus(testing::tiny_dataset(), Dimension::valence);
    const auto mtl = train_stage1(corpus, small_net(), MtlWeights{1.0, 0.0}, quick(4), AuxHead::reconstruction);
    const auto stl = train_stage1(corpus, small_net(), MtlWeights{1.0, 0.0}, quick(4), AuxHead::none);
    REQUIRE(mtl.train_loss.size() == stl.train_loss.size());
    for (std::size_t i = 0; i < mtl.train_loss.size(); ++i) {
      CHECK(mtl.train_loss[i] == doctest::Approx(stl.train_loss[i]).epsilon(1e-12));
      CHECK(mtl.dev_ccc[i] == doctest::Approx(stl.dev_ccc[i]).epsilon(1e-12));
    }
    CHECK(mtl.best_epoch == stl.best_epoch);
  }

  TEST_CASE("difficulty extraction: shapes and mode checks") {
    const auto corpus = build_corpus(testing::tiny_dataset(), Dimension::arousal);
    const auto re = train_stage1(corpus, small_net(), MtlWeights{}, quick(1), AuxHead::reconstruction);
    const auto vec = extract_difficulty(re, corpus, DifficultyMode::re_vector);
    const auto sum = extract_difficulty(re, corpus, DifficultyMode::re_sum);
    REQUIRE(vec.size() == corpus.sequences.size());
    CHECK(vec[0].width() == 4);
    CHECK(sum[0].width() == 1);
    CHECK(sum[2].trace.col(0).isApprox(vec[2].trace.rowwise().sum(), 1e-12));
    CHECK_THROWS_AS(extract_difficulty(re, corpus, DifficultyMode::pu), std::invalid_argument);

    const auto pu = train_stage1(corpus, small_net(), MtlWeights{}, quick(1), AuxHead::uncertainty);
    const auto u = extract_difficulty(pu, corpus, DifficultyMode::pu);
    const auto out = forward(pu.best_model, corpus.sequences[3].inputs, false);
    CHECK(u[3].trace == out.aux);
    CHECK_THROWS_AS(extract_difficulty(pu, corpus, DifficultyMode::re_sum), std::invalid_argument);

    const auto aug = augment_corpus(corpus, vec);
    CHECK(aug.input_dim() == 8);
    CHECK(aug.sequences[1].inputs.leftCols(4) == corpus.sequences[1].inputs);
  }

  TEST_CASE("stage 2 retrains on augmented inputs without touching stage 1") {
    const auto corpus = build_corpus(testing::tiny_dataset(), Dimension::arousal);
    const auto s1 = train_stage1(corpus, small_net(), MtlWeights{}, quick(2, 2), AuxHead::reconstruction);
    const VectorXd saved = s1.best_model.parameters();
    const auto d = extract_difficulty(s1, corpus, DifficultyMode::re_sum);
    const auto s2 = train_stage2(corpus, d, small_net(), quick(2, 2));
    CHECK(s2.stage == 2);
    CHECK(s2.best_model.config().input_dim == 5);
    CHECK(s2.best_model.config().aux_head == AuxHead::none);
    CHECK(s2.dev_ccc.size() == 2);
    CHECK(s1.best_model.parameters() == saved);

    std::vector<DifficultyIndicator> short_d = d;
    short_d[0].trace = short_d[0].trace.topRows(10).eval();
    CHECK_THROWS_AS(train_stage2(corpus, short_d, small_net(), quick(1, 1)), std::invalid_argument);
  }

  TEST_CASE("zero difficulty column with zero weights is a no-op") {
    NetworkConfig plain = small_net();
    plain.input_dim = 4;
    NetworkConfig wide = plain;
    wide.input_dim = 5;
    const auto a = init_network(plain);
    auto b = GruNetwork(wide);
    for (Gate g : {Gate::update, Gate::reset, Gate::candidate}) {
      b.input_weights(0, g).leftCols(4) = a.input_weights(0, g);
      b.input_weights(0, g).col(4).setZero();
      b.recurrent_weights(0, g) = a.recurrent_weights(0, g);
      b.bias(0, g) = a.bias(0, g);
    }
    b.emotion_weights() = a.emotion_weights();
    b.emotion_bias() = a.emotion_bias();
    std::mt19937_64 rng(8);
    const MatrixXd x = testing::random_matrix(rng, 30, 4);
    MatrixXd xd(30, 5);
    xd << x, VectorXd::Zero(30);
    CHECK(forward(a, x, false).emotion == forward(b, xd, false).emotion);
    // Any indicator values are ignored when the extra column's weights are zero.
    xd.col(4) = testing::random_vector(rng, 30);
    CHECK(forward(a, x, false).emotion == forward(b, xd, false).emotion);
  }

  TEST_CASE("structure grid and tie rule") {
    const auto grid = default_structure_grid(NetworkConfig{});
    CHECK(grid.size() == 15);
    CHECK(grid.front().num_layers == 1);
    CHECK(grid.back().num_layers == 9);
    CHECK(grid.back().units_per_layer == 120);

    std::vector<NetworkConfig> two{grid[2], grid[0]};  // 1x120 then 1x40
    auto trainer = [](const NetworkConfig& c) {
      TrainRun run{init_network(c), AdamState{}};
      run.best_dev_ccc = 0.5;
      return run;
    };
    const auto r = grid_search_structure(two, trainer, 2);
    CHECK(r.best_config.units_per_layer == 40);
    CHECK(r.scores.size() == 2);
    CHECK_THROWS_AS(grid_search_structure(std::vector<NetworkConfig>{}, trainer), std::invalid_argument);

    std::vector<NetworkConfig> one{grid[4]};
    CHECK(grid_search_structure(one, trainer).best_config == grid[4]);
  }
}
