#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slowgen/baselines.hpp"

using namespace slowgen;

namespace {

Eigen::MatrixXd rot2(double angle) {
  Eigen::MatrixXd R(2, 2);
  R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return R;
}

CountTensor tiny_dataset(int N, int T, int d, long long f, std::uint64_t seed) {
  SimConfig cfg;
  cfg.N = N;
  cfg.T = T;
  cfg.f = f;
  cfg.seed = seed;
  return simulate_ad(cfg, d);
}

TrainConfig quick_cfg(int h, int epochs) {
  TrainConfig cfg;
  cfg.h = h;
  cfg.epochs = epochs;
  cfg.batch = 2;
  cfg.seed = 3;
  NetSpec spec;
  spec.hidden = {8};
  spec.act = Act::softplus;
  cfg.decoder_spec = spec;
  cfg.qz_spec = spec;
  return cfg;
}

}  // namespace

TEST_CASE("spectral_radius closed cases") {
  CHECK(spectral_radius(Eigen::MatrixXd::Identity(4, 4)) ==
        doctest::Approx(1.0).epsilon(1e-10));
  CHECK(spectral_radius(Eigen::MatrixXd::Zero(3, 3)) == doctest::Approx(0.0));
  CHECK(spectral_radius(Eigen::MatrixXd::Constant(1, 1, -0.7)) ==
        doctest::Approx(0.7).epsilon(1e-12));

  // pure rotation: complex pair on the unit circle
  CHECK(spectral_radius(rot2(0.83)) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(spectral_radius(0.4 * rot2(2.1)) == doctest::Approx(0.4).epsilon(1e-8));

  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(3, 3);
  D.diagonal() << 0.5, 2.0, -1.0;
  CHECK(spectral_radius(D) == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("spectral_radius against a dense eigensolver") {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + int(rng.below(9));
    Eigen::MatrixXd K =
        Eigen::MatrixXd::NullaryExpr(n, n, [&] { return rng.normal(); });
    Eigen::EigenSolver<Eigen::MatrixXd> es(K);
    const double want = es.eigenvalues().cwiseAbs().maxCoeff();
    CAPTURE(trial);
    CHECK(spectral_radius(K) == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("discrete Lyapunov solver") {
  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + int(rng.below(4));
    Eigen::MatrixXd K =
        0.4 * Eigen::MatrixXd::NullaryExpr(n, n, [&] { return rng.normal(); });
    Eigen::MatrixXd A =
        Eigen::MatrixXd::NullaryExpr(n, n, [&] { return rng.normal(); });
    Eigen::MatrixXd Q = A * A.transpose() + Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd S = solve_discrete_lyapunov(K, Q);
    CHECK((S - K * S * K.transpose() - Q).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("koopman_prob rollout moments match the Lyapunov solution") {
  Model m;
  m.kind = ModelKind::koopman_prob;
  m.h = 2;
  m.d = 3;
  m.koopman_K = 0.6 * rot2(0.9);
  m.koopman_logw = Eigen::VectorXd::Constant(2, std::log(0.5));
  Rng rng(4);
  m.decoder.d = 3;
  m.decoder.net = DenseNet::make({2, 6}, Act::relu, rng);

  TrainedModel tm;
  tm.model = m;
  SeqPosterior post;
  post.x_mean = Eigen::MatrixXd::Zero(2, 3);
  post.x_logstd = Eigen::MatrixXd::Constant(2, 3, -2.0);
  post.qz.push_back(DenseNet::make({3, 3}, Act::identity, rng));
  post.qz.push_back(DenseNet::make({3, 3}, Act::identity, rng));
  tm.posteriors.push_back(post);
  tm.seq_times.push_back({0, 1});
  tm.data_kind = "ad";

  const int P = 80, n = 6000;
  ForecastEnsemble e = predict_baseline(tm, 0, P, n, 31);
  Eigen::MatrixXd Q = 0.25 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd S = solve_discrete_lyapunov(m.koopman_K, Q);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(2, 2);
  for (int s = 0; s < n; ++s) {
    Eigen::Vector2d z = e.z[s].row(P).transpose();
    acc += z * z.transpose();
  }
  acc /= n;
  CHECK((acc - S).cwiseAbs().maxCoeff() < 0.05 * S.norm());
}

TEST_CASE("koopman_det with an identity map predicts a constant") {
  Model m;
  m.kind = ModelKind::koopman_det;
  m.h = 2;
  m.d = 4;
  m.koopman_K = Eigen::MatrixXd::Identity(2, 2);
  Rng rng(6);
  m.decoder.d = 4;
  m.decoder.net = DenseNet::make({2, 8}, Act::relu, rng);
  // silence the decoder so densities are deterministic
  m.decoder.net.layers.back().b.tail(4).setConstant(-40.0);

  TrainedModel tm;
  tm.model = m;
  SeqPosterior post;
  post.x_mean = Eigen::MatrixXd::Zero(3, 4);
  post.x_logstd = Eigen::MatrixXd::Constant(3, 4, -2.0);
  post.z0_mean = (Eigen::VectorXd(2) << 0.7, -0.2).finished();
  post.z0_logstd = Eigen::VectorXd::Constant(2, -40.0);
  tm.posteriors.push_back(post);
  tm.seq_times.push_back({0, 1, 2});
  tm.data_kind = "ad";

  ForecastEnsemble e = predict_baseline(tm, 0, 6, 3, 2);
  for (const auto& s : e.density)
    for (int t = 1; t <= 6; ++t)
      CHECK((s.row(t) - s.row(0)).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("nn_x with a zero map is a mean-zero random walk step") {
  Model m;
  m.kind = ModelKind::nn_x;
  m.h = 0;
  m.d = 3;
  Rng rng(7);
  m.xdyn = DenseNet::make({3, 3}, Act::identity, rng);
  m.xdyn.layers[0].W.setZero();
  m.nnx_logsigma = std::log(0.05);

  TrainedModel tm;
  tm.model = m;
  SeqPosterior post;
  post.x_mean = Eigen::MatrixXd::Zero(2, 3);
  post.x_mean.row(1) << 2.0, 0.0, -2.0;
  post.x_logstd = Eigen::MatrixXd::Constant(2, 3, -40.0);
  tm.posteriors.push_back(post);
  tm.seq_times.push_back({0, 1});
  tm.data_kind = "ad";

  const int n = 2000;
  ForecastEnsemble e = predict_baseline(tm, 0, 1, n, 9);
  Eigen::VectorXd want = density_from_X(post.x_mean.row(1).transpose());
  Eigen::VectorXd got = e.mean().row(1).transpose();
  Eigen::VectorXd uni = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  CHECK((got - uni).cwiseAbs().maxCoeff() < 0.01);
  CHECK((e.mean().row(0).transpose() - want).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("nn_x flags divergence under an unstable map") {
  Model m;
  m.kind = ModelKind::nn_x;
  m.h = 0;
  m.d = 2;
  Rng rng(8);
  m.xdyn = DenseNet::make({2, 2}, Act::identity, rng);
  m.xdyn.layers[0].W = 10.0 * Eigen::MatrixXd::Identity(2, 2);
  m.nnx_logsigma = 0.0;

  TrainedModel tm;
  tm.model = m;
  SeqPosterior post;
  post.x_mean = Eigen::MatrixXd::Ones(1, 2);
  post.x_logstd = Eigen::MatrixXd::Constant(1, 2, -40.0);
  tm.posteriors.push_back(post);
  tm.seq_times.push_back({0});
  tm.data_kind = "ad";

  ForecastEnsemble e = predict_baseline(tm, 0, 12, 2, 5);
  CHECK(e.diverged);
  CHECK(e.diverge_step > 0);
  CHECK(e.diverge_step <= 12);
}

TEST_CASE("train_baseline rejects the main model and trains the others") {
  CountTensor ct = tiny_dataset(2, 3, 6, 300, 10);
  CHECK_THROWS_AS(train_baseline(ModelKind::main_model, ct, quick_cfg(2, 2)),
                  std::invalid_argument);
  for (ModelKind k : {ModelKind::real_latent, ModelKind::koopman_prob,
                      ModelKind::koopman_det, ModelKind::nn_x}) {
    CAPTURE(kind_name(k));
    TrainedModel tm = train_baseline(k, ct, quick_cfg(2, 3));
    CHECK(tm.model.kind == k);
    CHECK(int(tm.curve.size()) == 3);
    CHECK(std::isfinite(tm.curve.back().total()));
    ForecastEnsemble e = predict_baseline(tm, 0, 2, 3, 1);
    for (const auto& s : e.density)
      for (int t = 0; t <= 2; ++t)
        CHECK(s.row(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("real_latent recovers the decay rate of a scalar OU chain") {
  // synthesize data whose bin densities respond linearly to one slow process
  const int d = 6, T = 30, N = 8;
  const double re = -0.15;
  LatentPrior gen = LatentPrior::from_lambda(Eigen::VectorXd::Constant(1, re),
                                             Eigen::VectorXd::Zero(1));
  Rng rng(77);
  Eigen::VectorXd w(d);
  w << 1.2, 0.6, 0.0, -0.6, -1.2, 0.0;
  CountTensor ct;
  ct.N = N;
  ct.T = T;
  ct.d = d;
  ct.f = 5000;
  ct.kind = "ad";
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXcd path = gen.sample_path(0, T, std::nullopt, rng);
    Eigen::MatrixXi counts(T + 1, d);
    for (int t = 0; t <= T; ++t) {
      Eigen::VectorXd p = density_from_X(2.0 * path[t].real() * w);
      long long left = ct.f;
      for (int k = 0; k < d; ++k) {
        long long c = (k == d - 1) ? left : std::llround(p[k] * double(ct.f));
        c = std::min(c, left);
        counts(t, k) = int(c);
        left -= c;
      }
    }
    ct.counts.push_back(counts);
  }

  TrainConfig cfg = quick_cfg(1, 4000);
  cfg.batch = 8;
  cfg.adam.lr = 1e-2;
  TrainedModel tm = train_baseline(ModelKind::real_latent, ct, cfg);
  const double got = tm.model.prior.re_lambda(0);
  CHECK(got > 2.5 * re);
  CHECK(got < 0.3 * re);
}
