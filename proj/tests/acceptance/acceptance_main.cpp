// Acceptance battery: one criterion per invocation, selected by argv[1].
// Usage: acceptance <A1..A10> --artifacts DIR --cli PATH
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "slowgen/baselines.hpp"
#include "slowgen/checkpoint.hpp"
#include "slowgen/cnormal.hpp"
#include "slowgen/eval.hpp"
#include "slowgen/forecast.hpp"
#include "slowgen/latent_prior.hpp"
#include "slowgen/particle_sim.hpp"
#include "slowgen/vi_engine.hpp"

namespace fs = std::filesystem;
using namespace slowgen;

namespace {

struct Reporter {
  std::string crit;
  bool all_ok = true;

  bool check(const std::string& sub, bool ok, const std::string& detail) {
    std::cout << crit << (sub.empty() ? "" : " ") << sub << ' '
              << (ok ? "PASS" : "FAIL") << ": " << detail << '\n';
    all_ok = all_ok && ok;
    return ok;
  }
  void report(const std::string& sub, const std::string& detail) {
    std::cout << crit << ' ' << sub << " REPORT: " << detail << '\n';
  }
  int finish() {
    std::cout << crit << ": " << (all_ok ? "PASS" : "FAIL") << '\n';
    return all_ok ? 0 : 1;
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- A1

int run_a1(Reporter& r) {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int p = 1 + int(rng.below(4));
    Eigen::MatrixXcd A(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j)
        A(i, j) = std::complex<double>(rng.normal(), rng.normal());
    ComplexGaussian g;
    g.cov = A * A.adjoint() + 0.5 * Eigen::MatrixXcd::Identity(p, p);
    g.mean.resize(p);
    Eigen::VectorXcd y(p);
    for (int i = 0; i < p; ++i) {
      g.mean[i] = std::complex<double>(rng.normal(), rng.normal());
      y[i] = std::complex<double>(rng.normal(), rng.normal());
    }
    RealGaussian gr = cn_to_real(g);
    Eigen::VectorXd yr(2 * p);
    yr << y.real(), y.imag();
    worst = std::max(worst, std::abs(cn_logpdf(g, y) - gr.logpdf(yr)));
  }
  r.check("", worst < 1e-10,
          "complex vs real logpdf, worst |diff| = " + fmt(worst) +
              " over 1000 cases");
  return r.finish();
}

// ---------------------------------------------------------------- A2

int run_a2(Reporter& r) {
  Rng rng(202);
  const int n = 100000;
  for (int c = 0; c < 5; ++c) {
    const double re = -(0.3 + 1.7 * rng.uniform());
    const double im = -1.0 + 2.0 * rng.uniform();
    LatentPrior prior = LatentPrior::from_lambda(
        Eigen::VectorXd::Constant(1, re), Eigen::VectorXd::Constant(1, im));
    Eigen::VectorXcd path = prior.sample_path(0, n, std::nullopt, rng);
    double vr = 0.0, vi = 0.0;
    for (int t = 0; t <= n; ++t) {
      vr += path[t].real() * path[t].real();
      vi += path[t].imag() * path[t].imag();
    }
    vr /= n + 1;
    vi /= n + 1;
    Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
    for (int t = 0; t < n; ++t) {
      Eigen::Vector2d a(path[t].real(), path[t].imag());
      Eigen::Vector2d b(path[t + 1].real(), path[t + 1].imag());
      C += b * a.transpose();
    }
    C /= n;
    Eigen::Matrix2d D1 = prior.autocovariance(0, 1);
    const double cerr = (C - D1).cwiseAbs().maxCoeff();
    const std::string tag = "lambda_" + std::to_string(c);
    r.check(tag + " var",
            std::abs(vr - 0.5) < 0.01 && std::abs(vi - 0.5) < 0.01,
            "Re var = " + fmt(vr) + ", Im var = " + fmt(vi) +
                " (target 0.5 +/- 2%)");
    r.check(tag + " autocov", cerr < 0.015,
            "lag-1 autocovariance max |err| = " + fmt(cerr) +
                " (tolerance 3% of 1/2)");
  }
  return r.finish();
}

// ---------------------------------------------------------------- A3

int run_a3(Reporter& r) {
  SimConfig sc;
  sc.f = 300;
  sc.T = 3;
  sc.seed = 33;
  CountTensor ct = simulate_ad(sc, 6);
  ObsSeq obs = obs_from_tensor(ct, 0);

  auto one = [&](ModelKind kind, double dropout) {
    TrainConfig cfg;
    cfg.h = 2;
    NetSpec spec;
    spec.hidden = {12};
    spec.act = Act::softplus;
    spec.dropout = dropout;
    cfg.decoder_spec = spec;
    cfg.qz_spec = spec;
    Rng rng(71);
    Model model = init_model(kind, "ad", 2, 6, cfg, rng);
    SeqPosterior post = init_posterior(model, obs, cfg, rng);
    Rng nrng(55);
    SeqNoise noise = SeqNoise::draw(model, obs.frames(), nrng);
    ModelGrad mg = ModelGrad::zeros_like(model);
    SeqPostGrad pg = SeqPostGrad::zeros_like(post);
    elbo_seq(model, obs, post, noise, &mg, &pg);
    std::vector<ParamSpan> spans = model_spans(model, mg);
    std::vector<ParamSpan> ps = posterior_spans(post, pg, "q.");
    spans.insert(spans.end(), ps.begin(), ps.end());
    auto f = [&] { return elbo_seq(model, obs, post, noise).total(); };
    const double err = grad_check(f, spans, 1e-5, 16);
    r.check(kind_name(kind) +
                (dropout > 0.0 ? std::string(" (dropout)") : std::string()),
            err < 1e-5, "worst FD relative error = " + fmt(err));
  };

  one(ModelKind::main_model, 0.0);
  one(ModelKind::main_model, 0.1);
  one(ModelKind::real_latent, 0.0);
  one(ModelKind::koopman_prob, 0.0);
  one(ModelKind::koopman_det, 0.0);
  one(ModelKind::nn_x, 0.0);
  return r.finish();
}

// ---------------------------------------------------------------- A4

int run_a4(Reporter& r) {
  const int d = 25;
  {
    SimConfig cfg;
    cfg.f = 100000;
    cfg.T = 40;
    cfg.seed = 404;
    CountTensor ct = simulate_ad(cfg, d);
    Eigen::VectorXd rho0 = frame_density(ct, 0, 0);
    double worst = 0.0;
    for (int t = 1; t <= 40; ++t) {
      Eigen::VectorXd oracle = fd_oracle_ad(rho0, cfg.diffusion(),
                                            cfg.velocity(), t * cfg.macro_dt());
      worst = std::max(worst, l1_distance(frame_density(ct, 0, t), oracle));
    }
    r.check("ad", worst < 0.05,
            "AD walk vs FD oracle, worst frame L1 = " + fmt(worst));
  }
  {
    SimConfig cfg = SimConfig::burgers_defaults();
    cfg.f = 100000;
    cfg.T = 40;
    cfg.seed = 405;
    CountTensor ct = simulate_burgers(cfg, d);
    Eigen::VectorXd rho0 = frame_density(ct, 0, 0);
    double worst = 0.0;
    std::vector<double> steep(41);
    for (int t = 0; t <= 40; ++t) {
      Eigen::VectorXd rho = frame_density(ct, 0, t);
      double g = 0.0;
      for (int k = 0; k < d; ++k) g = std::max(g, rho[k] - rho[(k + 1) % d]);
      steep[t] = g;
      if (t == 0) continue;
      Eigen::VectorXd oracle = fd_oracle_burgers(rho0, cfg.nu, t * cfg.macro_dt());
      worst = std::max(worst, l1_distance(rho, oracle));
    }
    r.check("burgers", worst < 0.1,
            "interacting walk vs FD oracle, worst frame L1 = " + fmt(worst));
    int tpeak = 0;
    for (int t = 0; t <= 40; ++t)
      if (steep[t] > steep[tpeak]) tpeak = t;
    r.check("burgers shock",
            tpeak >= 1 && tpeak <= 35 && steep[tpeak] > 1.05 * steep[0] &&
                steep[40] < 0.95 * steep[tpeak],
            "shock gradient rises then falls: g(0) = " + fmt(steep[0]) +
                ", peak g(" + std::to_string(tpeak) + ") = " + fmt(steep[tpeak]) +
                ", g(40) = " + fmt(steep[40]));
  }
  return r.finish();
}

// ---------------------------------------------------------------- A5

int run_a5(Reporter& r) {
  const int T = 5;
  const double re = -1.0, w = 0.9, dec_std = 0.2, obs_std = 0.05;
  const double s = std::exp(re), q = 0.5 * (1.0 - s * s);
  const double R = dec_std * dec_std + obs_std * obs_std;

  Rng gen(505);
  Eigen::MatrixXd y(T + 1, 1);
  double z = std::sqrt(0.5) * gen.normal();
  y(0, 0) = w * z + std::sqrt(R) * gen.normal();
  for (int t = 1; t <= T; ++t) {
    z = s * z + std::sqrt(q) * gen.normal();
    y(t, 0) = w * z + std::sqrt(R) * gen.normal();
  }

  // Kalman filter evidence
  double log_evidence = 0.0;
  double m = 0.0, P = 0.5;
  for (int t = 0; t <= T; ++t) {
    if (t > 0) {
      m = s * m;
      P = s * s * P + q;
    }
    const double S = w * w * P + R;
    const double innov = y(t, 0) - w * m;
    log_evidence += -0.5 * (std::log(2.0 * M_PI * S) + innov * innov / S);
    const double K = P * w / S;
    m += K * innov;
    P *= 1.0 - K * w;
  }

  Model model;
  model.kind = ModelKind::real_latent;
  model.h = 1;
  model.d = 1;
  model.prior = LatentPrior::from_lambda(Eigen::VectorXd::Constant(1, re),
                                         Eigen::VectorXd::Zero(1));
  model.decoder.d = 1;
  DenseLayer lay;
  lay.W = Eigen::MatrixXd::Zero(2, 1);
  lay.W(0, 0) = w;
  lay.b = Eigen::VectorXd::Zero(2);
  lay.b[1] = softplus_inv(dec_std - 1e-6);
  lay.act = Act::identity;
  model.decoder.net.layers = {lay};

  ObsSeq obs;
  obs.times.resize(T + 1);
  for (int t = 0; t <= T; ++t) obs.times[t] = t;
  obs.gaussian = true;
  obs.y = y;
  obs.obs_std = obs_std;
  obs.f = 1;

  TrainConfig cfg;
  cfg.freeze_model = true;
  cfg.epochs = 20000;
  cfg.batch = 1;
  cfg.mc_samples = 8;
  cfg.adam.lr = 1e-2;
  cfg.lr_final = 1e-4;
  cfg.weight_decay = 0.0;
  cfg.h = 1;
  NetSpec lin;
  lin.hidden = {};
  cfg.qz_spec = lin;
  cfg.seed = 51;
  TrainedModel tm = train_obs({obs}, model, cfg, "ad", 1);

  Rng mc(512);
  const int n = 20000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    SeqNoise noise = SeqNoise::draw(tm.model, T + 1, mc);
    const double v = elbo_seq(tm.model, obs, tm.posteriors[0], noise).total();
    acc += v;
    acc2 += v * v;
  }
  acc /= n;
  const double se = std::sqrt((acc2 / n - acc * acc) / n);

  r.check("gap", std::abs(acc - log_evidence) <= 0.01 * std::abs(log_evidence),
          "ELBO = " + fmt(acc) + ", Kalman log evidence = " + fmt(log_evidence) +
              ", |gap| = " + fmt(std::abs(acc - log_evidence)) + " (<= 1%)");
  r.check("bound", acc <= log_evidence + 3.0 * se,
          "ELBO does not exceed the evidence beyond MC error (se = " + fmt(se) +
              ")");
  return r.finish();
}

// ---------------------------------------------------------------- A6

int run_a6(Reporter& r, const std::string& artifacts) {
  fs::create_directories(artifacts);
  SimConfig sc;
  sc.f = 20000;
  sc.N = 16;
  sc.T = 80;
  sc.seed = 606;
  const int d = 25, trainT = 40;
  CountTensor truth = simulate_ad(sc, d);
  truth.save(artifacts + "/truth.txt");

  CountTensor data = truth;
  data.T = trainT;
  for (auto& c : data.counts) c.conservativeResize(trainT + 1, d);
  data.save(artifacts + "/train.txt");

  TrainConfig cfg;
  cfg.h = 5;
  // Stop while the prior rates still track the path statistics: with the
  // rate-tied transition noise, long training sharpens q until the residuals
  // ask for a near-zero noise floor and the fitted rates drift toward zero.
  cfg.epochs = 1000;
  cfg.batch = 2;
  cfg.adam.lr = 3e-3;
  cfg.lr_final = 2e-3;
  cfg.seed = 7;
  cfg.curve_path = artifacts + "/curve.csv";
  TrainedModel tm = train(data, ModelKind::main_model, cfg);
  save_checkpoint(tm, artifacts + "/model.json");

  double recon = 0.0;
  for (int i = 0; i < data.N; ++i)
    for (int t = 0; t <= trainT; ++t)
      recon += l1_distance(
          density_from_X(tm.posteriors[i].x_mean.row(t).transpose()),
          frame_density(data, i, t));
  recon /= data.N * (trainT + 1);
  r.check("a", recon <= 0.05,
          "training-window reconstruction, mean L1 = " + fmt(recon));

  ForecastEnsemble mid = predict(tm, 0, 40, 400, 12);
  mid.save(artifacts + "/forecast_mid.txt");

  // frame index t = 1000 is horizon 960 beyond the 40 training frames
  ForecastEnsemble far = predict(tm, 0, 960, 200, 11);
  Eigen::VectorXd uni = Eigen::VectorXd::Constant(d, 1.0 / d);
  const double farl1 = l1_distance(far.mean().row(960).transpose(), uni);
  r.check("b", farl1 <= 0.1,
          "mean density at t = 1000 vs uniform, L1 = " + fmt(farl1));

  double slow = -1e9, fast = 1e9;
  for (int j = 0; j < tm.model.h; ++j) {
    slow = std::max(slow, tm.model.prior.re_lambda(j));
    fast = std::min(fast, tm.model.prior.re_lambda(j));
  }
  const double target = 3.855e-3;
  r.check("c", -slow >= target / 3.0 && -slow <= target * 3.0,
          "slowest Re(lambda) = " + fmt(slow) + ", oracle = -" + fmt(target) +
              " (factor-3 window)");
  r.report("d", "timescale separation max|Re lambda| / min|Re lambda| = " +
                    fmt(std::abs(fast) / std::abs(slow)));
  return r.finish();
}

// ---------------------------------------------------------------- A7

int run_a7(Reporter& r, const std::string& artifacts) {
  CountTensor truth = CountTensor::load(artifacts + "/truth.txt");
  ForecastEnsemble mid = ForecastEnsemble::load(artifacts + "/forecast_mid.txt");
  const int p = 20;               // forecast frame 20 is dataset frame 60
  Eigen::MatrixXd Fm = two_point(mid, p);
  Eigen::MatrixXd Ft = two_point(Eigen::VectorXi(truth.counts[0].row(40 + p).transpose()));
  const double l1 = (Fm - Ft).cwiseAbs().sum();
  r.check("accuracy", l1 <= 0.1,
          "two-point matrix vs ground truth at frame 60, L1 = " + fmt(l1));
  r.check("symmetry", (Fm - Fm.transpose()).cwiseAbs().maxCoeff() == 0.0,
          "ensemble two-point matrix is exactly symmetric");
  r.check("mass", std::abs(Fm.sum() - 1.0) < 1e-12,
          "ensemble two-point matrix total mass = " + fmt(Fm.sum()));
  return r.finish();
}

// ---------------------------------------------------------------- A8

int run_a8(Reporter& r, const std::string& artifacts) {
  TrainedModel tm = load_checkpoint(artifacts + "/model.json");
  const int d = tm.model.d;
  Rng rng(808);
  BumpMixture mix = BumpMixture::random(rng);
  const long long f = 20000;
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(d);
  for (long long i = 0; i < f; ++i) ++counts[bin_of(mix.sample(rng), d)];
  Eigen::VectorXd p_emp = counts.cast<double>() / double(f);

  Z0Posterior z0 = infer_z0(tm, counts, 13);
  const double rec = l1_distance(z0.recon_density, p_emp);
  r.check("reconstruction", rec <= 0.1,
          "infer_z0 density vs the unseen IC, L1 = " + fmt(rec));

  ForecastEnsemble e = predict_from_new_ic(tm, counts, 500, 200, 14);
  e.save(artifacts + "/forecast_newic.txt", false);
  Eigen::VectorXd uni = Eigen::VectorXd::Constant(d, 1.0 / d);
  const double l1 = l1_distance(e.mean().row(500).transpose(), uni);
  r.check("steady_state", l1 <= 0.1,
          "mean density at t = 500 vs uniform, L1 = " + fmt(l1));
  return r.finish();
}

// ---------------------------------------------------------------- A9

int run_a9(Reporter& r, const std::string& artifacts) {
  CountTensor data = CountTensor::load(artifacts + "/train.txt");
  TrainedModel koopman_det_tm;
  for (ModelKind k : {ModelKind::real_latent, ModelKind::koopman_prob,
                      ModelKind::koopman_det, ModelKind::nn_x}) {
    TrainConfig cfg;
    cfg.h = 5;
    cfg.epochs = 600;
    cfg.batch = 16;
    cfg.seed = 9;
    TrainedModel tm = train_baseline(k, data, cfg);
    ForecastEnsemble e = predict_baseline(tm, 0, 40, 100, 21);
    e.save(artifacts + "/forecast_" + kind_name(k) + ".txt", false);
    bool simplex = true;
    Eigen::MatrixXd mean = e.mean();
    for (int t = 0; t <= 40; ++t)
      simplex = simplex && std::abs(mean.row(t).sum() - 1.0) < 1e-9;
    r.check(kind_name(k),
            std::isfinite(tm.curve.back().total()) && simplex,
            "trained (final ELBO = " + fmt(tm.curve.back().total()) +
                ") and forecast densities stay on the simplex");
    if (k == ModelKind::koopman_det) koopman_det_tm = tm;
  }

  const double rad = spectral_radius(koopman_det_tm.model.koopman_K);
  std::string detail = "deterministic Koopman spectral radius = " + fmt(rad);
  if (rad > 1.0) {
    ForecastEnsemble e = predict_baseline(koopman_det_tm, 0, 2000, 8, 22);
    detail += e.diverged
                  ? ", divergence at forecast step " + std::to_string(e.diverge_step)
                  : ", no divergence within 2000 steps";
  }
  r.report("koopman_radius", detail);

  // synthetic unstable nn_x net must trip the divergence detector
  TrainedModel bad;
  bad.model.kind = ModelKind::nn_x;
  bad.model.d = 2;
  Rng rng(23);
  bad.model.xdyn = DenseNet::make({2, 2}, Act::identity, rng);
  bad.model.xdyn.layers[0].W = 10.0 * Eigen::MatrixXd::Identity(2, 2);
  bad.model.nnx_logsigma = 0.0;
  SeqPosterior post;
  post.x_mean = Eigen::MatrixXd::Ones(1, 2);
  post.x_logstd = Eigen::MatrixXd::Constant(1, 2, -40.0);
  bad.posteriors.push_back(post);
  bad.seq_times.push_back({0});
  bad.data_kind = "ad";
  ForecastEnsemble e = predict_baseline(bad, 0, 12, 2, 5);
  r.check("nn_x_divergence", e.diverged && e.diverge_step > 0,
          "synthetic unstable net flagged at step " +
              std::to_string(e.diverge_step));
  return r.finish();
}

// ---------------------------------------------------------------- A10

int run_a10(Reporter& r, const std::string& artifacts, const std::string& cli) {
  const std::string dir = artifacts + "/a10";
  fs::create_directories(dir);
  auto run = [&](const std::string& env, const std::string& args) {
    const std::string cmd = env + " " + cli + " " + args;
    const int rc = std::system(cmd.c_str());
    if (rc != 0) throw std::runtime_error("command failed: " + cmd);
  };

  run("SLOWGEN_THREADS=1", "simulate --kind ad --f 500 --N 2 --T 5 --d 10 --seed 3 --out " + dir + "/ds1.txt");
  run("SLOWGEN_THREADS=4", "simulate --kind ad --f 500 --N 2 --T 5 --d 10 --seed 3 --out " + dir + "/ds2.txt");
  r.check("simulate", read_file(dir + "/ds1.txt") == read_file(dir + "/ds2.txt"),
          "identical seeds give byte-identical datasets");

  const std::string targs =
      "train --data " + dir + "/ds1.txt --model main --epochs 30 --batch 2 "
      "--chains 2 --seed 4 --out ";
  run("SLOWGEN_THREADS=1", targs + dir + "/ck1.json");
  run("SLOWGEN_THREADS=4", targs + dir + "/ck2.json");
  r.check("train", read_file(dir + "/ck1.json") == read_file(dir + "/ck2.json"),
          "identical seeds give byte-identical checkpoints across thread counts");

  const std::string pargs =
      "predict --checkpoint " + dir + "/ck1.json --sequence 0 --P 5 "
      "--n-samples 8 --seed 5 --out ";
  run("SLOWGEN_THREADS=1", pargs + dir + "/fc1.txt");
  run("SLOWGEN_THREADS=4", pargs + dir + "/fc2.txt");
  r.check("predict", read_file(dir + "/fc1.txt") == read_file(dir + "/fc2.txt"),
          "identical seeds give byte-identical forecasts");
  return r.finish();
}

}  // namespace

int main(int argc, char** argv) {
  std::string crit, artifacts = "acceptance_artifacts", cli = "slowgen";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--artifacts" && i + 1 < argc) artifacts = argv[++i];
    else if (a == "--cli" && i + 1 < argc) cli = argv[++i];
    else crit = a;
  }
  if (crit.empty()) {
    std::cerr << "usage: acceptance <A1..A10> [--artifacts DIR] [--cli PATH]\n";
    return 2;
  }
  Reporter r;
  r.crit = crit;
  try {
    if (crit == "A1") return run_a1(r);
    if (crit == "A2") return run_a2(r);
    if (crit == "A3") return run_a3(r);
    if (crit == "A4") return run_a4(r);
    if (crit == "A5") return run_a5(r);
    if (crit == "A6") return run_a6(r, artifacts);
    if (crit == "A7") return run_a7(r, artifacts);
    if (crit == "A8") return run_a8(r, artifacts);
    if (crit == "A9") return run_a9(r, artifacts);
    if (crit == "A10") return run_a10(r, artifacts, cli);
  } catch (const std::exception& e) {
    std::cout << crit << " FAIL: exception: " << e.what() << '\n';
    std::cout << crit << ": FAIL\n";
    return 1;
  }
  std::cerr << "unknown criterion " << crit << '\n';
  return 2;
}
