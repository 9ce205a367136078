#include "slowgen/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace slowgen {

namespace {

constexpr double kDivergeBound = 1e6;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Latent (or X, for nn_x) state advanced under the trained dynamics.
struct Roller {
  const Model* m = nullptr;
  Eigen::VectorXd state;
  bool ok = true;

  void check() {
    for (int i = 0; i < state.size(); ++i)
      if (!std::isfinite(state[i]) || std::abs(state[i]) > kDivergeBound) {
        ok = false;
        return;
      }
  }

  void step(Rng& rng) {
    switch (m->kind) {
      case ModelKind::main_model: {
        for (int j = 0; j < m->h; ++j) {
          auto [s, R] = m->prior.transition_params(j);
          const double q = 0.5 * m->prior.sigma2(j);
          Eigen::Vector2d z(state[2 * j], state[2 * j + 1]);
          Eigen::Vector2d nz = s * (R * z);
          const double sd = std::sqrt(q);
          state[2 * j] = nz[0] + sd * rng.normal();
          state[2 * j + 1] = nz[1] + sd * rng.normal();
        }
        break;
      }
      case ModelKind::real_latent: {
        for (int j = 0; j < m->h; ++j) {
          const double s = m->prior.decay(j);
          const double sd = std::sqrt(0.5 * m->prior.sigma2(j));
          state[j] = s * state[j] + sd * rng.normal();
        }
        break;
      }
      case ModelKind::koopman_prob: {
        Eigen::VectorXd nz = m->koopman_K * state;
        for (int j = 0; j < m->h; ++j)
          nz[j] += std::exp(m->koopman_logw[j]) * rng.normal();
        state = nz;
        break;
      }
      case ModelKind::koopman_det:
        state = m->koopman_K * state;
        break;
      case ModelKind::nn_x: {
        Eigen::VectorXd pred = net_forward(m->xdyn, state, NetMode::eval, nullptr);
        const double sg = std::exp(m->nnx_logsigma);
        for (int k = 0; k < pred.size(); ++k) pred[k] += sg * rng.normal();
        state = pred;
        break;
      }
    }
    check();
  }

  Eigen::VectorXd density(Rng& rng) const {
    if (m->kind == ModelKind::nn_x) return density_from_X(state);
    DecodeResult dec = decode(m->decoder, state, NetMode::eval, nullptr);
    Eigen::VectorXd X = dec.mean;
    for (int k = 0; k < X.size(); ++k) X[k] += dec.std[k] * rng.normal();
    return density_from_X(X);
  }
};

void roll_member(const Model& m, Roller r, int P, Rng& rng, Eigen::MatrixXd* dens,
                 Eigen::MatrixXd* zrec, bool* diverged, int* diverge_step) {
  const int ld = m.latent_dim();
  dens->resize(P + 1, m.d);
  zrec->resize(P + 1, ld);
  r.check();
  for (int t = 0; t <= P; ++t) {
    if (t > 0 && r.ok) r.step(rng);
    if (!r.ok) {
      *diverged = true;
      if (*diverge_step < 0 || t < *diverge_step) *diverge_step = t;
      Eigen::RowVectorXd hold =
          t > 0 ? Eigen::RowVectorXd(dens->row(t - 1))
                : Eigen::RowVectorXd(Eigen::RowVectorXd::Constant(m.d, 1.0 / m.d));
      for (int u = t; u <= P; ++u) {
        dens->row(u) = hold;
        if (ld > 0) zrec->row(u).setZero();
      }
      return;
    }
    dens->row(t) = r.density(rng).transpose();
    if (ld > 0) zrec->row(t) = r.state.transpose();
  }
}

Eigen::MatrixXd normals(int r, int c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

Eigen::MatrixXd ForecastEnsemble::mean() const {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(P + 1, d);
  for (const auto& s : density) acc += s;
  return acc / double(n_samples);
}

Eigen::MatrixXd ForecastEnsemble::stddev() const {
  Eigen::MatrixXd mu = mean();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(P + 1, d);
  for (const auto& s : density) acc += (s - mu).cwiseAbs2();
  return (acc / double(n_samples)).cwiseSqrt();
}

Eigen::MatrixXd ForecastEnsemble::quantile(double q) const {
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile: q in [0,1]");
  Eigen::MatrixXd out(P + 1, d);
  std::vector<double> vals(n_samples);
  for (int t = 0; t <= P; ++t)
    for (int k = 0; k < d; ++k) {
      for (int s = 0; s < n_samples; ++s) vals[s] = density[s](t, k);
      std::sort(vals.begin(), vals.end());
      const double pos = q * (n_samples - 1);
      const int lo = int(std::floor(pos));
      const int hi = std::min(lo + 1, n_samples - 1);
      out(t, k) = vals[lo] + (pos - lo) * (vals[hi] - vals[lo]);
    }
  return out;
}

void ForecastEnsemble::save(const std::string& path, bool with_samples) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  nlohmann::json h;
  h["version"] = 1;
  h["P"] = P;
  h["n_samples"] = n_samples;
  h["d"] = d;
  h["latent_dim"] = latent_dim;
  h["seed"] = seed;
  h["kind"] = kind;
  h["diverged"] = diverged;
  h["diverge_step"] = diverge_step;
  std::vector<std::string> sections = {"mean", "q05", "q95", "std"};
  if (with_samples) sections.push_back("samples");
  h["sections"] = sections;
  out << h.dump() << '\n';
  out << std::setprecision(17);
  auto emit = [&](const Eigen::MatrixXd& m) {
    for (int t = 0; t < m.rows(); ++t) {
      for (int k = 0; k < m.cols(); ++k) out << (k ? "," : "") << m(t, k);
      out << '\n';
    }
  };
  emit(mean());
  emit(quantile(0.05));
  emit(quantile(0.95));
  emit(stddev());
  if (with_samples)
    for (const auto& s : density) emit(s);
}

ForecastEnsemble ForecastEnsemble::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("forecast file: empty");
  nlohmann::json h = nlohmann::json::parse(line);
  ForecastEnsemble e;
  e.P = h.at("P").get<int>();
  e.n_samples = h.at("n_samples").get<int>();
  e.d = h.at("d").get<int>();
  e.latent_dim = h.at("latent_dim").get<int>();
  e.seed = h.at("seed").get<std::uint64_t>();
  e.kind = h.at("kind").get<std::string>();
  e.diverged = h.at("diverged").get<bool>();
  e.diverge_step = h.at("diverge_step").get<int>();
  auto sections = h.at("sections").get<std::vector<std::string>>();
  auto read_block = [&](int rows) {
    Eigen::MatrixXd m(rows, e.d);
    for (int t = 0; t < rows; ++t) {
      if (!std::getline(in, line))
        throw std::runtime_error("forecast file: truncated");
      std::stringstream ss(line);
      std::string cell;
      for (int k = 0; k < e.d; ++k) {
        if (!std::getline(ss, cell, ','))
          throw std::runtime_error("forecast file: short row");
        m(t, k) = std::stod(cell);
      }
    }
    return m;
  };
  for (const auto& sec : sections) {
    if (sec == "samples") {
      for (int s = 0; s < e.n_samples; ++s)
        e.density.push_back(read_block(e.P + 1));
    } else {
      read_block(e.P + 1);  // summaries are recomputed from samples
    }
  }
  if (e.density.empty())
    throw std::runtime_error("forecast file: no sample section");
  return e;
}

ForecastEnsemble predict(const TrainedModel& tm, int seq, int P, int n_samples,
                         std::uint64_t seed) {
  if (P < 0) throw std::invalid_argument("predict: P must be >= 0");
  if (n_samples < 1) throw std::invalid_argument("predict: n_samples must be >= 1");
  if (seq < 0 || seq >= int(tm.posteriors.size()))
    throw std::out_of_range("predict: no trained posterior for that sequence");
  const Model& m = tm.model;
  const SeqPosterior& post = tm.posteriors[seq];
  const int F = int(post.x_mean.rows());
  ForecastEnsemble e;
  e.P = P;
  e.n_samples = n_samples;
  e.d = m.d;
  e.latent_dim = m.latent_dim();
  e.seed = seed;
  e.kind = kind_name(m.kind);
  for (int s = 0; s < n_samples; ++s) {
    Rng rng(Rng::derive(seed, std::uint64_t(s) + 1));
    Eigen::MatrixXd X = sample_q_X(post.x_mean, post.x_logstd, normals(F, m.d, rng));
    Roller r;
    r.m = &m;
    if (m.has_chains()) {
      const int c = m.comp();
      r.state.resize(m.latent_dim());
      for (int j = 0; j < m.h; ++j) {
        ChainParams cp = chain_params_from_net(post.qz[j], X, c);
        ChainSample cs = chain_sample(cp, normals(F, c, rng));
        if (c == 2) {
          r.state[2 * j] = cs.z(F - 1, 0);
          r.state[2 * j + 1] = cs.z(F - 1, 1);
        } else {
          r.state[j] = cs.z(F - 1, 0);
        }
      }
    } else if (m.kind == ModelKind::koopman_det) {
      Eigen::VectorXd z0 = post.z0_mean;
      for (int j = 0; j < m.h; ++j)
        z0[j] += std::exp(post.z0_logstd[j]) * rng.normal();
      const int L = tm.seq_times[seq].back();
      r.state = z0;
      for (int t = 0; t < L && r.ok; ++t) {
        r.state = m.koopman_K * r.state;
        r.check();
      }
    } else {
      r.state = X.row(F - 1).transpose();
    }
    Eigen::MatrixXd dens, zrec;
    roll_member(m, r, P, rng, &dens, &zrec, &e.diverged, &e.diverge_step);
    e.density.push_back(std::move(dens));
    e.z.push_back(std::move(zrec));
  }
  return e;
}

namespace {

double z0_prior_var(const Model& m) {
  return (m.kind == ModelKind::main_model || m.kind == ModelKind::real_latent)
             ? 0.5
             : 1.0;
}

struct Z0Fit {
  Eigen::VectorXd zm, zls, xm, xls;
  double elbo = -std::numeric_limits<double>::infinity();
};

// One ELBO sample and gradient for the single-frame problem; theta frozen.
double z0_elbo_sample(const Model& m, const Eigen::VectorXi& counts0,
                      const Z0Fit& p, const Eigen::VectorXd& ez,
                      const Eigen::VectorXd& ex, Eigen::VectorXd* dzm,
                      Eigen::VectorXd* dzls, Eigen::VectorXd* dxm,
                      Eigen::VectorXd* dxls) {
  const int ld = int(p.zm.size()), d = int(p.xm.size());
  const double pv = z0_prior_var(m);
  Eigen::ArrayXd sz = p.zls.array().exp();
  Eigen::ArrayXd sx = p.xls.array().exp();
  Eigen::VectorXd z0 = p.zm.array() + sz * ez.array();
  Eigen::VectorXd X0 = p.xm.array() + sx * ex.array();

  double elbo = 0.0;
  elbo += p.zls.sum() + 0.5 * ez.squaredNorm() + 0.5 * ld * kLog2Pi;
  elbo += p.xls.sum() + 0.5 * ex.squaredNorm() + 0.5 * d * kLog2Pi;
  elbo += -0.5 * ld * std::log(2.0 * M_PI * pv) - 0.5 * z0.squaredNorm() / pv;

  Eigen::VectorXd dz0 = -z0 / pv;
  Eigen::VectorXd dX0 = Eigen::VectorXd::Zero(d);

  DecodeResult dec = decode(m.decoder, z0, NetMode::eval, nullptr);
  Eigen::ArrayXd r = X0.array() - dec.mean.array();
  Eigen::ArrayXd s = dec.std.array();
  elbo += (-s.log() - 0.5 * kLog2Pi - 0.5 * r.square() / s.square()).sum();
  dX0 += (-r / s.square()).matrix();
  Eigen::VectorXd dy(2 * d);
  dy.head(d) = (r / s.square()).matrix();
  Eigen::ArrayXd ds = -1.0 / s + r.square() / s.cube();
  for (int k = 0; k < d; ++k) dy[d + k] = ds[k] * sigmoid(dec.raw_scale[k]);
  NetGrad scratch = NetGrad::zeros_like(m.decoder.net);
  dz0 += net_backward(m.decoder.net, dec.tape, dy, scratch);

  Eigen::VectorXd gx;
  elbo += obs_logpdf(counts0, X0, &gx);
  dX0 += gx;

  *dzm = dz0;
  *dzls = (dz0.array() * ez.array() * sz + 1.0).matrix();
  *dxm = dX0;
  *dxls = (dX0.array() * ex.array() * sx + 1.0).matrix();
  return elbo;
}

}  // namespace

Z0Posterior infer_z0(const TrainedModel& tm, const Eigen::VectorXi& counts0,
                     std::uint64_t seed, int steps, double lr, int restarts) {
  const Model& m = tm.model;
  if (!m.has_decoder())
    throw std::invalid_argument("infer_z0: model has no latent decoder");
  if (counts0.size() != m.d)
    throw std::invalid_argument("infer_z0: counts size mismatch");
  long long total = 0;
  for (int k = 0; k < counts0.size(); ++k) {
    if (counts0[k] < 0) throw std::invalid_argument("infer_z0: negative count");
    total += counts0[k];
  }
  if (total <= 0) throw std::invalid_argument("infer_z0: empty counts");

  const int ld = m.latent_dim(), d = m.d;

  // For a linear decoder, the logit least-squares solve gives a near-exact
  // starting point; random restarts alone rarely reach the data scale when
  // the trained latents sit far outside the prior's stationary ball.
  Eigen::VectorXd z_ls;
  if (m.decoder.net.layers.size() == 1) {
    Eigen::VectorXd t(d);
    for (int k = 0; k < d; ++k)
      t[k] = std::log((counts0[k] + 1.0) / (double(total) + d));
    t.array() -= t.mean();
    Eigen::VectorXd b = m.decoder.net.layers[0].b.head(d);
    Eigen::MatrixXd Wc = m.decoder.net.layers[0].W.topRows(d);
    Wc.rowwise() -= Wc.colwise().mean().eval();
    z_ls = Wc.colPivHouseholderQr().solve(t - (b.array() - b.mean()).matrix());
  }

  Z0Fit best;
  for (int r = 0; r < restarts; ++r) {
    Rng rng(Rng::derive(seed, std::uint64_t(r) + 1));
    Z0Fit fit;
    fit.zm.resize(ld);
    for (int i = 0; i < ld; ++i) fit.zm[i] = 0.3 * rng.normal();
    fit.zls = Eigen::VectorXd::Constant(ld, -1.0);
    fit.xm.resize(d);
    for (int k = 0; k < d; ++k)
      fit.xm[k] = std::log((counts0[k] + 1.0) / (double(total) + d));
    // the count likelihood is shift-invariant but the decoder coupling is
    // not, and the decoder works in the sum-zero logit gauge
    fit.xm.array() -= fit.xm.mean();
    if (r == 0 && z_ls.size() == ld) {
      fit.zm = z_ls;
      DecodeResult dec0 = decode(m.decoder, z_ls, NetMode::eval, nullptr);
      fit.xm = dec0.mean;
    }
    fit.xls = Eigen::VectorXd::Constant(d, -2.0);

    Eigen::VectorXd dzm(ld), dzls(ld), dxm(d), dxls(d);
    std::vector<ParamSpan> spans = {
        {"z0_mean", fit.zm.data(), dzm.data(), ld},
        {"z0_logstd", fit.zls.data(), dzls.data(), ld},
        {"x0_mean", fit.xm.data(), dxm.data(), d},
        {"x0_logstd", fit.xls.data(), dxls.data(), d}};
    AdamConfig ac;
    ac.lr = lr;
    AdamState adam(2 * ld + 2 * d, ac);
    bool bad = false;
    for (int it = 0; it < steps && !bad; ++it) {
      Eigen::VectorXd ez(ld), ex(d);
      for (int i = 0; i < ld; ++i) ez[i] = rng.normal();
      for (int k = 0; k < d; ++k) ex[k] = rng.normal();
      double e = z0_elbo_sample(m, counts0, fit, ez, ex, &dzm, &dzls, &dxm, &dxls);
      if (!std::isfinite(e)) {
        bad = true;
        break;
      }
      for (auto& sp : spans)
        for (int k = 0; k < sp.n; ++k) sp.g[k] = -sp.g[k];
      try {
        adam.step(spans);
      } catch (const std::exception&) {
        bad = true;
      }
    }
    if (bad) continue;
    // low-variance final score with a frozen evaluation stream
    Rng erng(Rng::derive(seed, 0xEE00 + std::uint64_t(r)));
    double score = 0.0;
    const int n_eval = 64;
    for (int it = 0; it < n_eval; ++it) {
      Eigen::VectorXd ez(ld), ex(d);
      for (int i = 0; i < ld; ++i) ez[i] = erng.normal();
      for (int k = 0; k < d; ++k) ex[k] = erng.normal();
      score += z0_elbo_sample(m, counts0, fit, ez, ex, &dzm, &dzls, &dxm, &dxls);
    }
    fit.elbo = score / n_eval;
    if (fit.elbo > best.elbo) best = fit;
  }
  if (!std::isfinite(best.elbo))
    throw std::runtime_error("infer_z0: all restarts diverged");

  Z0Posterior out;
  out.mean = best.zm;
  out.logstd = best.zls;
  out.elbo = best.elbo;
  DecodeResult dec = decode(m.decoder, best.zm, NetMode::eval, nullptr);
  out.recon_density = density_from_X(dec.mean);
  return out;
}

ForecastEnsemble predict_from_new_ic(const TrainedModel& tm,
                                     const Eigen::VectorXi& counts0, int P,
                                     int n_samples, std::uint64_t seed) {
  if (P < 0) throw std::invalid_argument("predict_from_new_ic: P must be >= 0");
  const Model& m = tm.model;
  Z0Posterior z0p = infer_z0(tm, counts0, Rng::derive(seed, 0x1C));
  ForecastEnsemble e;
  e.P = P;
  e.n_samples = n_samples;
  e.d = m.d;
  e.latent_dim = m.latent_dim();
  e.seed = seed;
  e.kind = kind_name(m.kind);
  for (int s = 0; s < n_samples; ++s) {
    Rng rng(Rng::derive(seed, std::uint64_t(s) + 1));
    Roller r;
    r.m = &m;
    r.state.resize(e.latent_dim);
    for (int i = 0; i < e.latent_dim; ++i)
      r.state[i] = z0p.mean[i] + std::exp(z0p.logstd[i]) * rng.normal();
    Eigen::MatrixXd dens, zrec;
    roll_member(m, r, P, rng, &dens, &zrec, &e.diverged, &e.diverge_step);
    e.density.push_back(std::move(dens));
    e.z.push_back(std::move(zrec));
  }
  return e;
}

}  // namespace slowgen
