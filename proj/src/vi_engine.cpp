#include "slowgen/vi_engine.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "slowgen/threads.hpp"

namespace slowgen {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kStdFloor = 1e-6;
}  // namespace

std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::main_model: return "main";
    case ModelKind::real_latent: return "real_latent";
    case ModelKind::koopman_prob: return "koopman_prob";
    case ModelKind::koopman_det: return "koopman_det";
    case ModelKind::nn_x: return "nn_x";
  }
  throw std::logic_error("kind_name: bad kind");
}

ModelKind kind_from_name(const std::string& name) {
  if (name == "main") return ModelKind::main_model;
  if (name == "real_latent") return ModelKind::real_latent;
  if (name == "koopman_prob") return ModelKind::koopman_prob;
  if (name == "koopman_det") return ModelKind::koopman_det;
  if (name == "nn_x") return ModelKind::nn_x;
  throw std::invalid_argument("unknown model kind: " + name);
}

ModelGrad ModelGrad::zeros_like(const Model& m) {
  ModelGrad g;
  g.d_a = Eigen::VectorXd::Zero(m.prior.h());
  g.d_im = Eigen::VectorXd::Zero(m.prior.h());
  g.d_K = Eigen::MatrixXd::Zero(m.koopman_K.rows(), m.koopman_K.cols());
  g.d_logw = Eigen::VectorXd::Zero(m.koopman_logw.size());
  g.xdyn = NetGrad::zeros_like(m.xdyn);
  g.decoder = NetGrad::zeros_like(m.decoder.net);
  return g;
}

void ModelGrad::set_zero() {
  d_a.setZero();
  d_im.setZero();
  d_K.setZero();
  d_logw.setZero();
  xdyn.set_zero();
  d_nnx_logsigma = 0.0;
  decoder.set_zero();
}

SeqPostGrad SeqPostGrad::zeros_like(const SeqPosterior& p) {
  SeqPostGrad g;
  g.d_x_mean = Eigen::MatrixXd::Zero(p.x_mean.rows(), p.x_mean.cols());
  g.d_x_logstd = g.d_x_mean;
  for (const auto& net : p.qz) g.qz.push_back(NetGrad::zeros_like(net));
  g.d_z0_mean = Eigen::VectorXd::Zero(p.z0_mean.size());
  g.d_z0_logstd = Eigen::VectorXd::Zero(p.z0_logstd.size());
  return g;
}

void SeqPostGrad::set_zero() {
  d_x_mean.setZero();
  d_x_logstd.setZero();
  for (auto& g : qz) g.set_zero();
  d_z0_mean.setZero();
  d_z0_logstd.setZero();
}

ObsSeq obs_from_tensor(const CountTensor& data, int i) {
  if (i < 0 || i >= data.N) throw std::out_of_range("obs_from_tensor: sequence index");
  ObsSeq o;
  o.f = data.f;
  for (int t = 0; t <= data.T; ++t)
    if (data.frame_present(i, t)) o.times.push_back(t);
  if (o.times.empty() || o.times.front() != 0)
    throw std::runtime_error("obs_from_tensor: frame 0 must be present");
  o.counts.resize(int(o.times.size()), data.d);
  for (int m = 0; m < int(o.times.size()); ++m)
    o.counts.row(m) = data.counts[i].row(o.times[m]);
  return o;
}

SeqNoise SeqNoise::draw(const Model& m, int frames, Rng& rng) {
  SeqNoise n;
  n.eps_x.resize(frames, m.d);
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < m.d; ++k) n.eps_x(t, k) = rng.normal();
  if (m.has_chains()) {
    const int c = m.comp();
    n.eps_z.resize(m.h);
    for (int j = 0; j < m.h; ++j) {
      n.eps_z[j].resize(frames, c);
      for (int t = 0; t < frames; ++t)
        for (int k = 0; k < c; ++k) n.eps_z[j](t, k) = rng.normal();
    }
  }
  if (m.kind == ModelKind::koopman_det) {
    n.eps_z0.resize(m.h);
    for (int j = 0; j < m.h; ++j) n.eps_z0[j] = rng.normal();
  }
  n.dropout_seed = rng.next_u64();
  return n;
}

ChainSample chain_sample(const ChainParams& cp, const Eigen::MatrixXd& eps) {
  const int F = int(cp.mu.rows()), c = int(cp.mu.cols());
  if (eps.rows() != F || eps.cols() != c)
    throw std::invalid_argument("chain_sample: eps shape");
  if ((cp.diag.array() <= 0.0).any())
    throw std::invalid_argument("chain_sample: nonpositive diagonal");
  ChainSample cs;
  cs.u.resize(F, c);
  for (int k = 0; k < c; ++k) {
    cs.u(0, k) = eps(0, k) / cp.diag(0, k);
    for (int t = 1; t < F; ++t)
      cs.u(t, k) = (eps(t, k) - cp.off(t - 1, k) * cs.u(t - 1, k)) / cp.diag(t, k);
  }
  cs.z = cp.mu + cs.u;
  cs.logq = cp.diag.array().log().sum() - 0.5 * eps.array().square().sum() -
            0.5 * F * c * kLog2Pi;
  return cs;
}

void chain_backward(const ChainParams& cp, const ChainSample& cs,
                    const Eigen::MatrixXd& dz, double dlogq_coeff,
                    Eigen::MatrixXd* d_mu, Eigen::MatrixXd* d_diag,
                    Eigen::MatrixXd* d_off) {
  const int F = int(cp.mu.rows()), c = int(cp.mu.cols());
  *d_mu = dz;
  d_diag->setZero(F, c);
  d_off->setZero(std::max(F - 1, 0), c);
  Eigen::VectorXd w(F);
  for (int k = 0; k < c; ++k) {
    w[F - 1] = dz(F - 1, k) / cp.diag(F - 1, k);
    for (int t = F - 2; t >= 0; --t)
      w[t] = (dz(t, k) - cp.off(t, k) * w[t + 1]) / cp.diag(t, k);
    for (int t = 0; t < F; ++t)
      (*d_diag)(t, k) = -w[t] * cs.u(t, k) + dlogq_coeff / cp.diag(t, k);
    for (int t = 0; t + 1 < F; ++t) (*d_off)(t, k) = -cs.u(t, k) * w[t + 1];
  }
}

Eigen::MatrixXd chain_dense_covariance(const ChainParams& cp) {
  const int F = int(cp.mu.rows()), c = int(cp.mu.cols());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(F * c, F * c);
  for (int t = 0; t < F; ++t)
    for (int k = 0; k < c; ++k) {
      B(t * c + k, t * c + k) = cp.diag(t, k);
      if (t + 1 < F) B(t * c + k, (t + 1) * c + k) = cp.off(t, k);
    }
  Eigen::MatrixXd prec = B * B.transpose();
  return prec.inverse();
}

ChainParams chain_params_from_net(const DenseNet& qz, const Eigen::MatrixXd& X,
                                  int comp, NetMode mode, Rng* rng,
                                  std::vector<NetTape>* tapes) {
  const int F = int(X.rows());
  if (qz.out_dim() != 3 * comp)
    throw std::invalid_argument("chain_params_from_net: net output size");
  ChainParams cp;
  cp.mu.resize(F, comp);
  cp.diag.resize(F, comp);
  cp.off.resize(std::max(F - 1, 0), comp);
  if (tapes) tapes->assign(F, NetTape{});
  for (int t = 0; t < F; ++t) {
    Eigen::VectorXd y =
        net_forward(qz, X.row(t).transpose(), mode, rng, tapes ? &(*tapes)[t] : nullptr);
    for (int k = 0; k < comp; ++k) {
      cp.mu(t, k) = y[k];
      cp.diag(t, k) = kStdFloor + softplus(y[comp + k]);
      // |off| < diag keeps the bidiagonal solve stable and spans exactly the
      // admissible AR(1) posterior correlations
      if (t + 1 < F) cp.off(t, k) = cp.diag(t, k) * std::tanh(y[2 * comp + k]);
    }
  }
  return cp;
}

Eigen::MatrixXd sample_q_X(const Eigen::MatrixXd& mean,
                           const Eigen::MatrixXd& logstd,
                           const Eigen::MatrixXd& eps, double* logpdf) {
  Eigen::ArrayXXd sig = logstd.array().exp() + kStdFloor;
  Eigen::MatrixXd X = mean.array() + sig * eps.array();
  if (logpdf)
    *logpdf = -(sig.log() + 0.5 * eps.array().square() + 0.5 * kLog2Pi).sum();
  return X;
}

ElboTerms elbo_seq(const Model& model, const ObsSeq& obs, const SeqPosterior& post,
                   const SeqNoise& noise, ModelGrad* mg, SeqPostGrad* pg) {
  if (!!mg != !!pg)
    throw std::invalid_argument("elbo_seq: pass both gradient sinks or neither");
  const bool back = mg != nullptr;
  const int F = obs.frames();
  const int d = model.d;
  const int c = model.comp();
  ElboTerms out;

  // q(X) sample and entropy
  Eigen::ArrayXXd sigX = post.x_logstd.array().exp() + kStdFloor;
  Eigen::MatrixXd X = post.x_mean.array() + sigX * noise.eps_x.array();
  out.entropy +=
      (sigX.log() + 0.5 * noise.eps_x.array().square() + 0.5 * kLog2Pi).sum();

  Rng drng(noise.dropout_seed);
  const NetMode mode = NetMode::train;

  // q(z | X) chains
  const int nch = model.has_chains() ? model.h : 0;
  std::vector<ChainParams> cps(nch);
  std::vector<std::vector<NetTape>> qz_tapes(nch);
  std::vector<ChainSample> css(nch);
  std::vector<Eigen::MatrixXd> dz(nch);
  for (int j = 0; j < nch; ++j) {
    cps[j] = chain_params_from_net(post.qz[j], X, c, mode, &drng,
                                   back ? &qz_tapes[j] : nullptr);
    css[j] = chain_sample(cps[j], noise.eps_z[j]);
    out.entropy -= css[j].logq;
    if (back) dz[j] = Eigen::MatrixXd::Zero(F, c);
  }

  // koopman_det deterministic rollout from a sampled z0
  Eigen::VectorXd z0, zsig;
  Eigen::MatrixXd zfull, dzfull;
  if (model.kind == ModelKind::koopman_det) {
    zsig = post.z0_logstd.array().exp();
    z0 = post.z0_mean + zsig.cwiseProduct(noise.eps_z0);
    out.entropy += post.z0_logstd.sum() +
                   0.5 * noise.eps_z0.squaredNorm() + 0.5 * model.h * kLog2Pi;
    const int L = obs.times.back() + 1;
    zfull.resize(L, model.h);
    zfull.row(0) = z0.transpose();
    for (int t = 1; t < L; ++t)
      zfull.row(t) = (model.koopman_K * zfull.row(t - 1).transpose()).transpose();
    if (back) dzfull = Eigen::MatrixXd::Zero(L, model.h);
  }

  // decoder inputs per frame
  Eigen::MatrixXd coords;
  if (model.has_decoder()) {
    coords.resize(F, model.latent_dim());
    for (int m = 0; m < F; ++m) {
      if (model.kind == ModelKind::main_model) {
        for (int j = 0; j < model.h; ++j) {
          coords(m, 2 * j) = css[j].z(m, 0);
          coords(m, 2 * j + 1) = css[j].z(m, 1);
        }
      } else if (model.kind == ModelKind::koopman_det) {
        coords.row(m) = zfull.row(obs.times[m]);
      } else {
        for (int j = 0; j < model.h; ++j) coords(m, j) = css[j].z(m, 0);
      }
    }
  }

  Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(F, d);

  // observation term
  for (int m = 0; m < F; ++m) {
    if (obs.gaussian) {
      const double r2 = obs.obs_std * obs.obs_std;
      Eigen::VectorXd r = obs.y.row(m).transpose() - X.row(m).transpose();
      out.obs += -d * std::log(obs.obs_std) - 0.5 * d * kLog2Pi -
                 0.5 * r.squaredNorm() / r2;
      if (back) dX.row(m) += (r / r2).transpose();
    } else {
      Eigen::VectorXd gx;
      out.obs += obs_logpdf(obs.counts.row(m).transpose(), X.row(m).transpose(),
                            back ? &gx : nullptr);
      if (back) dX.row(m) += gx.transpose();
    }
  }

  // generative term: p(X | z) through the decoder, or the nn_x dynamics
  if (model.has_decoder()) {
    for (int m = 0; m < F; ++m) {
      DecodeResult dec = decode(model.decoder, coords.row(m).transpose(), mode, &drng);
      Eigen::ArrayXd r = X.row(m).transpose().array() - dec.mean.array();
      Eigen::ArrayXd s = dec.std.array();
      out.gen += (-s.log() - 0.5 * kLog2Pi - 0.5 * r.square() / s.square()).sum();
      if (back) {
        dX.row(m) += (-r / s.square()).matrix().transpose();
        Eigen::VectorXd dy(2 * d);
        dy.head(d) = (r / s.square()).matrix();
        Eigen::ArrayXd ds = -1.0 / s + r.square() / s.cube();
        for (int k = 0; k < d; ++k)
          dy[d + k] = ds[k] * sigmoid(dec.raw_scale[k]);
        Eigen::VectorXd dcoords =
            net_backward(model.decoder.net, dec.tape, dy, mg->decoder);
        if (model.kind == ModelKind::main_model) {
          for (int j = 0; j < model.h; ++j) {
            dz[j](m, 0) += dcoords[2 * j];
            dz[j](m, 1) += dcoords[2 * j + 1];
          }
        } else if (model.kind == ModelKind::koopman_det) {
          dzfull.row(obs.times[m]) += dcoords.transpose();
        } else {
          for (int j = 0; j < model.h; ++j) dz[j](m, 0) += dcoords[j];
        }
      }
    }
  } else {
    // nn_x: X_{t+1} = NN(X_t) + sigma eps, X_0 ~ N(0, I)
    for (int m = 1; m < F; ++m)
      if (obs.times[m] != obs.times[m - 1] + 1)
        throw std::runtime_error("nn_x baseline requires consecutive frames");
    const double sg = std::exp(model.nnx_logsigma);
    out.prior += -0.5 * d * kLog2Pi - 0.5 * X.row(0).squaredNorm();
    if (back) dX.row(0) -= X.row(0);
    for (int m = 1; m < F; ++m) {
      NetTape tape;
      Eigen::VectorXd pred =
          net_forward(model.xdyn, X.row(m - 1).transpose(), mode, &drng, &tape);
      Eigen::VectorXd r = X.row(m).transpose() - pred;
      out.gen += -d * std::log(sg) - 0.5 * d * kLog2Pi -
                 0.5 * r.squaredNorm() / (sg * sg);
      if (back) {
        dX.row(m) += (-r / (sg * sg)).transpose();
        Eigen::VectorXd din =
            net_backward(model.xdyn, tape, r / (sg * sg), mg->xdyn);
        dX.row(m - 1) += din.transpose();
        mg->d_nnx_logsigma += -d + r.squaredNorm() / (sg * sg);
      }
    }
  }

  // prior over the latent paths
  if (model.kind == ModelKind::main_model || model.kind == ModelKind::real_latent) {
    for (int j = 0; j < model.h; ++j) {
      const double re = model.prior.re_lambda(j);
      const double im = model.prior.im_lambda(j);
      auto zvec = [&](int m) {
        return Eigen::Vector2d(css[j].z(m, 0), c == 2 ? css[j].z(m, 1) : 0.0);
      };
      Eigen::Vector2d g0;
      out.prior += ou_initial_logpdf(c, zvec(0), back ? &g0 : nullptr);
      if (back)
        for (int k = 0; k < c; ++k) dz[j](0, k) += g0[k];
      for (int m = 1; m < F; ++m) {
        const int tau = obs.times[m] - obs.times[m - 1];
        OuTransGrad tg;
        out.prior += ou_transition_logpdf(re, im, tau, c, zvec(m - 1), zvec(m),
                                          back ? &tg : nullptr);
        if (back) {
          for (int k = 0; k < c; ++k) {
            dz[j](m - 1, k) += tg.d_prev[k];
            dz[j](m, k) += tg.d_next[k];
          }
          mg->d_a[j] += tg.d_re * model.prior.dre_da(j);
          if (c == 2) mg->d_im[j] += tg.d_im;
        }
      }
    }
  } else if (model.kind == ModelKind::koopman_prob) {
    for (int m = 1; m < F; ++m)
      if (obs.times[m] != obs.times[m - 1] + 1)
        throw std::runtime_error("koopman_prob baseline requires consecutive frames");
    Eigen::MatrixXd Z(F, model.h);
    for (int j = 0; j < model.h; ++j) Z.col(j) = css[j].z.col(0);
    Eigen::MatrixXd dZ = Eigen::MatrixXd::Zero(F, model.h);
    out.prior += -0.5 * model.h * kLog2Pi - 0.5 * Z.row(0).squaredNorm();
    if (back) dZ.row(0) -= Z.row(0);
    Eigen::ArrayXd w2 = (2.0 * model.koopman_logw.array()).exp();
    for (int m = 1; m < F; ++m) {
      Eigen::VectorXd r =
          Z.row(m).transpose() - model.koopman_K * Z.row(m - 1).transpose();
      out.prior += -model.koopman_logw.sum() - 0.5 * model.h * kLog2Pi -
                   0.5 * (r.array().square() / w2).sum();
      if (back) {
        Eigen::VectorXd rw = (r.array() / w2).matrix();
        dZ.row(m) -= rw.transpose();
        dZ.row(m - 1) += (model.koopman_K.transpose() * rw).transpose();
        mg->d_K += rw * Z.row(m - 1);
        mg->d_logw += (r.array().square() / w2 - 1.0).matrix();
      }
    }
    if (back)
      for (int j = 0; j < model.h; ++j) dz[j].col(0) += dZ.col(j);
  } else if (model.kind == ModelKind::koopman_det) {
    out.prior += -0.5 * model.h * kLog2Pi - 0.5 * z0.squaredNorm();
  }

  if (!back) return out;

  // chains: dz -> net outputs -> qz params and X
  for (int j = 0; j < nch; ++j) {
    Eigen::MatrixXd dmu, ddiag, doff;
    chain_backward(cps[j], css[j], dz[j], -1.0, &dmu, &ddiag, &doff);
    for (int m = 0; m < F; ++m) {
      const Eigen::VectorXd& raw = qz_tapes[j][m].preact.back();
      Eigen::VectorXd dy = Eigen::VectorXd::Zero(3 * c);
      for (int k = 0; k < c; ++k) {
        dy[k] = dmu(m, k);
        double dd = ddiag(m, k);
        if (m + 1 < F) {
          const double th = std::tanh(raw[2 * c + k]);
          dd += doff(m, k) * th;
          dy[2 * c + k] = doff(m, k) * cps[j].diag(m, k) * (1.0 - th * th);
        }
        dy[c + k] = dd * sigmoid(raw[c + k]);
      }
      Eigen::VectorXd din = net_backward(post.qz[j], qz_tapes[j][m], dy, pg->qz[j]);
      dX.row(m) += din.transpose();
    }
  }

  // koopman_det rollout backward
  if (model.kind == ModelKind::koopman_det) {
    const int L = int(zfull.rows());
    for (int t = L - 1; t >= 1; --t) {
      mg->d_K += dzfull.row(t).transpose() * zfull.row(t - 1);
      dzfull.row(t - 1) += dzfull.row(t) * model.koopman_K;
    }
    Eigen::VectorXd dz0 = dzfull.row(0).transpose() - z0;
    pg->d_z0_mean += dz0;
    pg->d_z0_logstd +=
        dz0.cwiseProduct(noise.eps_z0).cwiseProduct(zsig) +
        Eigen::VectorXd::Ones(model.h);
  }

  // q(X) parameters
  pg->d_x_mean += dX;
  Eigen::ArrayXXd els = post.x_logstd.array().exp();
  pg->d_x_logstd +=
      (dX.array() * noise.eps_x.array() * els + els / sigX).matrix();
  return out;
}

void TrainConfig::validate() const {
  if (epochs <= 0 || batch <= 0 || mc_samples < 1 || h <= 0)
    throw std::invalid_argument("TrainConfig: epochs, batch, mc_samples, h must be positive");
  if (weight_decay < 0 || adam.lr <= 0)
    throw std::invalid_argument("TrainConfig: weight_decay >= 0 and lr > 0 required");
  if (lr_final < 0 || lr_final > adam.lr)
    throw std::invalid_argument("TrainConfig: need 0 <= lr_final <= lr");
}

NetSpec default_decoder_spec(const std::string& data_kind) {
  NetSpec s;
  if (data_kind == "burgers") {
    s.hidden = {128, 128, 128};
    s.act = Act::relu;
    s.dropout = 0.1;
  }
  return s;
}

NetSpec default_qz_spec(const std::string& data_kind) {
  NetSpec s;
  s.act = Act::relu;
  s.hidden = data_kind == "burgers" ? std::vector<int>{128, 128}
                                    : std::vector<int>{64};
  return s;
}

static DenseNet make_net(int in, const NetSpec& spec, int out, Rng& rng) {
  std::vector<int> widths;
  widths.push_back(in);
  for (int w : spec.hidden) widths.push_back(w);
  widths.push_back(out);
  return DenseNet::make(widths, spec.act, rng, spec.dropout);
}

Model init_model(ModelKind kind, const std::string& data_kind, int h, int d,
                 const TrainConfig& cfg, Rng& rng) {
  Model m;
  m.kind = kind;
  m.d = d;
  m.h = (kind == ModelKind::koopman_prob || kind == ModelKind::koopman_det)
            ? 2 * h
            : h;
  if (kind == ModelKind::main_model || kind == ModelKind::real_latent)
    m.prior = LatentPrior::default_init(m.h);
  if (kind == ModelKind::koopman_prob || kind == ModelKind::koopman_det) {
    m.koopman_K = Eigen::MatrixXd::Zero(m.h, m.h);
    const double sc = 0.05 / std::sqrt(double(m.h));
    for (int i = 0; i < m.h; ++i)
      for (int j = 0; j < m.h; ++j)
        m.koopman_K(i, j) = (i == j ? 0.9 : 0.0) + sc * rng.normal();
    if (kind == ModelKind::koopman_prob)
      m.koopman_logw = Eigen::VectorXd::Constant(m.h, std::log(0.5));
  }
  if (kind == ModelKind::nn_x) {
    NetSpec xs;
    xs.hidden = {64, 64, 64};
    xs.act = Act::relu;
    m.xdyn = make_net(d, xs, d, rng);
    m.nnx_logsigma = std::log(0.1);
  } else {
    NetSpec ds = cfg.decoder_spec ? *cfg.decoder_spec : default_decoder_spec(data_kind);
    m.decoder.net = make_net(m.latent_dim(), ds, 2 * d, rng);
    m.decoder.d = d;
  }
  return m;
}

SeqPosterior init_posterior(const Model& model, const ObsSeq& obs,
                            const TrainConfig& cfg, Rng& rng) {
  SeqPosterior p;
  const int F = obs.frames(), d = model.d;
  p.x_mean.resize(F, d);
  if (obs.gaussian) {
    p.x_mean = obs.y;
  } else {
    for (int m = 0; m < F; ++m) {
      for (int k = 0; k < d; ++k)
        p.x_mean(m, k) = std::log((obs.counts(m, k) + 1.0) / (double(obs.f) + d));
      // the likelihood is shift-invariant in the logits, so pin the gauge
      p.x_mean.row(m).array() -= p.x_mean.row(m).mean();
    }
  }
  p.x_logstd = Eigen::MatrixXd::Constant(F, d, -2.0);
  if (model.has_chains()) {
    NetSpec qs = cfg.qz_spec ? *cfg.qz_spec : default_qz_spec("");
    for (int j = 0; j < model.h; ++j)
      p.qz.push_back(make_net(d, qs, 3 * model.comp(), rng));
  }
  if (model.kind == ModelKind::koopman_det) {
    p.z0_mean = Eigen::VectorXd::Zero(model.h);
    p.z0_logstd = Eigen::VectorXd::Constant(model.h, -2.0);
  }
  return p;
}

std::vector<ParamSpan> model_spans(Model& m, ModelGrad& g) {
  std::vector<ParamSpan> spans;
  auto add = [&](const std::string& name, double* p, double* gr, int n) {
    if (n > 0) spans.push_back({name, p, gr, n});
  };
  switch (m.kind) {
    case ModelKind::main_model:
      add("prior.a", m.prior.raw_a()->data(), g.d_a.data(), m.h);
      add("prior.im", m.prior.raw_im()->data(), g.d_im.data(), m.h);
      break;
    case ModelKind::real_latent:
      add("prior.a", m.prior.raw_a()->data(), g.d_a.data(), m.h);
      break;
    case ModelKind::koopman_prob:
      add("K", m.koopman_K.data(), g.d_K.data(), m.h * m.h);
      add("logw", m.koopman_logw.data(), g.d_logw.data(), m.h);
      break;
    case ModelKind::koopman_det:
      add("K", m.koopman_K.data(), g.d_K.data(), m.h * m.h);
      break;
    case ModelKind::nn_x: {
      auto ns = net_spans(m.xdyn, g.xdyn, "xdyn");
      spans.insert(spans.end(), ns.begin(), ns.end());
      add("nnx_logsigma", &m.nnx_logsigma, &g.d_nnx_logsigma, 1);
      break;
    }
  }
  if (m.has_decoder()) {
    auto ds = net_spans(m.decoder.net, g.decoder, "decoder");
    spans.insert(spans.end(), ds.begin(), ds.end());
  }
  return spans;
}

std::vector<ParamSpan> posterior_spans(SeqPosterior& p, SeqPostGrad& g,
                                       const std::string& prefix) {
  std::vector<ParamSpan> spans;
  spans.push_back({prefix + ".x_mean", p.x_mean.data(), g.d_x_mean.data(),
                   int(p.x_mean.size())});
  spans.push_back({prefix + ".x_logstd", p.x_logstd.data(), g.d_x_logstd.data(),
                   int(p.x_logstd.size())});
  for (size_t j = 0; j < p.qz.size(); ++j) {
    auto qs = net_spans(p.qz[j], g.qz[j], prefix + ".qz" + std::to_string(j));
    spans.insert(spans.end(), qs.begin(), qs.end());
  }
  if (p.z0_mean.size() > 0) {
    spans.push_back({prefix + ".z0_mean", p.z0_mean.data(), g.d_z0_mean.data(),
                     int(p.z0_mean.size())});
    spans.push_back({prefix + ".z0_logstd", p.z0_logstd.data(),
                     g.d_z0_logstd.data(), int(p.z0_logstd.size())});
  }
  return spans;
}

TrainedModel train(const CountTensor& data, ModelKind kind, TrainConfig cfg) {
  cfg.validate();
  data.validate();
  std::vector<ObsSeq> seqs;
  for (int i = 0; i < data.N; ++i) seqs.push_back(obs_from_tensor(data, i));
  if (!cfg.qz_spec) cfg.qz_spec = default_qz_spec(data.kind);
  Rng mrng(Rng::derive(cfg.seed, 0x51));
  Model model = init_model(kind, data.kind, cfg.h, data.d, cfg, mrng);
  return train_obs(seqs, std::move(model), std::move(cfg), data.kind, data.f);
}

namespace {

void add_into(ModelGrad& acc, const ModelGrad& g) {
  acc.d_a += g.d_a;
  acc.d_im += g.d_im;
  acc.d_K += g.d_K;
  acc.d_logw += g.d_logw;
  for (size_t l = 0; l < acc.xdyn.dW.size(); ++l) {
    acc.xdyn.dW[l] += g.xdyn.dW[l];
    acc.xdyn.db[l] += g.xdyn.db[l];
  }
  acc.d_nnx_logsigma += g.d_nnx_logsigma;
  for (size_t l = 0; l < acc.decoder.dW.size(); ++l) {
    acc.decoder.dW[l] += g.decoder.dW[l];
    acc.decoder.db[l] += g.decoder.db[l];
  }
}

const char* bad_term(const ElboTerms& t) {
  if (!std::isfinite(t.obs)) return "obs";
  if (!std::isfinite(t.gen)) return "gen";
  if (!std::isfinite(t.prior)) return "prior";
  if (!std::isfinite(t.entropy)) return "entropy";
  return nullptr;
}

}  // namespace

TrainedModel train_obs(const std::vector<ObsSeq>& seqs, Model model,
                       TrainConfig cfg, const std::string& data_kind,
                       long long f,
                       const std::vector<SeqPosterior>* warm_start) {
  cfg.validate();
  const int N = int(seqs.size());
  if (N == 0) throw std::invalid_argument("train: empty batch");
  if (warm_start && int(warm_start->size()) != N)
    throw std::invalid_argument("train: warm_start size mismatch");

  Rng prng(Rng::derive(cfg.seed, 0x52));
  std::vector<SeqPosterior> posteriors;
  if (warm_start) {
    posteriors = *warm_start;
  } else {
    for (int i = 0; i < N; ++i)
      posteriors.push_back(init_posterior(model, seqs[i], cfg, prng));
  }

  ModelGrad mg = ModelGrad::zeros_like(model);
  std::vector<ModelGrad> mg_seq(N, mg);
  std::vector<SeqPostGrad> pgs;
  for (int i = 0; i < N; ++i) pgs.push_back(SeqPostGrad::zeros_like(posteriors[i]));

  std::vector<ParamSpan> spans;
  if (!cfg.freeze_model) spans = model_spans(model, mg);
  for (int i = 0; i < N; ++i) {
    auto ps = posterior_spans(posteriors[i], pgs[i], "seq" + std::to_string(i));
    spans.insert(spans.end(), ps.begin(), ps.end());
  }
  int n_params = 0;
  for (const auto& s : spans) n_params += s.n;
  AdamState adam(n_params, cfg.adam);

  std::ofstream curve_out;
  if (!cfg.curve_path.empty()) {
    curve_out.open(cfg.curve_path);
    if (!curve_out) throw std::runtime_error("cannot open " + cfg.curve_path);
    curve_out << "epoch,elbo,obs,gen,prior,entropy,seconds\n";
  }

  TrainedModel result;
  result.config = cfg;
  result.f = f;
  result.data_kind = data_kind;
  for (const auto& s : seqs) result.seq_times.push_back(s.times);

  Model good_model = model;
  std::vector<SeqPosterior> good_post = posteriors;
  int good_epochs = 0;
  bool diverged = false;
  std::string diverge_msg;

  const auto t_start = std::chrono::steady_clock::now();
  Rng shuffle_rng(Rng::derive(cfg.seed, 0x53));

  for (int epoch = 0; epoch < cfg.epochs && !diverged; ++epoch) {
    if (cfg.lr_final > 0.0 && cfg.epochs > 1) {
      const double frac = double(epoch) / double(cfg.epochs - 1);
      adam.set_lr(cfg.adam.lr * std::pow(cfg.lr_final / cfg.adam.lr, frac));
    }
    std::vector<int> order(N);
    for (int i = 0; i < N; ++i) order[i] = i;
    if (cfg.batch < N)
      for (int i = N - 1; i > 0; --i)
        std::swap(order[i], order[shuffle_rng.below(std::uint64_t(i) + 1)]);

    ElboTerms epoch_terms;
    for (int start = 0; start < N && !diverged; start += cfg.batch) {
      const int bend = std::min(start + cfg.batch, N);
      mg.set_zero();
      std::vector<ElboTerms> terms(N);
      std::vector<int> batch(order.begin() + start, order.begin() + bend);
      // zero every sequence's slot: spans cover all posteriors, so grads from
      // the previous update must not leak into this one
      for (int i = 0; i < N; ++i) pgs[i].set_zero();
      for (int i : batch) {
        mg_seq[i].set_zero();
      }
      parallel_for(int(batch.size()), [&](int bi) {
        const int i = batch[bi];
        for (int s = 0; s < cfg.mc_samples; ++s) {
          std::uint64_t u = Rng::derive(cfg.seed, 0xE5E0 + std::uint64_t(epoch));
          u = Rng::derive(u, std::uint64_t(i) + 1);
          u = Rng::derive(u, std::uint64_t(s) + 1);
          Rng nrng(u);
          SeqNoise noise = SeqNoise::draw(model, seqs[i].frames(), nrng);
          ElboTerms t =
              elbo_seq(model, seqs[i], posteriors[i], noise, &mg_seq[i], &pgs[i]);
          terms[i].obs += t.obs;
          terms[i].gen += t.gen;
          terms[i].prior += t.prior;
          terms[i].entropy += t.entropy;
        }
      });
      for (int i : batch) {
        if (const char* btn = bad_term(terms[i])) {
          diverged = true;
          diverge_msg = std::string("non-finite ELBO term '") + btn +
                        "' on sequence " + std::to_string(i);
          break;
        }
        add_into(mg, mg_seq[i]);
        epoch_terms.obs += terms[i].obs / cfg.mc_samples;
        epoch_terms.gen += terms[i].gen / cfg.mc_samples;
        epoch_terms.prior += terms[i].prior / cfg.mc_samples;
        epoch_terms.entropy += terms[i].entropy / cfg.mc_samples;
      }
      if (diverged) break;

      const double inv_s = 1.0 / cfg.mc_samples;
      for (auto& sp : spans)
        for (int k = 0; k < sp.n; ++k) sp.g[k] *= inv_s;
      if (!cfg.freeze_model && cfg.weight_decay > 0.0) {
        NetGrad* ng = model.has_decoder() ? &mg.decoder : &mg.xdyn;
        DenseNet* net = model.has_decoder() ? &model.decoder.net : &model.xdyn;
        for (size_t l = 0; l < net->layers.size(); ++l)
          ng->dW[l] -= cfg.weight_decay * net->layers[l].W;
      }
      for (auto& sp : spans)
        for (int k = 0; k < sp.n; ++k) sp.g[k] = -sp.g[k];
      try {
        adam.step(spans);
      } catch (const std::exception& e) {
        diverged = true;
        diverge_msg = e.what();
      }
    }
    if (diverged) break;

    epoch_terms.obs /= N;
    epoch_terms.gen /= N;
    epoch_terms.prior /= N;
    epoch_terms.entropy /= N;
    result.curve.push_back(epoch_terms);
    good_model = model;
    good_post = posteriors;
    good_epochs = epoch + 1;

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    if (curve_out)
      curve_out << epoch << ',' << epoch_terms.total() << ',' << epoch_terms.obs
                << ',' << epoch_terms.gen << ',' << epoch_terms.prior << ','
                << epoch_terms.entropy << ',' << secs << '\n';
    if (cfg.log_every > 0 && epoch % cfg.log_every == 0)
      std::cerr << "epoch " << epoch << " elbo " << epoch_terms.total() << "\n";
  }

  if (diverged) {
    std::cerr << "training aborted after " << good_epochs
              << " epochs: " << diverge_msg << "\n";
    result.model = std::move(good_model);
    result.posteriors = std::move(good_post);
    result.curve.resize(good_epochs);
  } else {
    result.model = std::move(model);
    result.posteriors = std::move(posteriors);
  }
  return result;
}

}  // namespace slowgen
