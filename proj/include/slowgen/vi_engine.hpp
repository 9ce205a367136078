#pragma once

#include <optional>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "slowgen/gen_maps.hpp"
#include "slowgen/latent_prior.hpp"
#include "slowgen/net.hpp"
#include "slowgen/particle_sim.hpp"

namespace slowgen {

enum class ModelKind { main_model, real_latent, koopman_prob, koopman_det, nn_x };

std::string kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& name);

struct NetSpec {
  std::vector<int> hidden;
  Act act = Act::relu;
  double dropout = 0.0;
};

// All MAP parameters theta of one model variant. Unused fields stay empty.
struct Model {
  ModelKind kind = ModelKind::main_model;
  int h = 5;                      // processes (main/real) or Koopman dimension
  int d = 25;
  LatentPrior prior;              // main / real_latent
  Eigen::MatrixXd koopman_K;      // koopman_prob / koopman_det
  Eigen::VectorXd koopman_logw;   // koopman_prob diagonal noise, log scale
  DenseNet xdyn;                  // nn_x dynamics d -> d
  double nnx_logsigma = 0.0;      // nn_x noise scale, log
  DecoderG decoder;               // all kinds except nn_x

  int comp() const { return kind == ModelKind::main_model ? 2 : 1; }
  bool has_chains() const {
    return kind == ModelKind::main_model || kind == ModelKind::real_latent ||
           kind == ModelKind::koopman_prob;
  }
  bool has_decoder() const { return kind != ModelKind::nn_x; }
  int latent_dim() const { return has_decoder() ? comp() * h : 0; }
};

struct ModelGrad {
  Eigen::VectorXd d_a, d_im;
  Eigen::MatrixXd d_K;
  Eigen::VectorXd d_logw;
  NetGrad xdyn;
  double d_nnx_logsigma = 0.0;
  NetGrad decoder;

  static ModelGrad zeros_like(const Model& m);
  void set_zero();
};

// Per-sequence variational parameters phi^{(i)}.
struct SeqPosterior {
  Eigen::MatrixXd x_mean;               // (M+1) x d over present frames
  Eigen::MatrixXd x_logstd;             // (M+1) x d
  std::vector<DenseNet> qz;             // one net per chain; output 3*comp
  Eigen::VectorXd z0_mean, z0_logstd;   // koopman_det only
};

struct SeqPostGrad {
  Eigen::MatrixXd d_x_mean, d_x_logstd;
  std::vector<NetGrad> qz;
  Eigen::VectorXd d_z0_mean, d_z0_logstd;

  static SeqPostGrad zeros_like(const SeqPosterior& p);
  void set_zero();
};

// One observed sequence, restricted to its present frames.
struct ObsSeq {
  std::vector<int> times;     // frame indices, strictly increasing, times[0]==0
  Eigen::MatrixXi counts;     // (M+1) x d (multinomial mode)
  long long f = 0;
  bool gaussian = false;      // linear-Gaussian surrogate observation mode
  Eigen::MatrixXd y;          // (M+1) x d, gaussian mode
  double obs_std = 0.1;       // gaussian mode

  int frames() const { return int(times.size()); }
};

ObsSeq obs_from_tensor(const CountTensor& data, int i);

// Frozen reparameterization noise for one ELBO sample.
struct SeqNoise {
  Eigen::MatrixXd eps_x;          // (M+1) x d
  std::vector<Eigen::MatrixXd> eps_z;  // per chain, (M+1) x comp
  Eigen::VectorXd eps_z0;         // koopman_det
  std::uint64_t dropout_seed = 0;

  static SeqNoise draw(const Model& m, int frames, Rng& rng);
};

struct ElboTerms {
  double obs = 0.0;      // E log p(x | X)
  double gen = 0.0;      // E log p(X | z)   (nn_x: X-dynamics density)
  double prior = 0.0;    // E log p(z)       (nn_x: log p(X_0))
  double entropy = 0.0;  // -E log q(X, z)
  double total() const { return obs + gen + prior + entropy; }
};

// Single-sample pathwise ELBO estimate with exact reverse-mode gradients
// accumulated into the optional grad structures.
ElboTerms elbo_seq(const Model& model, const ObsSeq& obs, const SeqPosterior& post,
                   const SeqNoise& noise, ModelGrad* mg = nullptr,
                   SeqPostGrad* pg = nullptr);

// Structured q(z|X) chain: upper block-bidiagonal B with positive diagonal.
// mu/diag are (M+1) x c, off is M x c; sample = mu + B^{-T} eps.
struct ChainParams {
  Eigen::MatrixXd mu;
  Eigen::MatrixXd diag;   // strictly positive
  Eigen::MatrixXd off;
};

struct ChainSample {
  Eigen::MatrixXd u;   // B^{-T} eps
  Eigen::MatrixXd z;   // mu + u
  double logq = 0.0;
};

ChainSample chain_sample(const ChainParams& cp, const Eigen::MatrixXd& eps);
void chain_backward(const ChainParams& cp, const ChainSample& cs,
                    const Eigen::MatrixXd& dz, double dlogq_coeff,
                    Eigen::MatrixXd* d_mu, Eigen::MatrixXd* d_diag,
                    Eigen::MatrixXd* d_off);
// Dense (B B^T)^{-1} for oracle tests; index order is frame-major, component
// within frame.
Eigen::MatrixXd chain_dense_covariance(const ChainParams& cp);

// Evaluates the amortization net on each frame of X and assembles the chain
// parameters (mu, softplus-floored diag, off couplings).
ChainParams chain_params_from_net(const DenseNet& qz, const Eigen::MatrixXd& X,
                                  int comp, NetMode mode = NetMode::eval,
                                  Rng* rng = nullptr,
                                  std::vector<NetTape>* tapes = nullptr);

// Elementwise reparameterized q(X); std = 1e-6 + exp(logstd).
Eigen::MatrixXd sample_q_X(const Eigen::MatrixXd& mean,
                           const Eigen::MatrixXd& logstd,
                           const Eigen::MatrixXd& eps, double* logpdf = nullptr);

struct TrainConfig {
  int epochs = 3000;
  int batch = 16;
  int mc_samples = 1;
  AdamConfig adam;
  double lr_final = 0.0;  // > 0 decays the rate geometrically to this value
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  int h = 5;
  std::optional<NetSpec> decoder_spec;  // defaults depend on kind/dataset
  std::optional<NetSpec> qz_spec;
  bool freeze_model = false;            // optimize phi only
  std::string curve_path;               // per-epoch CSV, optional
  int log_every = 0;                    // stderr progress, 0 = silent

  void validate() const;
};

struct TrainedModel {
  Model model;
  std::vector<SeqPosterior> posteriors;
  std::vector<std::vector<int>> seq_times;
  TrainConfig config;
  std::vector<ElboTerms> curve;
  long long f = 0;
  std::string data_kind;
};

// Kind-appropriate architecture defaults ("ad" vs "burgers" data).
NetSpec default_decoder_spec(const std::string& data_kind);
NetSpec default_qz_spec(const std::string& data_kind);

Model init_model(ModelKind kind, const std::string& data_kind, int h, int d,
                 const TrainConfig& cfg, Rng& rng);
SeqPosterior init_posterior(const Model& model, const ObsSeq& obs,
                            const TrainConfig& cfg, Rng& rng);

std::vector<ParamSpan> model_spans(Model& m, ModelGrad& g);
std::vector<ParamSpan> posterior_spans(SeqPosterior& p, SeqPostGrad& g,
                                       const std::string& prefix);

TrainedModel train(const CountTensor& data, ModelKind kind, TrainConfig cfg);

// Internal trainer entry used by the conjugate-toy tests: arbitrary ObsSeq
// batch and a caller-prepared model (possibly frozen). A non-null warm_start
// replaces the default posterior initialization (for staged fits).
TrainedModel train_obs(const std::vector<ObsSeq>& seqs, Model model,
                       TrainConfig cfg, const std::string& data_kind,
                       long long f,
                       const std::vector<SeqPosterior>* warm_start = nullptr);

}  // namespace slowgen
