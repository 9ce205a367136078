#pragma once

#include <string>
#include <vector>
#include <Eigen/Dense>

#include "slowgen/vi_engine.hpp"

namespace slowgen {

// Monte Carlo forecast: per-member latent rollouts decoded to bin densities.
// Frame 0 of each member is the reconstruction at the forecast origin.
struct ForecastEnsemble {
  int P = 0;
  int n_samples = 0;
  int d = 0;
  int latent_dim = 0;
  std::uint64_t seed = 0;
  std::string kind;
  std::vector<Eigen::MatrixXd> density;  // per member, (P+1) x d on the simplex
  std::vector<Eigen::MatrixXd> z;        // per member, (P+1) x latent_dim
  bool diverged = false;
  int diverge_step = -1;

  Eigen::MatrixXd mean() const;
  Eigen::MatrixXd stddev() const;
  Eigen::MatrixXd quantile(double q) const;  // per frame/bin order statistic

  void save(const std::string& path, bool with_samples = true) const;
  static ForecastEnsemble load(const std::string& path);
};

// Three-step scheme: sample (X, z) from the trained q, roll the latent law P
// macro-steps forward, decode each frame through G.
ForecastEnsemble predict(const TrainedModel& tm, int seq, int P, int n_samples,
                         std::uint64_t seed);

struct Z0Posterior {
  Eigen::VectorXd mean;     // real latent coordinates
  Eigen::VectorXd logstd;
  double elbo = 0.0;
  Eigen::VectorXd recon_density;  // decoded density at the posterior mean
};

// Variational fit of q(z0) q(X0) to a single count frame under frozen theta.
Z0Posterior infer_z0(const TrainedModel& tm, const Eigen::VectorXi& counts0,
                     std::uint64_t seed, int steps = 2000, double lr = 1e-2,
                     int restarts = 8);

ForecastEnsemble predict_from_new_ic(const TrainedModel& tm,
                                     const Eigen::VectorXi& counts0, int P,
                                     int n_samples, std::uint64_t seed);

}  // namespace slowgen
