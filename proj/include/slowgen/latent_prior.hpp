#pragma once

#include <complex>
#include <optional>
#include <Eigen/Dense>

#include "slowgen/rng.hpp"

namespace slowgen {

// Gradient of a single OU transition term, used by the training engine.
struct OuTransGrad {
  Eigen::Vector2d d_prev = Eigen::Vector2d::Zero();
  Eigen::Vector2d d_next = Eigen::Vector2d::Zero();
  double d_re = 0.0;
  double d_im = 0.0;
};

// log N(next; e^{tau re} Rot(tau im) prev, q I_c) with q = (1 - e^{2 tau re})/2,
// evaluated on the real pair (c = 2) or a scalar chain (c = 1, im ignored).
double ou_transition_logpdf(double re, double im, int tau, int comp,
                            const Eigen::Vector2d& prev,
                            const Eigen::Vector2d& next,
                            OuTransGrad* grad = nullptr);

// log density of the stationary initial state: N(0, 1/2 I_c).
double ou_initial_logpdf(int comp, const Eigen::Vector2d& z,
                         Eigen::Vector2d* d_z = nullptr);

// Prior over h independent complex OU processes, Eq-per-process
//   z_t = z_{t-1} exp(lambda) + sigma eps,  sigma^2 = 1 - exp(2 Re lambda).
// Stability is built into the parameterization: Re lambda = -softplus(a).
class LatentPrior {
 public:
  LatentPrior() = default;
  LatentPrior(Eigen::VectorXd a_raw, Eigen::VectorXd im_lambda);

  // Direct construction from Re(lambda) < 0 values.
  static LatentPrior from_lambda(const Eigen::VectorXd& re_lambda,
                                 const Eigen::VectorXd& im_lambda);
  // Default initialization: Re lambda log-uniform in [-2, -0.01], Im = 0.
  static LatentPrior default_init(int h);

  int h() const { return int(a_.size()); }
  double re_lambda(int j) const;
  double im_lambda(int j) const { return im_[j]; }
  double a_raw(int j) const { return a_[j]; }
  double decay(int j) const { return std::exp(re_lambda(j)); }        // s_j
  double sigma2(int j) const { return 1.0 - std::exp(2.0 * re_lambda(j)); }
  // d Re(lambda_j) / d a_j, for chaining gradients onto the raw parameter.
  double dre_da(int j) const;

  Eigen::VectorXd* raw_a() { return &a_; }
  Eigen::VectorXd* raw_im() { return &im_; }
  const Eigen::VectorXd& raw_a() const { return a_; }
  const Eigen::VectorXd& raw_im() const { return im_; }

  // (s_j, R_j) of the one-step transition mean s_j R_j z.
  std::pair<double, Eigen::Matrix2d> transition_params(int j) const;

  double transition_logpdf(int j, std::complex<double> z_prev,
                           std::complex<double> z_next) const;
  // tau >= 1 macro-steps; tau == 1 coincides with transition_logpdf.
  double multi_step_logpdf(int j, std::complex<double> z_start,
                           std::complex<double> z_end, int tau) const;
  // Mean map and per-component variance of the tau-step transition.
  std::pair<Eigen::Vector2d, double> multi_step_moments(
      int j, std::complex<double> z_start, int tau) const;

  // Stationary law: mean 0, covariance 1/2 I.
  std::pair<Eigen::Vector2d, Eigen::Matrix2d> stationary_moments(int j) const;
  // D_tau = 1/2 e^{tau Re lambda} Rot(tau Im lambda).
  Eigen::Matrix2d autocovariance(int j, int tau) const;

  // Sum over processes of initial + transition log densities; paths is h rows,
  // T+1 columns. T == 0 reduces to the initial density alone.
  double joint_logpdf(const Eigen::MatrixXcd& paths) const;

  Eigen::VectorXcd sample_path(int j, int T,
                               std::optional<std::complex<double>> z0,
                               Rng& rng) const;

 private:
  Eigen::VectorXd a_;
  Eigen::VectorXd im_;
};

double softplus(double x);
double softplus_inv(double y);   // y > 0
double sigmoid(double x);

}  // namespace slowgen
