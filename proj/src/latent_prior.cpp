#include "slowgen/latent_prior.hpp"

#include <stdexcept>

namespace slowgen {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLogPi = 1.1447298858494001741;

Eigen::Matrix2d rot(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}
}  // namespace

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inv(double y) {
  if (y <= 0.0) throw std::invalid_argument("softplus_inv: argument must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double ou_transition_logpdf(double re, double im, int tau, int comp,
                            const Eigen::Vector2d& prev,
                            const Eigen::Vector2d& next, OuTransGrad* grad) {
  if (tau < 1) throw std::invalid_argument("ou_transition_logpdf: tau must be >= 1");
  const double E = std::exp(tau * re);
  const double E2 = E * E;
  const double q = 0.5 * (1.0 - E2);  // per-component variance
  Eigen::Matrix2d J;
  if (comp == 2) {
    J = E * rot(tau * im);
  } else {
    J.setZero();
    J(0, 0) = E;
  }
  const Eigen::Vector2d m = J * prev;
  Eigen::Vector2d r = next - m;
  if (comp == 1) r[1] = 0.0;
  const double r2 = r.squaredNorm();
  const double logp = -0.5 * comp * std::log(2.0 * M_PI * q) - r2 / (2.0 * q);
  if (grad) {
    const double dLdq = -0.5 * comp / q + r2 / (2.0 * q * q);
    grad->d_next = -r / q;
    grad->d_prev = J.transpose() * (r / q);
    // dm/dre = tau m; dq/dre = -tau E^2.
    grad->d_re = tau * (r.dot(m)) / q + dLdq * (-tau * E2);
    if (comp == 2) {
      Eigen::Matrix2d dR;
      const double a = tau * im;
      dR << -std::sin(a), -std::cos(a), std::cos(a), -std::sin(a);
      grad->d_im = (r / q).dot(E * tau * (dR * prev));
    } else {
      grad->d_im = 0.0;
    }
  }
  return logp;
}

double ou_initial_logpdf(int comp, const Eigen::Vector2d& z, Eigen::Vector2d* d_z) {
  Eigen::Vector2d v = z;
  if (comp == 1) v[1] = 0.0;
  // N(0, 1/2 I_c): logpdf = -(c/2) log(pi) - |z|^2.
  if (d_z) *d_z = -2.0 * v;
  return -0.5 * comp * kLogPi - v.squaredNorm();
}

LatentPrior::LatentPrior(Eigen::VectorXd a_raw, Eigen::VectorXd im_lambda)
    : a_(std::move(a_raw)), im_(std::move(im_lambda)) {
  if (a_.size() != im_.size())
    throw std::invalid_argument("LatentPrior: a and im size mismatch");
  if (a_.size() == 0) throw std::invalid_argument("LatentPrior: h must be positive");
}

LatentPrior LatentPrior::from_lambda(const Eigen::VectorXd& re_lambda,
                                     const Eigen::VectorXd& im_lambda) {
  Eigen::VectorXd a(re_lambda.size());
  for (int j = 0; j < re_lambda.size(); ++j) {
    if (!(re_lambda[j] < 0.0))
      throw std::invalid_argument("LatentPrior: Re(lambda) must be negative");
    a[j] = softplus_inv(-re_lambda[j]);
  }
  return LatentPrior(a, im_lambda);
}

LatentPrior LatentPrior::default_init(int h) {
  if (h < 1) throw std::invalid_argument("LatentPrior: h must be positive");
  Eigen::VectorXd re(h), im = Eigen::VectorXd::Zero(h);
  const double lo = std::log(0.01), hi = std::log(2.0);
  for (int j = 0; j < h; ++j) {
    const double f = h == 1 ? 0.0 : double(j) / (h - 1);
    re[j] = -std::exp(lo + f * (hi - lo));
  }
  return from_lambda(re, im);
}

double LatentPrior::re_lambda(int j) const { return -softplus(a_[j]); }

double LatentPrior::dre_da(int j) const { return -sigmoid(a_[j]); }

std::pair<double, Eigen::Matrix2d> LatentPrior::transition_params(int j) const {
  return {decay(j), rot(im_[j])};
}

double LatentPrior::transition_logpdf(int j, std::complex<double> z_prev,
                                      std::complex<double> z_next) const {
  return ou_transition_logpdf(re_lambda(j), im_[j], 1, 2,
                              {z_prev.real(), z_prev.imag()},
                              {z_next.real(), z_next.imag()});
}

double LatentPrior::multi_step_logpdf(int j, std::complex<double> z_start,
                                      std::complex<double> z_end, int tau) const {
  if (tau < 1) throw std::invalid_argument("multi_step_logpdf: tau must be >= 1");
  return ou_transition_logpdf(re_lambda(j), im_[j], tau, 2,
                              {z_start.real(), z_start.imag()},
                              {z_end.real(), z_end.imag()});
}

std::pair<Eigen::Vector2d, double> LatentPrior::multi_step_moments(
    int j, std::complex<double> z_start, int tau) const {
  const double re = re_lambda(j);
  const double E = std::exp(tau * re);
  const Eigen::Vector2d m =
      E * rot(tau * im_[j]) * Eigen::Vector2d(z_start.real(), z_start.imag());
  return {m, 0.5 * (1.0 - E * E)};
}

std::pair<Eigen::Vector2d, Eigen::Matrix2d> LatentPrior::stationary_moments(int) const {
  return {Eigen::Vector2d::Zero(), 0.5 * Eigen::Matrix2d::Identity()};
}

Eigen::Matrix2d LatentPrior::autocovariance(int j, int tau) const {
  if (tau < 0) throw std::invalid_argument("autocovariance: tau must be >= 0");
  return 0.5 * std::exp(tau * re_lambda(j)) * rot(tau * im_[j]);
}

double LatentPrior::joint_logpdf(const Eigen::MatrixXcd& paths) const {
  if (paths.rows() != h())
    throw std::invalid_argument("joint_logpdf: paths must have h rows");
  if (paths.cols() < 1)
    throw std::invalid_argument("joint_logpdf: paths must have at least one column");
  double total = 0.0;
  for (int j = 0; j < h(); ++j) {
    const std::complex<double> z0 = paths(j, 0);
    total += ou_initial_logpdf(2, {z0.real(), z0.imag()});
    for (int t = 1; t < paths.cols(); ++t)
      total += transition_logpdf(j, paths(j, t - 1), paths(j, t));
  }
  return total;
}

Eigen::VectorXcd LatentPrior::sample_path(int j, int T,
                                          std::optional<std::complex<double>> z0,
                                          Rng& rng) const {
  if (T < 0) throw std::invalid_argument("sample_path: T must be >= 0");
  Eigen::VectorXcd path(T + 1);
  const double half = std::sqrt(0.5);
  if (z0) {
    path[0] = *z0;
  } else {
    path[0] = std::complex<double>(half * rng.normal(), half * rng.normal());
  }
  const double s = decay(j);
  const double sig = std::sqrt(sigma2(j));
  const std::complex<double> e_lambda =
      s * std::complex<double>(std::cos(im_[j]), std::sin(im_[j]));
  for (int t = 1; t <= T; ++t) {
    const std::complex<double> eps(half * rng.normal(), half * rng.normal());
    path[t] = path[t - 1] * e_lambda + sig * eps;
  }
  return path;
}

}  // namespace slowgen
