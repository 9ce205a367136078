#include "slowgen/cnormal.hpp"

#include <stdexcept>

namespace slowgen {

namespace {
constexpr double kHermTol = 1e-12;
constexpr double kLogPi = 1.1447298858494001741;
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

void ComplexGaussian::validate() const {
  const int p = dim();
  if (p <= 0) throw std::invalid_argument("ComplexGaussian: dim must be positive");
  if (cov.rows() != p || cov.cols() != p)
    throw std::invalid_argument("ComplexGaussian: cov shape does not match mean");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.adjoint()).cwiseAbs().maxCoeff() > kHermTol * scale)
    throw std::invalid_argument("ComplexGaussian: cov is not Hermitian");
  // PD is checked on the real isomorphic covariance.
  Eigen::MatrixXd sr(2 * p, 2 * p);
  sr.topLeftCorner(p, p) = cov.real();
  sr.topRightCorner(p, p) = -cov.imag();
  sr.bottomLeftCorner(p, p) = cov.imag();
  sr.bottomRightCorner(p, p) = cov.real();
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * sr);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("ComplexGaussian: cov is not positive definite");
}

void RealGaussian::validate() const {
  const int n = dim();
  if (n <= 0) throw std::invalid_argument("RealGaussian: dim must be positive");
  if (cov.rows() != n || cov.cols() != n)
    throw std::invalid_argument("RealGaussian: cov shape does not match mean");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > kHermTol * scale)
    throw std::invalid_argument("RealGaussian: cov is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("RealGaussian: cov is not positive definite");
}

double RealGaussian::logpdf(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size())
    throw std::invalid_argument("RealGaussian::logpdf: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("RealGaussian::logpdf: cov is not positive definite");
  const Eigen::VectorXd r = x - mean;
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  double logdet = 0.0;
  for (int i = 0; i < mean.size(); ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * dim() * kLog2Pi - logdet - 0.5 * w.squaredNorm();
}

Eigen::VectorXd RealGaussian::sample(Rng& rng) const {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("RealGaussian::sample: cov is not positive definite");
  Eigen::VectorXd eps(dim());
  for (int i = 0; i < dim(); ++i) eps[i] = rng.normal();
  return mean + Eigen::MatrixXd(llt.matrixL()) * eps;
}

RealGaussian cn_to_real(const ComplexGaussian& g) {
  g.validate();
  const int p = g.dim();
  RealGaussian out;
  out.mean.resize(2 * p);
  out.mean.head(p) = g.mean.real();
  out.mean.tail(p) = g.mean.imag();
  out.cov.resize(2 * p, 2 * p);
  out.cov.topLeftCorner(p, p) = g.cov.real();
  out.cov.topRightCorner(p, p) = -g.cov.imag();
  out.cov.bottomLeftCorner(p, p) = g.cov.imag();
  out.cov.bottomRightCorner(p, p) = g.cov.real();
  out.cov *= 0.5;
  return out;
}

double cn_logpdf(const ComplexGaussian& g, const Eigen::VectorXcd& y) {
  if (y.size() != g.mean.size())
    throw std::invalid_argument("cn_logpdf: dimension mismatch");
  const int p = g.dim();
  Eigen::LLT<Eigen::MatrixXcd> llt(g.cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("cn_logpdf: cov is not positive definite");
  const Eigen::VectorXcd r = y - g.mean;
  const Eigen::VectorXcd w = llt.matrixL().solve(r);
  double logdet = 0.0;
  for (int i = 0; i < p; ++i) logdet += std::log(std::real(llt.matrixL()(i, i)));
  // det(Sigma) is real for Hermitian PD; L diagonal is real positive.
  return -p * kLogPi - 2.0 * logdet - w.squaredNorm();
}

Eigen::VectorXcd cn_sample(const ComplexGaussian& g, Rng& rng) {
  const RealGaussian rg = cn_to_real(g);
  const Eigen::VectorXd w = rg.sample(rng);
  const int p = g.dim();
  Eigen::VectorXcd out(p);
  for (int i = 0; i < p; ++i) out[i] = std::complex<double>(w[i], w[p + i]);
  return out;
}

ComplexGaussian cn_standard(int p) {
  ComplexGaussian g;
  g.mean = Eigen::VectorXcd::Zero(p);
  g.cov = Eigen::MatrixXcd::Identity(p, p);
  return g;
}

}  // namespace slowgen
