#pragma once

#include <complex>
#include <Eigen/Dense>

#include "slowgen/rng.hpp"

namespace slowgen {

// Circularly-symmetric complex multivariate normal CN(mu, Sigma) together
// with its exact real-valued twin of doubled dimension.

struct ComplexGaussian {
  Eigen::VectorXcd mean;   // length p
  Eigen::MatrixXcd cov;    // p x p, Hermitian positive definite

  int dim() const { return int(mean.size()); }
  // Throws std::invalid_argument naming the violated invariant.
  void validate() const;
};

struct RealGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;     // symmetric positive definite

  int dim() const { return int(mean.size()); }
  void validate() const;

  double logpdf(const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample(Rng& rng) const;
};

// mu_R = [Re mu; Im mu],  Sigma_R = 1/2 [[Re S, -Im S], [Im S, Re S]].
RealGaussian cn_to_real(const ComplexGaussian& g);

// log f(y) = -p log(pi) - log det(Sigma) - (y-mu)^* Sigma^{-1} (y-mu).
double cn_logpdf(const ComplexGaussian& g, const Eigen::VectorXcd& y);

// Draws through the real isomorphic Gaussian and recombines as Re + i Im.
Eigen::VectorXcd cn_sample(const ComplexGaussian& g, Rng& rng);

// Standard scalar CN(0,1).
ComplexGaussian cn_standard(int p = 1);

}  // namespace slowgen
