#pragma once

#include <Eigen/Dense>

#include "slowgen/net.hpp"

namespace slowgen {

// Decoder G: latent coordinates -> Gaussian over the physical variables X.
// The network emits 2d values: d means followed by d raw scales that map
// through softplus (with a 1e-6 floor) to standard deviations.
struct DecoderG {
  DenseNet net;
  int d = 0;

  int latent_dim() const { return net.in_dim(); }
};

struct DecodeResult {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  NetTape tape;               // retained for backprop
  Eigen::VectorXd raw_scale;  // preactivation of the std head
};

DecodeResult decode(const DecoderG& g, const Eigen::VectorXd& z_coords,
                    NetMode mode = NetMode::eval, Rng* rng = nullptr);

// softmax with max-subtraction; output sums to one exactly up to roundoff.
Eigen::VectorXd density_from_X(const Eigen::VectorXd& X);

// log multinomial coefficient log(f! / prod m_k!) via lgamma.
double log_multinomial_coef(const Eigen::VectorXi& counts);

// Eq-style multinomial log density of the counts under softmax(X).
// d(obs_logpdf)/dX = counts - f * softmax(X); returned via grad_X if given.
double obs_logpdf(const Eigen::VectorXi& counts, const Eigen::VectorXd& X,
                  Eigen::VectorXd* grad_X = nullptr);

}  // namespace slowgen
