#include "slowgen/gen_maps.hpp"

#include <cmath>
#include <stdexcept>

#include "slowgen/latent_prior.hpp"

namespace slowgen {

DecodeResult decode(const DecoderG& g, const Eigen::VectorXd& z_coords,
                    NetMode mode, Rng* rng) {
  if (g.net.out_dim() != 2 * g.d)
    throw std::invalid_argument("decode: decoder output must have size 2d");
  DecodeResult r;
  const Eigen::VectorXd out = net_forward(g.net, z_coords, mode, rng, &r.tape);
  if (!out.allFinite()) throw std::runtime_error("decode: non-finite network output");
  r.mean = out.head(g.d);
  r.raw_scale = out.tail(g.d);
  r.std.resize(g.d);
  for (int k = 0; k < g.d; ++k) r.std[k] = 1e-6 + softplus(r.raw_scale[k]);
  return r;
}

Eigen::VectorXd density_from_X(const Eigen::VectorXd& X) {
  if (X.size() == 0) throw std::invalid_argument("density_from_X: empty input");
  if (!X.allFinite()) throw std::invalid_argument("density_from_X: non-finite input");
  const double m = X.maxCoeff();
  Eigen::VectorXd p = (X.array() - m).exp();
  p /= p.sum();
  return p;
}

double log_multinomial_coef(const Eigen::VectorXi& counts) {
  long long f = 0;
  for (int k = 0; k < counts.size(); ++k) {
    if (counts[k] < 0)
      throw std::invalid_argument("log_multinomial_coef: negative count");
    f += counts[k];
  }
  if (f == 0) throw std::invalid_argument("log_multinomial_coef: zero total count");
  double lc = std::lgamma(double(f) + 1.0);
  for (int k = 0; k < counts.size(); ++k) lc -= std::lgamma(double(counts[k]) + 1.0);
  return lc;
}

double obs_logpdf(const Eigen::VectorXi& counts, const Eigen::VectorXd& X,
                  Eigen::VectorXd* grad_X) {
  if (counts.size() != X.size())
    throw std::invalid_argument("obs_logpdf: dimension mismatch");
  double f = 0.0;
  for (int k = 0; k < counts.size(); ++k) {
    if (counts[k] < 0) throw std::invalid_argument("obs_logpdf: negative count");
    f += counts[k];
  }
  if (f <= 0.0) throw std::invalid_argument("obs_logpdf: zero total count");
  const double m = X.maxCoeff();
  const double lse = m + std::log((X.array() - m).exp().sum());
  double lp = log_multinomial_coef(counts);
  for (int k = 0; k < counts.size(); ++k) lp += counts[k] * (X[k] - lse);
  if (grad_X) {
    const Eigen::VectorXd p = density_from_X(X);
    *grad_X = counts.cast<double>() - f * p;
  }
  return lp;
}

}  // namespace slowgen
