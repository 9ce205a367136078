#include "slowgen/baselines.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

namespace slowgen {

TrainedModel train_baseline(ModelKind kind, const CountTensor& data,
                            TrainConfig cfg) {
  if (kind == ModelKind::main_model)
    throw std::invalid_argument("train_baseline: not a baseline kind");
  return train(data, kind, std::move(cfg));
}

ForecastEnsemble predict_baseline(const TrainedModel& tm, int seq, int P,
                                  int n_samples, std::uint64_t seed) {
  return predict(tm, seq, P, n_samples, seed);
}

double spectral_radius(const Eigen::MatrixXd& K, int max_iter, double tol) {
  if (K.rows() != K.cols() || K.rows() == 0)
    throw std::invalid_argument("spectral_radius: square matrix required");
  const int n = int(K.rows());
  if (n == 1) return std::abs(K(0, 0));

  // deterministic start spanning two directions
  Eigen::MatrixXd Q(n, 2);
  for (int i = 0; i < n; ++i) {
    Q(i, 0) = 1.0 / std::sqrt(double(n));
    Q(i, 1) = (i % 2 ? -1.0 : 1.0) * (i + 1);
  }
  Q.col(1) -= Q.col(0).dot(Q.col(1)) * Q.col(0);
  Q.col(1).normalize();

  double prev = -1.0;
  int stable = 0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd Y = Q;
    for (int a = 0; a < 4; ++a) {
      Y = K * Y;
      const double ynorm = Y.norm();
      if (ynorm < 1e-300) return 0.0;
      Y /= ynorm;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
    Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, 2);
    // Rayleigh projection; 2x2 eigenvalues in closed form
    Eigen::Matrix2d T = Q.transpose() * (K * Q);
    const double tr = T.trace(), det = T.determinant();
    const double disc = tr * tr / 4.0 - det;
    double r;
    if (disc >= 0.0) {
      const double s = std::sqrt(disc);
      r = std::max(std::abs(tr / 2.0 + s), std::abs(tr / 2.0 - s));
    } else {
      r = std::sqrt(det);  // complex pair, |eig| = sqrt(det)
    }
    if (prev >= 0.0 && std::abs(r - prev) <= tol * std::max(r, 1e-12)) {
      if (++stable >= 3) return r;
    } else {
      stable = 0;
    }
    prev = r;
  }
  throw std::runtime_error("spectral_radius: no convergence");
}

Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& K,
                                        const Eigen::MatrixXd& Q) {
  const int n = int(K.rows());
  if (K.cols() != n || Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("solve_discrete_lyapunov: shape mismatch");
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
          A(i * n + j, k * n + l) -= K(i, k) * K(j, l);
  Eigen::VectorXd q(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q[i * n + j] = Q(i, j);
  Eigen::VectorXd s = A.fullPivLu().solve(q);
  Eigen::MatrixXd S(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) S(i, j) = s[i * n + j];
  return S;
}

}  // namespace slowgen
