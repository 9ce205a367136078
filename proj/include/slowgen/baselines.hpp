#pragma once

#include <Eigen/Dense>

#include "slowgen/forecast.hpp"
#include "slowgen/vi_engine.hpp"

namespace slowgen {

// The four comparison models behind the main train/predict interface.
TrainedModel train_baseline(ModelKind kind, const CountTensor& data,
                            TrainConfig cfg);

ForecastEnsemble predict_baseline(const TrainedModel& tm, int seq, int P,
                                  int n_samples, std::uint64_t seed);

// max |eigenvalue| via dimension-2 subspace iteration with Rayleigh
// refinement, so complex conjugate pairs converge. Throws on non-convergence.
double spectral_radius(const Eigen::MatrixXd& K, int max_iter = 5000,
                       double tol = 1e-8);

// S = K S K^T + Q by Kronecker vectorization; oracle for small dimensions.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& K,
                                        const Eigen::MatrixXd& Q);

}  // namespace slowgen
