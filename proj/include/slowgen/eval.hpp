#pragma once

#include <complex>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "slowgen/forecast.hpp"
#include "slowgen/particle_sim.hpp"
#include "slowgen/vi_engine.hpp"

namespace slowgen {

struct DensityStats {
  Eigen::MatrixXd mean, std, q05, q95;  // each (P+1) x d
};

DensityStats density_stats(const ForecastEnsemble& e);

// Unordered-distinct-pair probability matrix P(b1, b2); symmetric, total 1.
Eigen::MatrixXd two_point(const Eigen::VectorXi& counts);
// Ensemble version: expectation of the count estimator under F is the outer
// product of the bin density, averaged over members.
Eigen::MatrixXd two_point(const ForecastEnsemble& e, int frame);

// Decoded densities over a (z_{j1}, z_{j2}) grid with all other processes at
// zero; result is grid-major (a * |grid| + b) over d bins.
std::vector<Eigen::VectorXd> latent_sweep(
    const Model& m, int j1, int j2,
    const std::vector<std::complex<double>>& grid);

double l1_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
Eigen::VectorXd frame_density(const CountTensor& data, int i, int t);

// Per-frame comparison of a forecast against ground-truth counts starting at
// frame t0 of sequence i; writes CSV: frame,t,density_l1,two_point_l1.
void evaluate_csv(const ForecastEnsemble& e, const CountTensor& truth, int i,
                  int t0, const std::string& path);

}  // namespace slowgen
