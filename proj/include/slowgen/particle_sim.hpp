#pragma once

#include <cstdint>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "slowgen/rng.hpp"

namespace slowgen {

struct SimConfig {
  long long f = 20000;          // particles per sequence
  double micro_dt = 2.5e-3;     // micro time step
  double jump = 1.0 / 640.0;    // micro jump size (delta s)
  double p_left = 0.1875;       // AD: left jump probability per micro step
  double p_right = 0.2125;      // AD: right jump probability per micro step
  int macro_stride = 800;       // micro steps per recorded frame
  int T = 40;                   // recorded frames beyond frame 0
  int N = 1;                    // sequences
  std::string kind = "ad";      // "ad" | "burgers"
  double nu = 0.0005;           // Burgers viscosity
  int d_interaction = 256;      // Burgers: bins of the drift-density estimate
  std::uint64_t seed = 0;
  // optional initial-condition override (tests, controlled experiments)
  Eigen::VectorXd (*ic_fn)(long long f, Rng& rng) = nullptr;

  void validate() const;
  double macro_dt() const { return micro_dt * macro_stride; }
  // Continuum-limit constants of the AD walk.
  double diffusion() const { return (p_left + p_right) * jump * jump / (2.0 * micro_dt); }
  double velocity() const { return (p_right - p_left) * jump / micro_dt; }
  // Burgers defaults need a coarser jump so that 2 p_diff + p_drift <= 1.
  static SimConfig burgers_defaults();
};

// Integer particle-count histograms: N sequences x (T+1) frames x d bins.
struct CountTensor {
  int N = 0, T = 0, d = 0;
  long long f = 0;
  std::string kind;
  std::uint64_t seed = 0;
  std::string sim_params_json;            // echo of the generating config
  std::vector<Eigen::MatrixXi> counts;    // N matrices, (T+1) x d
  std::vector<std::vector<int>> mask;     // optional; per sequence, (T+1) flags

  void validate() const;
  bool frame_present(int i, int t) const {
    return mask.empty() || mask[i].empty() || mask[i][t] != 0;
  }
  void save(const std::string& path) const;
  static CountTensor load(const std::string& path);
};

// Randomized initial condition family: 1-3 periodic Gaussian bumps plus a 10%
// uniform floor. Density is available in closed form for testing.
struct BumpMixture {
  std::vector<double> weights;   // sum to 1
  std::vector<double> centers;   // in [-1, 1)
  std::vector<double> widths;    // in [0.05, 0.3]

  double density(double s) const;          // integrates to 1 over [-1, 1)
  double sample(Rng& rng) const;
  static BumpMixture random(Rng& rng);
};

Eigen::VectorXd sample_initial_conditions(long long f, Rng& rng);

// Equal-width bins over [-1, 1); boundary -1 + k (2/d) belongs to bin k.
Eigen::VectorXi bin_positions(const Eigen::VectorXd& positions, int d);
int bin_of(double s, int d);

// Non-interacting walkers; the net frame displacement is sampled exactly by
// drawing the number of moves S ~ Bin(stride, p_left + p_right) and the right
// moves R ~ Bin(S, p_right / (p_left + p_right)), giving (2R - S) * jump.
CountTensor simulate_ad(const SimConfig& cfg, int d);
// Micro-stepped reference path of the same process (slow; used for testing).
CountTensor simulate_ad_micro(const SimConfig& cfg, int d);

// Interacting walkers whose continuum limit is viscous Burgers.
CountTensor simulate_burgers(const SimConfig& cfg, int d);

// Periodic finite-difference solutions for the continuum limits; input and
// output are bin-mass vectors (simplex over d bins).
Eigen::VectorXd fd_oracle_ad(const Eigen::VectorXd& rho0, double D, double v,
                             double t_end);
Eigen::VectorXd fd_oracle_burgers(const Eigen::VectorXd& rho0, double nu,
                                  double t_end);

}  // namespace slowgen
