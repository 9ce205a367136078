#include "slowgen/particle_sim.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace slowgen {

namespace {

double wrap_pos(double s) {
  s = std::fmod(s + 1.0, 2.0);
  if (s < 0.0) s += 2.0;
  return s - 1.0;
}

// Piecewise-constant refinement: each coarse bin's mass is split evenly among
// its fine cells, so the histogram is reproduced exactly.
Eigen::VectorXd refine_mass(const Eigen::VectorXd& mass, int rf) {
  const int d = int(mass.size());
  if (rf <= 1) return mass;
  Eigen::VectorXd fine(d * rf);
  for (int k = 0; k < d; ++k)
    for (int r = 0; r < rf; ++r) fine[k * rf + r] = mass[k] / rf;
  return fine;
}

Eigen::VectorXd coarsen_mass(const Eigen::VectorXd& fine, int d) {
  const int nf = int(fine.size());
  const int rf = nf / d;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  for (int k = 0; k < d; ++k)
    for (int r = 0; r < rf; ++r) out[k] += fine[k * rf + r];
  return out;
}

}  // namespace

void SimConfig::validate() const {
  if (f <= 0) throw std::invalid_argument("SimConfig: f must be positive");
  if (macro_stride < 1) throw std::invalid_argument("SimConfig: macro_stride >= 1");
  if (T < 0 || N < 1) throw std::invalid_argument("SimConfig: invalid T or N");
  if (micro_dt <= 0.0 || jump <= 0.0)
    throw std::invalid_argument("SimConfig: micro_dt and jump must be positive");
  if (kind == "ad") {
    if (p_left < 0.0 || p_right < 0.0 || p_left + p_right > 1.0)
      throw std::invalid_argument("SimConfig: need p_left + p_right <= 1");
  } else if (kind == "burgers") {
    if (nu <= 0.0) throw std::invalid_argument("SimConfig: nu must be positive");
    if (d_interaction < 2) throw std::invalid_argument("SimConfig: d_interaction >= 2");
  } else {
    throw std::invalid_argument("SimConfig: kind must be 'ad' or 'burgers'");
  }
}

SimConfig SimConfig::burgers_defaults() {
  SimConfig cfg;
  cfg.kind = "burgers";
  cfg.jump = 1.0 / 320.0;   // keeps 2 p_diff + p_drift below one at nu = 5e-4
  return cfg;
}

void CountTensor::validate() const {
  if (N < 1 || T < 0 || d < 1 || f <= 0)
    throw std::invalid_argument("CountTensor: invalid shape metadata");
  if (int(counts.size()) != N)
    throw std::invalid_argument("CountTensor: sequence count mismatch");
  for (int i = 0; i < N; ++i) {
    if (counts[i].rows() != T + 1 || counts[i].cols() != d)
      throw std::invalid_argument("CountTensor: frame shape mismatch");
    for (int t = 0; t <= T; ++t) {
      long long sum = 0;
      for (int k = 0; k < d; ++k) {
        if (counts[i](t, k) < 0)
          throw std::invalid_argument("CountTensor: negative count");
        sum += counts[i](t, k);
      }
      if (sum != f) throw std::invalid_argument("CountTensor: frame does not sum to f");
    }
  }
  if (!mask.empty() && int(mask.size()) != N)
    throw std::invalid_argument("CountTensor: mask size mismatch");
}

void CountTensor::save(const std::string& path) const {
  validate();
  nlohmann::json hdr;
  hdr["version"] = 1;
  hdr["kind"] = kind;
  hdr["N"] = N;
  hdr["T"] = T;
  hdr["d"] = d;
  hdr["f"] = f;
  hdr["domain"] = {-1.0, 1.0};
  hdr["seed"] = seed;
  if (!sim_params_json.empty())
    hdr["sim"] = nlohmann::json::parse(sim_params_json);
  if (!mask.empty()) hdr["mask"] = mask;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("CountTensor::save: cannot open " + path);
  out << hdr.dump() << "\n";
  for (int i = 0; i < N; ++i)
    for (int t = 0; t <= T; ++t) {
      for (int k = 0; k < d; ++k) {
        if (k) out << ',';
        out << counts[i](t, k);
      }
      out << "\n";
    }
}

CountTensor CountTensor::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("CountTensor::load: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("CountTensor::load: missing header");
  const nlohmann::json hdr = nlohmann::json::parse(line);
  CountTensor ct;
  ct.N = hdr.at("N").get<int>();
  ct.T = hdr.at("T").get<int>();
  ct.d = hdr.at("d").get<int>();
  ct.f = hdr.at("f").get<long long>();
  ct.kind = hdr.at("kind").get<std::string>();
  ct.seed = hdr.value("seed", std::uint64_t(0));
  if (hdr.contains("sim")) ct.sim_params_json = hdr["sim"].dump();
  if (hdr.contains("mask")) ct.mask = hdr["mask"].get<std::vector<std::vector<int>>>();
  ct.counts.assign(ct.N, Eigen::MatrixXi(ct.T + 1, ct.d));
  for (int i = 0; i < ct.N; ++i)
    for (int t = 0; t <= ct.T; ++t) {
      if (!std::getline(in, line))
        throw std::runtime_error("CountTensor::load: line count does not match header");
      std::stringstream ss(line);
      std::string cell;
      for (int k = 0; k < ct.d; ++k) {
        if (!std::getline(ss, cell, ','))
          throw std::runtime_error("CountTensor::load: short row");
        ct.counts[i](t, k) = std::stoi(cell);
      }
    }
  if (std::getline(in, line) && !line.empty())
    throw std::runtime_error("CountTensor::load: trailing data beyond header count");
  ct.validate();
  return ct;
}

double BumpMixture::density(double s) const {
  double acc = 0.0;
  for (size_t m = 0; m < weights.size(); ++m) {
    const double sd = widths[m];
    const double norm = 1.0 / (sd * std::sqrt(2.0 * M_PI));
    for (int k = -4; k <= 4; ++k) {
      const double x = s - centers[m] + 2.0 * k;
      acc += weights[m] * norm * std::exp(-0.5 * x * x / (sd * sd));
    }
  }
  return 0.1 * 0.5 + 0.9 * acc;
}

double BumpMixture::sample(Rng& rng) const {
  if (rng.uniform() < 0.1) return rng.uniform(-1.0, 1.0);
  double u = rng.uniform();
  size_t m = 0;
  for (; m + 1 < weights.size(); ++m) {
    if (u < weights[m]) break;
    u -= weights[m];
  }
  return wrap_pos(centers[m] + widths[m] * rng.normal());
}

BumpMixture BumpMixture::random(Rng& rng) {
  BumpMixture mix;
  const int n = 1 + int(rng.below(3));
  double wsum = 0.0;
  for (int m = 0; m < n; ++m) {
    mix.weights.push_back(0.2 + rng.uniform());
    mix.centers.push_back(rng.uniform(-1.0, 1.0));
    mix.widths.push_back(rng.uniform(0.05, 0.3));
    wsum += mix.weights.back();
  }
  for (double& w : mix.weights) w /= wsum;
  return mix;
}

Eigen::VectorXd sample_initial_conditions(long long f, Rng& rng) {
  const BumpMixture mix = BumpMixture::random(rng);
  Eigen::VectorXd pos(f);
  for (long long i = 0; i < f; ++i) pos[i] = mix.sample(rng);
  return pos;
}

int bin_of(double s, int d) {
  if (s < -1.0 || s >= 1.0)
    throw std::out_of_range("bin_of: position outside [-1, 1)");
  int k = int(std::floor((s + 1.0) * d / 2.0));
  if (k >= d) k = d - 1;  // roundoff guard at the right edge
  return k;
}

Eigen::VectorXi bin_positions(const Eigen::VectorXd& positions, int d) {
  if (d < 1) throw std::invalid_argument("bin_positions: d must be positive");
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(d);
  for (int i = 0; i < positions.size(); ++i) ++counts[bin_of(positions[i], d)];
  return counts;
}

namespace {

CountTensor make_tensor(const SimConfig& cfg, int d) {
  CountTensor ct;
  ct.N = cfg.N;
  ct.T = cfg.T;
  ct.d = d;
  ct.f = cfg.f;
  ct.kind = cfg.kind;
  ct.seed = cfg.seed;
  nlohmann::json sim;
  sim["micro_dt"] = cfg.micro_dt;
  sim["jump"] = cfg.jump;
  sim["p_left"] = cfg.p_left;
  sim["p_right"] = cfg.p_right;
  sim["macro_stride"] = cfg.macro_stride;
  sim["nu"] = cfg.nu;
  sim["d_interaction"] = cfg.d_interaction;
  ct.sim_params_json = sim.dump();
  ct.counts.assign(cfg.N, Eigen::MatrixXi::Zero(cfg.T + 1, d));
  return ct;
}

}  // namespace

CountTensor simulate_ad(const SimConfig& cfg, int d) {
  cfg.validate();
  if (cfg.kind != "ad") throw std::invalid_argument("simulate_ad: kind must be 'ad'");
  CountTensor ct = make_tensor(cfg, d);
  // per frame each particle makes S ~ Bin(stride, p_left + p_right) moves, of
  // which R ~ Bin(S, p_right / (p_left + p_right)) go right; net = 2R - S
  const double p_move = cfg.p_left + cfg.p_right;
  const double q_right = p_move > 0.0 ? cfg.p_right / p_move : 0.5;
  const BinomialTable moves(cfg.macro_stride, p_move);
  std::vector<std::unique_ptr<BinomialTable>> rights(cfg.macro_stride + 1);
  auto right_table = [&](int s) -> const BinomialTable& {
    if (!rights[s]) rights[s] = std::make_unique<BinomialTable>(s, q_right);
    return *rights[s];
  };
  for (int i = 0; i < cfg.N; ++i) {
    Rng rng(Rng::derive(cfg.seed, i));
    Eigen::VectorXd pos = cfg.ic_fn ? cfg.ic_fn(cfg.f, rng) : sample_initial_conditions(cfg.f, rng);
    ct.counts[i].row(0) = bin_positions(pos, d).transpose();
    for (int t = 1; t <= cfg.T; ++t) {
      for (long long p = 0; p < cfg.f; ++p) {
        const int s = moves.sample(rng);
        const int net = 2 * right_table(s).sample(rng) - s;
        pos[p] = wrap_pos(pos[p] + net * cfg.jump);
      }
      ct.counts[i].row(t) = bin_positions(pos, d).transpose();
    }
  }
  ct.validate();
  return ct;
}

CountTensor simulate_ad_micro(const SimConfig& cfg, int d) {
  cfg.validate();
  if (cfg.kind != "ad") throw std::invalid_argument("simulate_ad_micro: kind must be 'ad'");
  CountTensor ct = make_tensor(cfg, d);
  for (int i = 0; i < cfg.N; ++i) {
    Rng rng(Rng::derive(cfg.seed, i));
    Eigen::VectorXd pos = cfg.ic_fn ? cfg.ic_fn(cfg.f, rng) : sample_initial_conditions(cfg.f, rng);
    ct.counts[i].row(0) = bin_positions(pos, d).transpose();
    for (int t = 1; t <= cfg.T; ++t) {
      for (int s = 0; s < cfg.macro_stride; ++s) {
        for (long long p = 0; p < cfg.f; ++p) {
          const double u = rng.uniform();
          if (u < cfg.p_left) {
            pos[p] = wrap_pos(pos[p] - cfg.jump);
          } else if (u < cfg.p_left + cfg.p_right) {
            pos[p] = wrap_pos(pos[p] + cfg.jump);
          }
        }
      }
      ct.counts[i].row(t) = bin_positions(pos, d).transpose();
    }
  }
  ct.validate();
  return ct;
}

CountTensor simulate_burgers(const SimConfig& cfg, int d) {
  cfg.validate();
  if (cfg.kind != "burgers")
    throw std::invalid_argument("simulate_burgers: kind must be 'burgers'");
  const double p_diff = cfg.nu * cfg.micro_dt / (cfg.jump * cfg.jump);
  if (2.0 * p_diff > 1.0)
    throw std::invalid_argument("simulate_burgers: CFL violation, 2 p_diff > 1");
  CountTensor ct = make_tensor(cfg, d);
  const int di = cfg.d_interaction;
  const double drift_scale = 0.5 * cfg.micro_dt / cfg.jump;  // times local density
  const double dens_scale = double(di) / (2.0 * double(cfg.f));
  for (int i = 0; i < cfg.N; ++i) {
    Rng rng(Rng::derive(cfg.seed, i));
    Eigen::VectorXd pos = cfg.ic_fn ? cfg.ic_fn(cfg.f, rng) : sample_initial_conditions(cfg.f, rng);
    ct.counts[i].row(0) = bin_positions(pos, d).transpose();
    std::vector<int> hist(di);
    double worst_clamp = 0.0;
    for (int t = 1; t <= cfg.T; ++t) {
      for (int s = 0; s < cfg.macro_stride; ++s) {
        std::fill(hist.begin(), hist.end(), 0);
        for (long long p = 0; p < cfg.f; ++p) ++hist[bin_of(pos[p], di)];
        for (long long p = 0; p < cfg.f; ++p) {
          const double rho = hist[bin_of(pos[p], di)] * dens_scale;
          double p_drift = rho * drift_scale;
          const double excess = 2.0 * p_diff + p_drift - 1.0;
          if (excess > 0.0) {
            worst_clamp = std::max(worst_clamp, excess);
            p_drift -= excess;
          }
          const double u = rng.uniform();
          double step = 0.0;
          if (u < p_diff) {
            step = -cfg.jump;
          } else if (u < 2.0 * p_diff) {
            step = cfg.jump;
          } else if (u < 2.0 * p_diff + p_drift) {
            step = cfg.jump;
          }
          if (step != 0.0) pos[p] = wrap_pos(pos[p] + step);
        }
      }
      ct.counts[i].row(t) = bin_positions(pos, d).transpose();
    }
    if (worst_clamp > 1e-3)
      throw std::runtime_error("simulate_burgers: CFL clamp exceeded 1e-3");
  }
  ct.validate();
  return ct;
}

Eigen::VectorXd fd_oracle_ad(const Eigen::VectorXd& rho0, double D, double v,
                             double t_end) {
  const int d = int(rho0.size());
  if (d < 2) throw std::invalid_argument("fd_oracle_ad: need at least two bins");
  if (t_end < 0.0) throw std::invalid_argument("fd_oracle_ad: t_end must be >= 0");
  if (t_end == 0.0 || (D == 0.0 && v == 0.0)) return rho0;
  const int rf = std::max(1, (512 + d - 1) / d);
  Eigen::VectorXd m = refine_mass(rho0, rf);
  const int nf = int(m.size());
  const double dx = 2.0 / nf;
  if (D > 0.0 && std::abs(v) * dx / D > 2.0)
    throw std::runtime_error("fd_oracle_ad: cell Peclet number exceeds 2 (unstable)");
  double dt;
  if (D > 0.0) {
    dt = 0.4 * dx * dx / (2.0 * D);
    if (v != 0.0) dt = std::min(dt, 0.4 * dx / std::abs(v));
  } else {
    // pure advection: unit-CFL upwind steps are exact shifts
    dt = dx / std::abs(v);
  }
  const long long steps = std::max<long long>(1, (long long)std::ceil(t_end / dt));
  dt = t_end / double(steps);
  Eigen::VectorXd next(nf);
  const double a = v * dt / (2.0 * dx);
  const double b = D * dt / (dx * dx);
  for (long long s = 0; s < steps; ++s) {
    if (D > 0.0) {
      for (int i = 0; i < nf; ++i) {
        const int ip = (i + 1) % nf, im = (i + nf - 1) % nf;
        next[i] = m[i] - a * (m[ip] - m[im]) + b * (m[ip] - 2.0 * m[i] + m[im]);
      }
    } else {
      const double c = v * dt / dx;  // |c| <= 1
      for (int i = 0; i < nf; ++i) {
        const int ip = (i + 1) % nf, im = (i + nf - 1) % nf;
        next[i] = c > 0.0 ? m[i] - c * (m[i] - m[im]) : m[i] - c * (m[ip] - m[i]);
      }
    }
    m.swap(next);
  }
  return coarsen_mass(m, d);
}

Eigen::VectorXd fd_oracle_burgers(const Eigen::VectorXd& rho0, double nu,
                                  double t_end) {
  const int d = int(rho0.size());
  if (d < 2) throw std::invalid_argument("fd_oracle_burgers: need at least two bins");
  if (nu <= 0.0) throw std::invalid_argument("fd_oracle_burgers: nu must be positive");
  if (t_end < 0.0) throw std::invalid_argument("fd_oracle_burgers: t_end must be >= 0");
  if (t_end == 0.0) return rho0;
  const int rf = std::max(1, (640 + d - 1) / d);
  Eigen::VectorXd m = refine_mass(rho0, rf);
  const int nf = int(m.size());
  const double dx = 2.0 / nf;
  // work in density units for the nonlinear flux
  Eigen::VectorXd rho = m / dx;
  double t = 0.0;
  Eigen::VectorXd flux(nf);
  while (t < t_end) {
    const double amax = std::max(1e-12, rho.cwiseAbs().maxCoeff());
    double dt = 0.4 * std::min(dx / amax, dx * dx / (2.0 * nu));
    dt = std::min(dt, t_end - t);
    // Rusanov flux for f = rho^2/2 at interface i+1/2
    for (int i = 0; i < nf; ++i) {
      const int ip = (i + 1) % nf;
      const double fl = 0.5 * rho[i] * rho[i];
      const double fr = 0.5 * rho[ip] * rho[ip];
      const double a = std::max(std::abs(rho[i]), std::abs(rho[ip]));
      flux[i] = 0.5 * (fl + fr) - 0.5 * a * (rho[ip] - rho[i]);
    }
    Eigen::VectorXd next(nf);
    for (int i = 0; i < nf; ++i) {
      const int ip = (i + 1) % nf, im = (i + nf - 1) % nf;
      next[i] = rho[i] - dt / dx * (flux[i] - flux[im]) +
                nu * dt / (dx * dx) * (rho[ip] - 2.0 * rho[i] + rho[im]);
    }
    rho.swap(next);
    t += dt;
  }
  return coarsen_mass(rho * dx, d);
}

}  // namespace slowgen
