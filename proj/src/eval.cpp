#include "slowgen/eval.hpp"

#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace slowgen {

DensityStats density_stats(const ForecastEnsemble& e) {
  if (e.density.empty()) throw std::invalid_argument("density_stats: empty ensemble");
  DensityStats s;
  s.mean = e.mean();
  s.std = e.stddev();
  s.q05 = e.quantile(0.05);
  s.q95 = e.quantile(0.95);
  return s;
}

Eigen::MatrixXd two_point(const Eigen::VectorXi& counts) {
  const int d = int(counts.size());
  long long f = 0;
  for (int k = 0; k < d; ++k) {
    if (counts[k] < 0) throw std::invalid_argument("two_point: negative count");
    f += counts[k];
  }
  if (f < 2) throw std::invalid_argument("two_point: need at least two particles");
  const double denom = double(f) * double(f - 1);
  Eigen::MatrixXd P(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      P(a, b) = a == b ? double(counts[a]) * (counts[a] - 1.0) / denom
                       : double(counts[a]) * counts[b] / denom;
  return P;
}

Eigen::MatrixXd two_point(const ForecastEnsemble& e, int frame) {
  if (frame < 0 || frame > e.P) throw std::out_of_range("two_point: frame");
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(e.d, e.d);
  for (const auto& s : e.density) {
    Eigen::VectorXd p = s.row(frame).transpose();
    P += p * p.transpose();
  }
  return P / double(e.n_samples);
}

std::vector<Eigen::VectorXd> latent_sweep(
    const Model& m, int j1, int j2,
    const std::vector<std::complex<double>>& grid) {
  if (!m.has_decoder())
    throw std::invalid_argument("latent_sweep: model has no decoder");
  if (j1 == j2 || j1 < 0 || j2 < 0 || j1 >= m.h || j2 >= m.h)
    throw std::invalid_argument("latent_sweep: bad process indices");
  const int c = m.comp();
  std::vector<Eigen::VectorXd> out;
  out.reserve(grid.size() * grid.size());
  for (const auto& g1 : grid)
    for (const auto& g2 : grid) {
      Eigen::VectorXd coords = Eigen::VectorXd::Zero(m.latent_dim());
      if (c == 2) {
        coords[2 * j1] = g1.real();
        coords[2 * j1 + 1] = g1.imag();
        coords[2 * j2] = g2.real();
        coords[2 * j2 + 1] = g2.imag();
      } else {
        coords[j1] = g1.real();
        coords[j2] = g2.real();
      }
      DecodeResult dec = decode(m.decoder, coords, NetMode::eval, nullptr);
      out.push_back(density_from_X(dec.mean));
    }
  return out;
}

double l1_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("l1_distance: size mismatch");
  return (a - b).cwiseAbs().sum();
}

Eigen::VectorXd frame_density(const CountTensor& data, int i, int t) {
  if (i < 0 || i >= data.N || t < 0 || t > data.T)
    throw std::out_of_range("frame_density: index");
  return data.counts[i].row(t).cast<double>().transpose() / double(data.f);
}

void evaluate_csv(const ForecastEnsemble& e, const CountTensor& truth, int i,
                  int t0, const std::string& path) {
  if (t0 < 0 || t0 > truth.T) throw std::invalid_argument("evaluate_csv: bad t0");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17);
  out << "frame,t,density_l1,two_point_l1\n";
  Eigen::MatrixXd mean = e.mean();
  for (int p = 0; p <= e.P; ++p) {
    const int t = t0 + p;
    if (t > truth.T) break;
    if (!truth.frame_present(i, t)) continue;
    const double dl1 =
        l1_distance(mean.row(p).transpose(), frame_density(truth, i, t));
    Eigen::MatrixXd tp_model = two_point(e, p);
    Eigen::MatrixXd tp_truth =
        two_point(Eigen::VectorXi(truth.counts[i].row(t).transpose()));
    const double tl1 = (tp_model - tp_truth).cwiseAbs().sum();
    out << p << ',' << t << ',' << dl1 << ',' << tl1 << '\n';
  }
}

}  // namespace slowgen
