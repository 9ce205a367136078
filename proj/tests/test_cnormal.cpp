#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "slowgen/cnormal.hpp"

using namespace slowgen;
using cd = std::complex<double>;

namespace {

ComplexGaussian random_cn(int p, Rng& rng) {
  ComplexGaussian g;
  g.mean.resize(p);
  for (int i = 0; i < p; ++i) g.mean[i] = cd(rng.normal(), rng.normal());
  Eigen::MatrixXcd A(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) A(i, j) = cd(rng.normal(), rng.normal());
  g.cov = A * A.adjoint() + 0.2 * Eigen::MatrixXcd::Identity(p, p);
  return g;
}

}  // namespace

TEST_CASE("cn_to_real closed forms") {
  SUBCASE("CN(0,1) maps to N(0, I/2)") {
    RealGaussian r = cn_to_real(cn_standard(1));
    CHECK(r.dim() == 2);
    CHECK(r.mean.norm() == doctest::Approx(0.0));
    CHECK(r.cov(0, 0) == doctest::Approx(0.5));
    CHECK(r.cov(1, 1) == doctest::Approx(0.5));
    CHECK(r.cov(0, 1) == doctest::Approx(0.0));
  }
  SUBCASE("CN(1, 2) maps to N((1,0), I)") {
    ComplexGaussian g;
    g.mean = Eigen::VectorXcd::Constant(1, cd(1.0, 0.0));
    g.cov = Eigen::MatrixXcd::Constant(1, 1, cd(2.0, 0.0));
    RealGaussian r = cn_to_real(g);
    CHECK(r.mean[0] == doctest::Approx(1.0));
    CHECK(r.mean[1] == doctest::Approx(0.0));
    CHECK((r.cov - Eigen::MatrixXd::Identity(2, 2)).norm() ==
          doctest::Approx(0.0));
  }
  SUBCASE("p = 2 complex identity halves") {
    RealGaussian r = cn_to_real(cn_standard(2));
    CHECK((r.cov - 0.5 * Eigen::MatrixXd::Identity(4, 4)).norm() ==
          doctest::Approx(0.0));
  }
}

TEST_CASE("cn_logpdf closed forms") {
  ComplexGaussian g = cn_standard(1);
  Eigen::VectorXcd y0 = Eigen::VectorXcd::Zero(1);
  CHECK(cn_logpdf(g, y0) == doctest::Approx(-std::log(M_PI)).epsilon(1e-12));
  Eigen::VectorXcd y1 = Eigen::VectorXcd::Constant(1, cd(1.0, 1.0));
  CHECK(cn_logpdf(g, y1) ==
        doctest::Approx(-std::log(M_PI) - 2.0).epsilon(1e-12));

  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const int p = 1 + int(rng.below(4));
    ComplexGaussian gr = random_cn(p, rng);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(gr.cov);
    const double logdet = std::log(std::abs(lu.determinant()));
    CHECK(cn_logpdf(gr, gr.mean) ==
          doctest::Approx(-p * std::log(M_PI) - logdet).epsilon(1e-9));
  }
}

TEST_CASE("complex and real isomorphic logpdfs agree") {
  Rng rng(42);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int p = 1 + int(rng.below(4));
    ComplexGaussian g = random_cn(p, rng);
    Eigen::VectorXcd y(p);
    for (int i = 0; i < p; ++i) y[i] = cd(rng.normal(), rng.normal());
    RealGaussian r = cn_to_real(g);
    Eigen::VectorXd yr(2 * p);
    yr.head(p) = y.real();
    yr.tail(p) = y.imag();
    worst = std::max(worst, std::abs(cn_logpdf(g, y) - r.logpdf(yr)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("validation names the violated invariant") {
  ComplexGaussian g = cn_standard(2);
  g.cov(0, 1) = cd(0.3, 0.1);  // breaks Hermitian symmetry
  CHECK_THROWS_WITH_AS(g.validate(),
                       doctest::Contains("Hermitian"), std::invalid_argument);
  ComplexGaussian z = cn_standard(1);
  z.cov(0, 0) = 0.0;
  CHECK_THROWS_AS(z.validate(), std::invalid_argument);
}

TEST_CASE("sampling marginals and determinism") {
  ComplexGaussian g = cn_standard(1);
  Rng rng(7);
  const int n = 100000;
  double sr = 0, si = 0, s2r = 0, s2i = 0;
  for (int i = 0; i < n; ++i) {
    cd v = cn_sample(g, rng)[0];
    sr += v.real();
    si += v.imag();
    s2r += v.real() * v.real();
    s2i += v.imag() * v.imag();
  }
  const double vr = s2r / n - (sr / n) * (sr / n);
  const double vi = s2i / n - (si / n) * (si / n);
  CHECK(vr == doctest::Approx(0.5).epsilon(0.02));
  CHECK(vi == doctest::Approx(0.5).epsilon(0.02));

  Rng a(123), b(123);
  CHECK(cn_sample(g, a)[0] == cn_sample(g, b)[0]);
}
