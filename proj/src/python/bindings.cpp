#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "slowgen/baselines.hpp"
#include "slowgen/checkpoint.hpp"
#include "slowgen/eval.hpp"
#include "slowgen/forecast.hpp"
#include "slowgen/particle_sim.hpp"
#include "slowgen/vi_engine.hpp"

namespace py = pybind11;
using namespace slowgen;

namespace {

CountTensor py_simulate(const std::string& kind, long long f, int N, int T,
                        int d, std::uint64_t seed, double nu) {
  SimConfig cfg = kind == "burgers" ? SimConfig::burgers_defaults() : SimConfig();
  cfg.kind = kind;
  cfg.f = f;
  cfg.N = N;
  cfg.T = T;
  cfg.seed = seed;
  if (nu > 0.0) cfg.nu = nu;
  return kind == "burgers" ? simulate_burgers(cfg, d) : simulate_ad(cfg, d);
}

TrainedModel py_train(const CountTensor& data, const std::string& kind,
                      int epochs, int batch, int h, double lr,
                      std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch = batch;
  cfg.h = h;
  cfg.adam.lr = lr;
  cfg.seed = seed;
  return train(data, kind_from_name(kind), cfg);
}

py::dict ensemble_dict(const ForecastEnsemble& e) {
  py::dict out;
  out["mean"] = e.mean();
  out["std"] = e.stddev();
  out["q05"] = e.quantile(0.05);
  out["q95"] = e.quantile(0.95);
  out["diverged"] = e.diverged;
  out["diverge_step"] = e.diverge_step;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "probabilistic model reduction of particle simulations";

  py::class_<CountTensor>(m, "CountTensor")
      .def_readonly("N", &CountTensor::N)
      .def_readonly("T", &CountTensor::T)
      .def_readonly("d", &CountTensor::d)
      .def_readonly("f", &CountTensor::f)
      .def_readonly("kind", &CountTensor::kind)
      .def("counts", [](const CountTensor& c, int i) { return c.counts.at(i); })
      .def("save", &CountTensor::save)
      .def_static("load", &CountTensor::load);

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_property_readonly("kind",
                             [](const TrainedModel& t) { return kind_name(t.model.kind); })
      .def_property_readonly("h", [](const TrainedModel& t) { return t.model.h; })
      .def_property_readonly(
          "re_lambda",
          [](const TrainedModel& t) {
            std::vector<double> out;
            for (int j = 0; j < t.model.prior.h(); ++j)
              out.push_back(t.model.prior.re_lambda(j));
            return out;
          })
      .def_property_readonly(
          "elbo_curve",
          [](const TrainedModel& t) {
            std::vector<double> out;
            for (const auto& e : t.curve) out.push_back(e.total());
            return out;
          })
      .def("save", &save_checkpoint)
      .def_static("load", &load_checkpoint);

  m.def("simulate", &py_simulate, py::arg("kind"), py::arg("f"), py::arg("N"),
        py::arg("T"), py::arg("d"), py::arg("seed") = 0, py::arg("nu") = 0.0);
  m.def("train", &py_train, py::arg("data"), py::arg("kind") = "main",
        py::arg("epochs") = 3000, py::arg("batch") = 16, py::arg("h") = 5,
        py::arg("lr") = 1e-3, py::arg("seed") = 0);
  m.def(
      "predict",
      [](const TrainedModel& tm, int seq, int P, int n, std::uint64_t seed) {
        return ensemble_dict(predict(tm, seq, P, n, seed));
      },
      py::arg("model"), py::arg("sequence"), py::arg("P"),
      py::arg("n_samples") = 100, py::arg("seed") = 0);
  m.def(
      "predict_from_new_ic",
      [](const TrainedModel& tm, const Eigen::VectorXi& counts0, int P, int n,
         std::uint64_t seed) {
        return ensemble_dict(predict_from_new_ic(tm, counts0, P, n, seed));
      },
      py::arg("model"), py::arg("counts0"), py::arg("P"),
      py::arg("n_samples") = 100, py::arg("seed") = 0);
  m.def("two_point",
        [](const Eigen::VectorXi& counts) { return two_point(counts); },
        py::arg("counts"));
  m.def("spectral_radius",
        [](const Eigen::MatrixXd& K) { return spectral_radius(K); },
        py::arg("K"));
  m.def("fd_oracle_ad", &fd_oracle_ad, py::arg("rho0"), py::arg("D"),
        py::arg("v"), py::arg("t_end"));
  m.def("fd_oracle_burgers", &fd_oracle_burgers, py::arg("rho0"),
        py::arg("nu"), py::arg("t_end"));
}
