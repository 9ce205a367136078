#include <complex>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slowgen/baselines.hpp"
#include "slowgen/checkpoint.hpp"
#include "slowgen/eval.hpp"
#include "slowgen/forecast.hpp"
#include "slowgen/particle_sim.hpp"
#include "slowgen/vi_engine.hpp"

using namespace slowgen;

namespace {

// flat JSON config files; CLI flags override
void apply_config_file(const std::string& path, CLI::App* cmd) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  nlohmann::json j;
  in >> j;
  for (auto it = j.begin(); it != j.end(); ++it) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + it.key());
    if (!opt) throw CLI::ValidationError("--config", "unknown key " + it.key());
    if (opt->count() > 0) continue;  // explicit flag wins
    std::string v = it.value().is_string() ? it.value().get<std::string>()
                                           : it.value().dump();
    opt->add_result(v);
    opt->run_callback();
  }
}

Eigen::VectorXi read_counts_file(const std::string& path, int d) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty counts file");
  std::stringstream ss(line);
  std::string cell;
  std::vector<int> vals;
  while (std::getline(ss, cell, ',')) vals.push_back(std::stoi(cell));
  if (d > 0 && int(vals.size()) != d)
    throw std::runtime_error("counts file: expected " + std::to_string(d) +
                             " bins, got " + std::to_string(vals.size()));
  Eigen::VectorXi c(int(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) c[int(i)] = vals[i];
  return c;
}

int run(int argc, char** argv) {
  CLI::App app{"slowgen: latent slow-dynamics learning for particle systems"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a particle dataset");
  SimConfig sc;
  int sim_d = 25;
  std::string sim_out;
  sim->add_option("--kind", sc.kind, "ad | burgers");
  sim->add_option("--f", sc.f);
  sim->add_option("--N", sc.N);
  sim->add_option("--T", sc.T);
  sim->add_option("--d", sim_d);
  sim->add_option("--seed", sc.seed);
  sim->add_option("--nu", sc.nu);
  sim->add_option("--out", sim_out)->required();

  // train
  auto* tr = app.add_subcommand("train", "fit a model by stochastic VI");
  std::string tr_data, tr_out, tr_model = "main", tr_curve, tr_config;
  TrainConfig tc;
  int tr_sequences = 0;
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--model", tr_model,
                 "main | real_latent | nn_x | koopman_prob | koopman_det");
  tr->add_option("--epochs", tc.epochs);
  tr->add_option("--batch", tc.batch);
  tr->add_option("--mc-samples", tc.mc_samples);
  tr->add_option("--lr", tc.adam.lr);
  tr->add_option("--weight-decay", tc.weight_decay);
  tr->add_option("--seed", tc.seed);
  tr->add_option("--chains", tc.h, "number of complex latent processes");
  tr->add_option("--sequences", tr_sequences, "train on the first N sequences only");
  tr->add_option("--curve", tr_curve, "per-epoch ELBO CSV");
  tr->add_option("--log-every", tc.log_every);
  tr->add_option("--config", tr_config, "flat JSON config; flags override");

  // predict
  auto* pr = app.add_subcommand("predict", "Monte Carlo forecast");
  std::string pr_ckpt, pr_out, pr_newic;
  int pr_seq = 0, pr_P = 40, pr_n = 100;
  std::uint64_t pr_seed = 0;
  pr->add_option("--checkpoint", pr_ckpt)->required();
  pr->add_option("--out", pr_out)->required();
  pr->add_option("--sequence", pr_seq);
  pr->add_option("--P", pr_P);
  pr->add_option("--n-samples", pr_n);
  pr->add_option("--seed", pr_seed);
  pr->add_option("--new-ic", pr_newic, "counts CSV file; forecast from t = 0");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "forecast vs ground truth stats");
  std::string ev_fc, ev_data, ev_out;
  int ev_seq = 0, ev_t0 = 0;
  ev->add_option("--forecast", ev_fc)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--sequence", ev_seq);
  ev->add_option("--t0", ev_t0, "ground-truth frame matching forecast frame 0");
  ev->add_option("--out", ev_out)->required();

  // sweep
  auto* sw = app.add_subcommand("sweep", "latent grid decode");
  std::string sw_ckpt, sw_out;
  int sw_j1 = 0, sw_j2 = 1, sw_n = 5;
  double sw_lo = -1.0, sw_hi = 1.0;
  sw->add_option("--checkpoint", sw_ckpt)->required();
  sw->add_option("--j1", sw_j1);
  sw->add_option("--j2", sw_j2);
  sw->add_option("--grid", sw_n, "points per axis (real line)");
  sw->add_option("--lo", sw_lo);
  sw->add_option("--hi", sw_hi);
  sw->add_option("--out", sw_out)->required();

  // spectrum
  auto* sp = app.add_subcommand("spectrum", "print lambda table or Koopman moduli");
  std::string sp_ckpt;
  sp->add_option("--checkpoint", sp_ckpt)->required();

  CLI11_PARSE(app, argc, argv);

  if (*sim) {
    if (sc.kind == "burgers") {
      SimConfig base = SimConfig::burgers_defaults();
      SimConfig user = sc;
      sc = base;
      sc.f = user.f;
      sc.N = user.N;
      sc.T = user.T;
      sc.seed = user.seed;
      sc.nu = user.nu;
    }
    CountTensor data =
        sc.kind == "burgers" ? simulate_burgers(sc, sim_d) : simulate_ad(sc, sim_d);
    data.save(sim_out);
    std::cout << "wrote " << sim_out << " (" << data.N << " x " << (data.T + 1)
              << " x " << data.d << ")\n";
    return 0;
  }

  if (*tr) {
    if (!tr_config.empty()) apply_config_file(tr_config, tr);
    CountTensor data = CountTensor::load(tr_data);
    if (tr_sequences > 0 && tr_sequences < data.N) {
      data.counts.resize(tr_sequences);
      if (!data.mask.empty()) data.mask.resize(tr_sequences);
      data.N = tr_sequences;
    }
    tc.curve_path = tr_curve;
    TrainedModel tm = train(data, kind_from_name(tr_model), tc);
    save_checkpoint(tm, tr_out);
    std::cout << "wrote " << tr_out << " after " << tm.curve.size()
              << " epochs, final elbo "
              << (tm.curve.empty() ? 0.0 : tm.curve.back().total()) << "\n";
    return 0;
  }

  if (*pr) {
    TrainedModel tm = load_checkpoint(pr_ckpt);
    ForecastEnsemble e;
    if (!pr_newic.empty()) {
      Eigen::VectorXi c0 = read_counts_file(pr_newic, tm.model.d);
      e = predict_from_new_ic(tm, c0, pr_P, pr_n, pr_seed);
    } else {
      e = predict(tm, pr_seq, pr_P, pr_n, pr_seed);
    }
    e.save(pr_out);
    std::cout << "wrote " << pr_out;
    if (e.diverged) std::cout << " (diverged at step " << e.diverge_step << ")";
    std::cout << "\n";
    return 0;
  }

  if (*ev) {
    ForecastEnsemble e = ForecastEnsemble::load(ev_fc);
    CountTensor truth = CountTensor::load(ev_data);
    evaluate_csv(e, truth, ev_seq, ev_t0, ev_out);
    std::cout << "wrote " << ev_out << "\n";
    return 0;
  }

  if (*sw) {
    TrainedModel tm = load_checkpoint(sw_ckpt);
    std::vector<std::complex<double>> grid;
    for (int i = 0; i < sw_n; ++i)
      grid.emplace_back(sw_lo + (sw_hi - sw_lo) * (sw_n == 1 ? 0.0 : double(i) / (sw_n - 1)),
                        0.0);
    auto densities = latent_sweep(tm.model, sw_j1, sw_j2, grid);
    std::ofstream out(sw_out);
    if (!out) throw std::runtime_error("cannot open " + sw_out);
    out << std::setprecision(17);
    for (const auto& rho : densities) {
      for (int k = 0; k < rho.size(); ++k) out << (k ? "," : "") << rho[k];
      out << '\n';
    }
    std::cout << "wrote " << sw_out << "\n";
    return 0;
  }

  if (*sp) {
    TrainedModel tm = load_checkpoint(sp_ckpt);
    const Model& m = tm.model;
    std::cout << std::setprecision(10);
    if (m.kind == ModelKind::main_model || m.kind == ModelKind::real_latent) {
      std::vector<int> idx(m.h);
      for (int j = 0; j < m.h; ++j) idx[j] = j;
      std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return m.prior.re_lambda(a) > m.prior.re_lambda(b);
      });
      std::cout << "j,re_lambda,im_lambda\n";
      for (int j : idx)
        std::cout << j << ',' << m.prior.re_lambda(j) << ','
                  << m.prior.im_lambda(j) << '\n';
    } else if (m.kind == ModelKind::koopman_prob ||
               m.kind == ModelKind::koopman_det) {
      Eigen::EigenSolver<Eigen::MatrixXd> es(m.koopman_K);
      std::vector<double> mods;
      for (int i = 0; i < m.h; ++i) mods.push_back(std::abs(es.eigenvalues()[i]));
      std::sort(mods.rbegin(), mods.rend());
      std::cout << "eig_modulus\n";
      for (double v : mods) std::cout << v << '\n';
      std::cout << "spectral_radius," << spectral_radius(m.koopman_K) << '\n';
    } else {
      std::cout << "nn_x: sigma," << std::exp(m.nnx_logsigma) << '\n';
    }
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
