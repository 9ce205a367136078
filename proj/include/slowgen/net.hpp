#pragma once

#include <functional>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "slowgen/rng.hpp"

namespace slowgen {

enum class Act { identity, relu, softplus };

struct DenseLayer {
  Eigen::MatrixXd W;   // out x in
  Eigen::VectorXd b;   // out
  Act act = Act::identity;
};

// Plain feed-forward stack. Dropout (inverted scaling) is applied after each
// hidden activation in train mode; the output layer is never dropped.
struct DenseNet {
  std::vector<DenseLayer> layers;
  double dropout = 0.0;

  int in_dim() const { return layers.empty() ? 0 : int(layers.front().W.cols()); }
  int out_dim() const { return layers.empty() ? 0 : int(layers.back().W.rows()); }
  int n_params() const;

  // widths = {in, hidden..., out}; hidden layers get `hidden_act`, the output
  // layer is linear. Glorot-uniform weights, zero biases.
  static DenseNet make(const std::vector<int>& widths, Act hidden_act, Rng& rng,
                       double dropout = 0.0);
};

enum class NetMode { train, eval };

// Evaluation record; sufficient for exact reverse-mode gradients.
struct NetTape {
  std::vector<Eigen::VectorXd> inputs;   // input to each layer
  std::vector<Eigen::VectorXd> preact;   // W x + b per layer
  std::vector<Eigen::VectorXd> mask;     // dropout scale per hidden layer (may be empty)
};

struct NetGrad {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;

  static NetGrad zeros_like(const DenseNet& net);
  void set_zero();
};

Eigen::VectorXd net_forward(const DenseNet& net, const Eigen::VectorXd& x,
                            NetMode mode, Rng* rng, NetTape* tape = nullptr);

// Reverse pass for the recorded evaluation; accumulates parameter gradients
// into `grad` and returns the gradient with respect to the input.
Eigen::VectorXd net_backward(const DenseNet& net, const NetTape& tape,
                             const Eigen::VectorXd& dy, NetGrad& grad);

// Named flat view over a parameter array and its gradient twin.
struct ParamSpan {
  std::string name;
  double* p = nullptr;
  double* g = nullptr;
  int n = 0;
};

std::vector<ParamSpan> net_spans(DenseNet& net, NetGrad& grad,
                                 const std::string& prefix);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(int n_params, AdamConfig cfg);

  // Gradient-descent step over the concatenated spans (minimizes).
  // Throws std::runtime_error naming the parameter on non-finite gradients.
  void step(const std::vector<ParamSpan>& spans);

  int step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

// Central finite differences of `f` against the gradients stored in `spans`
// (caller fills them beforehand); returns the worst relative error. Probes at
// most `max_probes` coordinates per span when positive (deterministic choice).
double grad_check(const std::function<double()>& f,
                  const std::vector<ParamSpan>& spans, double fd_step,
                  int max_probes = 0, std::uint64_t probe_seed = 1234);

double act_eval(Act a, double x);
double act_grad(Act a, double x);   // derivative at preactivation x; relu'(0)=0

}  // namespace slowgen
