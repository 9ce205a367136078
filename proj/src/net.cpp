#include "slowgen/net.hpp"

#include <cmath>
#include <stdexcept>

namespace slowgen {

namespace {
inline double sp(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sig(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace

double act_eval(Act a, double x) {
  switch (a) {
    case Act::identity: return x;
    case Act::relu: return x > 0.0 ? x : 0.0;
    case Act::softplus: return sp(x);
  }
  return x;
}

double act_grad(Act a, double x) {
  switch (a) {
    case Act::identity: return 1.0;
    case Act::relu: return x > 0.0 ? 1.0 : 0.0;
    case Act::softplus: return sig(x);
  }
  return 1.0;
}

int DenseNet::n_params() const {
  int n = 0;
  for (const auto& l : layers) n += int(l.W.size() + l.b.size());
  return n;
}

DenseNet DenseNet::make(const std::vector<int>& widths, Act hidden_act, Rng& rng,
                        double dropout) {
  if (widths.size() < 2) throw std::invalid_argument("DenseNet::make: need >= 2 widths");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("DenseNet::make: dropout must be in [0,1)");
  DenseNet net;
  net.dropout = dropout;
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseLayer l;
    const int in = widths[i], out = widths[i + 1];
    const bool last = (i + 2 == widths.size());
    const double r = std::sqrt(6.0 / double(in + out)) * (last ? 0.1 : 1.0);
    l.W.resize(out, in);
    for (int a = 0; a < out; ++a)
      for (int b = 0; b < in; ++b) l.W(a, b) = rng.uniform(-r, r);
    l.b = Eigen::VectorXd::Zero(out);
    l.act = (i + 2 < widths.size()) ? hidden_act : Act::identity;
    net.layers.push_back(std::move(l));
  }
  return net;
}

NetGrad NetGrad::zeros_like(const DenseNet& net) {
  NetGrad g;
  for (const auto& l : net.layers) {
    g.dW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
    g.db.push_back(Eigen::VectorXd::Zero(l.b.size()));
  }
  return g;
}

void NetGrad::set_zero() {
  for (auto& m : dW) m.setZero();
  for (auto& v : db) v.setZero();
}

Eigen::VectorXd net_forward(const DenseNet& net, const Eigen::VectorXd& x,
                            NetMode mode, Rng* rng, NetTape* tape) {
  if (net.layers.empty()) throw std::invalid_argument("net_forward: empty network");
  if (x.size() != net.in_dim())
    throw std::invalid_argument("net_forward: input dimension mismatch");
  if (tape) {
    tape->inputs.clear();
    tape->preact.clear();
    tape->mask.clear();
  }
  Eigen::VectorXd h = x;
  const bool drop = mode == NetMode::train && net.dropout > 0.0;
  if (drop && !rng) throw std::invalid_argument("net_forward: train-mode dropout needs rng");
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    if (tape) tape->inputs.push_back(h);
    Eigen::VectorXd z = l.W * h + l.b;
    if (tape) tape->preact.push_back(z);
    for (int k = 0; k < z.size(); ++k) z[k] = act_eval(l.act, z[k]);
    const bool hidden = i + 1 < net.layers.size();
    if (hidden && drop) {
      const double keep = 1.0 - net.dropout;
      Eigen::VectorXd m(z.size());
      for (int k = 0; k < z.size(); ++k)
        m[k] = (rng->uniform() < keep) ? 1.0 / keep : 0.0;
      z.array() *= m.array();
      if (tape) tape->mask.push_back(m);
    } else if (hidden && tape) {
      tape->mask.push_back(Eigen::VectorXd::Ones(z.size()));
    }
    h = std::move(z);
  }
  return h;
}

Eigen::VectorXd net_backward(const DenseNet& net, const NetTape& tape,
                             const Eigen::VectorXd& dy, NetGrad& grad) {
  const int L = int(net.layers.size());
  if (int(tape.inputs.size()) != L)
    throw std::invalid_argument("net_backward: tape does not match network");
  if (dy.size() != net.out_dim())
    throw std::invalid_argument("net_backward: output gradient shape mismatch");
  Eigen::VectorXd d = dy;
  for (int i = L - 1; i >= 0; --i) {
    const auto& l = net.layers[i];
    if (i + 1 < L) d.array() *= tape.mask[i].array();
    Eigen::VectorXd dz(d.size());
    for (int k = 0; k < d.size(); ++k)
      dz[k] = d[k] * act_grad(l.act, tape.preact[i][k]);
    grad.dW[i].noalias() += dz * tape.inputs[i].transpose();
    grad.db[i] += dz;
    d = l.W.transpose() * dz;
  }
  return d;
}

std::vector<ParamSpan> net_spans(DenseNet& net, NetGrad& grad,
                                 const std::string& prefix) {
  std::vector<ParamSpan> spans;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    spans.push_back({prefix + ".W" + std::to_string(i), net.layers[i].W.data(),
                     grad.dW[i].data(), int(net.layers[i].W.size())});
    spans.push_back({prefix + ".b" + std::to_string(i), net.layers[i].b.data(),
                     grad.db[i].data(), int(net.layers[i].b.size())});
  }
  return spans;
}

AdamState::AdamState(int n_params, AdamConfig cfg) : cfg_(cfg) {
  m_ = Eigen::VectorXd::Zero(n_params);
  v_ = Eigen::VectorXd::Zero(n_params);
}

void AdamState::step(const std::vector<ParamSpan>& spans) {
  int total = 0;
  for (const auto& s : spans) total += s.n;
  if (total != m_.size())
    throw std::runtime_error("AdamState::step: parameter count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  int off = 0;
  for (const auto& s : spans) {
    for (int k = 0; k < s.n; ++k) {
      const double g = s.g[k];
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient at parameter " + s.name +
                                 "[" + std::to_string(k) + "]");
      const int i = off + k;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      s.p[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    off += s.n;
  }
}

double grad_check(const std::function<double()>& f,
                  const std::vector<ParamSpan>& spans, double fd_step,
                  int max_probes, std::uint64_t probe_seed) {
  double worst = 0.0;
  Rng rng(probe_seed);
  for (const auto& s : spans) {
    std::vector<int> idx;
    if (max_probes > 0 && s.n > max_probes) {
      for (int k = 0; k < max_probes; ++k) idx.push_back(int(rng.below(s.n)));
    } else {
      idx.resize(s.n);
      for (int k = 0; k < s.n; ++k) idx[k] = k;
    }
    std::vector<double> fds, ans;
    for (int k : idx) {
      const double saved = s.p[k];
      s.p[k] = saved + fd_step;
      const double fp = f();
      s.p[k] = saved - fd_step;
      const double fm = f();
      s.p[k] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("grad_check: non-finite function value at " + s.name);
      fds.push_back((fp - fm) / (2.0 * fd_step));
      ans.push_back(s.g[k]);
    }
    double denom = 1e-8;
    for (size_t k = 0; k < fds.size(); ++k)
      denom = std::max({denom, std::abs(fds[k]), std::abs(ans[k])});
    for (size_t k = 0; k < fds.size(); ++k)
      worst = std::max(worst, std::abs(fds[k] - ans[k]) / denom);
  }
  return worst;
}

}  // namespace slowgen
