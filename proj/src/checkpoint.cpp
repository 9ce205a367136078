#include "slowgen/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace slowgen {

namespace {

using nlohmann::json;

json dump_vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd load_vec(const json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[int(i)] = a[i].get<double>();
  return v;
}

json dump_mat(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd load_mat(const json& rows) {
  const int R = int(rows.size());
  const int C = R == 0 ? 0 : int(rows[0].size());
  Eigen::MatrixXd m(R, C);
  for (int r = 0; r < R; ++r) {
    if (int(rows[r].size()) != C)
      throw std::runtime_error("checkpoint: ragged matrix");
    for (int c = 0; c < C; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

std::string act_name(Act a) {
  switch (a) {
    case Act::identity: return "identity";
    case Act::relu: return "relu";
    case Act::softplus: return "softplus";
  }
  throw std::logic_error("act_name");
}

Act act_from(const std::string& s) {
  if (s == "identity") return Act::identity;
  if (s == "relu") return Act::relu;
  if (s == "softplus") return Act::softplus;
  throw std::runtime_error("checkpoint: unknown activation " + s);
}

json dump_net(const DenseNet& net) {
  json j;
  j["dropout"] = net.dropout;
  json layers = json::array();
  for (const auto& l : net.layers) {
    json lj;
    lj["W"] = dump_mat(l.W);
    lj["b"] = dump_vec(l.b);
    lj["act"] = act_name(l.act);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j;
}

DenseNet load_net(const json& j) {
  DenseNet net;
  net.dropout = j.at("dropout").get<double>();
  for (const auto& lj : j.at("layers")) {
    DenseLayer l;
    l.W = load_mat(lj.at("W"));
    l.b = load_vec(lj.at("b"));
    l.act = act_from(lj.at("act").get<std::string>());
    net.layers.push_back(std::move(l));
  }
  return net;
}

json dump_model(const Model& m) {
  json j;
  j["kind"] = kind_name(m.kind);
  j["h"] = m.h;
  j["d"] = m.d;
  switch (m.kind) {
    case ModelKind::main_model:
      j["prior_a"] = dump_vec(m.prior.raw_a());
      j["prior_im"] = dump_vec(m.prior.raw_im());
      break;
    case ModelKind::real_latent:
      j["prior_a"] = dump_vec(m.prior.raw_a());
      break;
    case ModelKind::koopman_prob:
      j["K"] = dump_mat(m.koopman_K);
      j["logw"] = dump_vec(m.koopman_logw);
      break;
    case ModelKind::koopman_det:
      j["K"] = dump_mat(m.koopman_K);
      break;
    case ModelKind::nn_x:
      j["xdyn"] = dump_net(m.xdyn);
      j["nnx_logsigma"] = m.nnx_logsigma;
      break;
  }
  if (m.has_decoder()) j["decoder"] = dump_net(m.decoder.net);
  return j;
}

Model load_model(const json& j) {
  Model m;
  m.kind = kind_from_name(j.at("kind").get<std::string>());
  m.h = j.at("h").get<int>();
  m.d = j.at("d").get<int>();
  switch (m.kind) {
    case ModelKind::main_model:
      m.prior = LatentPrior(load_vec(j.at("prior_a")), load_vec(j.at("prior_im")));
      break;
    case ModelKind::real_latent:
      m.prior = LatentPrior(load_vec(j.at("prior_a")),
                            Eigen::VectorXd::Zero(m.h));
      break;
    case ModelKind::koopman_prob:
      m.koopman_K = load_mat(j.at("K"));
      m.koopman_logw = load_vec(j.at("logw"));
      break;
    case ModelKind::koopman_det:
      m.koopman_K = load_mat(j.at("K"));
      break;
    case ModelKind::nn_x:
      m.xdyn = load_net(j.at("xdyn"));
      m.nnx_logsigma = j.at("nnx_logsigma").get<double>();
      break;
  }
  if (m.has_decoder()) {
    m.decoder.net = load_net(j.at("decoder"));
    m.decoder.d = m.d;
  }
  return m;
}

json dump_posterior(const SeqPosterior& p) {
  json j;
  j["x_mean"] = dump_mat(p.x_mean);
  j["x_logstd"] = dump_mat(p.x_logstd);
  json qz = json::array();
  for (const auto& net : p.qz) qz.push_back(dump_net(net));
  j["qz"] = std::move(qz);
  if (p.z0_mean.size() > 0) {
    j["z0_mean"] = dump_vec(p.z0_mean);
    j["z0_logstd"] = dump_vec(p.z0_logstd);
  }
  return j;
}

SeqPosterior load_posterior(const json& j) {
  SeqPosterior p;
  p.x_mean = load_mat(j.at("x_mean"));
  p.x_logstd = load_mat(j.at("x_logstd"));
  for (const auto& nj : j.at("qz")) p.qz.push_back(load_net(nj));
  if (j.contains("z0_mean")) {
    p.z0_mean = load_vec(j.at("z0_mean"));
    p.z0_logstd = load_vec(j.at("z0_logstd"));
  }
  return p;
}

}  // namespace

std::string checkpoint_to_string(const TrainedModel& tm) {
  json j;
  j["version"] = 1;
  j["data_kind"] = tm.data_kind;
  j["f"] = tm.f;
  j["model"] = dump_model(tm.model);
  json posts = json::array();
  for (const auto& p : tm.posteriors) posts.push_back(dump_posterior(p));
  j["posteriors"] = std::move(posts);
  j["seq_times"] = tm.seq_times;
  json curve = json::array();
  for (const auto& t : tm.curve)
    curve.push_back({t.obs, t.gen, t.prior, t.entropy});
  j["curve"] = std::move(curve);
  json cj;
  cj["epochs"] = tm.config.epochs;
  cj["batch"] = tm.config.batch;
  cj["mc_samples"] = tm.config.mc_samples;
  cj["lr"] = tm.config.adam.lr;
  cj["lr_final"] = tm.config.lr_final;
  cj["weight_decay"] = tm.config.weight_decay;
  cj["seed"] = tm.config.seed;
  cj["h"] = tm.config.h;
  j["config"] = std::move(cj);
  return j.dump();
}

TrainedModel checkpoint_from_string(const std::string& text) {
  json j = json::parse(text);
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("checkpoint: unsupported version");
  TrainedModel tm;
  tm.data_kind = j.at("data_kind").get<std::string>();
  tm.f = j.at("f").get<long long>();
  tm.model = load_model(j.at("model"));
  for (const auto& pj : j.at("posteriors"))
    tm.posteriors.push_back(load_posterior(pj));
  tm.seq_times = j.at("seq_times").get<std::vector<std::vector<int>>>();
  for (const auto& cj : j.at("curve")) {
    ElboTerms t;
    t.obs = cj[0].get<double>();
    t.gen = cj[1].get<double>();
    t.prior = cj[2].get<double>();
    t.entropy = cj[3].get<double>();
    tm.curve.push_back(t);
  }
  const json& cj = j.at("config");
  tm.config.epochs = cj.at("epochs").get<int>();
  tm.config.batch = cj.at("batch").get<int>();
  tm.config.mc_samples = cj.at("mc_samples").get<int>();
  tm.config.adam.lr = cj.at("lr").get<double>();
  tm.config.lr_final = cj.at("lr_final").get<double>();
  tm.config.weight_decay = cj.at("weight_decay").get<double>();
  tm.config.seed = cj.at("seed").get<std::uint64_t>();
  tm.config.h = cj.at("h").get<int>();
  return tm;
}

void save_checkpoint(const TrainedModel& tm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << checkpoint_to_string(tm) << '\n';
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace slowgen
