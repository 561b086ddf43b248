#include "poolflip/learner.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace poolflip {

// ---------------------------------------------------------------------------
// Network

NetworkParams::NetworkParams(NetworkShape shape) : shape_(std::move(shape)) {
  if (shape_.obs_dim < 1 || shape_.action_dim < 1)
    throw ConfigError("network dimensions must be >= 1");
  if (shape_.hidden.empty()) throw ConfigError("network needs at least one hidden layer");
  for (int h : shape_.hidden)
    if (h < 1) throw ConfigError("hidden layer widths must be >= 1");

  std::size_t offset = 0;
  auto add = [&](int in, int out) {
    layers_.push_back({in, out, offset});
    offset += static_cast<std::size_t>(in) * out + out;
  };
  auto tower = [&] {
    int in = shape_.obs_dim;
    for (int h : shape_.hidden) {
      add(in, h);
      in = h;
    }
    return in;
  };
  const int top = tower();
  add(top, shape_.action_dim);
  if (!shape_.shared_trunk) tower();
  add(top, 1);
  values_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

NetworkParams::MatrixMap NetworkParams::weight(int layer) {
  const Layer& l = layers_.at(layer);
  return {values_.data() + l.offset, l.out, l.in};
}

NetworkParams::ConstMatrixMap NetworkParams::weight(int layer) const {
  const Layer& l = layers_.at(layer);
  return {values_.data() + l.offset, l.out, l.in};
}

NetworkParams::VectorMap NetworkParams::bias(int layer) {
  const Layer& l = layers_.at(layer);
  return {values_.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out};
}

NetworkParams::ConstVectorMap NetworkParams::bias(int layer) const {
  const Layer& l = layers_.at(layer);
  return {values_.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out};
}

void NetworkParams::round_to_float() {
  for (double& v : values_) v = static_cast<double>(static_cast<float>(v));
}

NetworkParams init_network(const NetworkShape& shape, std::uint64_t seed) {
  NetworkParams params(shape);
  Rng rng(derive_seed(seed, {hash_string("init")}));
  auto fill = [&](int layer, double scale) {
    const double limit = scale * std::sqrt(6.0 / (params.layer_in(layer) + params.layer_out(layer)));
    auto w = params.weight(layer);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
  };
  for (int i = 0; i < params.depth(); ++i) fill(params.policy_hidden(i), 1.0);
  fill(params.policy_head(), 0.01);
  if (!shape.shared_trunk)
    for (int i = 0; i < params.depth(); ++i) fill(params.value_hidden(i), 1.0);
  fill(params.value_head(), 0.01);
  return params;
}

namespace {

template <typename Input>
void run_tower(const NetworkParams& p, const Input& obs, bool value_tower,
               std::vector<Eigen::MatrixXd>& out) {
  out.resize(p.depth());
  for (int i = 0; i < p.depth(); ++i) {
    const int layer = value_tower ? p.value_hidden(i) : p.policy_hidden(i);
    auto w = p.weight(layer);
    if (i == 0)
      out[i].noalias() = obs * w.transpose();
    else
      out[i].noalias() = out[i - 1] * w.transpose();
    out[i].rowwise() += p.bias(layer).transpose();
    out[i] = out[i].array().tanh().matrix();
  }
}

void backprop_tower(const NetworkParams& p, const Eigen::Ref<const RowMatrix>& obs,
                    const std::vector<Eigen::MatrixXd>& acts, bool value_tower,
                    Eigen::MatrixXd d_top, Eigen::VectorXd& grad) {
  for (int i = p.depth() - 1; i >= 0; --i) {
    const int layer = value_tower ? p.value_hidden(i) : p.policy_hidden(i);
    const Eigen::MatrixXd dz = (d_top.array() * (1.0 - acts[i].array().square())).matrix();
    const int in = p.layer_in(layer);
    const int out = p.layer_out(layer);
    double* base = grad.data() + p.layer_offset(layer);
    Eigen::Map<RowMatrix> gw(base, out, in);
    Eigen::Map<Eigen::VectorXd> gb(base + static_cast<std::size_t>(in) * out, out);
    if (i == 0)
      gw.noalias() += dz.transpose() * obs;
    else
      gw.noalias() += dz.transpose() * acts[i - 1];
    gb += dz.colwise().sum().transpose();
    if (i > 0) d_top.noalias() = dz * p.weight(layer);
  }
}

void head_backward(const NetworkParams& p, int layer, const Eigen::MatrixXd& input,
                   const Eigen::MatrixXd& d_out, Eigen::VectorXd& grad) {
  const int in = p.layer_in(layer);
  const int out = p.layer_out(layer);
  double* base = grad.data() + p.layer_offset(layer);
  Eigen::Map<RowMatrix> gw(base, out, in);
  Eigen::Map<Eigen::VectorXd> gb(base + static_cast<std::size_t>(in) * out, out);
  gw.noalias() += d_out.transpose() * input;
  gb += d_out.colwise().sum().transpose();
}

}  // namespace

void forward(const NetworkParams& p, const Eigen::Ref<const RowMatrix>& obs, ForwardCache& cache) {
  if (obs.cols() != p.shape().obs_dim)
    throw std::invalid_argument("observation width " + std::to_string(obs.cols()) +
                                " != network input " + std::to_string(p.shape().obs_dim));
  run_tower(p, obs, false, cache.policy_hidden);
  const Eigen::MatrixXd& top = cache.policy_hidden.back();

  Eigen::MatrixXd logits = top * p.weight(p.policy_head()).transpose();
  logits.rowwise() += p.bias(p.policy_head()).transpose();
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  logits.colwise() -= row_max;
  const Eigen::VectorXd lse = logits.array().exp().rowwise().sum().log().matrix();
  logits.colwise() -= lse;
  cache.log_probs = std::move(logits);
  cache.probs = cache.log_probs.array().exp().matrix();

  const Eigen::MatrixXd* vtop = &top;
  if (!p.shape().shared_trunk) {
    run_tower(p, obs, true, cache.value_hidden);
    vtop = &cache.value_hidden.back();
  } else {
    cache.value_hidden.clear();
  }
  cache.values = (*vtop) * p.weight(p.value_head()).row(0).transpose();
  cache.values.array() += p.bias(p.value_head())(0);
}

void backward(const NetworkParams& p, const Eigen::Ref<const RowMatrix>& obs,
              const ForwardCache& cache, const Eigen::MatrixXd& d_logits,
              const Eigen::VectorXd& d_values, Eigen::VectorXd& grad) {
  if (grad.size() != static_cast<Eigen::Index>(p.size()))
    throw std::invalid_argument("gradient size mismatch");
  const Eigen::MatrixXd& top = cache.policy_hidden.back();
  const bool shared = p.shape().shared_trunk;
  const Eigen::MatrixXd& vtop = shared ? top : cache.value_hidden.back();

  head_backward(p, p.policy_head(), top, d_logits, grad);
  const Eigen::MatrixXd dv = d_values;  // N x 1
  head_backward(p, p.value_head(), vtop, dv, grad);

  Eigen::MatrixXd d_top = d_logits * p.weight(p.policy_head());
  const Eigen::MatrixXd d_vtop = dv * p.weight(p.value_head());
  if (shared) {
    d_top += d_vtop;
    backprop_tower(p, obs, cache.policy_hidden, false, std::move(d_top), grad);
  } else {
    backprop_tower(p, obs, cache.policy_hidden, false, std::move(d_top), grad);
    backprop_tower(p, obs, cache.value_hidden, true, d_vtop, grad);
  }
}

namespace {

// Single-observation pass used while acting; avoids the batch cache.
void forward_one(const NetworkParams& p, const double* obs, Eigen::VectorXd& log_probs,
                 double& value, Eigen::VectorXd& scratch_a, Eigen::VectorXd& scratch_b) {
  const Eigen::Map<const Eigen::VectorXd> x(obs, p.shape().obs_dim);
  auto tower = [&](bool value_tower, Eigen::VectorXd& h, Eigen::VectorXd& tmp) {
    for (int i = 0; i < p.depth(); ++i) {
      const int layer = value_tower ? p.value_hidden(i) : p.policy_hidden(i);
      if (i == 0)
        tmp.noalias() = p.weight(layer) * x;
      else
        tmp.noalias() = p.weight(layer) * h;
      tmp += p.bias(layer);
      h = tmp.array().tanh().matrix();
    }
  };
  Eigen::VectorXd& h = scratch_a;
  tower(false, h, scratch_b);
  log_probs.noalias() = p.weight(p.policy_head()) * h;
  log_probs += p.bias(p.policy_head());
  log_probs.array() -= log_probs.maxCoeff();
  log_probs.array() -= std::log(log_probs.array().exp().sum());
  if (!p.shape().shared_trunk) tower(true, h, scratch_b);
  value = p.weight(p.value_head()).row(0).dot(h) + p.bias(p.value_head())(0);
}

}  // namespace

PolicyOutput policy_forward(const NetworkParams& params, std::span<const double> observation) {
  if (static_cast<int>(observation.size()) != params.shape().obs_dim)
    throw std::invalid_argument("observation length " + std::to_string(observation.size()) +
                                " != network input " + std::to_string(params.shape().obs_dim));
  Eigen::VectorXd lp, a, b;
  PolicyOutput out;
  forward_one(params, observation.data(), lp, out.value, a, b);
  out.probs.resize(lp.size());
  for (Eigen::Index i = 0; i < lp.size(); ++i) out.probs[i] = std::exp(lp(i));
  return out;
}

// ---------------------------------------------------------------------------
// Training configuration

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must be in (0, 1]");
  if (!(clip_epsilon > 0.0)) fail("clip_epsilon must be > 0");
  if (epochs_per_update < 1) fail("epochs_per_update must be >= 1");
  if (episodes_per_update < 1) fail("episodes_per_update must be >= 1");
  if (minibatch_size < 1) fail("minibatch_size must be >= 1");
  if (total_epochs < 1) fail("total_epochs must be >= 1");
  if (episodes_per_epoch < 1) fail("episodes_per_epoch must be >= 1");
  if (!(value_coef >= 0.0)) fail("value_coef must be >= 0");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef must be >= 0");
  if (!(max_grad_norm >= 0.0)) fail("max_grad_norm must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
  if (hidden.empty()) fail("hidden must list at least one layer width");
  for (int h : hidden)
    if (h < 1) fail("hidden widths must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_epsilon", c.clip_epsilon},
          {"epochs_per_update", c.epochs_per_update},
          {"episodes_per_update", c.episodes_per_update},
          {"minibatch_size", c.minibatch_size},
          {"value_coef", c.value_coef},
          {"entropy_coef", c.entropy_coef},
          {"max_grad_norm", c.max_grad_norm},
          {"normalize_advantages", c.normalize_advantages},
          {"hidden", c.hidden},
          {"shared_trunk", c.shared_trunk},
          {"total_epochs", c.total_epochs},
          {"episodes_per_epoch", c.episodes_per_epoch},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "gae_lambda") c.gae_lambda = v.get<double>();
      else if (key == "clip_epsilon") c.clip_epsilon = v.get<double>();
      else if (key == "epochs_per_update") c.epochs_per_update = v.get<int>();
      else if (key == "episodes_per_update") c.episodes_per_update = v.get<int>();
      else if (key == "minibatch_size") c.minibatch_size = v.get<int>();
      else if (key == "value_coef") c.value_coef = v.get<double>();
      else if (key == "entropy_coef") c.entropy_coef = v.get<double>();
      else if (key == "max_grad_norm") c.max_grad_norm = v.get<double>();
      else if (key == "normalize_advantages") c.normalize_advantages = v.get<bool>();
      else if (key == "hidden") c.hidden = v.get<std::vector<int>>();
      else if (key == "shared_trunk") c.shared_trunk = v.get<bool>();
      else if (key == "total_epochs") c.total_epochs = v.get<int>();
      else if (key == "episodes_per_epoch") c.episodes_per_epoch = v.get<int>();
      else if (key == "adam_beta1") c.adam_beta1 = v.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = v.get<double>();
      else if (key == "adam_epsilon") c.adam_epsilon = v.get<double>();
      else throw ConfigError("train config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("train config: bad value for '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Rollouts

void Trajectory::clear() {
  observations.clear();
  actions.clear();
  log_probs.clear();
  values.clear();
}

void RolloutBuffer::add(std::span<const double> observation, int action, double log_prob,
                        double value, double reward, bool episode_end) {
  if (static_cast<int>(observation.size()) != obs_dim_)
    throw std::invalid_argument("rollout observation has wrong length");
  observations_.insert(observations_.end(), observation.begin(), observation.end());
  actions_.push_back(action);
  log_probs_.push_back(log_prob);
  values_.push_back(value);
  rewards_.push_back(reward);
  episode_ends_.push_back(episode_end);
  if (episode_end) ++episodes_;
}

void RolloutBuffer::add_episode(const Trajectory& t, std::span<const double> rewards) {
  const std::size_t n = t.steps();
  if (n == 0) throw std::invalid_argument("empty trajectory");
  if (rewards.size() != n || t.log_probs.size() != n || t.values.size() != n ||
      t.observations.size() != n * static_cast<std::size_t>(obs_dim_))
    throw std::invalid_argument("trajectory sequences have inconsistent lengths");
  observations_.insert(observations_.end(), t.observations.begin(), t.observations.end());
  actions_.insert(actions_.end(), t.actions.begin(), t.actions.end());
  log_probs_.insert(log_probs_.end(), t.log_probs.begin(), t.log_probs.end());
  values_.insert(values_.end(), t.values.begin(), t.values.end());
  rewards_.insert(rewards_.end(), rewards.begin(), rewards.end());
  episode_ends_.insert(episode_ends_.end(), n - 1, false);
  episode_ends_.push_back(true);
  ++episodes_;
}

void RolloutBuffer::clear() {
  episodes_ = 0;
  observations_.clear();
  actions_.clear();
  log_probs_.clear();
  values_.clear();
  rewards_.clear();
  episode_ends_.clear();
}

Advantages compute_advantages(const RolloutBuffer& buffer, double gamma, double lambda) {
  const std::size_t n = buffer.size();
  if (n == 0) throw std::invalid_argument("compute_advantages: empty buffer");
  if (!buffer.episode_ends().back())
    throw std::invalid_argument("compute_advantages: buffer ends inside an episode");
  const auto rewards = buffer.rewards();
  const auto values = buffer.values();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double gae = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const bool last = buffer.episode_ends()[k];
    const double next_value = last ? 0.0 : values[k + 1];
    if (last) gae = 0.0;
    const double delta = rewards[k] + gamma * next_value - values[k];
    gae = delta + gamma * lambda * gae;
    out.advantages[k] = gae;
    out.returns[k] = gae + values[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// PPO objective

LossStats ppo_loss(const NetworkParams& params, const PpoBatch& batch, const TrainConfig& config,
                   Eigen::VectorXd* grad) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw std::invalid_argument("ppo_loss: empty batch");
  ForwardCache cache;
  forward(params, batch.observations, cache);
  const Eigen::Index a_dim = cache.probs.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double eps = config.clip_epsilon;

  LossStats s;
  Eigen::MatrixXd d_logits;
  Eigen::VectorXd d_values;
  if (grad) {
    d_logits.setZero(n, a_dim);
    d_values.setZero(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = batch.actions[i];
    if (a < 0 || a >= a_dim) throw std::invalid_argument("ppo_loss: action out of range");
    const double logp = cache.log_probs(i, a);
    const double log_ratio = logp - batch.old_log_probs[i];
    const double ratio = std::exp(log_ratio);
    const double adv = batch.advantages[i];
    const double surr1 = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    const double surr2 = clipped * adv;
    s.policy_loss -= std::min(surr1, surr2) * inv_n;
    s.approx_kl -= log_ratio * inv_n;
    if (std::abs(ratio - 1.0) > eps) s.clip_fraction += inv_n;

    double entropy = 0.0;
    for (Eigen::Index j = 0; j < a_dim; ++j) entropy -= cache.probs(i, j) * cache.log_probs(i, j);
    s.entropy += entropy * inv_n;

    const double err = cache.values(i) - batch.returns[i];
    s.value_loss += err * err * inv_n;

    if (grad) {
      // d(-min(surr1, surr2))/d(logp); zero when the clipped branch is active.
      const double d_logp = surr1 <= surr2 ? -surr1 * inv_n : 0.0;
      for (Eigen::Index j = 0; j < a_dim; ++j) {
        const double p = cache.probs(i, j);
        double g = d_logp * ((j == a ? 1.0 : 0.0) - p);
        // d(-c H)/d(logit_j) = c p_j (log p_j + H)
        g += config.entropy_coef * inv_n * p * (cache.log_probs(i, j) + entropy);
        d_logits(i, j) = g;
      }
      d_values(i) = 2.0 * config.value_coef * err * inv_n;
    }
  }
  s.total = s.policy_loss + config.value_coef * s.value_loss - config.entropy_coef * s.entropy;
  if (grad) {
    grad->setZero(static_cast<Eigen::Index>(params.size()));
    backward(params, batch.observations, cache, d_logits, d_values, *grad);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Optimizer

AdamOptimizer::AdamOptimizer(std::size_t size, double lr, double beta1, double beta2,
                             double epsilon)
    : lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))) {}

void AdamOptimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("adam: size mismatch");
  ++steps_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon_);
}

void AdamOptimizer::restore(long steps, Eigen::VectorXd m, Eigen::VectorXd v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw std::invalid_argument("adam: restored moments have the wrong size");
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

UpdateStats ppo_update(NetworkParams& params, AdamOptimizer& optimizer,
                       const RolloutBuffer& buffer, const TrainConfig& config,
                       std::uint64_t shuffle_seed) {
  if (buffer.empty()) throw std::invalid_argument("ppo_update: empty buffer");
  Advantages adv = compute_advantages(buffer, config.gamma, config.gae_lambda);
  const std::size_t n = buffer.size();
  if (config.normalize_advantages && n > 1) {
    const double mean = std::accumulate(adv.advantages.begin(), adv.advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double a : adv.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    for (double& a : adv.advantages) a = (a - mean) / (sd + 1e-8);
  }

  const NetworkParams backup = params;
  const AdamOptimizer opt_backup = optimizer;
  auto abort = [&](const std::string& why, int pass, std::size_t start, const LossStats& s) {
    params = backup;
    optimizer = opt_backup;
    std::ostringstream os;
    os << "ppo_update aborted: " << why << " (pass " << pass << ", minibatch at " << start
       << ", policy_loss=" << s.policy_loss << ", value_loss=" << s.value_loss
       << ", entropy=" << s.entropy << ")";
    throw TrainingError(os.str());
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(shuffle_seed);
  const auto obs = buffer.observations();
  const std::size_t mb = static_cast<std::size_t>(config.minibatch_size);

  UpdateStats stats;
  PpoBatch batch;
  Eigen::VectorXd grad;
  bool first = true;
  for (int pass = 0; pass < config.epochs_per_update; ++pass) {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t m = std::min(mb, n - start);
      batch.observations.resize(static_cast<Eigen::Index>(m), buffer.obs_dim());
      batch.actions.resize(m);
      batch.old_log_probs.resize(m);
      batch.advantages.resize(m);
      batch.returns.resize(m);
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t src = order[start + k];
        batch.observations.row(static_cast<Eigen::Index>(k)) = obs.row(static_cast<Eigen::Index>(src));
        batch.actions[k] = buffer.actions()[src];
        batch.old_log_probs[k] = buffer.log_probs()[src];
        batch.advantages[k] = adv.advantages[src];
        batch.returns[k] = adv.returns[src];
      }
      const LossStats s = ppo_loss(params, batch, config, &grad);
      if (!std::isfinite(s.total)) abort("non-finite loss", pass, start, s);
      if (!grad.allFinite()) abort("non-finite gradient", pass, start, s);
      double norm = grad.norm();
      if (config.max_grad_norm > 0.0 && norm > config.max_grad_norm)
        grad *= config.max_grad_norm / norm;
      optimizer.step(params.values(), grad);
      if (!params.all_finite()) abort("non-finite parameters", pass, start, s);
      if (first) stats.first = s;
      first = false;
      stats.last = s;
      stats.grad_norm = norm;
      ++stats.optimizer_steps;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Acting

NeuralPolicy::NeuralPolicy(std::shared_ptr<const NetworkParams> params, int memory_limit,
                           Mode mode, std::string id)
    : params_(std::move(params)), memory_limit_(memory_limit), mode_(mode), id_(std::move(id)) {
  if (!params_) throw std::invalid_argument("NeuralPolicy: null parameters");
}

Action NeuralPolicy::act(const PlayerView& view) {
  const NetworkParams& p = *params_;
  if (view.config.observation_size() != p.shape().obs_dim ||
      view.config.num_actions() != p.shape().action_dim || view.config.memory_limit != memory_limit_)
    throw std::invalid_argument("NeuralPolicy: network does not match the game configuration");
  obs_.resize(static_cast<std::size_t>(p.shape().obs_dim));
  encode_observation(view.knowledge, view.step, memory_limit_, obs_);

  thread_local Eigen::VectorXd log_probs, a, b;
  double value = 0.0;
  forward_one(p, obs_.data(), log_probs, value, a, b);

  const auto n = log_probs.size();
  Eigen::Index choice = 0;
  if (mode_ == Mode::kGreedy) {
    log_probs.maxCoeff(&choice);
  } else {
    const double u = rng_.uniform();
    double cum = 0.0;
    choice = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      cum += std::exp(log_probs(i));
      if (u < cum) {
        choice = i;
        break;
      }
    }
    if (choice < 0) log_probs.maxCoeff(&choice);  // rounding left u above the total
  }
  if (recorder_) {
    recorder_->observations.insert(recorder_->observations.end(), obs_.begin(), obs_.end());
    recorder_->actions.push_back(static_cast<int>(choice));
    recorder_->log_probs.push_back(log_probs(choice));
    recorder_->values.push_back(value);
  }
  return decode_action(static_cast<int>(choice), view.config.num_resources);
}

// ---------------------------------------------------------------------------
// Binary helpers

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'F', 'L', 'I', 'P', 'C', 'K', 'P'};
constexpr char kStateMagic[8] = {'P', 'F', 'L', 'I', 'P', 'S', 'T', 'A'};
constexpr std::uint32_t kStateVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T))
      throw CheckpointError(CheckpointError::Kind::kTruncated,
                            std::string("truncated while reading ") + what);
    char bytes[sizeof(T)];
    std::memcpy(bytes, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::string_view raw(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(CheckpointError::Kind::kTruncated,
                            std::string("truncated while reading ") + what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_shape(std::string& out, const NetworkShape& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.obs_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.action_dim));
}

NetworkShape read_shape_tail(Reader& in, NetworkShape s) {
  s.shared_trunk = in.get<std::uint32_t>("shared_trunk") != 0;
  const auto depth = in.get<std::uint32_t>("hidden count");
  if (depth > 64) throw CheckpointError(CheckpointError::Kind::kCorrupt, "implausible layer count");
  s.hidden.clear();
  for (std::uint32_t i = 0; i < depth; ++i) {
    const auto w = in.get<std::uint32_t>("hidden width");
    if (w == 0 || w > (1u << 20))
      throw CheckpointError(CheckpointError::Kind::kCorrupt, "implausible layer width");
    s.hidden.push_back(static_cast<int>(w));
  }
  if (s.obs_dim < 1 || s.action_dim < 1)
    throw CheckpointError(CheckpointError::Kind::kCorrupt, "zero network dimension");
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "write failed for " + path.string());
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return path.string() + ".json";
}

}  // namespace

// ---------------------------------------------------------------------------
// Checkpoints

void PolicyCheckpoint::check_compatible(const GameConfig& config) const {
  const auto& s = params.shape();
  if (s.obs_dim != config.observation_size() || s.action_dim != config.num_actions() ||
      memory_limit != config.memory_limit || num_resources != config.num_resources) {
    std::ostringstream os;
    os << "checkpoint (obs_dim " << s.obs_dim << ", action_dim " << s.action_dim << ", M "
       << memory_limit << ", R " << num_resources << ") does not match game (obs_dim "
       << config.observation_size() << ", action_dim " << config.num_actions() << ", M "
       << config.memory_limit << ", R " << config.num_resources << ")";
    throw CheckpointError(CheckpointError::Kind::kDimension, os.str());
  }
}

std::string serialize_checkpoint(const PolicyCheckpoint& c) {
  const NetworkShape& s = c.params.shape();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, PolicyCheckpoint::kFormatVersion);
  put_shape(out, s);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.memory_limit));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.num_resources));
  put<std::uint32_t>(out, s.shared_trunk ? 1u : 0u);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.hidden.size()));
  for (int h : s.hidden) put<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  put<std::uint64_t>(out, c.params.size());
  out.reserve(out.size() + 4 * c.params.size());
  for (double v : c.params.values()) put<float>(out, static_cast<float>(v));
  return out;
}

PolicyCheckpoint deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  const auto magic = in.raw(sizeof(kCheckpointMagic), "magic");
  if (magic != std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)))
    throw CheckpointError(CheckpointError::Kind::kMagic, "not a PoolFlip checkpoint");
  const auto version = in.get<std::uint32_t>("version");
  if (version != PolicyCheckpoint::kFormatVersion)
    throw CheckpointError(CheckpointError::Kind::kVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  NetworkShape shape;
  shape.obs_dim = static_cast<int>(in.get<std::uint32_t>("obs_dim"));
  shape.action_dim = static_cast<int>(in.get<std::uint32_t>("action_dim"));
  PolicyCheckpoint c;
  c.memory_limit = static_cast<int>(in.get<std::uint32_t>("memory_limit"));
  c.num_resources = static_cast<int>(in.get<std::uint32_t>("num_resources"));
  shape = read_shape_tail(in, shape);
  c.params = NetworkParams(shape);
  const auto count = in.get<std::uint64_t>("parameter count");
  if (count != c.params.size())
    throw CheckpointError(CheckpointError::Kind::kCorrupt,
                          "parameter count " + std::to_string(count) + " does not match shape (" +
                              std::to_string(c.params.size()) + ")");
  for (double& v : c.params.values()) v = in.get<float>("parameters");
  if (!in.done())
    throw CheckpointError(CheckpointError::Kind::kCorrupt, "trailing bytes after parameters");
  if (!c.params.all_finite())
    throw CheckpointError(CheckpointError::Kind::kCorrupt, "non-finite parameter");
  return c;
}

std::string content_hash(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 15];
  }
  return hex;
}

void save_checkpoint(const PolicyCheckpoint& c, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(c);
  const auto& s = c.params.shape();
  nlohmann::json side = {{"format_version", PolicyCheckpoint::kFormatVersion},
                         {"obs_dim", s.obs_dim},
                         {"action_dim", s.action_dim},
                         {"hidden", s.hidden},
                         {"shared_trunk", s.shared_trunk},
                         {"memory_limit", c.memory_limit},
                         {"num_resources", c.num_resources},
                         {"parameter_count", c.params.size()},
                         {"content_hash", content_hash(bytes)},
                         {"metadata", c.metadata}};
  write_file(path, bytes);
  write_file(sidecar_path(path), side.dump(2) + "\n");
}

PolicyCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  PolicyCheckpoint c = deserialize_checkpoint(bytes);
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(side));
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(CheckpointError::Kind::kCorrupt,
                            "unreadable sidecar " + side.string() + ": " + e.what());
    }
    if (j.contains("content_hash") && j["content_hash"] != content_hash(bytes))
      throw CheckpointError(CheckpointError::Kind::kCorrupt,
                            "content hash mismatch between " + path.string() + " and its sidecar");
    if (j.contains("metadata")) c.metadata = j["metadata"];
  }
  return c;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {
constexpr std::uint64_t kPickStream = 0x7069636b;     // "pick"
constexpr std::uint64_t kEpisodeStream = 0x65706973;  // "epis"
constexpr std::uint64_t kUpdateStream = 0x75706474;   // "updt"
}  // namespace

Trainer::Trainer(GameConfig game, TrainConfig train, std::uint64_t seed)
    : game_(std::move(game)), train_(std::move(train)), seed_(seed) {
  game_.validate();
  train_.validate();
  NetworkShape shape{game_.observation_size(), game_.num_actions(), train_.hidden,
                     train_.shared_trunk};
  params_ = std::make_shared<NetworkParams>(init_network(shape, seed_));
  optimizer_ = AdamOptimizer(params_->size(), train_.learning_rate, train_.adam_beta1,
                             train_.adam_beta2, train_.adam_epsilon);
  buffer_ = RolloutBuffer(game_.observation_size());
}

std::shared_ptr<const NetworkParams> Trainer::params_snapshot() const {
  return std::make_shared<const NetworkParams>(*params_);
}

EpochStats Trainer::run_epoch(std::span<const OpponentFactory> opponents,
                              const OpponentPicker& pick) {
  if (opponents.empty()) throw std::invalid_argument("run_epoch: no opponents");
  EpochStats st;
  st.epoch = epoch_;
  Rng pick_rng(derive_seed(seed_, {kPickStream, static_cast<std::uint64_t>(epoch_)}));
  std::vector<std::unique_ptr<Policy>> cache(opponents.size());
  std::vector<OpponentScore> scores(opponents.size());
  NeuralPolicy learner(params_, game_.memory_limit, NeuralPolicy::Mode::kSample, "learner");
  Trajectory traj;
  learner.record_into(&traj);
  std::vector<double> rewards;

  for (int e = 0; e < train_.episodes_per_epoch; ++e) {
    const std::size_t idx = pick(pick_rng);
    if (idx >= opponents.size())
      throw std::out_of_range("opponent picker returned index " + std::to_string(idx));
    if (!cache[idx]) cache[idx] = opponents[idx].make();
    traj.clear();
    const std::uint64_t episode_seed = derive_seed(
        seed_, {kEpisodeStream, static_cast<std::uint64_t>(epoch_), static_cast<std::uint64_t>(e)});
    EpisodeResult res;
    try {
      res = run_episode(game_, learner, *cache[idx], episode_seed, true);
    } catch (const std::exception& ex) {
      throw TrainingError("epoch " + std::to_string(epoch_) + " episode " + std::to_string(e) +
                          " against " + opponents[idx].id + ": " + ex.what());
    }
    rewards.resize(res.trace.size());
    for (std::size_t k = 0; k < res.trace.size(); ++k) rewards[k] = res.trace[k].rewards[0];
    buffer_.add_episode(traj, rewards);
    stream_.push_back(opponents[idx].id);

    OpponentScore& sc = scores[idx];
    sc.id = opponents[idx].id;
    ++sc.episodes;
    sc.mean_reward += res.defender_reward();
    sc.mean_ownership += res.defender_ownership();
    st.mean_reward += res.defender_reward();
    st.mean_ownership += res.defender_ownership();

    if (buffer_.episodes() >= train_.episodes_per_update) {
      st.last_update = ppo_update(*params_, optimizer_, buffer_, train_,
                                  derive_seed(seed_, {kUpdateStream, static_cast<std::uint64_t>(updates_)}));
      ++updates_;
      buffer_.clear();
    }
  }
  if (!buffer_.empty()) {
    st.last_update = ppo_update(*params_, optimizer_, buffer_, train_,
                                derive_seed(seed_, {kUpdateStream, static_cast<std::uint64_t>(updates_)}));
    ++updates_;
    buffer_.clear();
  }

  st.mean_reward /= train_.episodes_per_epoch;
  st.mean_ownership /= train_.episodes_per_epoch;
  for (auto& sc : scores) {
    if (sc.episodes == 0) continue;
    sc.mean_reward /= sc.episodes;
    sc.mean_ownership /= sc.episodes;
    st.per_opponent.push_back(sc);
  }
  ++epoch_;
  return st;
}

PolicyCheckpoint Trainer::checkpoint(nlohmann::json metadata) const {
  PolicyCheckpoint c;
  c.params = *params_;
  c.params.round_to_float();
  c.memory_limit = game_.memory_limit;
  c.num_resources = game_.num_resources;
  metadata["seed"] = seed_;
  metadata["epoch"] = epoch_;
  c.metadata = std::move(metadata);
  return c;
}

std::string Trainer::save_state() const {
  std::string out(kStateMagic, sizeof(kStateMagic));
  put<std::uint32_t>(out, kStateVersion);
  put<std::uint64_t>(out, seed_);
  put<std::int64_t>(out, epoch_);
  put<std::int64_t>(out, updates_);
  put<std::int64_t>(out, optimizer_.steps());
  put<std::uint64_t>(out, params_->size());
  for (double v : params_->values()) put<double>(out, v);
  for (double v : optimizer_.first_moment()) put<double>(out, v);
  for (double v : optimizer_.second_moment()) put<double>(out, v);
  put<std::uint64_t>(out, stream_.size());
  for (const auto& id : stream_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out += id;
  }
  return out;
}

void Trainer::load_state(std::string_view bytes) {
  Reader in(bytes);
  if (in.raw(sizeof(kStateMagic), "magic") != std::string_view(kStateMagic, sizeof(kStateMagic)))
    throw CheckpointError(CheckpointError::Kind::kMagic, "not a trainer state file");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kStateVersion)
    throw CheckpointError(CheckpointError::Kind::kVersion,
                          "unsupported trainer state version " + std::to_string(version));
  if (in.get<std::uint64_t>("seed") != seed_)
    throw CheckpointError(CheckpointError::Kind::kCorrupt, "trainer state was made with another seed");
  const auto epoch = in.get<std::int64_t>("epoch");
  const auto updates = in.get<std::int64_t>("updates");
  const auto steps = in.get<std::int64_t>("optimizer steps");
  const auto n = in.get<std::uint64_t>("parameter count");
  if (n != params_->size())
    throw CheckpointError(CheckpointError::Kind::kDimension, "trainer state has another network shape");
  Eigen::VectorXd p(n), m(n), v(n);
  for (auto& x : p) x = in.get<double>("parameters");
  for (auto& x : m) x = in.get<double>("moments");
  for (auto& x : v) x = in.get<double>("moments");
  const auto count = in.get<std::uint64_t>("stream length");
  std::vector<std::string> stream;
  stream.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = in.get<std::uint32_t>("stream entry");
    stream.emplace_back(in.raw(len, "stream entry"));
  }
  if (!in.done()) throw CheckpointError(CheckpointError::Kind::kCorrupt, "trailing bytes in trainer state");
  params_->values() = std::move(p);
  optimizer_.restore(static_cast<long>(steps), std::move(m), std::move(v));
  epoch_ = static_cast<int>(epoch);
  updates_ = static_cast<long>(updates);
  stream_ = std::move(stream);
  buffer_.clear();
}

nlohmann::json to_json(const EpochStats& s) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& o : s.per_opponent)
    per.push_back({o.id, o.episodes, o.mean_reward, o.mean_ownership});
  return {{"epoch", s.epoch},
          {"mean_reward", s.mean_reward},
          {"mean_ownership", s.mean_ownership},
          {"per_opponent", per}};
}

EpochStats epoch_stats_from_json(const nlohmann::json& j) {
  EpochStats s;
  s.epoch = j.at("epoch").get<int>();
  s.mean_reward = j.at("mean_reward").get<double>();
  s.mean_ownership = j.at("mean_ownership").get<double>();
  for (const auto& o : j.at("per_opponent"))
    s.per_opponent.push_back({o.at(0).get<std::string>(), o.at(1).get<int>(),
                              o.at(2).get<double>(), o.at(3).get<double>()});
  return s;
}

std::vector<EpochStats> train_against(Trainer& trainer, std::span<const OpponentFactory> opponents,
                                      const OpponentPicker& pick) {
  std::vector<EpochStats> curve;
  while (trainer.epochs_done() < trainer.train_config().total_epochs)
    curve.push_back(trainer.run_epoch(opponents, pick));
  return curve;
}

}  // namespace poolflip
