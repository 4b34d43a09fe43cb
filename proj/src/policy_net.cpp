#include "chunkflow/policy_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "chunkflow/envs/fractal_grid.hpp"
#include "chunkflow/envs/graph_build.hpp"
#include "chunkflow/envs/sequence_env.hpp"

namespace chunkflow {

using nn::Shape;
using nn::Tape;
using nn::Tensor;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor gather(const Tensor& m, const std::vector<std::size_t>& rows) {
  const std::size_t cols = m.cols();
  Tensor out(Shape{rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(m.data() + rows[r] * cols, m.data() + (rows[r] + 1) * cols, out.data() + r * cols);
  return out;
}

void scatter(Tensor& m, const std::vector<std::size_t>& rows, const Tensor& src) {
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(src.data() + r * cols, src.data() + (r + 1) * cols, m.data() + rows[r] * cols);
}

class GenericRollout final : public RolloutEncoder {
 public:
  explicit GenericRollout(const StateEncoder* encoder) : encoder_(encoder) {}
  Tensor encode(std::span<const EnvState> states, std::span<const std::size_t>) override {
    Tape tape(false);
    return encoder_->encode(tape, states).value();
  }

 private:
  const StateEncoder* encoder_;
};

// Fixed-width state features through a 3-layer MLP.
class FeatureEncoder : public StateEncoder {
 public:
  FeatureEncoder(nn::ParameterSet& params, const std::string& name, std::size_t width, const NetConfig& config,
                 nn::Rng& rng)
      : width_(width), mlp_(params, name, width, {config.hidden, config.hidden}, config.embedding, rng) {}

  Var encode(Tape& tape, std::span<const EnvState> states) const override {
    Tensor x(Shape{states.size(), width_}, 0.0);
    for (std::size_t r = 0; r < states.size(); ++r) features(states[r], x.data() + r * width_);
    return mlp_.forward(tape, tape.constant(std::move(x), "state_features"));
  }

 protected:
  virtual void features(const EnvState& s, double* row) const = 0;

 private:
  std::size_t width_;
  nn::Mlp mlp_;
};

// One-hot x followed by one-hot y.
class GridEncoder final : public FeatureEncoder {
 public:
  GridEncoder(nn::ParameterSet& params, const std::string& name, int side, const NetConfig& config, nn::Rng& rng)
      : FeatureEncoder(params, name, 2 * static_cast<std::size_t>(side), config, rng), side_(side) {}

 protected:
  void features(const EnvState& s, double* row) const override {
    const auto& g = std::get<GridState>(s);
    row[g.x] = 1.0;
    row[side_ + g.y] = 1.0;
  }

 private:
  int side_;
};

// Upper-triangular adjacency padded to max_nodes, one-hot node count and
// whether the last node has an edge.
class GraphEncoder final : public FeatureEncoder {
 public:
  GraphEncoder(nn::ParameterSet& params, const std::string& name, int max_nodes, const NetConfig& config,
               nn::Rng& rng)
      : FeatureEncoder(params, name, width(max_nodes), config, rng), max_nodes_(max_nodes) {}

  static std::size_t width(int n) { return static_cast<std::size_t>(n * (n - 1) / 2 + n + 2); }

 protected:
  void features(const EnvState& s, double* row) const override {
    const auto& g = std::get<GraphState>(s);
    const int pairs = max_nodes_ * (max_nodes_ - 1) / 2;
    for (int b = 0; b < pairs; ++b) row[b] = static_cast<double>((g.edges >> b) & 1U);
    row[pairs + g.node_count] = 1.0;
    row[pairs + max_nodes_ + 1] = g.last_node_connected() ? 1.0 : 0.0;
  }

 private:
  int max_nodes_;
};

class SequenceEncoder;

class SequenceRollout final : public RolloutEncoder {
 public:
  SequenceRollout(const SequenceEncoder* encoder, std::size_t rows);
  Tensor encode(std::span<const EnvState> states, std::span<const std::size_t> rows) override;

 private:
  const SequenceEncoder* encoder_;
  nn::LstmState state_;
  std::vector<std::size_t> consumed_;
};

// Two-layer LSTM over BOS + symbols; a prefix is embedded from the output
// after its last symbol through a 2-layer head.
class SequenceEncoder final : public StateEncoder {
 public:
  SequenceEncoder(nn::ParameterSet& params, const std::string& name, std::size_t alphabet, const NetConfig& config,
                  nn::Rng& rng)
      : bos_(alphabet), lstm_(params, name + ".lstm", config.hidden, config.hidden, 2, rng),
        head_(params, name + ".head", config.hidden, {config.hidden}, config.embedding, rng) {
    Tensor e(Shape{alphabet + 1, config.hidden});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : e.values()) v = normal(rng);
    embedding_ = &params.add(name + ".embedding", std::move(e));
  }

  Var encode(Tape& tape, std::span<const EnvState> states) const override {
    std::vector<const std::vector<ActionId>*> seqs;
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    for (std::size_t r = 0; r < states.size(); ++r) {
      const auto& q = std::get<SequenceState>(states[r]);
      seqs.push_back(&q.symbols);
      picks.emplace_back(r, q.symbols.size());
    }
    return head_.forward(tape, run(tape, seqs, picks));
  }

  Var encode_trajectories(Tape& tape, std::span<const Trajectory> trajectories) const override {
    std::vector<const std::vector<ActionId>*> seqs;
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    for (std::size_t b = 0; b < trajectories.size(); ++b) {
      const auto& x = std::get<SequenceState>(trajectories[b].terminal);
      seqs.push_back(&x.symbols);
      for (const auto& step : trajectories[b].steps)
        picks.emplace_back(b, std::get<SequenceState>(step.state).symbols.size());
    }
    return head_.forward(tape, run(tape, seqs, picks));
  }

  std::unique_ptr<RolloutEncoder> rollout_encoder(std::size_t rows) const override {
    return std::make_unique<SequenceRollout>(this, rows);
  }

  Var token_inputs(Tape& tape, const std::vector<std::size_t>& tokens) const {
    return nn::gather_rows(tape.parameter(*embedding_), tokens);
  }
  const nn::Lstm& lstm() const { return lstm_; }
  const nn::Mlp& head() const { return head_; }
  std::size_t bos() const { return bos_; }

 private:
  // Top-layer outputs at (row, prefix length) picks, (picks, hidden).
  Var run(Tape& tape, const std::vector<const std::vector<ActionId>*>& seqs,
          const std::vector<std::pair<std::size_t, std::size_t>>& picks) const {
    const std::size_t rows = seqs.size();
    std::size_t steps = 0;
    for (const auto& [r, pos] : picks) steps = std::max(steps, pos);
    nn::LstmCarry carry = lstm_.zero_carry(tape, rows);
    std::vector<Var> outputs;
    for (std::size_t t = 0; t <= steps; ++t) {
      std::vector<std::size_t> tokens(rows, bos_);
      if (t > 0)
        for (std::size_t r = 0; r < rows; ++r)
          if (t - 1 < seqs[r]->size()) tokens[r] = static_cast<std::size_t>((*seqs[r])[t - 1]);
      outputs.push_back(lstm_.step(tape, token_inputs(tape, tokens), carry));
    }
    std::vector<std::size_t> index;
    index.reserve(picks.size());
    for (const auto& [r, pos] : picks) index.push_back(pos * rows + r);
    return nn::gather_rows(outputs.size() == 1 ? outputs[0] : nn::concat_rows(outputs), index);
  }

  std::size_t bos_;
  nn::Parameter* embedding_ = nullptr;
  nn::Lstm lstm_;
  nn::Mlp head_;
};

SequenceRollout::SequenceRollout(const SequenceEncoder* encoder, std::size_t rows)
    : encoder_(encoder), consumed_(rows, 0) {
  Tape tape(false);
  nn::LstmCarry carry = encoder_->lstm().zero_carry(tape, rows);
  encoder_->lstm().step(tape, encoder_->token_inputs(tape, std::vector<std::size_t>(rows, encoder_->bos())), carry);
  state_ = nn::Lstm::unbind(carry);
}

Tensor SequenceRollout::encode(std::span<const EnvState> states, std::span<const std::size_t> rows) {
  std::size_t longest = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& sym = std::get<SequenceState>(states[i]).symbols;
    if (sym.size() < consumed_[rows[i]]) throw std::logic_error("rollout state shrank");
    longest = std::max(longest, sym.size() - consumed_[rows[i]]);
  }
  for (std::size_t k = 0; k < longest; ++k) {
    std::vector<std::size_t> active, tokens;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto& sym = std::get<SequenceState>(states[i]).symbols;
      const std::size_t at = consumed_[rows[i]] + k;
      if (at < sym.size() && k < sym.size() - consumed_[rows[i]]) {
        active.push_back(rows[i]);
        tokens.push_back(static_cast<std::size_t>(sym[at]));
      }
    }
    if (active.empty()) continue;
    Tape tape(false);
    nn::LstmState sub;
    for (std::size_t l = 0; l < state_.h.size(); ++l) {
      sub.h.push_back(gather(state_.h[l], active));
      sub.c.push_back(gather(state_.c[l], active));
    }
    nn::LstmCarry carry = encoder_->lstm().bind(tape, sub);
    encoder_->lstm().step(tape, encoder_->token_inputs(tape, tokens), carry);
    sub = nn::Lstm::unbind(carry);
    for (std::size_t l = 0; l < state_.h.size(); ++l) {
      scatter(state_.h[l], active, sub.h[l]);
      scatter(state_.c[l], active, sub.c[l]);
    }
  }
  std::vector<std::size_t> out_rows(rows.begin(), rows.end());
  for (std::size_t i = 0; i < states.size(); ++i)
    consumed_[rows[i]] = std::get<SequenceState>(states[i]).symbols.size();
  Tape tape(false);
  Var top = tape.constant(gather(state_.h.back(), out_rows));
  return encoder_->head().forward(tape, top).value();
}

}  // namespace

Var StateEncoder::encode_trajectories(Tape& tape, std::span<const Trajectory> trajectories) const {
  std::vector<EnvState> states;
  for (const auto& tau : trajectories)
    for (const auto& step : tau.steps) states.push_back(step.state);
  return encode(tape, states);
}

std::unique_ptr<RolloutEncoder> StateEncoder::rollout_encoder(std::size_t) const {
  return std::make_unique<GenericRollout>(this);
}

std::unique_ptr<StateEncoder> make_state_encoder(const Environment& env, nn::ParameterSet& params,
                                                 const std::string& name, const NetConfig& config, nn::Rng& rng) {
  if (const auto* grid = dynamic_cast<const FractalGrid*>(&env)) {
    return std::make_unique<GridEncoder>(params, name, grid->params().side, config, rng);
  }
  if (const auto* seq = dynamic_cast<const SequenceEnv*>(&env)) {
    return std::make_unique<SequenceEncoder>(params, name, seq->alphabet().size(), config, rng);
  }
  if (const auto* graph = dynamic_cast<const GraphBuild*>(&env)) {
    return std::make_unique<GraphEncoder>(params, name, graph->max_nodes(), config, rng);
  }
  throw std::invalid_argument("no state encoder for environment " + env.id());
}

ActionEncoder::ActionEncoder(nn::ParameterSet& params, const std::string& name, std::size_t atomic_count,
                             const NetConfig& config, nn::Rng& rng)
    : lstm_(params, name + ".lstm", config.hidden, config.hidden, 1, rng),
      norm_(params, name + ".norm", config.hidden),
      head_(params, name + ".head", config.hidden, config.embedding, rng) {
  Tensor e(Shape{atomic_count, config.hidden});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : e.values()) v = normal(rng);
  embedding_ = &params.add(name + ".embedding", std::move(e));
}

Var ActionEncoder::encode(Tape& tape, const ActionLibrary& library) const {
  const auto& actions = library.actions();
  const std::size_t rows = actions.size();
  std::size_t steps = 0;
  for (const auto& a : actions) steps = std::max(steps, a.expansion.size());
  nn::LstmCarry carry = lstm_.zero_carry(tape, rows);
  Var table = tape.parameter(*embedding_);
  std::vector<Var> outputs;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::size_t> tokens(rows, 0);
    for (std::size_t r = 0; r < rows; ++r)
      if (t < actions[r].expansion.size()) tokens[r] = static_cast<std::size_t>(actions[r].expansion[t]);
    outputs.push_back(lstm_.step(tape, nn::gather_rows(table, tokens), carry));
  }
  std::vector<std::size_t> index;
  for (std::size_t r = 0; r < rows; ++r) index.push_back((actions[r].expansion.size() - 1) * rows + r);
  Var last = nn::gather_rows(outputs.size() == 1 ? outputs[0] : nn::concat_rows(outputs), index);
  return head_.forward(tape, norm_.forward(tape, last));
}

EmbeddingNet::EmbeddingNet(const Environment& env, const NetConfig& config, std::uint64_t seed,
                           const std::string& name)
    : config_(config), init_rng_(seed),
      states_(make_state_encoder(env, params_, name + ".state", config, init_rng_)),
      actions_(params_, name + ".action", env.atomic_count(), config, init_rng_) {
  if (config.hidden == 0 || config.embedding == 0) throw std::invalid_argument("network widths must be positive");
}

Var EmbeddingNet::scores(Tape&, Var state_embeddings, Var action_embeddings) const {
  Var s = nn::matmul(state_embeddings, nn::transpose(action_embeddings));
  return factor_ == 1.0 ? s : nn::scale(s, factor_);
}

nn::Mask stack_masks(const Environment& env, const ActionLibrary& library, std::span<const EnvState> states) {
  nn::Mask mask;
  mask.reserve(states.size() * library.size());
  for (const auto& s : states) {
    const ActionMask m = library.valid_actions(env, s);
    mask.insert(mask.end(), m.begin(), m.end());
  }
  return mask;
}

PolicyNet::PolicyNet(const Environment& env, const NetConfig& config, std::uint64_t seed, const std::string& name)
    : env_(&env), net_(env, config, seed, name) {
  net_.set_score_factor(1.0 / std::sqrt(static_cast<double>(config.embedding)));
}

PolicyOutput PolicyNet::output(const EnvState& s, const ActionLibrary& library) const {
  Tape tape(false);
  Var q = net_.state_encoder().encode(tape, std::span(&s, 1));
  Var logits = net_.scores(tape, q, net_.action_encoder().encode(tape, library));
  PolicyOutput out;
  out.mask = library.valid_actions(*env_, s);
  if (std::none_of(out.mask.begin(), out.mask.end(), [](std::uint8_t v) { return v != 0; })) {
    throw std::logic_error("every action is masked at " + env_->to_string(s));
  }
  nn::Mask m(out.mask.begin(), out.mask.end());
  Var lp = nn::log_softmax(logits, &m);
  out.logits.assign(logits.value().values().begin(), logits.value().values().end());
  out.log_probs.assign(lp.value().values().begin(), lp.value().values().end());
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!m[i]) out.log_probs[i] = kNegInf;
  return out;
}

namespace {

// Index into the valid entries: with probability epsilon uniform, otherwise
// categorical over exp(log_probs). Returns (position, mixed log-prob).
std::pair<std::size_t, double> draw(std::span<const double> log_probs, const ActionMask& mask, double epsilon,
                                    std::mt19937_64& rng) {
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) valid.push_back(i);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t chosen = valid.back();
  if (epsilon > 0.0 && unit(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
    chosen = valid[pick(rng)];
  } else {
    double u = unit(rng);
    for (std::size_t i : valid) {
      u -= std::exp(log_probs[i]);
      if (u <= 0.0) {
        chosen = i;
        break;
      }
    }
  }
  const double p = (1.0 - epsilon) * std::exp(log_probs[chosen]) + epsilon / static_cast<double>(valid.size());
  return {chosen, std::log(p)};
}

}  // namespace

ActionId PolicyNet::sample_action(const EnvState& s, const ActionLibrary& library, std::mt19937_64& rng,
                                  double epsilon) const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  const PolicyOutput out = output(s, library);
  return library.at(draw(out.log_probs, out.mask, epsilon, rng).first).id;
}

std::vector<Trajectory> PolicyNet::sample_trajectories(const ActionLibrary& library, std::size_t n, double epsilon,
                                                       std::mt19937_64& rng) const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  Tensor actions;
  {
    Tape tape(false);
    actions = net_.action_encoder().encode(tape, library).value();
  }
  auto encoder = net_.state_encoder().rollout_encoder(n);
  std::vector<Trajectory> out(n);
  std::vector<EnvState> current(n, env_->initial_state());
  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) {
    active[i] = i;
    out[i].generation = library.generation();
  }
  while (!active.empty()) {
    std::vector<EnvState> states;
    states.reserve(active.size());
    for (std::size_t r : active) states.push_back(current[r]);
    Tape tape(false);
    Var q = tape.constant(encoder->encode(states, active));
    Var logits = net_.scores(tape, q, tape.constant(actions));
    const nn::Mask mask = stack_masks(*env_, library, states);
    Var lp = nn::log_softmax(logits, &mask);
    const std::size_t width = library.size();
    std::vector<std::size_t> still;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t r = active[i];
      const ActionMask row_mask(mask.begin() + i * width, mask.begin() + (i + 1) * width);
      std::span<const double> row(lp.value().data() + i * width, width);
      const auto [pos, logp] = draw(row, row_mask, epsilon, rng);
      const ActionId a = library.at(pos).id;
      out[r].steps.push_back({current[r], a});
      out[r].behavior_logprob += logp;
      current[r] = library.apply_action(*env_, current[r], a);
      if (env_->is_terminal(current[r])) {
        out[r].terminal = current[r];
        out[r].reward = env_->reward(current[r]);
      } else {
        still.push_back(r);
      }
    }
    active = std::move(still);
  }
  return out;
}

PolicyNet::StepLogProbs PolicyNet::step_log_probs(Tape& tape, const ActionLibrary& library,
                                                  std::span<const Trajectory> trajectories) const {
  StepLogProbs out;
  std::vector<EnvState> states;
  for (std::size_t b = 0; b < trajectories.size(); ++b) {
    if (trajectories[b].generation != library.generation()) {
      throw std::invalid_argument("trajectory was sampled under another library generation");
    }
    for (const auto& step : trajectories[b].steps) {
      states.push_back(step.state);
      out.taken.push_back(library.position(step.action));
      out.trajectory_of_row.push_back(b);
    }
  }
  Var q = net_.state_encoder().encode_trajectories(tape, trajectories);
  Var logits = net_.scores(tape, q, net_.action_encoder().encode(tape, library));
  out.mask = stack_masks(*env_, library, states);
  const std::size_t width = library.size();
  for (std::size_t r = 0; r < states.size(); ++r) {
    if (!out.mask[r * width + out.taken[r]]) {
      throw std::invalid_argument("action " + library.action_name(library.at(out.taken[r]).id) +
                                  " is not valid at " + env_->to_string(states[r]));
    }
  }
  out.log_probs = nn::log_softmax(logits, &out.mask);
  return out;
}

Var PolicyNet::traj_logprobs(Tape& tape, const ActionLibrary& library,
                             std::span<const Trajectory> trajectories) const {
  StepLogProbs s = step_log_probs(tape, library, trajectories);
  return nn::segment_sum(nn::pick(s.log_probs, s.taken), s.trajectory_of_row, trajectories.size());
}

double PolicyNet::traj_logprob(const Trajectory& tau, const ActionLibrary& library) const {
  Tape tape(false);
  return traj_logprobs(tape, library, std::span(&tau, 1)).value().item();
}

double PolicyNet::traj_logprob_stepwise(const Trajectory& tau, const ActionLibrary& library) const {
  double total = 0.0;
  for (const auto& step : tau.steps) {
    const PolicyOutput out = output(step.state, library);
    const double lp = out.log_probs[library.position(step.action)];
    if (lp == kNegInf) throw std::invalid_argument("action is masked at a recorded state");
    total += lp;
  }
  return total;
}

CriticNet::CriticNet(const Environment& env, const NetConfig& config, std::uint64_t seed, const std::string& name)
    : net_(env, config, seed, name) {}

Var CriticNet::q_values(Tape& tape, const ActionLibrary& library, std::span<const EnvState> states) const {
  return net_.scores(tape, net_.state_encoder().encode(tape, states), net_.action_encoder().encode(tape, library));
}

Var CriticNet::q_values_for(Tape& tape, const ActionLibrary& library,
                            std::span<const Trajectory> trajectories) const {
  return net_.scores(tape, net_.state_encoder().encode_trajectories(tape, trajectories),
                     net_.action_encoder().encode(tape, library));
}

double CriticNet::critic_value(const EnvState& s, ActionId a, const ActionLibrary& library) const {
  Tape tape(false);
  return q_values(tape, library, std::span(&s, 1)).value()[library.position(a)];
}

double CriticNet::baseline(const EnvState& s, const ActionLibrary& library, std::span<const double> probs) const {
  if (probs.size() != library.size()) throw std::invalid_argument("one probability per library action required");
  Tape tape(false);
  const Tensor q = q_values(tape, library, std::span(&s, 1)).value();
  double v = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) v += probs[i] * q[i];
  return v;
}

}  // namespace chunkflow
