#include "chunkflow/trainers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "chunkflow/metrics.hpp"
#include "chunkflow/nn/ops.hpp"

namespace chunkflow {

using nn::Tape;
using nn::Tensor;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Tensor column(const std::vector<double>& v) { return Tensor::matrix(v.size(), 1, v); }

Tensor mask_tensor(const nn::Mask& mask, std::size_t rows, std::size_t cols) {
  Tensor m = Tensor::matrix(rows, cols, std::vector<double>(rows * cols, 0.0));
  for (std::size_t i = 0; i < mask.size(); ++i) m[i] = mask[i] ? 1.0 : 0.0;
  return m;
}

// Row r is the last decision of its trajectory.
std::vector<bool> last_rows(const std::vector<std::size_t>& trajectory_of_row) {
  std::vector<bool> last(trajectory_of_row.size(), true);
  for (std::size_t r = 0; r + 1 < trajectory_of_row.size(); ++r) {
    last[r] = trajectory_of_row[r + 1] != trajectory_of_row[r];
  }
  return last;
}

void check_finite(double v, const std::string& what, const Environment& env, const ActionLibrary& library,
                  const Trajectory& tau) {
  if (!std::isfinite(v)) {
    throw NonFiniteLoss(what + " is not finite for trajectory " + dump_trajectory(env, library, tau));
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string dump_trajectory(const Environment& env, const ActionLibrary& library, const Trajectory& tau) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < tau.steps.size(); ++i) {
    if (i) out << " ";
    out << env.to_string(tau.steps[i].state) << " -" << library.action_name(tau.steps[i].action) << "->";
  }
  out << " " << env.to_string(tau.terminal) << "] reward " << tau.reward;
  return out.str();
}

Var tb_losses(Var log_z, Var log_pf, std::span<const double> log_pb, std::span<const double> log_reward,
              double beta) {
  const std::size_t b = log_pb.size();
  if (log_reward.size() != b || log_pf.value().rows() != b) {
    throw std::invalid_argument("trajectory balance inputs disagree on batch size");
  }
  std::vector<double> target(b);
  for (std::size_t i = 0; i < b; ++i) target[i] = log_pb[i] + beta * log_reward[i];
  Var residual = nn::sub(nn::add(log_pf, log_z), log_pf.tape->constant(column(target), "tb_target"));
  return nn::square(residual);
}

Var tb_loss(Var log_z, Var log_pf, std::span<const double> log_pb, std::span<const double> log_reward, double beta) {
  return nn::mean(tb_losses(log_z, log_pf, log_pb, log_reward, beta));
}

double epsilon_at(std::int64_t iteration, std::int64_t iterations, double start, double end) {
  if (iterations <= 1) return start;
  const double frac = std::clamp(static_cast<double>(iteration - 1) / static_cast<double>(iterations - 1), 0.0, 1.0);
  return start + (end - start) * frac;
}

void polyak_update(nn::ParameterSet& target, const nn::ParameterSet& live, double tau) {
  if (target.size() != live.size()) throw std::invalid_argument("Polyak update between mismatched parameter sets");
  auto t = target.begin();
  auto l = live.begin();
  for (; t != target.end(); ++t, ++l) {
    if (!t->value.same_shape(l->value)) throw nn::ShapeError("Polyak update shape mismatch at " + t->name);
    for (std::size_t i = 0; i < t->value.size(); ++i) {
      t->value[i] = tau * t->value[i] + (1.0 - tau) * l->value[i];
    }
  }
}

std::uint64_t split_seed(std::uint64_t seed, const std::string& consumer) {
  const std::uint64_t tag = fnv1a(consumer);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::mt19937_64 split_rng(std::uint64_t seed, const std::string& consumer) {
  return std::mt19937_64(split_seed(seed, consumer));
}

// ---------------------------------------------------------------- samplers

Sampler::Sampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed)
    : env_(&env), config_(config), policy_(env, config.net, split_seed(seed, "policy_init"), "policy") {}

std::vector<Trajectory> Sampler::rollouts(const ActionLibrary& library, std::size_t n, double epsilon,
                                          std::mt19937_64& rng) const {
  return policy_.sample_trajectories(library, n, epsilon, rng);
}

double Sampler::log_z() const { return kNaN; }

std::vector<const nn::ParameterSet*> Sampler::parameter_sets() const { return {&policy_.parameters()}; }
std::vector<nn::ParameterSet*> Sampler::parameter_sets() { return {&policy_.parameters()}; }

GfnSampler::GfnSampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed)
    : Sampler(env, config, seed),
      logz_params_(),
      policy_opt_(policy_.parameters(), nn::AdamConfig{config.lr}),
      logz_opt_((logz_params_.add("logZ", Tensor::matrix(1, 1, {config.logz_init})), logz_params_),
                nn::AdamConfig{config.logz_lr}) {}

double GfnSampler::log_z() const { return logz_params_.at("logZ").value[0]; }
void GfnSampler::set_log_z(double v) { logz_params_.at("logZ").value[0] = v; }

std::vector<const nn::ParameterSet*> GfnSampler::parameter_sets() const {
  return {&policy_.parameters(), &logz_params_};
}
std::vector<nn::ParameterSet*> GfnSampler::parameter_sets() { return {&policy_.parameters(), &logz_params_}; }

StepStats GfnSampler::update(const ActionLibrary& library, std::span<const Trajectory> batch) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  std::vector<double> log_pb(batch.size());
  std::vector<double> log_r(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    log_pb[i] = backward_traj_logprob(*env_, library, batch[i], config_.backward);
    log_r[i] = std::log(batch[i].reward);
    check_finite(log_pb[i], "log P_B", *env_, library, batch[i]);
    check_finite(log_r[i], "log R", *env_, library, batch[i]);
  }
  policy_.parameters().zero_grad();
  logz_params_.zero_grad();
  Tape tape;
  Var lz = tape.parameter(logz_params_.at("logZ"));
  Var per = tb_losses(lz, policy_.traj_logprobs(tape, library, batch), log_pb, log_r, config_.beta);
  for (std::size_t i = 0; i < batch.size(); ++i) check_finite(per.value()[i], "TB loss", *env_, library, batch[i]);
  Var loss = nn::mean(per);
  tape.backward(loss);
  policy_opt_.step();
  logz_opt_.step();
  return StepStats{loss.value().item(), kNaN, true};
}

double GfnSampler::evaluate_loss(const ActionLibrary& library, std::span<const Trajectory> batch) const {
  std::vector<double> log_pb(batch.size());
  std::vector<double> log_r(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    log_pb[i] = backward_traj_logprob(*env_, library, batch[i], config_.backward);
    log_r[i] = std::log(batch[i].reward);
  }
  Tape tape(false);
  Var lz = tape.constant(Tensor::matrix(1, 1, {log_z()}));
  return tb_loss(lz, policy_.traj_logprobs(tape, library, batch), log_pb, log_r, config_.beta).value().item();
}

A2cSampler::A2cSampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed)
    : Sampler(env, config, seed),
      critic_(env, config.net, split_seed(seed, "critic_init"), "critic"),
      policy_opt_(policy_.parameters(), nn::AdamConfig{config.lr}),
      critic_opt_(critic_.parameters(), nn::AdamConfig{config.critic_lr}) {}

std::vector<const nn::ParameterSet*> A2cSampler::parameter_sets() const {
  return {&policy_.parameters(), &critic_.parameters()};
}
std::vector<nn::ParameterSet*> A2cSampler::parameter_sets() { return {&policy_.parameters(), &critic_.parameters()}; }

StepStats A2cSampler::update(const ActionLibrary& library, std::span<const Trajectory> batch) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  policy_.parameters().zero_grad();
  critic_.parameters().zero_grad();
  Tape tape;
  auto sl = policy_.step_log_probs(tape, library, batch);
  Var q = critic_.q_values_for(tape, library, batch);
  const std::size_t rows = sl.taken.size();
  const std::size_t width = library.size();
  const Tensor& lp = sl.log_probs.value();
  const Tensor& qv = q.value();
  const auto last = last_rows(sl.trajectory_of_row);

  std::vector<double> advantage(rows);
  std::vector<double> target(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double baseline = 0.0;
    for (std::size_t a = 0; a < width; ++a) {
      if (sl.mask[r * width + a]) baseline += std::exp(lp.at(r, a)) * qv.at(r, a);
    }
    advantage[r] = qv.at(r, sl.taken[r]) - baseline;
    if (last[r]) {
      target[r] = std::log(batch[sl.trajectory_of_row[r]].reward);
    } else {
      target[r] = qv.at(r + 1, sl.taken[r + 1]);
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::isfinite(advantage[r]) || !std::isfinite(target[r])) {
      const auto& tau = batch[sl.trajectory_of_row[r]];
      throw NonFiniteLoss("A2C target is not finite for trajectory " + dump_trajectory(*env_, library, tau));
    }
  }

  Var critic_loss = nn::mean(nn::square(nn::sub(nn::pick(q, sl.taken), tape.constant(column(target)))));
  Var pg = nn::mean(nn::mul(nn::pick(sl.log_probs, sl.taken), tape.constant(column(advantage))));
  Var probs = nn::mul(nn::exp(sl.log_probs), tape.constant(mask_tensor(sl.mask, rows, width)));
  Var entropy = nn::mean(nn::neg(nn::row_sum(nn::mul(probs, sl.log_probs))));
  Var actor_loss = nn::sub(nn::neg(pg), nn::scale(entropy, config_.entropy_coef));
  Var total = nn::add(actor_loss, critic_loss);
  if (!std::isfinite(total.value().item())) throw NonFiniteLoss("A2C loss is not finite");
  tape.backward(total);
  policy_opt_.step();
  critic_opt_.step();
  return StepStats{actor_loss.value().item(), critic_loss.value().item(), true};
}

SacSampler::SacSampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed)
    : Sampler(env, config, seed),
      critic_(env, config.net, split_seed(seed, "critic_init"), "critic"),
      target_(env, config.net, split_seed(seed, "critic_init"), "critic_target"),
      policy_opt_(policy_.parameters(), nn::AdamConfig{config.lr}),
      critic_opt_(critic_.parameters(), nn::AdamConfig{config.critic_lr}) {
  polyak_update(target_.parameters(), critic_.parameters(), 0.0);
}

std::vector<const nn::ParameterSet*> SacSampler::parameter_sets() const {
  return {&policy_.parameters(), &critic_.parameters(), &target_.parameters()};
}
std::vector<nn::ParameterSet*> SacSampler::parameter_sets() {
  return {&policy_.parameters(), &critic_.parameters(), &target_.parameters()};
}

StepStats SacSampler::update(const ActionLibrary& library, std::span<const Trajectory> batch) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  Tensor q_target;
  {
    Tape frozen(false);
    q_target = target_.q_values_for(frozen, library, batch).value();
  }
  policy_.parameters().zero_grad();
  critic_.parameters().zero_grad();
  Tape tape;
  auto sl = policy_.step_log_probs(tape, library, batch);
  Var q = critic_.q_values_for(tape, library, batch);
  const std::size_t rows = sl.taken.size();
  const std::size_t width = library.size();
  const Tensor& lp = sl.log_probs.value();
  const double alpha = config_.entropy_coef;
  const auto last = last_rows(sl.trajectory_of_row);

  // Soft value of each decision state under the target critic.
  std::vector<double> soft_value(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t a = 0; a < width; ++a) {
      if (sl.mask[r * width + a]) soft_value[r] += std::exp(lp.at(r, a)) * (q_target.at(r, a) - alpha * lp.at(r, a));
    }
  }
  std::vector<double> target(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    target[r] = last[r] ? std::log(batch[sl.trajectory_of_row[r]].reward) : soft_value[r + 1];
    if (!std::isfinite(target[r])) {
      const auto& tau = batch[sl.trajectory_of_row[r]];
      throw NonFiniteLoss("SAC target is not finite for trajectory " + dump_trajectory(*env_, library, tau));
    }
  }

  Tensor q_masked = q.value();
  for (std::size_t i = 0; i < q_masked.size(); ++i) {
    if (!sl.mask[i]) q_masked[i] = 0.0;
  }
  Var critic_loss = nn::mean(nn::square(nn::sub(nn::pick(q, sl.taken), tape.constant(column(target)))));
  Var probs = nn::mul(nn::exp(sl.log_probs), tape.constant(mask_tensor(sl.mask, rows, width)));
  Var inner = nn::sub(nn::scale(sl.log_probs, alpha), tape.constant(q_masked));
  Var actor_loss = nn::mean(nn::row_sum(nn::mul(probs, inner)));
  Var total = nn::add(actor_loss, critic_loss);
  if (!std::isfinite(total.value().item())) throw NonFiniteLoss("SAC loss is not finite");
  tape.backward(total);
  policy_opt_.step();
  critic_opt_.step();
  polyak_update(target_.parameters(), critic_.parameters(), config_.polyak);
  return StepStats{actor_loss.value().item(), critic_loss.value().item(), true};
}

RandomSampler::RandomSampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed)
    : Sampler(env, config, seed) {}

std::vector<Trajectory> RandomSampler::rollouts(const ActionLibrary& library, std::size_t n, double,
                                                std::mt19937_64& rng) const {
  std::vector<Trajectory> out(n);
  for (auto& tau : out) {
    tau.generation = library.generation();
    EnvState s = env_->initial_state();
    while (!env_->is_terminal(s)) {
      const ActionMask mask = library.valid_actions(*env_, s);
      std::vector<std::size_t> valid;
      for (std::size_t p = 0; p < mask.size(); ++p) {
        if (mask[p]) valid.push_back(p);
      }
      std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
      const ActionId a = library.at(valid[pick(rng)]).id;
      tau.steps.push_back({s, a});
      tau.behavior_logprob -= std::log(static_cast<double>(valid.size()));
      s = library.apply_action(*env_, s, a);
    }
    tau.terminal = s;
    tau.reward = env_->reward(s);
  }
  return out;
}

SamplerConfig sampler_config(const RunConfig& c) {
  SamplerConfig s;
  s.net = NetConfig{static_cast<std::size_t>(c.hidden), static_cast<std::size_t>(c.embedding)};
  s.backward = c.backward_policy();
  s.beta = c.beta;
  s.lr = c.lr;
  s.logz_lr = c.logz_lr;
  s.critic_lr = c.critic_lr;
  s.logz_init = c.logz_init;
  s.entropy_coef = c.entropy_coef;
  s.polyak = c.polyak;
  return s;
}

std::unique_ptr<Sampler> make_sampler(const Environment& env, const RunConfig& config) {
  const SamplerConfig sc = sampler_config(config);
  if (config.sampler == "gfn") return std::make_unique<GfnSampler>(env, sc, config.seed);
  if (config.sampler == "a2c") return std::make_unique<A2cSampler>(env, sc, config.seed);
  if (config.sampler == "sac") return std::make_unique<SacSampler>(env, sc, config.seed);
  if (config.sampler == "random") return std::make_unique<RandomSampler>(env, sc, config.seed);
  throw ConfigError({"sampler: unknown sampler '" + config.sampler + "'"});
}

// ---------------------------------------------------------------- loop

TrainingFailure::TrainingFailure(std::int64_t iteration, const std::string& cause)
    : std::runtime_error("training failed at iteration " + std::to_string(iteration) + ": " + cause),
      iteration_(iteration),
      cause_(cause) {}

ChunkTrigger make_trigger(const RunConfig& config) {
  if (config.chunker == "atomic") return ChunkTrigger::never();
  if (config.trigger == "loss") return ChunkTrigger::loss_threshold(config.loss_threshold, config.loss_decay);
  return ChunkTrigger::every_k(config.chunk_every);
}

TrainingResult run_training(const RunConfig& config, const Environment& env, ActionLibrary& library,
                            TrainingObserver* observer, Sampler* sampler) {
  validate(config);
  if (library.atomic_names() != env.atomic_names()) {
    throw LibraryError("library alphabet does not match environment " + env.id());
  }
  std::unique_ptr<Sampler> owned;
  if (sampler == nullptr) {
    owned = make_sampler(env, config);
    sampler = owned.get();
  }
  const BackwardPolicy backward = config.backward_policy();
  DiversityBuffer buffer(env, static_cast<std::size_t>(config.buffer_capacity),
                         static_cast<std::size_t>(config.buffer_cutoff));
  ModeTracker modes(env);
  ChunkTrigger trigger = make_trigger(config);
  auto rollout_rng = split_rng(config.seed, "rollout");
  auto replay_rng = split_rng(config.seed, "replay");
  auto parse_rng = split_rng(config.seed, "backward_parse");
  auto corpus_rng = split_rng(config.seed, "corpus");
  auto chunk_rng = split_rng(config.seed, "tokenizer");

  TrainingResult result;
  TrainingState state;
  state.config = &config;
  state.env = &env;
  state.library = &library;
  state.sampler = sampler;
  state.buffer = &buffer;
  state.modes = &modes;
  state.result = &result;
  if (observer) observer->on_start(state);

  std::deque<double> recent;
  double recent_sum = 0.0;
  const std::int64_t iterations = config.iterations;
  const std::size_t batch = static_cast<std::size_t>(config.batch);

  for (std::int64_t it = 1; it <= iterations; ++it) {
    state.iteration = it;
    try {
      const double eps = epsilon_at(it, iterations, config.epsilon_start, config.epsilon_end);
      const std::size_t n_replay = sampler->uses_replay() && !buffer.empty()
                                       ? static_cast<std::size_t>(std::floor(config.buffer_fraction * batch))
                                       : 0;
      std::vector<Trajectory> trajectories = sampler->rollouts(library, batch - n_replay, eps, rollout_rng);
      const std::size_t fresh = trajectories.size();
      for (const auto& e : buffer.sample(n_replay, replay_rng)) {
        trajectories.push_back(sample_backward_trajectory(env, library, e.state, backward, parse_rng));
      }
      const StepStats stats = sampler->update(library, trajectories);

      IterationRecord rec;
      rec.iteration = it;
      rec.visited_states = it * config.batch;
      rec.loss = stats.updated ? stats.loss : kNaN;
      rec.critic_loss = stats.updated ? stats.critic_loss : kNaN;
      rec.log_z = sampler->log_z();
      rec.epsilon = eps;
      std::vector<BufferEntry> inserts;
      double reward_sum = 0.0;
      for (std::size_t i = 0; i < fresh; ++i) {
        const auto& tau = trajectories[i];
        modes.observe(tau.terminal, tau.reward);
        inserts.push_back({tau.terminal, tau.reward});
        reward_sum += tau.reward;
        for (const auto& step : tau.steps) {
          if (++result.action_usage[step.action] == 1) {
            result.action_names[step.action] = library.action_name(step.action);
          }
          if (library.action(step.action).is_chunk()) ++rec.chunk_uses;
        }
      }
      buffer.insert_batch(inserts);
      rec.mean_reward = fresh ? reward_sum / static_cast<double>(fresh) : 0.0;
      rec.modes_cumulative = modes.count();
      result.mode_curve.push_back(modes.count());

      if (stats.updated) {
        recent.push_back(stats.loss);
        recent_sum += stats.loss;
        if (recent.size() > static_cast<std::size_t>(config.loss_window)) {
          recent_sum -= recent.front();
          recent.pop_front();
        }
      }
      const double smoothed = recent.empty() ? kNaN : recent_sum / static_cast<double>(recent.size());
      // Evaluate the policy on the library it was trained with, before any
      // chunk this iteration adds.
      if (observer && config.eval_every > 0 && it % config.eval_every == 0 && it != iterations) {
        observer->on_evaluation(state);
      }
      // No training follows the last iteration, so a chunk added there would
      // only perturb the final policy with an untrained embedding.
      if (it < iterations && trigger.should_chunk(it, smoothed)) {
        ActionCorpus corpus;
        if (config.chunker == "random_merge") {
          random_merge_step(library, chunk_rng, it);
        } else {
          const int n = config.corpus_size;
          const int from_buffer = buffer.empty() ? 0 : static_cast<int>(std::floor(config.corpus_p * n));
          std::vector<Trajectory> pool =
              sampler->rollouts(library, static_cast<std::size_t>(n - from_buffer), eps, corpus_rng);
          std::size_t next = 0;
          SequenceSampler rollout = [&] { return pool.at(next++).actions(); };
          SequenceSampler parse = [&] {
            const auto entry = buffer.sample(1, corpus_rng).front();
            return sample_backward_trajectory(env, library, entry.state, backward, corpus_rng).actions();
          };
          corpus = build_corpus(library, rollout, parse, buffer.empty(), n, config.corpus_p);
          if (config.chunker == "increment") {
            increment_step(library, corpus, it);
          } else {
            replace_step(library, corpus, config.merges, it);
          }
        }
        rec.chunk_event = true;
        result.chunk_events.push_back(it);
        if (observer) observer->on_chunk_event(it, corpus, state);
      }
      rec.library_size = library.size();
      result.records.push_back(rec);
      if (observer) observer->on_iteration(rec, state);
    } catch (const TrainingFailure&) {
      throw;
    } catch (const std::exception& e) {
      throw TrainingFailure(it, e.what());
    }
  }
  try {
    if (observer) {
      observer->on_evaluation(state);
      observer->on_finish(state);
    }
  } catch (const TrainingFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw TrainingFailure(iterations, e.what());
  }
  return result;
}

}  // namespace chunkflow
