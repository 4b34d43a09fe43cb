#include "chunkflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "chunkflow/tokenizer.hpp"

namespace chunkflow {

using nn::Tape;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void check_same_size(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw MetricError("distributions differ in size: " + std::to_string(p.size()) + " vs " +
                      std::to_string(q.size()));
  }
}

}  // namespace

bool ModeTracker::observe(const EnvState& x, double reward) {
  if (!env_->is_mode(x, reward)) return false;
  return seen_.insert(state_key(x)).second;
}

double l1_distance(std::span<const double> p, std::span<const double> q) {
  check_same_size(p, q);
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return d;
}

double jsd(std::span<const double> p, std::span<const double> q) {
  check_same_size(p, q);
  auto kl_term = [](double a, double m) { return a > 0.0 ? a * std::log2(a / m) : 0.0; };
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    d += 0.5 * kl_term(p[i], m) + 0.5 * kl_term(q[i], m);
  }
  return std::clamp(d, 0.0, 1.0);
}

double exact_log_partition(std::span<const TerminalState> terminals, double beta) {
  std::vector<double> logs;
  logs.reserve(terminals.size());
  for (const auto& t : terminals) logs.push_back(beta * std::log(t.reward));
  return log_sum_exp(logs);
}

std::vector<double> target_distribution(std::span<const TerminalState> terminals, double beta) {
  const double log_z = exact_log_partition(terminals, beta);
  std::vector<double> p;
  p.reserve(terminals.size());
  for (const auto& t : terminals) p.push_back(std::exp(beta * std::log(t.reward) - log_z));
  return p;
}

std::vector<double> exact_terminal_distribution(const PolicyNet& policy, const ActionLibrary& library,
                                                std::span<const TerminalState> terminals) {
  const Environment& env = policy.env();
  const std::vector<EnvState> states = env.enumerate_nonterminal_states();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < states.size(); ++i) index.emplace(state_key(states[i]), i);
  std::unordered_map<std::string, std::size_t> terminal_index;
  for (std::size_t i = 0; i < terminals.size(); ++i) terminal_index.emplace(state_key(terminals[i].state), i);

  std::vector<double> flow(states.size(), 0.0);
  std::vector<double> out(terminals.size(), 0.0);
  const auto s0 = index.find(state_key(env.initial_state()));
  if (s0 == index.end()) throw MetricError("initial state missing from the enumeration");
  flow[s0->second] = 1.0;

  nn::Tensor actions;
  {
    Tape tape(false);
    actions = policy.net().action_encoder().encode(tape, library).value();
  }
  const std::size_t width = library.size();
  constexpr std::size_t kBlock = 512;
  // States are sorted by potential, so every parent precedes its children.
  for (std::size_t begin = 0; begin < states.size(); begin += kBlock) {
    const std::size_t end = std::min(states.size(), begin + kBlock);
    std::span<const EnvState> block(states.data() + begin, end - begin);
    Tape tape(false);
    auto q = policy.net().state_encoder().encode(tape, block);
    auto logits = policy.net().scores(tape, q, tape.constant(actions));
    const nn::Mask mask = stack_masks(env, library, block);
    auto lp = nn::log_softmax(logits, &mask);
    for (std::size_t r = 0; r < block.size(); ++r) {
      const double f = flow[begin + r];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < width; ++c) {
        if (!mask[r * width + c]) continue;
        const double p = f * std::exp(lp.value()[r * width + c]);
        const EnvState child = library.apply_action(env, block[r], library.at(c).id);
        const std::string key = state_key(child);
        if (env.is_terminal(child)) {
          auto it = terminal_index.find(key);
          if (it == terminal_index.end()) throw MetricError("terminal " + env.to_string(child) + " not enumerated");
          out[it->second] += p;
        } else {
          auto it = index.find(key);
          if (it == index.end()) throw MetricError("state " + env.to_string(child) + " not enumerated");
          if (it->second <= begin + r) throw MetricError("state enumeration is not topologically ordered");
          flow[it->second] += p;
        }
      }
    }
  }
  return out;
}

ElboResult elbo_gap(const PolicyNet& policy, const ActionLibrary& library, const BackwardPolicy& backward,
                    double beta, std::size_t k, std::mt19937_64& rng) {
  if (k == 0) throw MetricError("elbo estimate needs at least one trajectory");
  const Environment& env = policy.env();
  const auto terminals = env.enumerate_terminal_states();
  ElboResult res;
  res.log_z = exact_log_partition(terminals, beta);
  std::vector<double> terms;
  terms.reserve(k);
  constexpr std::size_t kBatch = 256;
  while (terms.size() < k) {
    const std::size_t n = std::min(kBatch, k - terms.size());
    const auto trajs = policy.sample_trajectories(library, n, 0.0, rng);
    Tape tape(false);
    const nn::Tensor log_pf = policy.traj_logprobs(tape, library, trajs).value();
    for (std::size_t i = 0; i < n; ++i) {
      const double log_pb = backward_traj_logprob(env, library, trajs[i], backward);
      terms.push_back(beta * std::log(trajs[i].reward) + log_pb - log_pf[i]);
    }
  }
  const double mean = std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(k);
  double var = 0.0;
  for (double t : terms) var += (t - mean) * (t - mean);
  var = k > 1 ? var / static_cast<double>(k - 1) : 0.0;
  res.estimate = mean;
  res.std_error = std::sqrt(var / static_cast<double>(k));
  res.gap = std::abs(res.log_z - mean);
  return res;
}

double estimate_terminal_logprob(const PolicyNet& policy, const ActionLibrary& library,
                                 const BackwardPolicy& backward, const EnvState& x, std::size_t n,
                                 std::mt19937_64& rng) {
  if (n == 0) throw MetricError("importance estimate needs at least one backward trajectory");
  const Environment& env = policy.env();
  std::vector<Trajectory> trajs;
  trajs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) trajs.push_back(sample_backward_trajectory(env, library, x, backward, rng));
  Tape tape(false);
  const nn::Tensor log_pf = policy.traj_logprobs(tape, library, trajs).value();
  std::vector<double> w;
  w.reserve(n);
  for (std::size_t i = 0; i < n; ++i) w.push_back(log_pf[i] - backward_traj_logprob(env, library, trajs[i], backward));
  return log_sum_exp(w) - std::log(static_cast<double>(n));
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  check_same_size(a, b);
  if (a.size() < 2) throw MetricError("spearman correlation needs at least two samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

std::vector<double> default_spearman_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.93 * i / 9.0);
  return t;
}

std::vector<std::optional<double>> spearman_reward_likelihood(std::span<const LikelihoodSample> samples,
                                                              std::span<const double> thresholds) {
  std::vector<std::optional<double>> out;
  for (double th : thresholds) {
    std::vector<double> r, l;
    for (const auto& s : samples) {
      if (s.reward >= th) {
        r.push_back(s.log_reward);
        l.push_back(s.log_likelihood);
      }
    }
    if (r.size() < 3) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(spearman(r, l));
    }
  }
  return out;
}

std::size_t count_occurrences(std::span<const ActionId> s, std::span<const ActionId> pattern) {
  if (pattern.empty()) return 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + pattern.size() <= s.size();) {
    if (std::equal(pattern.begin(), pattern.end(), s.begin() + static_cast<std::ptrdiff_t>(i))) {
      ++count;
      i += pattern.size();
    } else {
      ++i;
    }
  }
  return count;
}

std::vector<ChunkStats> chunk_statistics(const ActionLibrary& library,
                                         const std::vector<std::vector<ActionId>>& objects) {
  if (objects.empty()) throw MetricError("chunk statistics need at least one object");
  std::vector<ChunkStats> out;
  for (const auto& a : library.actions()) {
    if (!a.is_chunk()) continue;
    std::vector<double> counts;
    std::size_t covered = 0;
    for (const auto& obj : objects) {
      const auto c = count_occurrences(obj, a.expansion);
      counts.push_back(static_cast<double>(c));
      covered += c > 0;
    }
    ChunkStats st;
    st.id = a.id;
    st.name = library.action_name(a.id);
    const double n = static_cast<double>(counts.size());
    st.occurrence_mean = std::accumulate(counts.begin(), counts.end(), 0.0) / n;
    double var = 0.0;
    for (double c : counts) var += (c - st.occurrence_mean) * (c - st.occurrence_mean);
    st.occurrence_sd = std::sqrt(var / n);
    std::sort(counts.begin(), counts.end());
    const std::size_t mid = counts.size() / 2;
    st.occurrence_median = counts.size() % 2 ? counts[mid] : 0.5 * (counts[mid - 1] + counts[mid]);
    st.coverage = static_cast<double>(covered) / n;
    out.push_back(std::move(st));
  }
  return out;
}

std::size_t shortest_parse(std::span<const ActionId> s, const std::vector<std::vector<ActionId>>& tokens) {
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(s.size() + 1, kNone);
  best[0] = 0;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    for (const auto& t : tokens) {
      if (t.empty() || t.size() > i || best[i - t.size()] == kNone) continue;
      if (std::equal(t.begin(), t.end(), s.begin() + static_cast<std::ptrdiff_t>(i - t.size()))) {
        best[i] = std::min(best[i], best[i - t.size()] + 1);
      }
    }
  }
  if (best.back() == kNone) throw MetricError("object cannot be parsed by the token set");
  return best.back();
}

std::vector<std::vector<ActionId>> library_tokens(const ActionLibrary& library) {
  std::vector<std::vector<ActionId>> tokens;
  for (const auto& a : library.actions())
    if (!a.is_terminal) tokens.push_back(a.expansion);
  return tokens;
}

double shortest_parse_length(const ActionLibrary& library, const std::vector<std::vector<ActionId>>& objects) {
  if (objects.empty()) throw MetricError("shortest parse length needs at least one object");
  const auto tokens = library_tokens(library);
  double total = 0.0;
  for (const auto& obj : objects) total += static_cast<double>(shortest_parse(obj, tokens));
  return total / static_cast<double>(objects.size());
}

double bpe_floor(std::size_t alphabet, const std::vector<std::vector<ActionId>>& objects, int rounds) {
  if (objects.empty()) throw MetricError("bpe floor needs at least one object");
  std::vector<std::vector<ActionId>> tokens;
  for (std::size_t a = 0; a < alphabet; ++a) tokens.push_back({static_cast<ActionId>(a)});
  for (auto& m : bpe_merges(objects, rounds)) tokens.push_back(std::move(m));
  double total = 0.0;
  for (const auto& obj : objects) total += static_cast<double>(shortest_parse(obj, tokens));
  return total / static_cast<double>(objects.size());
}

TopKResult topk_reward_diversity(const Environment& env, std::span<const TerminalState> samples, std::size_t k) {
  if (k == 0 || samples.size() < k) throw MetricError("top-k needs at least k samples");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return samples[a].reward > samples[b].reward; });
  order.resize(k);
  TopKResult res;
  for (std::size_t i : order) res.mean_reward += samples[i].reward;
  res.mean_reward /= static_cast<double>(k);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      total += static_cast<double>(env.distance(samples[order[a]].state, samples[order[b]].state));
      ++pairs;
    }
  }
  res.diversity = pairs ? total / static_cast<double>(pairs) : 0.0;
  return res;
}

}  // namespace chunkflow
