#include "chunkflow/backward_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace chunkflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

const std::vector<ActionId>& sequence_symbols(const Environment& env, const EnvState& x,
                                              std::vector<ActionId>& storage) {
  auto sym = env.symbols(x);
  if (!sym) throw std::invalid_argument("parse-based backward policies need a sequence environment");
  storage = std::move(*sym);
  return storage;
}

// Walks tau forward from s0, checking every recorded state.
void check_trajectory(const Environment& env, const ActionLibrary& library, const Trajectory& tau) {
  if (tau.steps.empty()) throw std::invalid_argument("empty trajectory");
  EnvState s = env.initial_state();
  for (std::size_t i = 0; i < tau.steps.size(); ++i) {
    const Step& step = tau.steps[i];
    if (step.state != s) {
      throw std::invalid_argument("trajectory step " + std::to_string(i) + " records state " +
                                  env.to_string(step.state) + " but reaches " + env.to_string(s));
    }
    s = library.apply_action(env, s, step.action);
  }
  if (s != tau.terminal) {
    throw std::invalid_argument("trajectory ends at " + env.to_string(s) + ", not " + env.to_string(tau.terminal));
  }
  if (!env.is_terminal(s)) throw std::invalid_argument("trajectory does not end in a terminal state");
}

std::size_t token_count(const ActionLibrary& library, const Trajectory& tau) {
  std::size_t k = 0;
  for (const auto& step : tau.steps) k += !library.action(step.action).is_terminal;
  return k;
}

}  // namespace

BackwardKind parse_backward_kind(const std::string& name) {
  if (name == "uniform") return BackwardKind::kUniformParent;
  if (name == "maxent") return BackwardKind::kMaxEnt;
  if (name == "shortparse") return BackwardKind::kShortParse;
  throw std::invalid_argument("unknown backward policy '" + name + "' (uniform, maxent, shortparse)");
}

std::string backward_kind_name(BackwardKind kind) {
  switch (kind) {
    case BackwardKind::kUniformParent:
      return "uniform";
    case BackwardKind::kMaxEnt:
      return "maxent";
    case BackwardKind::kShortParse:
      return "shortparse";
  }
  return "uniform";
}

std::vector<ActionId> suffix_tokens(const ActionLibrary& library, std::span<const ActionId> s, std::size_t end) {
  std::vector<ActionId> out;
  for (const auto& a : library.actions()) {
    if (a.is_terminal) continue;
    const auto& e = a.expansion;
    if (e.size() > end) continue;
    if (std::equal(e.begin(), e.end(), s.begin() + static_cast<std::ptrdiff_t>(end - e.size()))) out.push_back(a.id);
  }
  return out;
}

TokenizationCountTable n_lambda_table(std::span<const ActionId> s, const ActionLibrary& library, double lambda) {
  TokenizationCountTable table;
  table.lambda = lambda;
  table.generation = library.generation();
  table.log_n = {0.0};
  extend_table(table, s, library);
  return table;
}

void extend_table(TokenizationCountTable& table, std::span<const ActionId> s, const ActionLibrary& library) {
  if (table.log_n.empty()) table.log_n = {0.0};
  if (table.generation != library.generation()) {
    throw std::invalid_argument("tokenization table was built for another library generation");
  }
  for (std::size_t i = table.log_n.size(); i <= s.size(); ++i) {
    double acc = kNegInf;
    for (ActionId t : suffix_tokens(library, s, i)) {
      acc = log_add(acc, table.lambda + table.log_n[i - library.expand(t).size()]);
    }
    table.log_n.push_back(acc);
  }
}

double shortparse_step_logprob(std::span<const ActionId> st, std::span<const ActionId> token,
                               const TokenizationCountTable& table) {
  if (token.empty() || token.size() > st.size() ||
      !std::equal(token.begin(), token.end(), st.end() - static_cast<std::ptrdiff_t>(token.size()))) {
    throw std::invalid_argument("token is not a suffix of the state");
  }
  if (table.prefix_length() < st.size()) throw std::invalid_argument("tokenization table is too short");
  return table.lambda + table.log_n[st.size() - token.size()] - table.log_n[st.size()];
}

std::vector<ParentEdge> parent_edges(const Environment& env, const ActionLibrary& library, const EnvState& s) {
  std::vector<ParentEdge> out;
  for (const auto& a : library.actions()) {
    std::optional<EnvState> cur = s;
    for (auto it = a.expansion.rbegin(); it != a.expansion.rend() && cur; ++it) cur = env.atomic_parent(*cur, *it);
    if (cur && library.is_valid(env, *cur, a.id)) out.push_back({std::move(*cur), a.id});
  }
  return out;
}

double backward_traj_logprob(const Environment& env, const ActionLibrary& library, const Trajectory& tau,
                             const BackwardPolicy& policy) {
  check_trajectory(env, library, tau);
  if (policy.is_parse_based()) {
    std::vector<ActionId> storage;
    const auto& x = sequence_symbols(env, tau.terminal, storage);
    const double lambda = policy.effective_lambda();
    const auto table = n_lambda_table(x, library, lambda);
    return lambda * static_cast<double>(token_count(library, tau)) - table.log_n.back();
  }
  double total = 0.0;
  EnvState s = env.initial_state();
  for (const auto& step : tau.steps) {
    s = library.apply_action(env, s, step.action);
    total -= std::log(static_cast<double>(parent_edges(env, library, s).size()));
  }
  return total;
}

double backward_traj_logprob_stepwise(const Environment& env, const ActionLibrary& library, const Trajectory& tau,
                                      const BackwardPolicy& policy) {
  if (!policy.is_parse_based()) return backward_traj_logprob(env, library, tau, policy);
  check_trajectory(env, library, tau);
  std::vector<ActionId> storage;
  const auto& x = sequence_symbols(env, tau.terminal, storage);
  const auto table = n_lambda_table(x, library, policy.effective_lambda());
  double total = 0.0;
  std::size_t end = 0;
  for (const auto& step : tau.steps) {
    const Action& a = library.action(step.action);
    if (a.is_terminal) continue;  // the unique parent of a terminated string
    end += a.expansion.size();
    total += shortparse_step_logprob(std::span(x).first(end), a.expansion, table);
  }
  return total;
}

Trajectory sample_backward_trajectory(const Environment& env, const ActionLibrary& library, const EnvState& x,
                                      const BackwardPolicy& policy, std::mt19937_64& rng) {
  if (!env.is_terminal(x)) throw std::invalid_argument("backward sampling starts from a terminal state");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Trajectory tau;
  tau.terminal = x;
  tau.reward = env.reward(x);
  tau.generation = library.generation();

  if (policy.is_parse_based()) {
    std::vector<ActionId> storage;
    const auto& sym = sequence_symbols(env, x, storage);
    const auto table = n_lambda_table(sym, library, policy.effective_lambda());
    std::vector<ActionId> tokens;
    std::size_t i = sym.size();
    while (i > 0) {
      const auto cands = suffix_tokens(library, sym, i);
      if (cands.empty()) throw std::logic_error("no library token ends the prefix; atomics missing from library");
      double u = unit(rng);
      ActionId chosen = cands.back();
      for (ActionId t : cands) {
        const std::size_t len = library.expand(t).size();
        u -= std::exp(table.lambda + table.log_n[i - len] - table.log_n[i]);
        if (u <= 0.0) {
          chosen = t;
          break;
        }
      }
      tokens.push_back(chosen);
      i -= library.expand(chosen).size();
    }
    std::reverse(tokens.begin(), tokens.end());
    tokens.push_back(env.terminal_action());
    EnvState s = env.initial_state();
    for (ActionId t : tokens) {
      tau.steps.push_back({s, t});
      s = library.apply_action(env, s, t);
    }
    return tau;
  }

  const EnvState s0 = env.initial_state();
  EnvState cur = x;
  std::vector<Step> reversed;
  while (cur != s0) {
    auto edges = parent_edges(env, library, cur);
    if (edges.empty()) throw std::logic_error("state " + env.to_string(cur) + " has no parent");
    std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
    ParentEdge& e = edges[pick(rng)];
    reversed.push_back({e.parent, e.action});
    cur = std::move(e.parent);
  }
  tau.steps.assign(reversed.rbegin(), reversed.rend());
  return tau;
}

}  // namespace chunkflow
