#include "chunkflow/envs/sequence_env.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace chunkflow {

SequenceEnv::SequenceEnv(std::vector<std::string> alphabet, int max_len)
    : alphabet_(std::move(alphabet)), max_len_(max_len) {
  if (alphabet_.empty()) throw EnvError("sequence alphabet is empty");
  if (max_len_ < 1) throw EnvError("sequence max_len must be positive");
  single_char_ = std::all_of(alphabet_.begin(), alphabet_.end(), [](const std::string& s) { return s.size() == 1; });
}

std::string SequenceEnv::atomic_name(ActionId a) const {
  check_atomic(a);
  return a == terminal_action() ? "EOS" : alphabet_[a];
}

const SequenceState& SequenceEnv::seq(const EnvState& s) const {
  const auto* q = std::get_if<SequenceState>(&s);
  if (q == nullptr) throw EnvError(id() + " expects a sequence state");
  return *q;
}

bool SequenceEnv::is_terminal(const EnvState& s) const { return seq(s).terminated; }

std::vector<ActionId> SequenceEnv::valid_atomic_actions(const EnvState& s) const {
  const SequenceState& q = seq(s);
  if (q.terminated) throw EnvError("no actions at a terminal sequence state");
  std::vector<ActionId> out;
  if (static_cast<int>(q.symbols.size()) < max_len_)
    for (std::size_t a = 0; a < alphabet_.size(); ++a) out.push_back(static_cast<ActionId>(a));
  out.push_back(terminal_action());
  return out;
}

bool SequenceEnv::is_valid_atomic(const EnvState& s, ActionId a) const {
  const SequenceState& q = seq(s);
  if (q.terminated || a < 0 || a > terminal_action()) return false;
  return a == terminal_action() || static_cast<int>(q.symbols.size()) < max_len_;
}

EnvState SequenceEnv::apply_atomic(const EnvState& s, ActionId a) const {
  if (!is_valid_atomic(s, a)) throw EnvError("action " + std::to_string(a) + " is not valid at " + to_string(s));
  SequenceState q = seq(s);
  if (a == terminal_action()) {
    q.terminated = true;
  } else {
    q.symbols.push_back(a);
  }
  return q;
}

bool SequenceEnv::expansion_feasible(const EnvState& s, std::span<const ActionId> expansion) const {
  const SequenceState& q = seq(s);
  if (q.terminated || expansion.empty()) return false;
  std::size_t appended = 0;
  for (std::size_t i = 0; i < expansion.size(); ++i) {
    const ActionId a = expansion[i];
    if (a < 0 || a > terminal_action()) return false;
    if (a == terminal_action()) {
      if (i + 1 != expansion.size()) return false;
    } else {
      ++appended;
    }
  }
  return static_cast<int>(q.symbols.size() + appended) <= max_len_;
}

std::optional<EnvState> SequenceEnv::undo_candidate(const EnvState& s, ActionId a) const {
  SequenceState q = seq(s);
  if (a == terminal_action()) {
    if (!q.terminated) return std::nullopt;
    q.terminated = false;
    return q;
  }
  if (q.terminated || q.symbols.empty() || q.symbols.back() != a) return std::nullopt;
  q.symbols.pop_back();
  return q;
}

double SequenceEnv::reward(const EnvState& x) const {
  const SequenceState& q = seq(x);
  if (!q.terminated) throw EnvError("reward of a non-terminal sequence state");
  return symbols_reward(q.symbols);
}

std::int64_t SequenceEnv::potential(const EnvState& s) const {
  return static_cast<std::int64_t>(seq(s).symbols.size());
}

std::size_t SequenceEnv::distance(const EnvState& a, const EnvState& b) const {
  const auto& p = seq(a).symbols;
  const auto& q = seq(b).symbols;
  const std::size_t common = std::min(p.size(), q.size());
  std::size_t d = std::max(p.size(), q.size()) - common;
  for (std::size_t i = 0; i < common; ++i) d += p[i] != q[i];
  return d;
}

std::optional<std::vector<ActionId>> SequenceEnv::symbols(const EnvState& s) const { return seq(s).symbols; }

std::string SequenceEnv::symbols_to_string(std::span<const ActionId> symbols) const {
  std::string out;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (!single_char_ && i > 0) out += ' ';
    out += alphabet_.at(symbols[i]);
  }
  return out;
}

std::vector<ActionId> SequenceEnv::parse_symbols(const std::string& text) const {
  std::vector<ActionId> out;
  auto lookup = [&](const std::string& tok) {
    auto it = std::find(alphabet_.begin(), alphabet_.end(), tok);
    if (it == alphabet_.end()) throw EnvError("symbol '" + tok + "' not in the " + id() + " alphabet");
    out.push_back(static_cast<ActionId>(it - alphabet_.begin()));
  };
  if (single_char_ && text.find(' ') == std::string::npos) {
    for (char c : text) lookup(std::string(1, c));
  } else {
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) lookup(tok);
  }
  return out;
}

std::string SequenceEnv::to_string(const EnvState& s) const {
  const SequenceState& q = seq(s);
  return symbols_to_string(q.symbols) + (q.terminated ? "$" : "");
}

EnvState SequenceEnv::from_string(const std::string& text) const {
  SequenceState q;
  std::string body = text;
  if (!body.empty() && body.back() == '$') {
    q.terminated = true;
    body.pop_back();
  }
  q.symbols = parse_symbols(body);
  if (static_cast<int>(q.symbols.size()) > max_len_) throw EnvError("sequence longer than max_len: '" + text + "'");
  return q;
}

void SequenceEnv::check_enumerable() const {
  const double count = std::pow(static_cast<double>(alphabet_.size()), max_len_);
  if (count > 1e7) throw EnvError(id() + " is too large to enumerate (|alphabet|^max_len > 1e7)");
}

int bitseq_max_word_tiling(std::span<const ActionId> s, const std::vector<std::vector<ActionId>>& words) {
  const std::size_t n = s.size();
  std::vector<int> best(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    best[i] = best[i - 1];
    for (const auto& w : words) {
      if (w.size() > i) continue;
      if (std::equal(w.begin(), w.end(), s.begin() + static_cast<std::ptrdiff_t>(i - w.size()))) {
        best[i] = std::max(best[i], best[i - w.size()] + 1);
      }
    }
  }
  return best[n];
}

int bitseq_max_word_tiling(const std::string& s, const std::vector<std::string>& words) {
  std::vector<ActionId> ids(s.begin(), s.end());
  std::vector<std::vector<ActionId>> w;
  for (const auto& word : words) w.emplace_back(word.begin(), word.end());
  return bitseq_max_word_tiling(ids, w);
}

BitSequence::BitSequence(BitSequenceParams params) : SequenceEnv({"0", "1"}, params.length), params_(std::move(params)) {
  if (params_.length <= 0 || params_.length % 8 != 0) throw EnvError("bit sequence length must be a multiple of 8");
  for (const auto& w : params_.words) {
    if (w.size() != 8) throw EnvError("bit sequence words must have length 8");
    words_.push_back(parse_symbols(w));
  }
}

double BitSequence::symbols_reward(std::span<const ActionId> symbols) const {
  const double r = bitseq_max_word_tiling(symbols, words_) / (params_.length / 8.0);
  return std::max(r, kRewardFloor);
}

std::vector<std::string> rna_task_motifs(int task, int count, int length) {
  if (task < 1) throw EnvError("rna task ids start at 1");
  if (count < 1 || length < 1) throw EnvError("rna motif count and length must be positive");
  static const char kAlphabet[] = {'A', 'C', 'G', 'U'};
  std::mt19937 pool_rng(20240611u);
  std::vector<std::string> codons;
  while (codons.size() < 6) {
    std::string c;
    for (int i = 0; i < 3; ++i) c += kAlphabet[pool_rng() % 4];
    if (std::find(codons.begin(), codons.end(), c) == codons.end()) codons.push_back(c);
  }
  std::set<std::string> used;
  std::vector<std::string> motifs;
  for (int t = 1; t <= task; ++t) {
    std::mt19937 rng(7919u * static_cast<unsigned>(t) + 17u);
    motifs.clear();
    int attempts = 0;
    while (static_cast<int>(motifs.size()) < count) {
      if (++attempts > 100000) throw EnvError("cannot generate enough distinct rna motifs");
      std::string m;
      while (static_cast<int>(m.size()) < length) m += codons[rng() % codons.size()];
      m.resize(length);
      if (used.insert(m).second) motifs.push_back(m);
    }
  }
  return motifs;
}

SyntheticRna::SyntheticRna(SyntheticRnaParams params)
    : SequenceEnv({"A", "C", "G", "U"}, params.length), params_(std::move(params)) {
  if (params_.motifs.empty()) params_.motifs = rna_task_motifs(params_.task, params_.motif_count, params_.length);
  if (!(params_.decay > 0.0)) throw EnvError("rna decay must be positive");
  for (const auto& m : params_.motifs) {
    if (static_cast<int>(m.size()) != params_.length) throw EnvError("rna motif length differs from sequence length");
    motif_ids_.push_back(parse_symbols(m));
  }
}

double SyntheticRna::symbols_reward(std::span<const ActionId> symbols) const {
  if (static_cast<int>(symbols.size()) != params_.length) return kRewardFloor;
  std::size_t best = symbols.size();
  for (const auto& m : motif_ids_) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < m.size(); ++i) d += m[i] != symbols[i];
    best = std::min(best, d);
  }
  return kRewardFloor + (1.0 - kRewardFloor) * std::exp(-params_.decay * static_cast<double>(best));
}

}  // namespace chunkflow
