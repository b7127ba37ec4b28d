#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ruleproto/relational.hpp"

namespace ruleproto {

class OverlapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RuleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A probabilistic planning rule: action schema, context, explicit outcomes
// and an outcome distribution whose last entry is the noise probability.
struct Rule {
  ActionTerm action;
  Formula context;
  std::vector<Formula> outcomes;
  std::vector<double> probs;

  std::size_t num_outcomes() const { return outcomes.size(); }
  double noise_prob() const { return probs.empty() ? 0.0 : probs.back(); }
};

// Constant p_min that stands in for the per-state probability of a noise
// successor.
class NoiseFloor {
 public:
  constexpr NoiseFloor() = default;
  explicit NoiseFloor(double p_min) : p_min_(p_min) {
    if (!(p_min > 0.0 && p_min <= 1e-3)) throw std::invalid_argument("p_min must lie in (0, 1e-3]");
  }
  constexpr double value() const { return p_min_; }

 private:
  double p_min_ = 1e-6;
};

// One observed transition: a known action performed in a known state.
struct Example {
  State prior;
  ActionTerm action;
  State next;
};

// The empty-context rule with outcomes {no change, noise}.
inline Rule make_default_rule(double p_no_change = 1.0) {
  Rule r;
  r.outcomes.push_back(Formula{});
  r.probs = {p_no_change, 1.0 - p_no_change};
  return r;
}

class RuleSet {
 public:
  RuleSet() : default_(make_default_rule()) {}
  explicit RuleSet(std::vector<Rule> rules, double default_no_change = 1.0)
      : rules_(std::move(rules)), default_(make_default_rule(default_no_change)) {}

  const std::vector<Rule>& rules() const { return rules_; }
  std::vector<Rule>& mutable_rules() { return rules_; }
  const Rule& default_rule() const { return default_; }
  void set_default_no_change(double p) { default_ = make_default_rule(p); }
  std::size_t size() const { return rules_.size(); }

 private:
  std::vector<Rule> rules_;
  Rule default_;
};

struct AppliedRule {
  const Rule* rule = nullptr;
  Binding binding;
  bool is_default = false;
};

// Sound syntactic disjointness test for two outcomes of a rule with the given
// context. Returns false only when no state satisfying the context can give
// both outcomes the same successor: either a shared term gets different
// constant values, or a term set by one outcome alone is pinned by the
// context to a different constant (so that outcome always changes it while
// the other never does). Otherwise returns true (possible overlap). Assumes
// distinct schema variables bind distinct objects.
inline bool outcomes_overlap(const Formula& o1, const Formula& o2, const Formula& context) {
  auto differs = [](Arg a, Arg b) { return a.is_constant() && b.is_constant() && !(a == b); };
  auto one_sided = [&](const Formula& a, const Formula& b) {
    for (const Literal& l : a) {
      if (b.contains_term(l.term)) continue;
      const Arg* c = context.value_of(l.term);
      if (c != nullptr && differs(*c, l.value)) return true;
    }
    return false;
  };
  for (const Literal& l : o1) {
    const Arg* v = o2.value_of(l.term);
    if (v != nullptr && differs(*v, l.value)) return false;
  }
  if (one_sided(o1, o2) || one_sided(o2, o1)) return false;
  return true;
}

// True when some shared context term has different constant values, so the
// two rules can never apply to the same (s, a).
inline bool contexts_disjoint(const Formula& c1, const Formula& c2) {
  for (const Literal& l : c1) {
    const Arg* v = c2.value_of(l.term);
    if (v != nullptr && v->is_constant() && l.value.is_constant() && !(*v == l.value)) return true;
  }
  return false;
}

inline void validate_rule(const Vocabulary& vocab, const Rule& r) {
  if (r.action.action < 0 || r.action.action >= vocab.num_actions()) throw RuleError("rule has unknown action");
  if (!r.action.is_schema()) throw RuleError("rule action must use distinct variables");
  const int nvars = r.action.num_variables();
  if (r.context.max_variable_index() >= nvars) throw RuleError("context uses a variable outside the action");
  for (const auto& o : r.outcomes) {
    if (o.max_variable_index() >= nvars) throw RuleError("outcome uses a variable outside the action");
  }
  if (r.probs.size() != r.outcomes.size() + 1) throw RuleError("probability vector must have n+1 entries");
  double sum = 0.0;
  for (double p : r.probs) {
    if (!(p >= 0.0)) throw RuleError("negative outcome probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw RuleError("outcome probabilities must sum to 1");
  for (std::size_t i = 0; i < r.outcomes.size(); ++i) {
    for (std::size_t j = i + 1; j < r.outcomes.size(); ++j) {
      if (r.outcomes[i] == r.outcomes[j]) throw RuleError("duplicate outcome");
      if (outcomes_overlap(r.outcomes[i], r.outcomes[j], r.context)) {
        throw RuleError("outcomes " + to_string(vocab, r.outcomes[i]) + " and " +
                        to_string(vocab, r.outcomes[j]) + " may overlap");
      }
    }
  }
}

inline AppliedRule applicable_rule(const RuleSet& rs, const State& s, const ActionTerm& a) {
  AppliedRule found;
  for (const Rule& r : rs.rules()) {
    auto theta = bind_action(r.action, a);
    if (!theta || !formula_holds(r.context, *theta, s)) continue;
    if (found.rule != nullptr) throw OverlapError("two rules apply to the same state and action");
    found.rule = &r;
    found.binding = std::move(*theta);
  }
  if (found.rule == nullptr) {
    found.rule = &rs.default_rule();
    found.binding = Binding{};
    found.is_default = true;
  }
  return found;
}

// Index of the unique explicit outcome o with f_o(s) = s', or -1 for noise.
inline int attribute_outcome(const Rule& r, const Binding& theta, const State& s, const State& next) {
  int found = -1;
  for (std::size_t i = 0; i < r.outcomes.size(); ++i) {
    if (apply_outcome(s, r.outcomes[i], theta) == next) {
      if (found >= 0) throw OverlapError("two outcomes explain the same transition");
      found = static_cast<int>(i);
    }
  }
  return found;
}

inline std::vector<std::pair<State, double>> explicit_successors(const Rule& r, const State& s,
                                                                 const Binding& theta) {
  std::vector<std::pair<State, double>> out;
  out.reserve(r.outcomes.size());
  for (std::size_t i = 0; i < r.outcomes.size(); ++i) {
    State next = apply_outcome(s, r.outcomes[i], theta);
    for (const auto& [prev, p] : out) {
      if (prev == next) throw OverlapError("two outcomes yield the same successor");
    }
    out.emplace_back(std::move(next), r.probs[i]);
  }
  return out;
}

// Approximate transition probability: p_o for the outcome producing next,
// otherwise p_noise * p_min.
inline double transition_prob(const RuleSet& rs, const State& s, const ActionTerm& a, const State& next,
                              NoiseFloor floor = NoiseFloor{}) {
  AppliedRule ar = applicable_rule(rs, s, a);
  int idx = attribute_outcome(*ar.rule, ar.binding, s, next);
  if (idx >= 0) return ar.rule->probs[idx];
  return ar.rule->noise_prob() * floor.value();
}

// Flips 1-3 distinct slots to a different value in their range.
template <class Rng>
State perturb_state(const State& s, Rng& rng) {
  const World& w = s.world();
  std::vector<int> candidates;
  for (int i = 0; i < w.num_slots(); ++i)
    if (w.slot_range(i).size() > 1) candidates.push_back(i);
  if (candidates.empty()) return s;
  std::uniform_int_distribution<int> count_dist(1, std::min<int>(3, static_cast<int>(candidates.size())));
  const int k = count_dist(rng);
  std::vector<ConstId> values = s.values();
  for (int n = 0; n < k; ++n) {
    std::uniform_int_distribution<std::size_t> pick(n, candidates.size() - 1);
    std::swap(candidates[n], candidates[pick(rng)]);
    const int slot = candidates[n];
    const auto& range = w.slot_range(slot);
    std::uniform_int_distribution<std::size_t> vd(0, range.size() - 2);
    std::size_t vi = vd(rng);
    if (range[vi] == values[slot]) vi = range.size() - 1;
    values[slot] = range[vi];
  }
  return State(s.world_ptr(), std::move(values));
}

// Samples a successor. The tag is the explicit outcome index, or -1 when the
// noise outcome fired.
template <class Rng>
std::pair<State, int> sample_next(const RuleSet& rs, const State& s, const ActionTerm& a, Rng& rng) {
  AppliedRule ar = applicable_rule(rs, s, a);
  const Rule& r = *ar.rule;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  for (std::size_t i = 0; i < r.outcomes.size(); ++i) {
    if (x < r.probs[i]) return {apply_outcome(s, r.outcomes[i], ar.binding), static_cast<int>(i)};
    x -= r.probs[i];
  }
  if (r.noise_prob() <= 0.0) {
    // Rounding left a sliver past the last explicit outcome.
    for (std::size_t i = r.outcomes.size(); i-- > 0;) {
      if (r.probs[i] > 0.0) return {apply_outcome(s, r.outcomes[i], ar.binding), static_cast<int>(i)};
    }
  }
  return {perturb_state(s, rng), -1};
}

}  // namespace ruleproto
