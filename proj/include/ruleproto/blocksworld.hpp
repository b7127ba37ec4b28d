#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ruleproto/relational.hpp"
#include "ruleproto/rules.hpp"

namespace ruleproto {

enum class Family { kGripperSize, kSlipperyGripper, kSlipperySize, kRandomUnrelated };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::kGripperSize: return "gripper-size";
    case Family::kSlipperyGripper: return "slippery-gripper";
    case Family::kSlipperySize: return "slippery-size";
    case Family::kRandomUnrelated: return "random-unrelated";
  }
  return "?";
}

inline std::optional<Family> parse_family(std::string_view s) {
  for (Family f : {Family::kGripperSize, Family::kSlipperyGripper, Family::kSlipperySize, Family::kRandomUnrelated})
    if (family_name(f) == s) return f;
  return std::nullopt;
}

struct FamilyParams {
  int num_sizes = 7;
  double success_lo = 0.6;
  double success_hi = 0.95;
  double jitter_concentration = 50.0;  // 0 keeps the base probabilities
  double gripper_empty_prob = 0.9;
  int max_random_rules = 4;
  int max_random_literals = 3;
  int max_random_outcomes = 3;
  int rejection_cap = 10000;

  void validate() const {
    if (num_sizes < 1 || num_sizes > 50) throw std::invalid_argument("num_sizes must lie in [1, 50]");
    if (!(0.0 <= success_lo && success_lo <= success_hi && success_hi <= 1.0))
      throw std::invalid_argument("success interval must satisfy 0 <= lo <= hi <= 1");
    if (jitter_concentration < 0.0) throw std::invalid_argument("jitter_concentration must be >= 0");
    if (!(gripper_empty_prob >= 0.0 && gripper_empty_prob <= 1.0))
      throw std::invalid_argument("gripper_empty_prob must lie in [0, 1]");
    if (max_random_rules < 1 || max_random_literals < 1 || max_random_outcomes < 1)
      throw std::invalid_argument("random family limits must be positive");
    if (rejection_cap < 1) throw std::invalid_argument("rejection_cap must be positive");
  }
};

// Vocabulary, the three-object world {A, B, TABLE} and the pickup action.
struct Domain {
  Family family = Family::kGripperSize;
  FamilyParams params;
  std::shared_ptr<Vocabulary> vocab;
  std::shared_ptr<const World> world;
  ActionTerm schema;  // pickup(X,Y)
  ActionTerm action;  // pickup(A,B)

  bool has(std::string_view function) const { return vocab->find_function(function).has_value(); }
};

inline Domain make_domain(Family family, const FamilyParams& params = {}) {
  params.validate();
  Domain d;
  d.family = family;
  d.params = params;
  d.vocab = std::make_shared<Vocabulary>();
  Vocabulary& v = *d.vocab;
  const ConstId a = v.add_constant("A", "block");
  const ConstId b = v.add_constant("B", "block");
  const ConstId table = v.add_constant("TABLE", "table");
  for (const char* p : {"on", "clear", "inhand", "inhand-nil", "block", "table"})
    v.add_predicate(p, std::string_view(p) == "on" ? 2 : std::string_view(p) == "inhand-nil" ? 0 : 1);
  const bool sizes = family == Family::kGripperSize || family == Family::kSlipperySize ||
                     family == Family::kRandomUnrelated;
  const bool slippery = family != Family::kGripperSize;
  const bool distracters = family == Family::kGripperSize || family == Family::kRandomUnrelated;
  if (slippery) v.add_predicate("wet", 0);
  if (sizes) {
    std::vector<std::string> names;
    for (int i = 1; i <= params.num_sizes; ++i) {
      names.push_back("s" + std::to_string(i));
      v.add_constant(names.back(), "size");
    }
    v.add_function("size", 1, names);
  }
  if (distracters) {
    for (const char* c : {"red", "green", "blue"}) v.add_constant(c, "color");
    for (const char* t : {"smooth", "rough", "bumpy"}) v.add_constant(t, "texture");
    v.add_function("color", 1, {"red", "green", "blue"});
    v.add_function("texture", 1, {"smooth", "rough", "bumpy"});
  }
  v.add_action("pickup", 2);
  d.world = std::make_shared<World>(d.vocab, std::vector<ConstId>{a, b, table});
  d.schema = parse_action(v, "pickup(X,Y)");
  d.action = parse_action(v, "pickup(A,B)");
  return d;
}

// A sampled task: its ground-truth rule set and the seed it came from.
struct TaskSpec {
  Family family = Family::kGripperSize;
  RuleSet truth;
  std::uint64_t seed = 0;
};

namespace detail {

template <class Rng>
std::vector<double> dirichlet(const std::vector<double>& alpha, Rng& rng) {
  std::vector<double> out;
  double sum = 0.0;
  for (double a : alpha) {
    std::gamma_distribution<double> g(a, 1.0);
    out.push_back(g(rng));
    sum += out.back();
  }
  for (double& x : out) x /= sum;
  return out;
}

template <class Rng>
std::vector<double> jitter(const std::vector<double>& base, double concentration, Rng& rng) {
  if (concentration <= 0.0) return base;
  std::vector<double> alpha;
  for (double p : base) alpha.push_back(std::max(p * concentration, 1e-3));
  return dirichlet(alpha, rng);
}

template <class Rng>
std::size_t pick(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline Formula pickup_success(const Vocabulary& v) {
  return parse_formula(v, {"inhand(X)", "~inhand-nil", "~on(X,Y)", "~clear(X)", "clear(Y)"});
}

inline Formula pickup_fall(const Vocabulary& v) { return parse_formula(v, {"on(X,TABLE)", "~on(X,Y)"}); }

// The four slippery rules: wet/dry crossed with from-block/from-table.
template <class Rng>
std::vector<Rule> slippery_rules(const Domain& d, const std::vector<Literal>& extra, Rng& rng) {
  const Vocabulary& v = *d.vocab;
  const Formula success = pickup_success(v);
  const Formula fall = pickup_fall(v);
  struct Base {
    bool from_block;
    bool wet;
    std::vector<double> probs;
  };
  const std::vector<Base> bases = {
      {true, false, {0.7, 0.2, 0.05, 0.05}},
      {true, true, {0.2, 0.2, 0.3, 0.3}},
      {false, false, {0.8, 0.15, 0.05}},
      {false, true, {0.3, 0.5, 0.2}},
  };
  std::vector<Rule> rules;
  for (const Base& b : bases) {
    Formula ctx = parse_formula(v, {"on(X,Y)", "clear(X)", "inhand-nil", b.from_block ? "block(Y)" : "~block(Y)",
                                    b.wet ? "wet" : "~wet"});
    for (const Literal& l : extra) ctx = ctx.with(l);
    Rule r{d.schema, ctx, {}, jitter(b.probs, d.params.jitter_concentration, rng)};
    r.outcomes.push_back(success);
    if (b.from_block) r.outcomes.push_back(fall);
    r.outcomes.push_back(Formula{});
    rules.push_back(std::move(r));
  }
  return rules;
}

template <class Rng>
Literal random_literal(const std::vector<Term>& terms, const Vocabulary& v, Rng& rng) {
  const Term& t = terms[pick(terms.size(), rng)];
  const auto& range = v.function_symbol(t.function).range;
  return {t, Arg::constant(range[pick(range.size(), rng)])};
}

// Terms whose arguments are drawn from the given argument list.
inline std::vector<Term> terms_over(const Vocabulary& v, const std::vector<Arg>& args) {
  std::vector<Term> out;
  const auto n = static_cast<std::int64_t>(args.size());
  for (SymbolId f = 0; f < v.num_functions(); ++f) {
    const int arity = v.function_symbol(f).arity;
    std::int64_t combos = 1;
    for (int i = 0; i < arity; ++i) combos *= n;
    for (std::int64_t k = 0; k < combos; ++k) {
      Term t{f, {}};
      std::int64_t rem = k;
      for (int i = 0; i < arity; ++i) {
        t.args.push_back(args[static_cast<std::size_t>(rem % n)]);
        rem /= n;
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

template <class Rng>
Formula random_formula(const std::vector<Term>& terms, const Vocabulary& v, int max_len, Rng& rng) {
  const int len = std::uniform_int_distribution<int>(1, max_len)(rng);
  Formula f;
  while (static_cast<int>(f.size()) < len) {
    Literal l = random_literal(terms, v, rng);
    if (!f.contains_term(l.term)) f = f.with(l);
  }
  return f;
}

template <class Rng>
std::vector<Rule> random_rules(const Domain& d, Rng& rng) {
  const Vocabulary& v = *d.vocab;
  const FamilyParams& p = d.params;
  const auto ctx_terms = terms_over(v, {Arg::variable(0), Arg::variable(1)});
  const auto out_terms = terms_over(v, {Arg::variable(0), Arg::variable(1), Arg::constant(v.constant("TABLE"))});
  for (int attempt = 0; attempt < p.rejection_cap; ++attempt) {
    const int m = std::uniform_int_distribution<int>(1, p.max_random_rules)(rng);
    std::vector<Rule> rules;
    bool ok = true;
    for (int i = 0; i < m && ok; ++i) {
      Rule r;
      r.action = d.schema;
      r.context = random_formula(ctx_terms, v, p.max_random_literals, rng);
      // Make the context exclusive with every earlier rule by contradicting
      // one of its literals.
      for (const Rule& prev : rules) {
        if (contexts_disjoint(prev.context, r.context)) continue;
        std::vector<Literal> free;
        for (const Literal& l : prev.context)
          if (!r.context.contains_term(l.term) && v.function_symbol(l.term.function).range.size() > 1) free.push_back(l);
        if (free.empty()) {
          ok = false;
          break;
        }
        const Literal& l = free[pick(free.size(), rng)];
        const auto& range = v.function_symbol(l.term.function).range;
        ConstId val = l.value.constant_id();
        while (val == l.value.constant_id()) val = range[pick(range.size(), rng)];
        r.context = r.context.with({l.term, Arg::constant(val)});
      }
      const int n = std::uniform_int_distribution<int>(1, p.max_random_outcomes)(rng);
      for (int j = 0; j < n; ++j) r.outcomes.push_back(random_formula(out_terms, v, p.max_random_literals, rng));
      r.probs = dirichlet(std::vector<double>(n + 1, 1.0), rng);
      try {
        validate_rule(v, r);
      } catch (const RuleError&) {
        ok = false;
      }
      rules.push_back(std::move(r));
    }
    if (ok) return rules;
  }
  throw std::runtime_error("random-unrelated: rejection cap exceeded");
}

}  // namespace detail

// Samples one task's ground-truth rule set.
template <class Rng>
TaskSpec gen_task(const Domain& d, Rng& rng) {
  const Vocabulary& v = *d.vocab;
  TaskSpec t;
  t.family = d.family;
  std::vector<Rule> rules;
  switch (d.family) {
    case Family::kGripperSize: {
      const int size = std::uniform_int_distribution<int>(1, d.params.num_sizes)(rng);
      const double p = std::uniform_real_distribution<double>(d.params.success_lo, d.params.success_hi)(rng);
      Rule r{d.schema, parse_formula(v, {"inhand-nil", "size(X)=s" + std::to_string(size)}),
             {detail::pickup_success(v), Formula{}}, {p, 1.0 - p, 0.0}};
      rules.push_back(std::move(r));
      break;
    }
    case Family::kSlipperyGripper:
      rules = detail::slippery_rules(d, {}, rng);
      break;
    case Family::kSlipperySize: {
      const int size = std::uniform_int_distribution<int>(1, d.params.num_sizes)(rng);
      rules = detail::slippery_rules(d, {parse_literal(v, "size(X)=s" + std::to_string(size))}, rng);
      break;
    }
    case Family::kRandomUnrelated:
      rules = detail::random_rules(d, rng);
      break;
  }
  for (const Rule& r : rules) validate_rule(v, r);
  for (std::size_t i = 0; i < rules.size(); ++i)
    for (std::size_t j = i + 1; j < rules.size(); ++j)
      if (!contexts_disjoint(rules[i].context, rules[j].context))
        throw std::logic_error("generated rules may apply to the same state");
  t.truth = RuleSet(std::move(rules));
  return t;
}

// Uniform random values on every ground term, then A made a block and the
// gripper emptied with the configured probability.
template <class Rng>
State gen_state(const Domain& d, Rng& rng) {
  const World& w = *d.world;
  const Vocabulary& v = *d.vocab;
  std::vector<ConstId> values;
  for (int i = 0; i < w.num_slots(); ++i) {
    const auto& r = w.slot_range(i);
    values.push_back(r[detail::pick(r.size(), rng)]);
  }
  values[w.slot_of(parse_term(v, "block(A)"))] = Vocabulary::kTrue;
  const bool empty = std::bernoulli_distribution(d.params.gripper_empty_prob)(rng);
  values[w.slot_of(parse_term(v, "inhand-nil"))] = empty ? Vocabulary::kTrue : Vocabulary::kFalse;
  return State(d.world, std::move(values));
}

template <class Rng>
Example gen_example(const Domain& d, const TaskSpec& t, Rng& rng) {
  State s = gen_state(d, rng);
  State next = sample_next(t.truth, s, d.action, rng).first;
  return Example{std::move(s), d.action, std::move(next)};
}

template <class Rng>
std::vector<Example> gen_dataset(const Domain& d, const TaskSpec& t, std::size_t n, Rng& rng) {
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(gen_example(d, t, rng));
  return out;
}

}  // namespace ruleproto
