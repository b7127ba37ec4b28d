#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <boost/dynamic_bitset.hpp>

#include "ruleproto/likelihood.hpp"
#include "ruleproto/prior.hpp"
#include "ruleproto/rules.hpp"

namespace ruleproto {

using Bits = boost::dynamic_bitset<std::uint64_t>;

struct SearchSettings {
  std::size_t candidate_cap = 200;  // per operator family per step
  std::size_t explain_budget = 20;  // seed examples tried by explain_examples
  int explain_rounds = 4;
  int max_alternations = 20;
  int max_overlap_fixes = 50;
  int max_steps = 500;
  double tolerance = 1e-9;
};

// One accepted search step, for the JSON-lines trace.
struct TraceEntry {
  std::string phase;  // "rules", "proto" or "alternation"
  int task = -1;
  int alternation = 0;
  int step = 0;
  std::string op;
  double score = 0.0;
};

using TraceSink = std::function<void(const TraceEntry&)>;

// Examples of one task plus caches keyed by literal and by outcome. Every
// rule the search builds uses the canonical schema of its action, so each
// example has one binding per rule and a literal's truth over the examples
// can be stored as a bitset.
class TaskData {
 public:
  TaskData(std::shared_ptr<const Vocabulary> vocab, std::vector<Example> examples)
      : vocab_(std::move(vocab)), examples_(std::move(examples)) {
    const std::size_t n = examples_.size();
    no_change_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Example& x = examples_[i];
      if (!x.action.is_ground()) throw std::invalid_argument("example action must be ground");
      bindings_.push_back(*bind_action(canonical_schema(*vocab_, x.action.action), x.action));
      std::vector<int> diff;
      for (int s = 0; s < x.prior.world().num_slots(); ++s)
        if (x.prior.value(s) != x.next.value(s)) diff.push_back(s);
      no_change_[i] = diff.empty();
      std::map<Term, Arg> lits;
      for (int s : diff) lits.emplace(lift(i, x.prior.world().slot_term(s)), lift(i, Arg::constant(x.next.value(s))));
      std::vector<Literal> v;
      for (auto& [t, val] : lits) v.push_back({t, val});
      changes_.push_back(Formula::from_literals(std::move(v)));
      changed_.push_back(std::move(diff));
    }
  }

  const Vocabulary& vocab() const { return *vocab_; }
  const std::shared_ptr<const Vocabulary>& vocab_ptr() const { return vocab_; }
  std::size_t size() const { return examples_.size(); }
  const std::vector<Example>& examples() const { return examples_; }
  const Example& example(std::size_t i) const { return examples_[i]; }
  const Binding& binding(std::size_t i) const { return bindings_[i]; }
  // The example's change, variabilized against its action arguments.
  const Formula& change(std::size_t i) const { return changes_[i]; }
  const Bits& no_change() const { return no_change_; }

  Bits action_bits(SymbolId a) {
    auto it = action_cache_.find(a);
    if (it != action_cache_.end()) return it->second;
    Bits b(size());
    for (std::size_t i = 0; i < size(); ++i) b[i] = examples_[i].action.action == a;
    return action_cache_.emplace(a, std::move(b)).first->second;
  }

  const Bits& literal_bits(SymbolId action, const Literal& l) {
    auto key = std::make_pair(action, l);
    auto it = literal_cache_.find(key);
    if (it != literal_cache_.end()) return it->second;
    Bits b(size());
    const Formula f = Formula::from_literals({l});
    for (std::size_t i = 0; i < size(); ++i) {
      if (examples_[i].action.action != action || !binds(f, i)) continue;
      b[i] = formula_holds(f, bindings_[i], examples_[i].prior);
    }
    return literal_cache_.emplace(std::move(key), std::move(b)).first->second;
  }

  Bits coverage(const ActionTerm& z, const Formula& ctx) {
    check_schema(z);
    Bits b = action_bits(z.action);
    for (const Literal& l : ctx) {
      b &= literal_bits(z.action, l);
      if (b.none()) break;
    }
    return b;
  }

  // Examples of the action whose successor is exactly f_o(prior).
  const Bits& explained_bits(SymbolId action, const Formula& o) {
    auto key = std::make_pair(action, o);
    auto it = explain_cache_.find(key);
    if (it != explain_cache_.end()) return it->second;
    Bits b(size());
    for (std::size_t i = 0; i < size(); ++i) b[i] = examples_[i].action.action == action && explains(o, i);
    return explain_cache_.emplace(std::move(key), std::move(b)).first->second;
  }

  // Every literal of the prior state over terms whose arguments are all
  // action arguments (zero-arity terms included), variabilized.
  Formula maximal_context(std::size_t i) const {
    const Example& x = examples_[i];
    const World& w = x.prior.world();
    const Binding& th = bindings_[i];
    std::map<Term, Arg> lits;
    for (int s = 0; s < w.num_slots(); ++s) {
      const Term& t = w.slot_term(s);
      bool ok = true;
      for (Arg a : t.args) ok = ok && std::find(th.values.begin(), th.values.end(), a.constant_id()) != th.values.end();
      if (!ok) continue;
      lits.emplace(lift(i, t), lift(i, Arg::constant(x.prior.value(s))));
    }
    std::vector<Literal> v;
    for (auto& [t, val] : lits) v.push_back({t, val});
    return Formula::from_literals(std::move(v));
  }

  void check_schema(const ActionTerm& z) const {
    if (!(z == canonical_schema(*vocab_, z.action))) {
      throw std::invalid_argument("search rules must use the canonical action schema");
    }
  }

 private:
  Arg lift(std::size_t i, Arg a) const {
    if (a.is_variable()) return a;
    const auto& vals = bindings_[i].values;
    for (std::size_t k = 0; k < vals.size(); ++k)
      if (vals[k] == a.constant_id()) return Arg::variable(static_cast<int>(k));
    return a;
  }
  Term lift(std::size_t i, const Term& t) const {
    Term out{t.function, {}};
    for (Arg a : t.args) out.args.push_back(lift(i, a));
    return out;
  }

  bool binds(const Formula& f, std::size_t i) const {
    return f.max_variable_index() < static_cast<int>(bindings_[i].values.size());
  }

  bool explains(const Formula& o, std::size_t i) const {
    if (!binds(o, i)) return false;
    const Example& x = examples_[i];
    const Binding& th = bindings_[i];
    boost::container::small_vector<int, 8> slots;
    for (const Literal& l : o) {
      const int s = x.prior.world().slot_of(l.term, th);
      if (s < 0 || x.next.value(s) != th.apply(l.value).constant_id()) return false;
      slots.push_back(s);
    }
    for (int d : changed_[i])
      if (std::find(slots.begin(), slots.end(), d) == slots.end()) return false;
    return true;
  }

  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<Example> examples_;
  std::vector<Binding> bindings_;
  std::vector<std::vector<int>> changed_;
  std::vector<Formula> changes_;
  Bits no_change_;
  std::map<SymbolId, Bits> action_cache_;
  std::map<std::pair<SymbolId, Literal>, Bits> literal_cache_;
  std::map<std::pair<SymbolId, Formula>, Bits> explain_cache_;
};

// Candidate context literals for an action: every term whose arguments are
// schema variables (plus zero-arity terms), with every value in its range.
inline std::vector<Literal> context_literal_pool(const Vocabulary& v, const ActionTerm& z) {
  const int nvars = z.num_variables();
  std::vector<Literal> out;
  for (SymbolId f = 0; f < v.num_functions(); ++f) {
    const auto& fs = v.function_symbol(f);
    std::int64_t combos = 1;
    for (int i = 0; i < fs.arity; ++i) combos *= nvars;
    for (std::int64_t k = 0; k < combos; ++k) {
      Term t{f, {}};
      std::int64_t rem = k;
      for (int i = 0; i < fs.arity; ++i) {
        t.args.push_back(Arg::variable(static_cast<int>(rem % nvars)));
        rem /= nvars;
      }
      for (ConstId c : fs.range) out.push_back({t, Arg::constant(c)});
    }
  }
  return out;
}

// Memoized pieces of match_rule for one fixed prototype set.
class RuleScorer {
 public:
  RuleScorer(const Vocabulary& v, const RuleSetProto& g, const Hyperparams& h) : v_(v), g_(g), h_(h) {}

  RuleMatch evaluate(const Rule& r, const OutcomeCounts& c) {
    const ContextInfo& ci = context(r.action, r.context);
    RuleMatch scratch = with_proto(r, c, -1, ci);
    if (ci.proto < 0) return scratch;
    RuleMatch derived = with_proto(r, c, ci.proto, ci);
    return scratch.total() > derived.total() ? scratch : derived;
  }

  // The prototype the context stage picks for this context (-1 for NIL).
  int context_proto(const ActionTerm& z, const Formula& ctx) { return context(z, ctx).proto; }

 private:
  struct ContextInfo {
    int proto = -1;
    double nil_term = 0.0;
    double proto_term = 0.0;
  };

  const ContextInfo& context(const ActionTerm& z, const Formula& ctx) {
    auto key = std::make_pair(z, ctx);
    auto it = contexts_.find(key);
    if (it != contexts_.end()) return it->second;
    const auto m_star = static_cast<std::int64_t>(g_.size());
    const int nvars = z.num_variables();
    ContextInfo ci;
    ci.nil_term = scored_p_for(v_, ctx, Formula{}, nvars, h_);
    double best = log_p_A(true, m_star, h_.gamma_rule) + ci.nil_term;
    for (std::size_t k = 0; k < g_.size(); ++k) {
      if (!(g_[k].action == z)) continue;
      const double pf = scored_p_for(v_, ctx, g_[k].context, nvars, h_);
      const double s = log_p_A(false, m_star, h_.gamma_rule) + pf;
      if (s > best) {
        best = s;
        ci.proto = static_cast<int>(k);
        ci.proto_term = pf;
      }
    }
    return contexts_.emplace(std::move(key), ci).first->second;
  }

  // Best source for one outcome under prototype p (or NIL) and its log term.
  const std::pair<int, double>& source(const Formula& o, int p, int nvars) {
    auto key = std::make_tuple(p, nvars, o);
    auto it = sources_.find(key);
    if (it != sources_.end()) return it->second;
    const int n_star = p >= 0 ? g_[p].num_outcomes() : 0;
    std::pair<int, double> best{n_star, log_p_B(true, n_star, h_.gamma_out) + scored_p_for(v_, o, Formula{}, nvars, h_)};
    for (int k = 0; k < n_star; ++k) {
      const double s = log_p_B(false, n_star, h_.gamma_out) + scored_p_for(v_, o, g_[p].outcomes[k], nvars, h_);
      if (s > best.second) best = {k, s};
    }
    return sources_.emplace(std::move(key), best).first->second;
  }

  RuleMatch with_proto(const Rule& r, const OutcomeCounts& c, int p, const ContextInfo& ci) {
    const auto m_star = static_cast<std::int64_t>(g_.size());
    const int nvars = r.action.num_variables();
    const RuleProto* proto = p >= 0 ? &g_[p] : nullptr;
    const int n_star = proto ? proto->num_outcomes() : 0;
    RuleMatch m;
    m.proto = p;
    double s = log_p_A(p < 0, m_star, h_.gamma_rule) + log_p_act(v_, r.action, proto ? &proto->action : nullptr);
    s += p < 0 ? ci.nil_term : ci.proto_term;
    const auto n = static_cast<std::int64_t>(r.outcomes.size());
    s += log_p_num(n, n_star, h_.outcome_alpha(), h_.outcome_beta()) + log_factorial(n);
    for (const Formula& o : r.outcomes) {
      const auto& [src, val] = source(o, p, nvars);
      m.sources.push_back(src);
      s += val;
    }
    m.structure = s;
    m.data = rule_data_term(proto ? proto->phi : scratch_weights(), m.sources, c, h_.p_min);
    return m;
  }

  const Vocabulary& v_;
  const RuleSetProto& g_;
  const Hyperparams& h_;
  std::map<std::pair<ActionTerm, Formula>, ContextInfo> contexts_;
  std::map<std::tuple<int, int, Formula>, std::pair<int, double>> sources_;
};

// A rule under evaluation: structure, coverage over the task's examples,
// outcome counts and its score contribution.
struct ScoredRule {
  Rule rule;
  Bits cover;
  OutcomeCounts counts;
  RuleMatch match;
};

using ScoredRulePtr = std::shared_ptr<const ScoredRule>;

struct LearnedRuleSet {
  RuleSet rules;
  std::vector<OutcomeCounts> counts;
  Correspondence correspondence;
  std::int64_t default_no_change = 0;
  std::int64_t default_noise = 0;
  double score = 0.0;
  int steps = 0;
};

namespace detail {

inline std::size_t literal_count(const Rule& r) {
  std::size_t n = r.context.size();
  for (const auto& o : r.outcomes) n += o.size();
  return n;
}

inline bool same_structure(const Rule& a, const Rule& b) {
  return a.action == b.action && a.context == b.context && a.outcomes == b.outcomes;
}

// Items ordered by decreasing frequency, then canonically.
template <class T>
std::vector<T> by_frequency(const std::map<T, int>& counts) {
  std::vector<std::pair<int, T>> v;
  for (const auto& [item, n] : counts) v.emplace_back(-n, item);
  std::sort(v.begin(), v.end());
  std::vector<T> out;
  for (auto& [n, item] : v) out.push_back(std::move(item));
  return out;
}

}  // namespace detail

// Greedy local rule-set search for one task with the prototype set fixed.
class RuleSetLearner {
 public:
  RuleSetLearner(TaskData& task, const RuleSetProto& g, const Hyperparams& h, const SearchSettings& s = {})
      : task_(task), g_(g), h_(h), s_(s), scorer_(task.vocab(), g, h), log_p_g_(log_p_G(task.vocab(), g, h)) {}

  struct OutcomeResult {
    std::vector<Formula> outcomes;
    OutcomeCounts counts;
    RuleMatch match;
  };

  // Outcome search for a fixed action and context, starting from noise only.
  OutcomeResult learn_outcomes(const ActionTerm& z, const Formula& ctx, const Bits& cover) {
    Pools pools = make_pools(z, cover);
    std::vector<Formula> cur;
    auto cur_eval = evaluate_outcomes(z, ctx, cover, cur);
    const std::vector<Formula>* proto_outcomes = nullptr;
    const int cp = scorer_.context_proto(z, ctx);
    if (cp >= 0) proto_outcomes = &g_[cp].outcomes;

    for (int step = 0; step < s_.max_steps; ++step) {
      std::optional<std::pair<std::vector<Formula>, OutcomeEval>> best;
      auto consider = [&](std::vector<Formula> cand) {
        auto fixed = normalize(z, ctx, cover, std::move(cand), pools.literals);
        if (!fixed) return;
        auto e = evaluate_outcomes(z, ctx, cover, *fixed);
        if (!e) return;
        if (!best || better(e->total(), *fixed, best->second.total(), best->first)) best.emplace(std::move(*fixed), *e);
      };
      const std::size_t cap = s_.candidate_cap;
      // Add Outcome: observed changes, then the matching prototype's outcomes.
      {
        std::size_t n = 0;
        auto add = [&](const Formula& o) {
          if (n >= cap || std::find(cur.begin(), cur.end(), o) != cur.end()) return;
          ++n;
          auto c = cur;
          c.push_back(o);
          consider(std::move(c));
        };
        for (const Formula& o : pools.changes) add(o);
        if (proto_outcomes)
          for (const Formula& o : *proto_outcomes) add(o);
      }
      // Remove Outcome
      for (std::size_t i = 0; i < cur.size() && i < cap; ++i) {
        auto c = cur;
        c.erase(c.begin() + static_cast<std::ptrdiff_t>(i));
        consider(std::move(c));
      }
      // Add Literal
      {
        std::size_t n = 0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
          for (const Literal& l : pools.literals) {
            if (n >= cap) break;
            if (cur[i].contains_term(l.term)) continue;
            ++n;
            auto c = cur;
            c[i] = c[i].with(l);
            consider(std::move(c));
          }
        }
      }
      // Remove Literal
      {
        std::size_t n = 0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
          for (const Literal& l : cur[i]) {
            if (n++ >= cap) break;
            auto c = cur;
            c[i] = c[i].without(l.term);
            consider(std::move(c));
          }
        }
      }
      // Split on Literal: one outcome per value of a new term.
      {
        std::size_t n = 0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
          for (const Term& t : pools.terms) {
            if (n >= cap) break;
            if (cur[i].contains_term(t)) continue;
            ++n;
            auto c = cur;
            const Formula base = c[i];
            c.erase(c.begin() + static_cast<std::ptrdiff_t>(i));
            for (ConstId val : task_.vocab().function_symbol(t.function).range) c.push_back(base.with({t, Arg::constant(val)}));
            consider(std::move(c));
          }
        }
      }
      // Merge Outcomes: an existing outcome united with one that could be added.
      {
        std::size_t n = 0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
          for (const Formula& o : pools.changes) {
            if (n >= cap) break;
            auto merged = cur[i].merged(o);
            if (!merged || *merged == cur[i]) continue;
            ++n;
            auto c = cur;
            c[i] = std::move(*merged);
            consider(std::move(c));
          }
        }
      }
      if (!best || !(best->second.total() > cur_eval->total() + s_.tolerance)) break;
      cur = std::move(best->first);
      cur_eval = best->second;
    }
    return OutcomeResult{cur, cur_eval->counts, cur_eval->match};
  }

  // Scored rule for (z, ctx) with learned outcomes, memoized.
  ScoredRulePtr evaluate_context(const ActionTerm& z, const Formula& ctx) {
    auto key = std::make_pair(z, ctx);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    Bits cover = task_.coverage(z, ctx);
    OutcomeResult res = learn_outcomes(z, ctx, cover);
    auto sr = std::make_shared<ScoredRule>(
        ScoredRule{Rule{z, ctx, std::move(res.outcomes), {}}, std::move(cover), std::move(res.counts), std::move(res.match)});
    memo_.emplace(std::move(key), sr);
    return sr;
  }

  // Scored rule with fixed outcomes; nullopt when the outcomes overlap under ctx.
  ScoredRulePtr evaluate_fixed(const ActionTerm& z, const Formula& ctx, const std::vector<Formula>& outcomes) {
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      for (std::size_t j = i + 1; j < outcomes.size(); ++j)
        if (outcomes_overlap(outcomes[i], outcomes[j], ctx)) return nullptr;
    Bits cover = task_.coverage(z, ctx);
    auto e = evaluate_outcomes(z, ctx, cover, outcomes);
    if (!e) return nullptr;
    return std::make_shared<ScoredRule>(ScoredRule{Rule{z, ctx, outcomes, {}}, std::move(cover), e->counts, e->match});
  }

  // Score of the task under the fixed prototype set, including log P_G.
  double score_rules(const std::vector<ScoredRulePtr>& rules) const {
    Bits covered(task_.size());
    double s = log_p_g_ + rule_count_term(rules.size(), g_.size(), h_);
    for (const auto& r : rules) {
      covered |= r->cover;
      s += r->match.total();
    }
    covered.flip();
    const auto nc = static_cast<std::int64_t>((covered & task_.no_change()).count());
    const auto all = static_cast<std::int64_t>(covered.count());
    return s + default_rule_term(nc, all - nc, h_.p_min);
  }

  // Inserts a rule, dropping every rule whose context could co-apply with it.
  static std::vector<ScoredRulePtr> insert(const std::vector<ScoredRulePtr>& rules, ScoredRulePtr r,
                                           std::size_t skip = static_cast<std::size_t>(-1)) {
    std::vector<ScoredRulePtr> out;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      if (i == skip) continue;
      const Rule& o = rules[i]->rule;
      if (o.action == r->rule.action && !contexts_disjoint(o.context, r->rule.context)) continue;
      out.push_back(rules[i]);
    }
    out.push_back(std::move(r));
    sort_rules(out);
    return out;
  }

  // Candidate rules built from examples the current rules leave to the
  // default rule or to noise.
  std::vector<ScoredRulePtr> explain_examples(const std::vector<ScoredRulePtr>& rules) {
    Bits covered(task_.size());
    Bits noise(task_.size());
    for (const auto& r : rules) {
      covered |= r->cover;
      Bits explained(task_.size());
      for (const auto& o : r->rule.outcomes) explained |= task_.explained_bits(r->rule.action.action, o);
      noise |= r->cover & ~explained;
    }
    std::vector<std::size_t> seeds;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < task_.size(); ++i) {
        if (covered[i] && !noise[i]) continue;
        if ((pass == 0) == task_.no_change()[i]) continue;
        seeds.push_back(i);
      }
    }
    std::vector<ScoredRulePtr> out;
    std::set<Formula> seen;
    std::set<std::pair<ActionTerm, Formula>> emitted;
    for (std::size_t i : seeds) {
      if (seen.size() >= s_.explain_budget) break;
      Formula ctx = task_.maximal_context(i);
      if (!seen.insert(ctx).second) continue;
      const ActionTerm z = canonical_schema(task_.vocab(), task_.example(i).action.action);
      ScoredRulePtr cand = trim(rules, evaluate_context(z, ctx));
      if (cand->cover.none()) continue;
      if (emitted.insert({cand->rule.action, cand->rule.context}).second) out.push_back(cand);
    }
    return out;
  }

  // The given rule set rescored under this learner's prototype set.
  std::vector<ScoredRulePtr> warm_start(const RuleSet* init) {
    std::vector<ScoredRulePtr> cur;
    if (!init) return cur;
    for (const Rule& r : init->rules()) {
      auto sr = evaluate_fixed(r.action, r.context, r.outcomes);
      if (sr && sr->cover.any()) cur = insert(cur, sr);
    }
    return cur;
  }

  LearnedRuleSet run(const RuleSet* init = nullptr, const TraceSink& trace = {}, int task_index = -1,
                     int alternation = 0) {
    std::vector<ScoredRulePtr> cur = warm_start(init);
    double cur_score = score_rules(cur);
    int step = 0;
    for (; step < s_.max_steps; ++step) {
      std::optional<std::tuple<double, std::vector<ScoredRulePtr>, std::string>> best;
      auto consider = [&](std::vector<ScoredRulePtr> cand, const std::string& op) {
        const double sc = score_rules(cand);
        if (!best || better_set(sc, cand, std::get<0>(*best), std::get<1>(*best))) best.emplace(sc, std::move(cand), op);
      };
      const std::size_t cap = s_.candidate_cap;
      {
        std::size_t n = 0;
        for (auto& c : explain_examples(cur)) {
          if (n++ >= cap) break;
          consider(insert(cur, c), "add-rule:explain");
        }
      }
      {
        std::size_t n = 0;
        for (std::size_t k = 0; k < g_.size() && n < cap; ++k) {
          if (g_[k].action.action < 0) continue;
          auto c = evaluate_context(g_[k].action, g_[k].context);
          if (c->cover.none() || contains(cur, c->rule)) continue;
          ++n;
          consider(insert(cur, c), "add-rule:prototype-" + std::to_string(k));
        }
      }
      for (std::size_t i = 0; i < cur.size() && i < cap; ++i) {
        auto c = cur;
        c.erase(c.begin() + static_cast<std::ptrdiff_t>(i));
        consider(std::move(c), "remove-rule");
      }
      {
        std::size_t n = 0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
          const Rule& r = cur[i]->rule;
          for (const Literal& l : r.context) {
            if (n >= cap) break;
            auto c = evaluate_context(r.action, r.context.without(l.term));
            if (c->cover.none()) continue;
            ++n;
            consider(insert(cur, c, i), "remove-literal");
          }
        }
      }
      {
        std::size_t n = 0;
        for (std::size_t i = 0; i < cur.size() && n < cap; ++i) {
          const Rule& r = cur[i]->rule;
          for (const Literal& l : pool(r.action)) {
            if (n >= cap) break;
            const Arg* have = r.context.value_of(l.term);
            if (have && *have == l.value) continue;
            Bits cov = cur[i]->cover & task_.literal_bits(r.action.action, l);
            if (!have && cov.none()) continue;
            ++n;
            auto c = evaluate_context(r.action, r.context.with(l));
            if (c->cover.none()) continue;
            consider(insert(cur, c, i), "add-literal");
          }
        }
      }
      {
        std::size_t n = 0;
        for (std::size_t i = 0; i < cur.size() && n < cap; ++i) {
          const Rule& r = cur[i]->rule;
          for (const Term& t : pool_terms(r.action)) {
            if (n >= cap) break;
            if (r.context.contains_term(t)) continue;
            ++n;
            std::vector<ScoredRulePtr> c;
            for (std::size_t j = 0; j < cur.size(); ++j)
              if (j != i) c.push_back(cur[j]);
            int parts = 0;
            for (ConstId val : task_.vocab().function_symbol(t.function).range) {
              auto part = evaluate_context(r.action, r.context.with({t, Arg::constant(val)}));
              if (part->cover.none()) continue;
              c.push_back(part);
              ++parts;
            }
            if (parts < 2) continue;
            sort_rules(c);
            consider(std::move(c), "split");
          }
        }
      }
      if (!best || !(std::get<0>(*best) > cur_score + s_.tolerance)) break;
      cur = std::move(std::get<1>(*best));
      cur_score = std::get<0>(*best);
      if (trace) trace(TraceEntry{"rules", task_index, alternation, step + 1, std::get<2>(*best), cur_score});
    }
    return finish(cur, cur_score, step);
  }

 private:
  struct OutcomeEval {
    OutcomeCounts counts;
    RuleMatch match;
    double total() const { return match.total(); }
  };

  struct Pools {
    std::vector<Formula> changes;
    std::vector<Literal> literals;
    std::vector<Term> terms;
  };

  Pools make_pools(const ActionTerm& z, const Bits& cover) const {
    std::map<Formula, int> changes;
    std::map<Literal, int> lits;
    for (std::size_t i = cover.find_first(); i != Bits::npos; i = cover.find_next(i)) {
      const Formula& c = task_.change(i);
      if (c.max_variable_index() >= z.num_variables()) continue;
      ++changes[c];
      for (const Literal& l : c) ++lits[l];
    }
    Pools p;
    p.changes = detail::by_frequency(changes);
    p.literals = detail::by_frequency(lits);
    std::set<Term> seen;
    for (const Literal& l : p.literals)
      if (seen.insert(l.term).second) p.terms.push_back(l.term);
    return p;
  }

  std::optional<OutcomeEval> evaluate_outcomes(const ActionTerm& z, const Formula& ctx, const Bits& cover,
                                               const std::vector<Formula>& outcomes) {
    OutcomeCounts c;
    std::int64_t sum = 0;
    const auto n = static_cast<std::int64_t>(cover.count());
    for (const Formula& o : outcomes) {
      const auto k = static_cast<std::int64_t>((cover & task_.explained_bits(z.action, o)).count());
      c.push_back(k);
      sum += k;
    }
    if (sum > n) return std::nullopt;  // two outcomes explain one example
    c.push_back(n - sum);
    Rule r{z, ctx, outcomes, {}};
    return OutcomeEval{c, scorer_.evaluate(r, c)};
  }

  // Sorts, rejects duplicates, then separates overlapping outcome pairs by
  // adding observed change literals, losing as few explained examples as
  // possible.
  std::optional<std::vector<Formula>> normalize(const ActionTerm& z, const Formula& ctx, const Bits& cover,
                                                std::vector<Formula> o, const std::vector<Literal>& literals) {
    auto explained = [&](const Formula& f) { return (cover & task_.explained_bits(z.action, f)).count(); };
    for (int iter = 0; iter <= s_.max_overlap_fixes; ++iter) {
      std::sort(o.begin(), o.end());
      if (std::adjacent_find(o.begin(), o.end()) != o.end()) return std::nullopt;
      std::optional<std::pair<std::size_t, std::size_t>> clash;
      for (std::size_t i = 0; i < o.size() && !clash; ++i)
        for (std::size_t j = i + 1; j < o.size() && !clash; ++j)
          if (outcomes_overlap(o[i], o[j], ctx)) clash.emplace(i, j);
      if (!clash) return o;
      if (iter == s_.max_overlap_fixes) break;
      std::optional<std::tuple<std::size_t, std::size_t, std::size_t, Formula>> fix;  // lost, size, target
      for (const Literal& l : literals) {
        for (std::size_t side = 0; side < 2; ++side) {
          const std::size_t target = side == 0 ? clash->first : clash->second;
          const std::size_t other = side == 0 ? clash->second : clash->first;
          if (o[target].contains_term(l.term)) continue;
          Formula f = o[target].with(l);
          if (outcomes_overlap(f, o[other], ctx)) continue;
          const std::size_t before = explained(o[target]);
          const std::size_t after = explained(f);
          const std::size_t lost = before > after ? before - after : 0;
          auto key = std::make_tuple(lost, o[target].size(), target, f);
          if (!fix || std::make_tuple(lost, o[target].size()) < std::make_tuple(std::get<0>(*fix), std::get<1>(*fix))) {
            fix = std::move(key);
          }
        }
      }
      if (!fix) return std::nullopt;
      o[std::get<2>(*fix)] = std::get<3>(*fix);
    }
    return std::nullopt;
  }

  bool better(double a, const std::vector<Formula>& ca, double b, const std::vector<Formula>& cb) const {
    if (a > b + s_.tolerance) return true;
    if (a < b - s_.tolerance) return false;
    if (ca.size() != cb.size()) return ca.size() < cb.size();
    std::size_t la = 0, lb = 0;
    for (const auto& f : ca) la += f.size();
    for (const auto& f : cb) lb += f.size();
    return la < lb;
  }

  bool better_set(double a, const std::vector<ScoredRulePtr>& ca, double b, const std::vector<ScoredRulePtr>& cb) const {
    if (a > b + s_.tolerance) return true;
    if (a < b - s_.tolerance) return false;
    if (ca.size() != cb.size()) return ca.size() < cb.size();
    std::size_t la = 0, lb = 0;
    for (const auto& r : ca) la += detail::literal_count(r->rule);
    for (const auto& r : cb) lb += detail::literal_count(r->rule);
    return la < lb;
  }

  // Greedy literal removal on a candidate's context, scoring the whole rule
  // set each time. Outcomes stay fixed during a round and are re-learned in
  // between.
  ScoredRulePtr trim(const std::vector<ScoredRulePtr>& rules, ScoredRulePtr cand) {
    double cur_score = score_rules(insert(rules, cand));
    for (int round = 0; round < s_.explain_rounds; ++round) {
      bool moved = false;
      while (true) {
        ScoredRulePtr best;
        double best_score = 0.0;
        for (const Literal& l : cand->rule.context) {
          auto c = evaluate_fixed(cand->rule.action, cand->rule.context.without(l.term), cand->rule.outcomes);
          if (!c) continue;
          const double sc = score_rules(insert(rules, c));
          if (!best || sc > best_score + s_.tolerance) {
            best = c;
            best_score = sc;
          }
        }
        if (!best || !(best_score > cur_score + s_.tolerance)) break;
        cand = best;
        cur_score = best_score;
        moved = true;
      }
      auto relearned = evaluate_context(cand->rule.action, cand->rule.context);
      const double sc = score_rules(insert(rules, relearned));
      if (sc > cur_score + s_.tolerance) {
        cand = relearned;
        cur_score = sc;
        moved = true;
      }
      if (!moved) break;
    }
    return cand;
  }

  static void sort_rules(std::vector<ScoredRulePtr>& rules) {
    std::sort(rules.begin(), rules.end(), [](const ScoredRulePtr& a, const ScoredRulePtr& b) {
      return std::tie(a->rule.action, a->rule.context) < std::tie(b->rule.action, b->rule.context);
    });
  }

  static bool contains(const std::vector<ScoredRulePtr>& rules, const Rule& r) {
    return std::any_of(rules.begin(), rules.end(), [&](const ScoredRulePtr& x) {
      return x->rule.action == r.action && x->rule.context == r.context;
    });
  }

  const std::vector<Literal>& pool(const ActionTerm& z) {
    auto it = pools_.find(z);
    if (it != pools_.end()) return it->second;
    return pools_.emplace(z, context_literal_pool(task_.vocab(), z)).first->second;
  }

  std::vector<Term> pool_terms(const ActionTerm& z) {
    std::vector<Term> out;
    for (const Literal& l : pool(z))
      if (out.empty() || !(out.back() == l.term)) out.push_back(l.term);
    return out;
  }

  LearnedRuleSet finish(const std::vector<ScoredRulePtr>& cur, double score, int steps) const {
    LearnedRuleSet out;
    std::vector<Rule> rules;
    Bits covered(task_.size());
    for (const auto& sr : cur) {
      Rule r = sr->rule;
      const auto& phi = sr->match.proto >= 0 ? g_[sr->match.proto].phi : scratch_weights();
      r.probs = posterior_mean_params(project_dirichlet(phi, sr->match.sources), sr->counts);
      rules.push_back(std::move(r));
      out.counts.push_back(sr->counts);
      out.correspondence.rule_proto.push_back(sr->match.proto);
      out.correspondence.outcome_src.push_back(sr->match.sources);
      covered |= sr->cover;
    }
    covered.flip();
    out.default_no_change = static_cast<std::int64_t>((covered & task_.no_change()).count());
    out.default_noise = static_cast<std::int64_t>(covered.count()) - out.default_no_change;
    const auto p = posterior_mean_params({1.0, 1.0}, {out.default_no_change, out.default_noise});
    out.rules = RuleSet(std::move(rules), p[0]);
    out.score = score;
    out.steps = steps;
    return out;
  }

  TaskData& task_;
  const RuleSetProto& g_;
  const Hyperparams& h_;
  SearchSettings s_;
  RuleScorer scorer_;
  double log_p_g_;
  std::map<std::pair<ActionTerm, Formula>, ScoredRulePtr> memo_;
  std::map<ActionTerm, std::vector<Literal>> pools_;
};

inline RuleSetLearner::OutcomeResult learn_outcomes(TaskData& task, const ActionTerm& z, const Formula& ctx,
                                                    const RuleSetProto& g, const Hyperparams& h,
                                                    const SearchSettings& s = {}) {
  RuleSetLearner learner(task, g, h, s);
  return learner.learn_outcomes(z, ctx, task.coverage(z, ctx));
}

// Candidate rules (outcome probabilities left empty) for examples the given
// rule set leaves to the default rule or to noise.
inline std::vector<Rule> explain_examples(TaskData& task, const RuleSet& rs, const RuleSetProto& g,
                                          const Hyperparams& h, const SearchSettings& s = {}) {
  RuleSetLearner learner(task, g, h, s);
  std::vector<ScoredRulePtr> cur;
  for (const Rule& r : rs.rules()) {
    auto sr = learner.evaluate_fixed(r.action, r.context, r.outcomes);
    if (sr) cur.push_back(sr);
  }
  std::vector<Rule> out;
  for (const auto& c : learner.explain_examples(cur)) out.push_back(c->rule);
  return out;
}

inline LearnedRuleSet learn_ruleset(TaskData& task, const RuleSetProto& g, const Hyperparams& h,
                                    const SearchSettings& s = {}, const RuleSet* init = nullptr,
                                    const TraceSink& trace = {}, int task_index = -1, int alternation = 0) {
  RuleSetLearner learner(task, g, h, s);
  return learner.run(init, trace, task_index, alternation);
}

// Holding the prototype set fixed, learn the target task's rule set.
inline LearnedRuleSet transfer_learn(const RuleSetProto& g_star, TaskData& target, const Hyperparams& h,
                                     const SearchSettings& s = {}, const TraceSink& trace = {}) {
  return learn_ruleset(target, g_star, h, s, nullptr, trace);
}

// ---- prototype search --------------------------------------------------------

// A learned task structure: rules with their outcome counts plus the default
// rule's counts.
struct TaskStructure {
  std::vector<Rule> rules;
  std::vector<OutcomeCounts> counts;
  std::int64_t default_no_change = 0;
  std::int64_t default_noise = 0;
};

inline TaskStructure structure_of(const LearnedRuleSet& l) {
  return TaskStructure{l.rules.rules(), l.counts, l.default_no_change, l.default_noise};
}

inline bool operator<(const AssignedCounts& a, const AssignedCounts& b) {
  return std::tie(a.counts, a.sources) < std::tie(b.counts, b.sources);
}

class ProtoLearner {
 public:
  ProtoLearner(const Vocabulary& v, const std::vector<TaskStructure>& tasks, const Hyperparams& h,
               const SearchSettings& s = {})
      : v_(v), tasks_(tasks), h_(h), s_(s) {
    for (const auto& t : tasks_) {
      for (const Rule& r : t.rules) {
        if (std::none_of(local_.begin(), local_.end(), [&](const Rule& x) { return detail::same_structure(x, r); }))
          local_.push_back(r);
      }
    }
  }

  // Objective: log P_G plus every task's structural and data terms.
  double score(const RuleSetProto& g) const {
    double s = log_p_G(v_, g, h_);
    if (is_log_zero(s)) return s;
    for (const auto& t : tasks_) {
      s += rule_count_term(t.rules.size(), g.size(), h_);
      for (std::size_t i = 0; i < t.rules.size(); ++i) s += match_rule(v_, t.rules[i], t.counts[i], g, h_).total();
      s += default_rule_term(t.default_no_change, t.default_noise, h_.p_min);
    }
    return s;
  }

  // Fits every prototype's Φ to the counts of the local rules the context
  // stage assigns to it, with outcomes mapped by the best sources.
  RuleSetProto fit(RuleSetProto g) {
    std::vector<std::vector<AssignedCounts>> groups(g.size());
    const auto m_star = static_cast<std::int64_t>(g.size());
    for (const auto& t : tasks_) {
      for (std::size_t i = 0; i < t.rules.size(); ++i) {
        const Rule& r = t.rules[i];
        const int nvars = r.action.num_variables();
        int best_proto = -1;
        double best = log_p_A(true, m_star, h_.gamma_rule) + scored_p_for(v_, r.context, Formula{}, nvars, h_);
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (!(g[k].action == r.action)) continue;
          const double sc = log_p_A(false, m_star, h_.gamma_rule) + scored_p_for(v_, r.context, g[k].context, nvars, h_);
          if (sc > best) {
            best = sc;
            best_proto = static_cast<int>(k);
          }
        }
        if (best_proto < 0) continue;
        groups[best_proto].push_back({t.counts[i], best_outcome_sources(v_, r, &g[best_proto], h_)});
      }
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
      auto key = std::make_tuple(g[k].action, g[k].context, g[k].outcomes, groups[k]);
      auto it = fits_.find(key);
      if (it == fits_.end()) it = fits_.emplace(key, fit_proto_dirichlet(groups[k], g[k].num_outcomes(), h_)).first;
      g[k].phi = it->second;
    }
    return g;
  }

  RuleSetProto run(const RuleSetProto& init = {}, const TraceSink& trace = {}, int alternation = 0) {
    RuleSetProto cur = init;
    double cur_score = score(cur);
    for (int step = 0; step < s_.max_steps; ++step) {
      std::optional<std::tuple<double, RuleSetProto, std::string>> best;
      auto consider = [&](RuleSetProto cand, const std::string& op) {
        for (const auto& p : cand)
          if (p.action.action < 0) return;
        cand = fit(std::move(cand));
        const double sc = score(cand);
        if (is_log_zero(sc)) return;
        if (!best || better(sc, cand, std::get<0>(*best), std::get<1>(*best))) best.emplace(sc, std::move(cand), op);
      };
      const std::size_t cap = s_.candidate_cap;
      consider(cur, "refit");
      {
        std::size_t n = 0;
        for (const Rule& r : local_) {
          if (n >= cap) break;
          RuleProto p{r.action, r.context, r.outcomes, {}};
          if (std::any_of(cur.begin(), cur.end(), [&](const RuleProto& x) { return x.same_structure(p); })) continue;
          ++n;
          auto c = cur;
          c.push_back(std::move(p));
          consider(std::move(c), "add-rule");
        }
      }
      for (std::size_t k = 0; k < cur.size() && k < cap; ++k) {
        auto c = cur;
        c.erase(c.begin() + static_cast<std::ptrdiff_t>(k));
        consider(std::move(c), "remove-rule");
      }
      {
        std::size_t n = 0;
        for (std::size_t k = 0; k < cur.size(); ++k) {
          for (const Literal& l : cur[k].context) {
            if (n++ >= cap) break;
            auto c = cur;
            c[k].context = c[k].context.without(l.term);
            consider(std::move(c), "remove-literal");
          }
        }
      }
      {
        std::size_t n = 0;
        for (std::size_t k = 0; k < cur.size(); ++k) {
          for (const Literal& l : context_literals(cur[k].action)) {
            if (n >= cap) break;
            const Arg* have = cur[k].context.value_of(l.term);
            if (have && *have == l.value) continue;
            ++n;
            auto c = cur;
            c[k].context = c[k].context.with(l);
            consider(std::move(c), "add-literal");
          }
        }
      }
      {
        std::size_t n = 0;
        for (std::size_t k = 0; k < cur.size(); ++k) {
          std::set<Term> terms;
          for (const Literal& l : context_literals(cur[k].action))
            if (!cur[k].context.contains_term(l.term)) terms.insert(l.term);
          for (const Term& t : terms) {
            if (n++ >= cap) break;
            auto c = cur;
            const RuleProto base = c[k];
            c.erase(c.begin() + static_cast<std::ptrdiff_t>(k));
            for (ConstId val : v_.function_symbol(t.function).range) {
              RuleProto p = base;
              p.context = p.context.with({t, Arg::constant(val)});
              c.push_back(std::move(p));
            }
            consider(std::move(c), "split");
          }
        }
      }
      {
        std::size_t n = 0;
        for (std::size_t k = 0; k < cur.size(); ++k) {
          for (const Formula& o : local_outcomes(cur[k].action)) {
            if (n >= cap) break;
            if (std::find(cur[k].outcomes.begin(), cur[k].outcomes.end(), o) != cur[k].outcomes.end()) continue;
            ++n;
            auto c = cur;
            c[k].outcomes.push_back(o);
            std::sort(c[k].outcomes.begin(), c[k].outcomes.end());
            consider(std::move(c), "add-outcome");
          }
        }
      }
      {
        std::size_t n = 0;
        for (std::size_t k = 0; k < cur.size(); ++k) {
          for (std::size_t j = 0; j < cur[k].outcomes.size(); ++j) {
            if (n++ >= cap) break;
            auto c = cur;
            c[k].outcomes.erase(c[k].outcomes.begin() + static_cast<std::ptrdiff_t>(j));
            consider(std::move(c), "remove-outcome");
          }
        }
      }
      if (!best || !(std::get<0>(*best) > cur_score + s_.tolerance)) break;
      cur = std::move(std::get<1>(*best));
      cur_score = std::get<0>(*best);
      if (trace) trace(TraceEntry{"proto", -1, alternation, step + 1, std::get<2>(*best), cur_score});
    }
    score_ = cur_score;
    return cur;
  }

  double last_score() const { return score_; }

 private:
  bool better(double a, const RuleSetProto& ga, double b, const RuleSetProto& gb) const {
    if (a > b + s_.tolerance) return true;
    if (a < b - s_.tolerance) return false;
    if (ga.size() != gb.size()) return ga.size() < gb.size();
    auto lits = [](const RuleSetProto& g) {
      std::size_t n = 0;
      for (const auto& p : g) {
        n += p.context.size();
        for (const auto& o : p.outcomes) n += o.size();
      }
      return n;
    };
    return lits(ga) < lits(gb);
  }

  std::vector<Literal> context_literals(const ActionTerm& z) const {
    std::set<Literal> s;
    for (const Rule& r : local_)
      if (r.action == z) s.insert(r.context.begin(), r.context.end());
    return {s.begin(), s.end()};
  }

  std::vector<Formula> local_outcomes(const ActionTerm& z) const {
    std::set<Formula> s;
    for (const Rule& r : local_)
      if (r.action == z) s.insert(r.outcomes.begin(), r.outcomes.end());
    return {s.begin(), s.end()};
  }

  const Vocabulary& v_;
  const std::vector<TaskStructure>& tasks_;
  const Hyperparams& h_;
  SearchSettings s_;
  std::vector<Rule> local_;
  double score_ = 0.0;
  std::map<std::tuple<ActionTerm, Formula, std::vector<Formula>, std::vector<AssignedCounts>>, std::vector<double>> fits_;
};

inline RuleSetProto learn_prototype(const Vocabulary& v, const std::vector<TaskStructure>& tasks, const Hyperparams& h,
                                    const SearchSettings& s = {}, const RuleSetProto& init = {},
                                    const TraceSink& trace = {}, int alternation = 0) {
  ProtoLearner learner(v, tasks, h, s);
  return learner.run(init, trace, alternation);
}

struct AscentResult {
  RuleSetProto prototype;
  std::vector<LearnedRuleSet> tasks;
  std::vector<double> scores;  // total score after each alternation
  int alternations = 0;
  bool converged = false;
};

inline bool same_prototype(const RuleSetProto& a, const RuleSetProto& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i].same_structure(b[i]) || a[i].phi != b[i].phi) return false;
  return true;
}

inline bool same_rules(const RuleSet& a, const RuleSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!detail::same_structure(a.rules()[i], b.rules()[i])) return false;
  return true;
}

// Alternates per-task rule-set search given G with prototype search given
// the rule sets, starting from an empty prototype set. Trace entries carry
// the total objective (log P_G plus every task's terms) at that point.
inline AscentResult coordinate_ascent(std::vector<TaskData>& tasks, const Hyperparams& h, const SearchSettings& s = {},
                                      const TraceSink& trace = {}) {
  if (tasks.empty()) throw std::invalid_argument("coordinate_ascent needs at least one task");
  const Vocabulary& v = tasks.front().vocab();
  AscentResult res;
  res.tasks.resize(tasks.size());
  std::vector<bool> started(tasks.size(), false);
  std::vector<double> task_terms(tasks.size(), 0.0);  // each task's score without log P_G
  double last = 0.0;
  auto total = [&](double log_pg) {
    double t = log_pg;
    for (double x : task_terms) t += x;
    return t;
  };
  for (int alt = 1; alt <= s.max_alternations; ++alt) {
    const double log_pg = log_p_G(v, res.prototype, h);
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      RuleSetLearner l(tasks[k], res.prototype, h, s);
      task_terms[k] = l.score_rules(l.warm_start(started[k] ? &res.tasks[k].rules : nullptr)) - log_pg;
    }
    last = total(log_pg);
    if (trace && alt == 1) trace(TraceEntry{"init", -1, alt, 0, "start", last});
    bool changed = false;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      TraceSink sink;
      if (trace) {
        sink = [&, k](const TraceEntry& e) {
          TraceEntry g = e;
          task_terms[k] = e.score - log_pg;
          last = g.score = total(log_pg);
          trace(g);
        };
      }
      const RuleSet* init = started[k] ? &res.tasks[k].rules : nullptr;
      LearnedRuleSet next = learn_ruleset(tasks[k], res.prototype, h, s, init, sink, static_cast<int>(k), alt);
      if (!same_rules(next.rules, started[k] ? res.tasks[k].rules : RuleSet{})) changed = true;
      task_terms[k] = next.score - log_pg;
      res.tasks[k] = std::move(next);
      started[k] = true;
    }
    std::vector<TaskStructure> structures;
    for (const auto& t : res.tasks) structures.push_back(structure_of(t));
    ProtoLearner pl(v, structures, h, s);
    TraceSink proto_sink;
    if (trace) {
      proto_sink = [&](const TraceEntry& e) {
        last = e.score;
        trace(e);
      };
    }
    RuleSetProto g = pl.run(res.prototype, proto_sink, alt);
    if (!same_prototype(g, res.prototype)) changed = true;
    res.prototype = std::move(g);
    res.scores.push_back(pl.last_score());
    res.alternations = alt;
    if (trace) trace(TraceEntry{"alternation", -1, alt, 0, changed ? "changed" : "stable", last});
    if (!changed) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace ruleproto
