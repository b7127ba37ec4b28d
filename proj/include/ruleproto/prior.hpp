#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ruleproto/math.hpp"
#include "ruleproto/relational.hpp"
#include "ruleproto/rules.hpp"

namespace ruleproto {

// Free parameters of the generative model. Outcome-count parameters default
// to the rule-count ones unless overridden.
struct Hyperparams {
  double alpha = 0.1;
  double beta = 0.9;
  std::optional<double> alpha_out;
  std::optional<double> beta_out;
  double gamma_rule = 0.2;
  double gamma_out = 0.2;
  double beta_term = 0.8;
  double alpha_term = 0.3;
  double rho = 0.9;
  double alpha_proto = 0.5;
  double lambda_phi = 0.1;
  double p_min = 1e-6;
  double formula_score_exponent = 0.5;

  double outcome_alpha() const { return alpha_out.value_or(alpha); }
  double outcome_beta() const { return beta_out.value_or(beta); }

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0,1)");
    };
    prob(alpha, "alpha");
    prob(beta, "beta");
    prob(outcome_alpha(), "alpha_out");
    prob(outcome_beta(), "beta_out");
    prob(gamma_rule, "gamma_rule");
    prob(gamma_out, "gamma_out");
    prob(beta_term, "beta_term");
    prob(alpha_term, "alpha_term");
    prob(rho, "rho");
    prob(alpha_proto, "alpha_proto");
    if (!(lambda_phi > 0.0)) throw std::invalid_argument("lambda_phi must be positive");
    NoiseFloor check(p_min);
    (void)check;
    if (!(formula_score_exponent > 0.0 && formula_score_exponent <= 1.0)) {
      throw std::invalid_argument("formula_score_exponent must lie in (0,1]");
    }
  }
};

// A rule prototype: like a rule, but with Dirichlet weights Φ of length n*+2
// (explicit outcomes, then the seed outcome, then noise).
struct RuleProto {
  ActionTerm action;
  Formula context;
  std::vector<Formula> outcomes;
  std::vector<double> phi;

  int num_outcomes() const { return static_cast<int>(outcomes.size()); }
  int seed_index() const { return num_outcomes(); }
  int noise_index() const { return num_outcomes() + 1; }

  bool same_structure(const RuleProto& o) const {
    return action == o.action && context == o.context && outcomes == o.outcomes;
  }
};

inline void validate_proto(const RuleProto& p) {
  if (p.phi.size() != p.outcomes.size() + 2) throw RuleError("prototype weight vector must have n*+2 entries");
  for (double w : p.phi)
    if (!(w > 0.0)) throw RuleError("prototype weights must be positive");
}

using RuleSetProto = std::vector<RuleProto>;

// ---- counts ----------------------------------------------------------------

inline double log_p_num(std::int64_t m, std::int64_t m_star, double alpha, double beta) {
  if (m < 0 || m_star < 0) return kLogZero;
  if (m > m_star) return log_geometric(alpha, m - m_star);
  return std::log1p(-alpha) + log_binomial_pmf(m_star, beta, m);
}

// P_A: gamma on NIL, the rest spread over the m* prototypes.
inline double log_p_assign(bool is_nil, std::int64_t num_protos, double gamma) {
  if (num_protos == 0) return is_nil ? 0.0 : kLogZero;
  if (is_nil) return std::log(gamma);
  return std::log1p(-gamma) - std::log(static_cast<double>(num_protos));
}

inline double log_p_A(bool is_nil, std::int64_t m_star, double gamma_rule) {
  return log_p_assign(is_nil, m_star, gamma_rule);
}

inline double log_p_B(bool is_seed, std::int64_t n_star, double gamma_out) {
  return log_p_assign(is_seed, n_star, gamma_out);
}

// ---- terms, values, formulas ----------------------------------------------

// P_term: uniform function symbol, each argument uniform over constants + v̄.
inline double log_p_term(const Vocabulary& v, const Term& t, int num_vars) {
  if (t.function < 0 || t.function >= v.num_functions()) return kLogZero;
  if (static_cast<int>(t.args.size()) != v.function_symbol(t.function).arity) return kLogZero;
  const double choices = v.num_constants() + num_vars;
  for (Arg a : t.args) {
    if (a.is_variable() && a.variable_index() >= num_vars) return kLogZero;
    if (a.is_constant() && a.constant_id() >= v.num_constants()) return kLogZero;
  }
  return -std::log(static_cast<double>(v.num_functions())) - static_cast<double>(t.args.size()) * std::log(choices);
}

// P_value: uniform over constants + v̄.
inline double log_p_value(const Vocabulary& v, Arg x, int num_vars) {
  if (x.is_variable() && x.variable_index() >= num_vars) return kLogZero;
  if (x.is_constant() && x.constant_id() >= v.num_constants()) return kLogZero;
  return -std::log(static_cast<double>(v.num_constants() + num_vars));
}

// Formula-modification measure P_for(φ | φ*, v̄), unexponentiated.
inline double log_p_for(const Vocabulary& v, const Formula& phi, const Formula& phi_star, int num_vars,
                        const Hyperparams& h) {
  double out = 0.0;
  for (const Literal& ls : phi_star) {
    out += phi.contains_term(ls.term) ? std::log(h.beta_term) : std::log1p(-h.beta_term);
  }
  std::int64_t k_new = 0;
  for (const Literal& l : phi) {
    const double lv = log_p_value(v, l.value, num_vars);
    if (is_log_zero(lv)) return kLogZero;
    const Arg* star = phi_star.value_of(l.term);
    if (star != nullptr) {
      const double same = (*star == l.value) ? h.rho : 0.0;
      out += std::log(same + (1.0 - h.rho) * std::exp(lv));
    } else {
      const double lt = log_p_term(v, l.term, num_vars);
      if (is_log_zero(lt)) return kLogZero;
      out += lt + lv;
      ++k_new;
    }
  }
  return out + log_geometric(h.alpha_term, k_new) + log_factorial(k_new);
}

// The exponentiated P_for used inside scores.
inline double scored_p_for(const Vocabulary& v, const Formula& phi, const Formula& phi_star, int num_vars,
                           const Hyperparams& h) {
  const double lp = log_p_for(v, phi, phi_star, num_vars, h);
  return is_log_zero(lp) ? kLogZero : h.formula_score_exponent * lp;
}

// P_act(z | z*): identity when derived, uniform over action symbols from scratch.
inline double log_p_act(const Vocabulary& v, const ActionTerm& z, const ActionTerm* z_star) {
  if (z_star != nullptr) return (z == *z_star) ? 0.0 : kLogZero;
  if (v.num_actions() == 0) return kLogZero;
  return -std::log(static_cast<double>(v.num_actions()));
}

// Hyperprior on Φ: total S ~ Exponential(λ), direction uniform on the simplex.
inline double log_p_phi(const std::vector<double>& phi, double lambda) {
  if (phi.size() < 2) return kLogZero;
  double s = 0.0;
  for (double w : phi) {
    if (!(w > 0.0)) return kLogZero;
    s += w;
  }
  const double dim = static_cast<double>(phi.size()) - 1.0;  // n* + 1
  return std::log(lambda) - lambda * s + log_factorial(static_cast<std::int64_t>(phi.size()) - 1) -
         dim * std::log(s);
}

inline double log_p_proto(const Vocabulary& v, const RuleProto& r, const Hyperparams& h) {
  const int nvars = r.action.num_variables();
  double out = log_p_act(v, r.action, nullptr);
  out += scored_p_for(v, r.context, Formula{}, nvars, h);
  out += log_geometric(h.outcome_alpha(), r.num_outcomes());
  out += log_p_phi(r.phi, h.lambda_phi);
  for (const auto& o : r.outcomes) out += scored_p_for(v, o, Formula{}, nvars, h);
  return out;
}

inline double log_p_G(const Vocabulary& v, const RuleSetProto& g, const Hyperparams& h) {
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j)
      if (g[i].same_structure(g[j])) return kLogZero;
  const auto m = static_cast<std::int64_t>(g.size());
  double out = log_geometric(h.alpha_proto, m) + log_factorial(m);
  for (const auto& r : g) out += log_p_proto(v, r, h);
  return out;
}

// ---- structural part of P_mod under a fixed correspondence ----------------

// Assignment of local rules to prototypes (-1 = NIL) and of each local
// outcome to a prototype outcome index or the seed slot (index n*).
struct Correspondence {
  std::vector<int> rule_proto;
  std::vector<std::vector<int>> outcome_src;
};

// Structural log-measure of one local rule given its assignment (proto may be
// null for NIL; b indexes the prototype's outcomes, n* meaning seed).
inline double log_rule_structure(const Vocabulary& v, const Rule& r, const RuleProto* proto,
                                 const std::vector<int>& b, std::int64_t m_star, const Hyperparams& h) {
  const int nvars = r.action.num_variables();
  const int n_star = proto ? proto->num_outcomes() : 0;
  static const Formula kEmpty;
  if (b.size() != r.outcomes.size()) return kLogZero;
  double out = log_p_A(proto == nullptr, m_star, h.gamma_rule);
  out += log_p_act(v, r.action, proto ? &proto->action : nullptr);
  if (is_log_zero(out)) return kLogZero;
  out += scored_p_for(v, r.context, proto ? proto->context : kEmpty, nvars, h);
  const auto n = static_cast<std::int64_t>(r.outcomes.size());
  out += log_p_num(n, n_star, h.outcome_alpha(), h.outcome_beta()) + log_factorial(n);
  for (std::size_t j = 0; j < r.outcomes.size(); ++j) {
    const int src = b[j];
    if (src < 0 || src > n_star) return kLogZero;
    const bool seed = (src == n_star);
    out += log_p_B(seed, n_star, h.gamma_out);
    out += scored_p_for(v, r.outcomes[j], seed ? kEmpty : proto->outcomes[src], nvars, h);
  }
  return out;
}

inline double log_p_mod_structural(const Vocabulary& v, const std::vector<Rule>& rules, const RuleSetProto& g,
                                   const Correspondence& corr, const Hyperparams& h) {
  const auto m = static_cast<std::int64_t>(rules.size());
  const auto m_star = static_cast<std::int64_t>(g.size());
  if (corr.rule_proto.size() != rules.size() || corr.outcome_src.size() != rules.size()) return kLogZero;
  double out = log_p_num(m, m_star, h.alpha, h.beta) + log_factorial(m);
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const int a = corr.rule_proto[i];
    const RuleProto* proto = (a >= 0 && a < static_cast<int>(g.size())) ? &g[a] : nullptr;
    if (a >= 0 && proto == nullptr) return kLogZero;
    out += log_rule_structure(v, rules[i], proto, corr.outcome_src[i], m_star, h);
  }
  return out;
}

}  // namespace ruleproto
