#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ruleproto/math.hpp"
#include "ruleproto/prior.hpp"
#include "ruleproto/rules.hpp"

namespace ruleproto {

// n explicit-outcome counts followed by the noise count.
using OutcomeCounts = std::vector<std::int64_t>;

inline std::int64_t total(const OutcomeCounts& c) {
  std::int64_t n = 0;
  for (auto x : c) n += x;
  return n;
}

// Counts outcomes of r over examples it is assumed to cover.
inline OutcomeCounts collect_counts(const Rule& r, std::span<const Example> examples) {
  OutcomeCounts c(r.outcomes.size() + 1, 0);
  for (const Example& x : examples) {
    auto theta = bind_action(r.action, x.action);
    if (!theta) throw std::invalid_argument("collect_counts: example action does not match rule");
    const int idx = attribute_outcome(r, *theta, x.prior, x.next);
    ++c[idx < 0 ? r.outcomes.size() : static_cast<std::size_t>(idx)];
  }
  return c;
}

// Splits each source weight evenly among the local outcomes that map to it;
// the noise weight is carried over. b[j] in [0, n*], n* meaning the seed slot.
inline std::vector<double> project_dirichlet(const std::vector<double>& phi, const std::vector<int>& b) {
  if (phi.size() < 2) throw std::invalid_argument("project_dirichlet: weight vector too short");
  const int n_star = static_cast<int>(phi.size()) - 2;
  std::vector<int> share(phi.size(), 0);
  for (int src : b) {
    if (src < 0 || src > n_star) throw std::invalid_argument("project_dirichlet: source index out of range");
    ++share[src];
  }
  std::vector<double> out;
  out.reserve(b.size() + 1);
  for (int src : b) out.push_back(phi[src] / share[src]);
  out.push_back(phi.back());
  return out;
}

inline double polya_log_marginal(const std::vector<double>& weights, const OutcomeCounts& c) {
  if (weights.size() != c.size()) throw std::invalid_argument("polya_log_marginal: size mismatch");
  double a = 0.0;
  std::int64_t n = 0;
  double out = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (!(weights[j] > 0.0)) throw std::domain_error("polya_log_marginal: weights must be positive");
    if (c[j] < 0) throw std::domain_error("polya_log_marginal: negative count");
    a += weights[j];
    n += c[j];
    if (c[j] > 0) out += log_gamma(weights[j] + static_cast<double>(c[j])) - log_gamma(weights[j]);
  }
  if (n == 0) return 0.0;
  return out + log_gamma(a) - log_gamma(a + static_cast<double>(n));
}

inline std::vector<double> posterior_mean_params(const std::vector<double>& weights, const OutcomeCounts& c) {
  if (weights.size() != c.size()) throw std::invalid_argument("posterior_mean_params: size mismatch");
  double denom = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (!(weights[j] > 0.0)) throw std::domain_error("posterior_mean_params: weights must be positive");
    denom += weights[j] + static_cast<double>(c[j]);
  }
  std::vector<double> p(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j) p[j] = (weights[j] + static_cast<double>(c[j])) / denom;
  return p;
}

// Φ of a rule generated from scratch: one seed slot and one noise slot.
inline const std::vector<double>& scratch_weights() {
  static const std::vector<double> w{1.0, 1.0};
  return w;
}

// Polya term plus the noise-branch factor c_noise * log p_min.
inline double rule_data_term(const std::vector<double>& phi, const std::vector<int>& b, const OutcomeCounts& c,
                             double p_min) {
  const double noise = static_cast<double>(c.back()) * std::log(p_min);
  return polya_log_marginal(project_dirichlet(phi, b), c) + noise;
}

// The default rule under Dirichlet(1,1) over {no change, noise}.
inline double default_rule_term(std::int64_t no_change, std::int64_t noise, double p_min) {
  return polya_log_marginal({1.0, 1.0}, {no_change, noise}) + static_cast<double>(noise) * std::log(p_min);
}

// Best source per local outcome, chosen independently (seed on ties).
inline std::vector<int> best_outcome_sources(const Vocabulary& v, const Rule& r, const RuleProto* proto,
                                             const Hyperparams& h) {
  const int n_star = proto ? proto->num_outcomes() : 0;
  const int nvars = r.action.num_variables();
  static const Formula kEmpty;
  std::vector<int> b(r.outcomes.size(), n_star);
  for (std::size_t j = 0; j < r.outcomes.size(); ++j) {
    double best = log_p_B(true, n_star, h.gamma_out) + scored_p_for(v, r.outcomes[j], kEmpty, nvars, h);
    for (int k = 0; k < n_star; ++k) {
      const double s = log_p_B(false, n_star, h.gamma_out) + scored_p_for(v, r.outcomes[j], proto->outcomes[k], nvars, h);
      if (s > best) {
        best = s;
        b[j] = k;
      }
    }
  }
  return b;
}

// One local rule's share of the score under a chosen correspondence.
struct RuleMatch {
  int proto = -1;
  std::vector<int> sources;
  double structure = 0.0;
  double data = 0.0;
  double total() const { return structure + data; }
};

inline RuleMatch evaluate_match(const Vocabulary& v, const Rule& r, const OutcomeCounts& c, const RuleSetProto& g,
                                int proto_index, const Hyperparams& h) {
  RuleMatch m;
  m.proto = proto_index;
  const RuleProto* proto = proto_index >= 0 ? &g[proto_index] : nullptr;
  m.sources = best_outcome_sources(v, r, proto, h);
  m.structure = log_rule_structure(v, r, proto, m.sources, static_cast<std::int64_t>(g.size()), h);
  m.data = rule_data_term(proto ? proto->phi : scratch_weights(), m.sources, c, h.p_min);
  return m;
}

// Greedy correspondence for one rule: the prototype whose context best
// explains the local context, then per-outcome sources, then a final check
// against generating the whole rule from scratch.
inline RuleMatch match_rule(const Vocabulary& v, const Rule& r, const OutcomeCounts& c, const RuleSetProto& g,
                            const Hyperparams& h) {
  const auto m_star = static_cast<std::int64_t>(g.size());
  const int nvars = r.action.num_variables();
  static const Formula kEmpty;
  int best_proto = -1;
  double best = log_p_A(true, m_star, h.gamma_rule) + scored_p_for(v, r.context, kEmpty, nvars, h);
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!(g[k].action == r.action)) continue;
    const double s = log_p_A(false, m_star, h.gamma_rule) + scored_p_for(v, r.context, g[k].context, nvars, h);
    if (s > best) {
      best = s;
      best_proto = static_cast<int>(k);
    }
  }
  RuleMatch scratch = evaluate_match(v, r, c, g, -1, h);
  if (best_proto < 0) return scratch;
  RuleMatch derived = evaluate_match(v, r, c, g, best_proto, h);
  return scratch.total() > derived.total() ? scratch : derived;
}

inline Correspondence greedy_correspondence(const Vocabulary& v, const std::vector<Rule>& rules,
                                            const std::vector<OutcomeCounts>& counts, const RuleSetProto& g,
                                            const Hyperparams& h) {
  Correspondence corr;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const OutcomeCounts zeros(rules[i].outcomes.size() + 1, 0);
    RuleMatch m = match_rule(v, rules[i], i < counts.size() ? counts[i] : zeros, g, h);
    corr.rule_proto.push_back(m.proto);
    corr.outcome_src.push_back(std::move(m.sources));
  }
  return corr;
}

// log P_num(m|m*) + log m!, the rule-count part of a task's structural score.
inline double rule_count_term(std::size_t m, std::size_t m_star, const Hyperparams& h) {
  return log_p_num(static_cast<std::int64_t>(m), static_cast<std::int64_t>(m_star), h.alpha, h.beta) +
         log_factorial(static_cast<std::int64_t>(m));
}

// Counts for every rule of a task plus the default rule's (no change, noise).
struct TaskCounts {
  std::vector<OutcomeCounts> rules;
  std::int64_t default_no_change = 0;
  std::int64_t default_noise = 0;
};

// Routes each example to its unique applicable rule (or the default rule)
// and tallies outcomes. Throws OverlapError when two rules apply.
inline TaskCounts count_task(const std::vector<Rule>& rules, std::span<const Example> examples) {
  TaskCounts tc;
  for (const Rule& r : rules) tc.rules.emplace_back(r.outcomes.size() + 1, 0);
  for (const Example& x : examples) {
    int found = -1;
    Binding theta;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      auto b = bind_action(rules[i].action, x.action);
      if (!b || !formula_holds(rules[i].context, *b, x.prior)) continue;
      if (found >= 0) throw OverlapError("two rules apply to the same example");
      found = static_cast<int>(i);
      theta = std::move(*b);
    }
    if (found < 0) {
      ++(x.prior == x.next ? tc.default_no_change : tc.default_noise);
      continue;
    }
    const Rule& r = rules[found];
    const int idx = attribute_outcome(r, theta, x.prior, x.next);
    ++tc.rules[found][idx < 0 ? r.outcomes.size() : static_cast<std::size_t>(idx)];
  }
  return tc;
}

struct TaskScore {
  double structural = 0.0;  // log P̂_mod
  std::vector<double> polya;
  std::vector<double> noise_floor;
  double default_term = 0.0;
  Correspondence correspondence;

  double total() const {
    double t = structural + default_term;
    for (double x : polya) t += x;
    for (double x : noise_floor) t += x;
    return t;
  }
};

struct ScoreBreakdown {
  double log_p_G = 0.0;
  std::vector<TaskScore> tasks;
  double total = 0.0;
};

struct TaskInput {
  const std::vector<Rule>* rules;
  std::span<const Example> examples;
};

inline TaskScore score_task(const Vocabulary& v, const RuleSetProto& g, const std::vector<Rule>& rules,
                            std::span<const Example> examples, const Hyperparams& h) {
  TaskScore ts;
  TaskCounts tc = count_task(rules, examples);
  ts.correspondence = greedy_correspondence(v, rules, tc.rules, g, h);
  ts.structural = log_p_mod_structural(v, rules, g, ts.correspondence, h);
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const int a = ts.correspondence.rule_proto[i];
    const auto& phi = a >= 0 ? g[a].phi : scratch_weights();
    ts.polya.push_back(polya_log_marginal(project_dirichlet(phi, ts.correspondence.outcome_src[i]), tc.rules[i]));
    ts.noise_floor.push_back(static_cast<double>(tc.rules[i].back()) * std::log(h.p_min));
  }
  ts.default_term = default_rule_term(tc.default_no_change, tc.default_noise, h.p_min);
  return ts;
}

// The search objective: log P_G(G) plus each task's structural and data terms.
inline ScoreBreakdown score(const Vocabulary& v, const RuleSetProto& g, const std::vector<TaskInput>& tasks,
                            const Hyperparams& h) {
  ScoreBreakdown out;
  out.log_p_G = log_p_G(v, g, h);
  out.total = out.log_p_G;
  for (const TaskInput& t : tasks) {
    out.tasks.push_back(score_task(v, g, *t.rules, t.examples, h));
    out.total += out.tasks.back().total();
  }
  return out;
}

// ---- prototype weight fitting ----------------------------------------------

// Counts of one local rule together with its outcome-to-source map.
struct AssignedCounts {
  OutcomeCounts counts;
  std::vector<int> sources;
};

inline constexpr double kPhiFloor = 1e-2;

namespace detail {

// Per rule: merged counts over the prototype slots it uses (-1 = unused).
struct MergedCounts {
  std::vector<std::int64_t> slot;
  std::int64_t total = 0;
};

inline std::vector<MergedCounts> merge_counts(const std::vector<AssignedCounts>& groups, int n_star) {
  std::vector<MergedCounts> out;
  for (const auto& g : groups) {
    if (g.counts.size() != g.sources.size() + 1) throw std::invalid_argument("fit: counts/sources size mismatch");
    MergedCounts m;
    m.slot.assign(n_star + 2, -1);
    for (std::size_t j = 0; j < g.sources.size(); ++j) {
      const int s = g.sources[j];
      if (s < 0 || s > n_star) throw std::invalid_argument("fit: source index out of range");
      m.slot[s] = std::max<std::int64_t>(m.slot[s], 0) + g.counts[j];
    }
    m.slot[n_star + 1] = g.counts.back();
    m.total = total(g.counts);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace detail

// log density of Φ taken in (S, direction) coordinates: Exponential(λ) on
// the sum, uniform direction. Unlike the density over Φ itself it has no pole
// at S = 0, so the fit below has a proper maximum even for a single rule.
inline double log_p_phi_polar(const std::vector<double>& phi, double lambda) {
  double s = 0.0;
  for (double w : phi) s += w;
  return std::log(lambda) - lambda * s + log_factorial(static_cast<std::int64_t>(phi.size()) - 1);
}

// Σ_k Polya(Φ restricted to rule k's used slots, merged counts) + the
// hyperprior in (S, direction) coordinates.
inline double proto_fit_objective(const std::vector<double>& phi, const std::vector<AssignedCounts>& groups,
                                  const Hyperparams& h) {
  const int n_star = static_cast<int>(phi.size()) - 2;
  double out = log_p_phi_polar(phi, h.lambda_phi);
  for (const auto& m : detail::merge_counts(groups, n_star)) {
    std::vector<double> w;
    OutcomeCounts c;
    for (int j = 0; j < n_star + 2; ++j) {
      if (m.slot[j] < 0) continue;
      w.push_back(phi[j]);
      c.push_back(m.slot[j]);
    }
    out += polya_log_marginal(w, c);
  }
  return out;
}

// Fixed-point ascent on proto_fit_objective. Each step maximizes a separable
// lower bound built from Minka's bounds on the Gamma ratios, so the objective
// never decreases. Weights are kept at or above kPhiFloor.
inline std::vector<double> fit_proto_dirichlet(const std::vector<AssignedCounts>& groups, int n_star,
                                               const Hyperparams& h,
                                               const std::function<void(const std::vector<double>&)>& on_iter = {}) {
  const int dim = n_star + 2;
  const auto merged = detail::merge_counts(groups, n_star);
  const bool any_data = std::any_of(merged.begin(), merged.end(), [](const auto& m) { return m.total > 0; });
  std::vector<double> phi(dim, 1.0 / (h.lambda_phi * dim));
  if (!any_data) return phi;
  phi.assign(dim, 1.0);
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<double> num(dim, 0.0);
    std::vector<double> den(dim, h.lambda_phi);
    for (const auto& m : merged) {
      if (m.total == 0) continue;
      double a = 0.0;
      for (int j = 0; j < dim; ++j)
        if (m.slot[j] >= 0) a += phi[j];
      const double d = digamma(a + static_cast<double>(m.total)) - digamma(a);
      for (int j = 0; j < dim; ++j) {
        if (m.slot[j] < 0) continue;
        den[j] += d;
        if (m.slot[j] > 0) num[j] += phi[j] * (digamma(phi[j] + static_cast<double>(m.slot[j])) - digamma(phi[j]));
      }
    }
    double change = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double next = std::max(kPhiFloor, num[j] / den[j]);
      change = std::max(change, std::abs(next - phi[j]));
      phi[j] = next;
    }
    if (on_iter) on_iter(phi);
    if (change < 1e-6) break;
  }
  return phi;
}

}  // namespace ruleproto
