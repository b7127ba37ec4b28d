#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ruleproto/blocksworld.hpp"
#include "ruleproto/eval.hpp"
#include "ruleproto/prior.hpp"
#include "ruleproto/rules.hpp"
#include "ruleproto/search.hpp"

namespace ruleproto {

using json = nlohmann::json;

// Malformed input files and config errors.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- vocabulary and world -------------------------------------------------

inline json to_json(const Vocabulary& v) {
  json j;
  j["constants"] = json::array();
  for (ConstId c = 2; c < v.num_constants(); ++c) {
    const auto& k = v.constant_symbol(c);
    j["constants"].push_back({{"name", k.name}, {"type", k.type}});
  }
  j["functions"] = json::array();
  for (SymbolId f = 0; f < v.num_functions(); ++f) {
    const auto& fs = v.function_symbol(f);
    json range = json::array();
    for (ConstId c : fs.range) range.push_back(v.constant_symbol(c).name);
    j["functions"].push_back({{"name", fs.name}, {"arity", fs.arity}, {"range", range}});
  }
  j["actions"] = json::array();
  for (SymbolId a = 0; a < v.num_actions(); ++a)
    j["actions"].push_back({{"name", v.action_symbol(a).name}, {"arity", v.action_symbol(a).arity}});
  return j;
}

inline std::shared_ptr<Vocabulary> vocabulary_from_json(const json& j) {
  auto v = std::make_shared<Vocabulary>();
  try {
    for (const auto& c : j.at("constants")) v->add_constant(c.at("name").get<std::string>(), c.value("type", ""));
    for (const auto& f : j.at("functions"))
      v->add_function(f.at("name").get<std::string>(), f.at("arity").get<int>(),
                      f.at("range").get<std::vector<std::string>>());
    for (const auto& a : j.at("actions")) v->add_action(a.at("name").get<std::string>(), a.at("arity").get<int>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad vocabulary: ") + e.what());
  }
  return v;
}

// A vocabulary, its world objects and (optionally) the family it came from.
struct DomainFile {
  std::shared_ptr<Vocabulary> vocab;
  std::shared_ptr<const World> world;
  std::optional<Family> family;
};

inline json to_json(const Domain& d) {
  json objects = json::array();
  for (ConstId o : d.world->objects()) objects.push_back(d.vocab->constant_symbol(o).name);
  return {{"family", family_name(d.family)}, {"vocabulary", to_json(*d.vocab)}, {"objects", objects}};
}

inline DomainFile domain_from_json(const json& j) {
  DomainFile d;
  d.vocab = vocabulary_from_json(j.at("vocabulary"));
  std::vector<ConstId> objects;
  for (const auto& o : j.at("objects")) objects.push_back(d.vocab->constant(o.get<std::string>()));
  d.world = std::make_shared<World>(d.vocab, objects);
  if (j.contains("family")) d.family = parse_family(j.at("family").get<std::string>());
  return d;
}

// ---- formulas, rules, prototypes -------------------------------------------

inline json to_json(const Vocabulary& v, const Formula& f) {
  json out = json::array();
  for (const Literal& l : f) out.push_back(to_string(v, l));
  return out;
}

inline Formula formula_from_json(const Vocabulary& v, const json& j) {
  return parse_formula(v, j.get<std::vector<std::string>>());
}

inline json to_json(const Vocabulary& v, const Rule& r) {
  json outcomes = json::array();
  for (const auto& o : r.outcomes) outcomes.push_back(to_json(v, o));
  return {{"action", to_string(v, r.action)}, {"context", to_json(v, r.context)}, {"outcomes", outcomes},
          {"probs", r.probs}};
}

inline Rule rule_from_json(const Vocabulary& v, const json& j) {
  Rule r;
  r.action = parse_action(v, j.at("action").get<std::string>());
  r.context = formula_from_json(v, j.at("context"));
  for (const auto& o : j.at("outcomes")) r.outcomes.push_back(formula_from_json(v, o));
  r.probs = j.at("probs").get<std::vector<double>>();
  validate_rule(v, r);
  return r;
}

inline json to_json(const Vocabulary& v, const RuleSet& rs) {
  json rules = json::array();
  for (const auto& r : rs.rules()) rules.push_back(to_json(v, r));
  return {{"rules", rules}, {"default_no_change", rs.default_rule().probs[0]}};
}

inline RuleSet ruleset_from_json(const Vocabulary& v, const json& j) {
  std::vector<Rule> rules;
  for (const auto& r : j.at("rules")) rules.push_back(rule_from_json(v, r));
  return RuleSet(std::move(rules), j.value("default_no_change", 1.0));
}

inline json to_json(const Vocabulary& v, const RuleProto& p) {
  json outcomes = json::array();
  for (const auto& o : p.outcomes) outcomes.push_back(to_json(v, o));
  return {{"action", to_string(v, p.action)}, {"context", to_json(v, p.context)}, {"outcomes", outcomes},
          {"phi", p.phi}};
}

inline json to_json(const Vocabulary& v, const RuleSetProto& g) {
  json protos = json::array();
  for (const auto& p : g) protos.push_back(to_json(v, p));
  return {{"prototypes", protos}};
}

inline RuleSetProto prototype_from_json(const Vocabulary& v, const json& j) {
  RuleSetProto g;
  for (const auto& pj : j.at("prototypes")) {
    RuleProto p;
    p.action = parse_action(v, pj.at("action").get<std::string>());
    p.context = formula_from_json(v, pj.at("context"));
    for (const auto& o : pj.at("outcomes")) p.outcomes.push_back(formula_from_json(v, o));
    p.phi = pj.at("phi").get<std::vector<double>>();
    validate_proto(p);
    g.push_back(std::move(p));
  }
  return g;
}

// ---- states and datasets ---------------------------------------------------

// True boolean literals plus every non-boolean value.
inline json to_json(const State& s) {
  const World& w = s.world();
  const Vocabulary& v = w.vocab();
  json out = json::array();
  for (int i = 0; i < w.num_slots(); ++i) {
    const ConstId val = s.value(i);
    if (val == Vocabulary::kFalse) continue;
    out.push_back(to_string(v, Literal{w.slot_term(i), Arg::constant(val)}));
  }
  return out;
}

inline State state_from_json(const std::shared_ptr<const World>& w, const json& j) {
  return state_from_literals(w, j.get<std::vector<std::string>>());
}

inline json to_json(const Example& x) {
  return {{"prior-state", to_json(x.prior)},
          {"action", to_string(x.prior.world().vocab(), x.action)},
          {"next-state", to_json(x.next)}};
}

inline void write_dataset(std::ostream& os, const std::vector<Example>& xs) {
  for (const auto& x : xs) os << to_json(x).dump() << '\n';
}

inline std::vector<Example> read_dataset(std::istream& is, const std::shared_ptr<const World>& w,
                                         const std::string& name = "dataset") {
  std::vector<Example> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      for (const auto& [key, val] : j.items())
        if (key != "prior-state" && key != "action" && key != "next-state") throw FormatError("unknown field '" + key + "'");
      Example x{state_from_json(w, j.at("prior-state")), parse_action(w->vocab(), j.at("action").get<std::string>()),
                state_from_json(w, j.at("next-state"))};
      if (!x.action.is_ground()) throw FormatError("action is not ground");
      out.push_back(std::move(x));
    } catch (const std::exception& e) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---- task specs --------------------------------------------------------------

inline json to_json(const Domain& d, const TaskSpec& t) {
  return {{"family", family_name(t.family)}, {"seed", t.seed}, {"truth", to_json(*d.vocab, t.truth)}};
}

// ---- config ------------------------------------------------------------------

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + " must be an object");
  for (const auto& [key, val] : j.items()) {
    bool ok = false;
    for (const char* k : keys) ok = ok || key == k;
    if (!ok) throw FormatError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline json to_json(const Hyperparams& h) {
  json j = {{"alpha", h.alpha},
            {"beta", h.beta},
            {"gamma_rule", h.gamma_rule},
            {"gamma_out", h.gamma_out},
            {"beta_term", h.beta_term},
            {"alpha_term", h.alpha_term},
            {"rho", h.rho},
            {"alpha_proto", h.alpha_proto},
            {"lambda_phi", h.lambda_phi},
            {"p_min", h.p_min},
            {"formula_score_exponent", h.formula_score_exponent}};
  if (h.alpha_out) j["alpha_out"] = *h.alpha_out;
  if (h.beta_out) j["beta_out"] = *h.beta_out;
  return j;
}

inline json to_json(const SearchSettings& s) {
  return {{"candidate_cap", s.candidate_cap},       {"explain_budget", s.explain_budget},
          {"explain_rounds", s.explain_rounds},     {"max_alternations", s.max_alternations},
          {"max_overlap_fixes", s.max_overlap_fixes}, {"max_steps", s.max_steps},
          {"tolerance", s.tolerance}};
}

inline json to_json(const FamilyParams& p) {
  return {{"num_sizes", p.num_sizes},
          {"success_lo", p.success_lo},
          {"success_hi", p.success_hi},
          {"jitter_concentration", p.jitter_concentration},
          {"gripper_empty_prob", p.gripper_empty_prob},
          {"max_random_rules", p.max_random_rules},
          {"max_random_literals", p.max_random_literals},
          {"max_random_outcomes", p.max_random_outcomes},
          {"rejection_cap", p.rejection_cap}};
}

// The resolved experiment config (the CSV hash is computed over this).
inline json to_json(const ExperimentConfig& c) {
  json conditions = json::array();
  if (c.run_transfer) conditions.push_back(kTransfer);
  if (c.run_baseline) conditions.push_back(kNoTransfer);
  return {{"hyperparams", to_json(c.hyper)},
          {"search", to_json(c.search)},
          {"family_params", to_json(c.family_params)},
          {"experiment",
           {{"family", family_name(c.family)},
            {"K", c.K},
            {"N_source", c.N_source},
            {"N_target", c.N_target},
            {"repetitions", c.repetitions},
            {"test_size", c.test_size},
            {"seed", c.seed},
            {"jobs", c.jobs},
            {"conditions", conditions}}}};
}

// Overlays a config file's keys on the given config. Unknown keys are errors.
inline void apply_config(const json& j, ExperimentConfig& c) {
  try {
    detail::reject_unknown(j, {"hyperparams", "search", "family_params", "experiment"}, "config");
    if (j.contains("hyperparams")) {
      const json& h = j.at("hyperparams");
      detail::reject_unknown(h,
                             {"alpha", "beta", "alpha_out", "beta_out", "gamma_rule", "gamma_out", "beta_term",
                              "alpha_term", "rho", "alpha_proto", "lambda_phi", "p_min", "formula_score_exponent"},
                             "hyperparams");
      auto& p = c.hyper;
      detail::read(h, "alpha", p.alpha);
      detail::read(h, "beta", p.beta);
      if (h.contains("alpha_out")) p.alpha_out = h.at("alpha_out").get<double>();
      if (h.contains("beta_out")) p.beta_out = h.at("beta_out").get<double>();
      detail::read(h, "gamma_rule", p.gamma_rule);
      detail::read(h, "gamma_out", p.gamma_out);
      detail::read(h, "beta_term", p.beta_term);
      detail::read(h, "alpha_term", p.alpha_term);
      detail::read(h, "rho", p.rho);
      detail::read(h, "alpha_proto", p.alpha_proto);
      detail::read(h, "lambda_phi", p.lambda_phi);
      detail::read(h, "p_min", p.p_min);
      detail::read(h, "formula_score_exponent", p.formula_score_exponent);
    }
    if (j.contains("search")) {
      const json& s = j.at("search");
      detail::reject_unknown(s,
                             {"candidate_cap", "explain_budget", "explain_rounds", "max_alternations",
                              "max_overlap_fixes", "max_steps", "tolerance"},
                             "search");
      auto& p = c.search;
      detail::read(s, "candidate_cap", p.candidate_cap);
      detail::read(s, "explain_budget", p.explain_budget);
      detail::read(s, "explain_rounds", p.explain_rounds);
      detail::read(s, "max_alternations", p.max_alternations);
      detail::read(s, "max_overlap_fixes", p.max_overlap_fixes);
      detail::read(s, "max_steps", p.max_steps);
      detail::read(s, "tolerance", p.tolerance);
    }
    if (j.contains("family_params")) {
      const json& f = j.at("family_params");
      detail::reject_unknown(f,
                             {"num_sizes", "success_lo", "success_hi", "jitter_concentration", "gripper_empty_prob",
                              "max_random_rules", "max_random_literals", "max_random_outcomes", "rejection_cap"},
                             "family_params");
      auto& p = c.family_params;
      detail::read(f, "num_sizes", p.num_sizes);
      detail::read(f, "success_lo", p.success_lo);
      detail::read(f, "success_hi", p.success_hi);
      detail::read(f, "jitter_concentration", p.jitter_concentration);
      detail::read(f, "gripper_empty_prob", p.gripper_empty_prob);
      detail::read(f, "max_random_rules", p.max_random_rules);
      detail::read(f, "max_random_literals", p.max_random_literals);
      detail::read(f, "max_random_outcomes", p.max_random_outcomes);
      detail::read(f, "rejection_cap", p.rejection_cap);
    }
    if (j.contains("experiment")) {
      const json& e = j.at("experiment");
      detail::reject_unknown(
          e, {"family", "K", "N_source", "N_target", "repetitions", "test_size", "seed", "jobs", "conditions"},
          "experiment");
      if (e.contains("family")) {
        auto f = parse_family(e.at("family").get<std::string>());
        if (!f) throw FormatError("unknown family '" + e.at("family").get<std::string>() + "'");
        c.family = *f;
      }
      detail::read(e, "K", c.K);
      detail::read(e, "N_source", c.N_source);
      detail::read(e, "N_target", c.N_target);
      detail::read(e, "repetitions", c.repetitions);
      detail::read(e, "test_size", c.test_size);
      detail::read(e, "seed", c.seed);
      detail::read(e, "jobs", c.jobs);
      if (e.contains("conditions")) {
        c.run_transfer = c.run_baseline = false;
        for (const auto& s : e.at("conditions")) {
          const auto name = s.get<std::string>();
          if (name == kTransfer) c.run_transfer = true;
          else if (name == kNoTransfer) c.run_baseline = true;
          else throw FormatError("unknown condition '" + name + "'");
        }
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad config: ") + e.what());
  }
}

// FNV-1a over the compact dump of the resolved config, leaving out the
// thread count since results do not depend on it.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.at("experiment").erase("jobs");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline json to_json(const TraceEntry& t) {
  return {{"phase", t.phase}, {"task", t.task}, {"alternation", t.alternation}, {"step", t.step}, {"op", t.op},
          {"score", t.score}};
}

}  // namespace ruleproto
