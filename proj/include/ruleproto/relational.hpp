#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/container/small_vector.hpp>

namespace ruleproto {

using ConstId = int;
using SymbolId = int;

class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnboundVariableError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class StateSpaceTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A term argument or literal value: a constant symbol or a logical variable.
// Variables are positional (index into the owning action schema).
class Arg {
 public:
  constexpr Arg() = default;
  static constexpr Arg constant(ConstId c) { return Arg(c); }
  static constexpr Arg variable(int index) { return Arg(-index - 1); }

  constexpr bool is_variable() const { return code_ < 0; }
  constexpr bool is_constant() const { return code_ >= 0; }
  constexpr int variable_index() const { return -code_ - 1; }
  constexpr ConstId constant_id() const { return code_; }
  constexpr int code() const { return code_; }

  friend constexpr bool operator==(Arg a, Arg b) { return a.code_ == b.code_; }
  friend constexpr bool operator<(Arg a, Arg b) { return a.code_ < b.code_; }

 private:
  constexpr explicit Arg(int code) : code_(code) {}
  int code_ = 0;
};

using ArgList = boost::container::small_vector<Arg, 3>;

inline std::string variable_name(int index) {
  static constexpr std::string_view kNames = "XYZWVU";
  if (index >= 0 && index < static_cast<int>(kNames.size())) return std::string(1, kNames[index]);
  return "X" + std::to_string(index);
}

inline std::optional<int> parse_variable_name(std::string_view name) {
  static constexpr std::string_view kNames = "XYZWVU";
  if (name.size() == 1) {
    auto pos = kNames.find(name[0]);
    if (pos != std::string_view::npos) return static_cast<int>(pos);
    return std::nullopt;
  }
  if (name.size() > 1 && name[0] == 'X' &&
      std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    int idx = std::stoi(std::string(name.substr(1)));
    if (idx >= static_cast<int>(kNames.size())) return idx;
  }
  return std::nullopt;
}

// A simple term f(a1..ak); arguments are never nested.
struct Term {
  SymbolId function = -1;
  ArgList args;

  bool is_ground() const {
    return std::none_of(args.begin(), args.end(), [](Arg a) { return a.is_variable(); });
  }
  friend bool operator==(const Term& a, const Term& b) {
    return a.function == b.function && a.args == b.args;
  }
  friend bool operator<(const Term& a, const Term& b) {
    if (a.function != b.function) return a.function < b.function;
    return std::lexicographical_compare(a.args.begin(), a.args.end(), b.args.begin(), b.args.end());
  }
};

struct Literal {
  Term term;
  Arg value;

  friend bool operator==(const Literal& a, const Literal& b) {
    return a.value == b.value && a.term == b.term;
  }
  friend bool operator<(const Literal& a, const Literal& b) {
    if (!(a.term == b.term)) return a.term < b.term;
    return a.value < b.value;
  }
};

// A conjunction of term = value literals, stored as the pair (T, I): a set of
// terms and one value per term. Literals are kept sorted by term.
class Formula {
 public:
  Formula() = default;

  // Throws if two literals assign different values to the same term.
  static Formula from_literals(std::vector<Literal> lits) {
    std::sort(lits.begin(), lits.end());
    lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
    for (std::size_t i = 1; i < lits.size(); ++i) {
      if (lits[i - 1].term == lits[i].term) {
        throw std::invalid_argument("formula assigns two values to the same term");
      }
    }
    Formula f;
    f.lits_ = std::move(lits);
    return f;
  }

  const std::vector<Literal>& literals() const { return lits_; }
  std::size_t size() const { return lits_.size(); }
  bool empty() const { return lits_.empty(); }
  auto begin() const { return lits_.begin(); }
  auto end() const { return lits_.end(); }

  const Arg* value_of(const Term& t) const {
    auto it = std::lower_bound(lits_.begin(), lits_.end(), t,
                               [](const Literal& l, const Term& key) { return l.term < key; });
    if (it == lits_.end() || !(it->term == t)) return nullptr;
    return &it->value;
  }
  bool contains_term(const Term& t) const { return value_of(t) != nullptr; }

  // Copy with the literal added, replacing any existing value for its term.
  Formula with(const Literal& lit) const {
    Formula f = *this;
    auto it = std::lower_bound(f.lits_.begin(), f.lits_.end(), lit.term,
                               [](const Literal& l, const Term& key) { return l.term < key; });
    if (it != f.lits_.end() && it->term == lit.term) {
      it->value = lit.value;
    } else {
      f.lits_.insert(it, lit);
    }
    return f;
  }

  Formula without(const Term& t) const {
    Formula f = *this;
    auto it = std::lower_bound(f.lits_.begin(), f.lits_.end(), t,
                               [](const Literal& l, const Term& key) { return l.term < key; });
    if (it != f.lits_.end() && it->term == t) f.lits_.erase(it);
    return f;
  }

  // Union; nullopt when the two formulas disagree on a shared term.
  std::optional<Formula> merged(const Formula& other) const {
    Formula f = *this;
    for (const Literal& l : other) {
      const Arg* v = f.value_of(l.term);
      if (v != nullptr) {
        if (!(*v == l.value)) return std::nullopt;
      } else {
        f = f.with(l);
      }
    }
    return f;
  }

  int max_variable_index() const {
    int m = -1;
    for (const Literal& l : lits_) {
      for (Arg a : l.term.args)
        if (a.is_variable()) m = std::max(m, a.variable_index());
      if (l.value.is_variable()) m = std::max(m, l.value.variable_index());
    }
    return m;
  }

  friend bool operator==(const Formula& a, const Formula& b) { return a.lits_ == b.lits_; }
  friend bool operator!=(const Formula& a, const Formula& b) { return !(a == b); }
  friend bool operator<(const Formula& a, const Formula& b) { return a.lits_ < b.lits_; }

 private:
  std::vector<Literal> lits_;
};

struct FunctionSymbol {
  std::string name;
  int arity = 0;
  std::vector<ConstId> range;
};

struct ActionSymbol {
  std::string name;
  int arity = 0;
};

struct Constant {
  std::string name;
  std::string type;
};

// Function symbols, action symbols and constants. TRUE and FALSE are always
// constants 0 and 1.
class Vocabulary {
 public:
  static constexpr ConstId kTrue = 0;
  static constexpr ConstId kFalse = 1;

  Vocabulary() {
    add_constant("TRUE");
    add_constant("FALSE");
  }

  ConstId add_constant(const std::string& name, const std::string& type = "") {
    check_new_name(name);
    if (parse_variable_name(name)) {
      throw VocabularyError("constant name '" + name + "' is reserved for variables");
    }
    constants_.push_back({name, type});
    ConstId id = static_cast<ConstId>(constants_.size()) - 1;
    names_[name] = Entry{Kind::kConstant, id};
    return id;
  }

  SymbolId add_function(const std::string& name, int arity, const std::vector<std::string>& range) {
    if (arity < 0) throw VocabularyError("negative arity for '" + name + "'");
    if (range.empty()) throw VocabularyError("empty value range for '" + name + "'");
    check_new_name(name);
    FunctionSymbol f{name, arity, {}};
    for (const auto& v : range) {
      auto c = find_constant(v);
      if (!c) throw VocabularyError("unknown constant '" + v + "' in range of '" + name + "'");
      if (std::find(f.range.begin(), f.range.end(), *c) != f.range.end()) {
        throw VocabularyError("duplicate value '" + v + "' in range of '" + name + "'");
      }
      f.range.push_back(*c);
    }
    functions_.push_back(std::move(f));
    SymbolId id = static_cast<SymbolId>(functions_.size()) - 1;
    names_[name] = Entry{Kind::kFunction, id};
    return id;
  }

  SymbolId add_predicate(const std::string& name, int arity) {
    return add_function(name, arity, {"TRUE", "FALSE"});
  }

  SymbolId add_action(const std::string& name, int arity) {
    if (arity < 0) throw VocabularyError("negative arity for '" + name + "'");
    check_new_name(name);
    actions_.push_back({name, arity});
    SymbolId id = static_cast<SymbolId>(actions_.size()) - 1;
    names_[name] = Entry{Kind::kAction, id};
    return id;
  }

  std::optional<ConstId> find_constant(std::string_view name) const { return find(name, Kind::kConstant); }
  std::optional<SymbolId> find_function(std::string_view name) const { return find(name, Kind::kFunction); }
  std::optional<SymbolId> find_action(std::string_view name) const { return find(name, Kind::kAction); }

  ConstId constant(std::string_view name) const {
    auto c = find_constant(name);
    if (!c) throw VocabularyError("unknown constant '" + std::string(name) + "'");
    return *c;
  }
  SymbolId function(std::string_view name) const {
    auto f = find_function(name);
    if (!f) throw VocabularyError("unknown function symbol '" + std::string(name) + "'");
    return *f;
  }
  SymbolId action(std::string_view name) const {
    auto a = find_action(name);
    if (!a) throw VocabularyError("unknown action symbol '" + std::string(name) + "'");
    return *a;
  }

  const std::vector<Constant>& constants() const { return constants_; }
  const std::vector<FunctionSymbol>& functions() const { return functions_; }
  const std::vector<ActionSymbol>& actions() const { return actions_; }
  const FunctionSymbol& function_symbol(SymbolId id) const { return functions_.at(id); }
  const ActionSymbol& action_symbol(SymbolId id) const { return actions_.at(id); }
  const Constant& constant_symbol(ConstId id) const { return constants_.at(id); }
  int num_constants() const { return static_cast<int>(constants_.size()); }
  int num_functions() const { return static_cast<int>(functions_.size()); }
  int num_actions() const { return static_cast<int>(actions_.size()); }

  bool in_range(SymbolId f, ConstId v) const {
    const auto& r = functions_.at(f).range;
    return std::find(r.begin(), r.end(), v) != r.end();
  }

 private:
  enum class Kind { kConstant, kFunction, kAction };
  struct Entry {
    Kind kind;
    int id;
  };

  void check_new_name(const std::string& name) const {
    if (name.empty()) throw VocabularyError("empty symbol name");
    if (name.find_first_of("(),= \t\n") != std::string::npos) {
      throw VocabularyError("illegal character in symbol name '" + name + "'");
    }
    if (names_.count(name)) throw VocabularyError("duplicate symbol name '" + name + "'");
  }

  std::optional<int> find(std::string_view name, Kind kind) const {
    auto it = names_.find(std::string(name));
    if (it == names_.end() || it->second.kind != kind) return std::nullopt;
    return it->second.id;
  }

  std::vector<Constant> constants_;
  std::vector<FunctionSymbol> functions_;
  std::vector<ActionSymbol> actions_;
  std::map<std::string, Entry> names_;
};

// An action literal: a schema (distinct variables) or a ground instance.
struct ActionTerm {
  SymbolId action = -1;
  ArgList args;

  bool is_ground() const {
    return std::none_of(args.begin(), args.end(), [](Arg a) { return a.is_variable(); });
  }
  bool is_schema() const {
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (!args[i].is_variable()) return false;
      for (std::size_t j = 0; j < i; ++j)
        if (args[j] == args[i]) return false;
    }
    return true;
  }
  int num_variables() const {
    int m = -1;
    for (Arg a : args)
      if (a.is_variable()) m = std::max(m, a.variable_index());
    return m + 1;
  }
  friend bool operator==(const ActionTerm& a, const ActionTerm& b) {
    return a.action == b.action && a.args == b.args;
  }
  friend bool operator<(const ActionTerm& a, const ActionTerm& b) {
    if (a.action != b.action) return a.action < b.action;
    return std::lexicographical_compare(a.args.begin(), a.args.end(), b.args.begin(), b.args.end());
  }
};

// The schema for an action symbol with variables named positionally.
inline ActionTerm canonical_schema(const Vocabulary& vocab, SymbolId action) {
  ActionTerm z{action, {}};
  for (int i = 0; i < vocab.action_symbol(action).arity; ++i) z.args.push_back(Arg::variable(i));
  return z;
}

// Variable -> constant substitution; -1 marks an unbound variable.
struct Binding {
  std::vector<ConstId> values;

  bool bound(int var) const { return var >= 0 && var < static_cast<int>(values.size()) && values[var] >= 0; }
  ConstId operator[](int var) const {
    if (!bound(var)) throw UnboundVariableError("unbound variable " + variable_name(var));
    return values[var];
  }
  Arg apply(Arg a) const { return a.is_variable() ? Arg::constant((*this)[a.variable_index()]) : a; }
  Term apply(const Term& t) const {
    Term g{t.function, {}};
    for (Arg a : t.args) g.args.push_back(apply(a));
    return g;
  }
  friend bool operator==(const Binding& a, const Binding& b) { return a.values == b.values; }
};

// Matches a schema against a ground action. No match is a value, not an error.
inline std::optional<Binding> bind_action(const ActionTerm& schema, const ActionTerm& ground) {
  if (schema.action != ground.action || schema.args.size() != ground.args.size()) return std::nullopt;
  Binding theta;
  theta.values.assign(std::max(schema.num_variables(), 0), -1);
  for (std::size_t i = 0; i < schema.args.size(); ++i) {
    Arg s = schema.args[i];
    Arg g = ground.args[i];
    if (g.is_variable()) return std::nullopt;
    if (s.is_constant()) {
      if (!(s == g)) return std::nullopt;
      continue;
    }
    ConstId& slot = theta.values[s.variable_index()];
    if (slot >= 0 && slot != g.constant_id()) return std::nullopt;
    slot = g.constant_id();
  }
  return theta;
}

inline ActionTerm substitute(const ActionTerm& schema, const Binding& theta) {
  ActionTerm g{schema.action, {}};
  for (Arg a : schema.args) g.args.push_back(theta.apply(a));
  return g;
}

// The ground-term universe over a vocabulary and a fixed object set. Every
// ground term f(o1..ok) with objects oi gets a slot index.
class World {
 public:
  World(std::shared_ptr<const Vocabulary> vocab, std::vector<ConstId> objects)
      : vocab_(std::move(vocab)), objects_(std::move(objects)) {
    object_index_.assign(vocab_->num_constants(), -1);
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      ConstId o = objects_[i];
      if (o < 0 || o >= vocab_->num_constants()) throw VocabularyError("object is not a constant");
      if (object_index_[o] >= 0) throw VocabularyError("duplicate object");
      object_index_[o] = static_cast<int>(i);
    }
    const int n = static_cast<int>(objects_.size());
    for (SymbolId f = 0; f < vocab_->num_functions(); ++f) {
      offsets_.push_back(static_cast<int>(slot_terms_.size()));
      const int arity = vocab_->function_symbol(f).arity;
      std::int64_t count = 1;
      for (int i = 0; i < arity; ++i) count *= n;
      for (std::int64_t k = 0; k < count; ++k) {
        Term t{f, {}};
        std::int64_t rem = k;
        for (int i = 0; i < arity; ++i) {
          t.args.push_back(Arg::constant(objects_[rem % n]));
          rem /= n;
        }
        slot_terms_.push_back(std::move(t));
      }
    }
  }

  const Vocabulary& vocab() const { return *vocab_; }
  const std::shared_ptr<const Vocabulary>& vocab_ptr() const { return vocab_; }
  const std::vector<ConstId>& objects() const { return objects_; }
  int num_slots() const { return static_cast<int>(slot_terms_.size()); }
  const Term& slot_term(int slot) const { return slot_terms_.at(slot); }
  const std::vector<ConstId>& slot_range(int slot) const {
    return vocab_->function_symbol(slot_terms_.at(slot).function).range;
  }
  int object_index(ConstId c) const {
    return c >= 0 && c < static_cast<int>(object_index_.size()) ? object_index_[c] : -1;
  }

  // Slot of a ground term, or -1 when an argument is not an object.
  int slot_of(const Term& t) const {
    if (t.function < 0 || t.function >= vocab_->num_functions()) return -1;
    int idx = 0;
    int mul = 1;
    for (Arg a : t.args) {
      if (a.is_variable()) return -1;
      int oi = object_index(a.constant_id());
      if (oi < 0) return -1;
      idx += oi * mul;
      mul *= static_cast<int>(objects_.size());
    }
    return offsets_[t.function] + idx;
  }

  // Slot of term t under binding theta (throws on unbound variables).
  int slot_of(const Term& t, const Binding& theta) const {
    if (t.function < 0 || t.function >= vocab_->num_functions()) return -1;
    int idx = 0;
    int mul = 1;
    for (Arg a : t.args) {
      ConstId c = a.is_variable() ? theta[a.variable_index()] : a.constant_id();
      int oi = object_index(c);
      if (oi < 0) return -1;
      idx += oi * mul;
      mul *= static_cast<int>(objects_.size());
    }
    return offsets_[t.function] + idx;
  }

  // Number of complete states; saturates at the cap + 1.
  std::uint64_t state_count(std::uint64_t cap) const {
    std::uint64_t total = 1;
    for (int s = 0; s < num_slots(); ++s) {
      total *= slot_range(s).size();
      if (total > cap) return cap + 1;
    }
    return total;
  }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<ConstId> objects_;
  std::vector<int> object_index_;
  std::vector<int> offsets_;
  std::vector<Term> slot_terms_;
};

// A complete ground assignment of a value to every slot of a world.
class State {
 public:
  State() = default;
  State(std::shared_ptr<const World> world, std::vector<ConstId> values)
      : world_(std::move(world)), values_(std::move(values)) {
    if (static_cast<int>(values_.size()) != world_->num_slots()) {
      throw std::invalid_argument("state value count does not match world");
    }
  }

  const World& world() const { return *world_; }
  const std::shared_ptr<const World>& world_ptr() const { return world_; }
  const std::vector<ConstId>& values() const { return values_; }
  ConstId value(int slot) const { return values_.at(slot); }

  State with_value(int slot, ConstId v) const {
    State s = *this;
    s.values_.at(slot) = v;
    return s;
  }

  friend bool operator==(const State& a, const State& b) { return a.values_ == b.values_; }
  friend bool operator!=(const State& a, const State& b) { return !(a == b); }
  friend bool operator<(const State& a, const State& b) { return a.values_ < b.values_; }

 private:
  std::shared_ptr<const World> world_;
  std::vector<ConstId> values_;
};

inline ConstId ground_value(Arg v, const Binding& theta) {
  return v.is_variable() ? theta[v.variable_index()] : v.constant_id();
}

// True iff every literal of f holds in s under theta. Terms that do not name a
// slot of the world are false.
inline bool formula_holds(const Formula& f, const Binding& theta, const State& s) {
  for (const Literal& l : f) {
    ConstId v = ground_value(l.value, theta);
    int slot = s.world().slot_of(l.term, theta);
    if (slot < 0 || s.value(slot) != v) return false;
  }
  return true;
}

// The successor function f_o: copy s and overwrite the outcome's literals.
inline State apply_outcome(const State& s, const Formula& outcome, const Binding& theta) {
  std::vector<ConstId> values = s.values();
  for (const Literal& l : outcome) {
    int slot = s.world().slot_of(l.term, theta);
    if (slot < 0) throw std::invalid_argument("outcome term does not ground to a world slot");
    values[slot] = ground_value(l.value, theta);
  }
  return State(s.world_ptr(), std::move(values));
}

inline constexpr std::uint64_t kDefaultStateCap = std::uint64_t{1} << 20;

// Calls visit(state) for every complete state of the world exactly once.
inline void for_each_state(const std::shared_ptr<const World>& world, std::uint64_t cap,
                           const std::function<void(const State&)>& visit) {
  if (world->state_count(cap) > cap) {
    throw StateSpaceTooLarge("state space exceeds cap of " + std::to_string(cap));
  }
  const int n = world->num_slots();
  std::vector<std::size_t> digits(n, 0);
  std::vector<ConstId> values(n);
  for (int i = 0; i < n; ++i) values[i] = world->slot_range(i)[0];
  while (true) {
    visit(State(world, values));
    int i = 0;
    for (; i < n; ++i) {
      const auto& r = world->slot_range(i);
      if (++digits[i] < r.size()) {
        values[i] = r[digits[i]];
        break;
      }
      digits[i] = 0;
      values[i] = r[0];
    }
    if (i == n) break;
  }
}

inline std::vector<State> enumerate_states(const std::shared_ptr<const World>& world,
                                           std::uint64_t cap = kDefaultStateCap) {
  std::vector<State> out;
  for_each_state(world, cap, [&](const State& s) { out.push_back(s); });
  return out;
}

// ---- text form -------------------------------------------------------------

inline std::string to_string(const Vocabulary& v, Arg a) {
  return a.is_variable() ? variable_name(a.variable_index()) : v.constant_symbol(a.constant_id()).name;
}

inline std::string to_string(const Vocabulary& v, const Term& t) {
  std::string s = v.function_symbol(t.function).name;
  if (t.args.empty()) return s;
  s += '(';
  for (std::size_t i = 0; i < t.args.size(); ++i) {
    if (i) s += ',';
    s += to_string(v, t.args[i]);
  }
  return s + ')';
}

inline std::string to_string(const Vocabulary& v, const ActionTerm& a) {
  std::string s = v.action_symbol(a.action).name + '(';
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (i) s += ',';
    s += to_string(v, a.args[i]);
  }
  return s + ')';
}

inline std::string to_string(const Vocabulary& v, const Literal& l) {
  const std::string t = to_string(v, l.term);
  if (l.value == Arg::constant(Vocabulary::kTrue)) return t;
  if (l.value == Arg::constant(Vocabulary::kFalse)) return "~" + t;
  return t + "=" + to_string(v, l.value);
}

inline std::string to_string(const Vocabulary& v, const Formula& f) {
  std::vector<std::string> parts;
  for (const Literal& l : f) parts.push_back(to_string(v, l));
  std::sort(parts.begin(), parts.end());
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += ", ";
    s += parts[i];
  }
  return s.empty() ? "{}" : s;
}

inline std::string to_string(const Vocabulary& v, const Binding& theta) {
  std::string s = "{";
  bool first = true;
  for (std::size_t i = 0; i < theta.values.size(); ++i) {
    if (theta.values[i] < 0) continue;
    if (!first) s += ", ";
    first = false;
    s += variable_name(static_cast<int>(i)) + "/" + v.constant_symbol(theta.values[i]).name;
  }
  return s + "}";
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline Arg parse_arg(const Vocabulary& v, std::string_view tok) {
  tok = trim(tok);
  if (auto c = v.find_constant(tok)) return Arg::constant(*c);
  if (auto var = parse_variable_name(tok)) return Arg::variable(*var);
  throw VocabularyError("unknown constant or variable '" + std::string(tok) + "'");
}

// Splits "name(a,b)" into name and argument tokens.
inline std::pair<std::string_view, std::vector<std::string_view>> split_call(std::string_view text) {
  text = trim(text);
  auto open = text.find('(');
  if (open == std::string_view::npos) return {text, {}};
  if (text.back() != ')') throw VocabularyError("malformed term '" + std::string(text) + "'");
  std::string_view name = trim(text.substr(0, open));
  std::string_view inner = text.substr(open + 1, text.size() - open - 2);
  std::vector<std::string_view> args;
  if (!trim(inner).empty()) {
    std::size_t start = 0;
    while (true) {
      auto comma = inner.find(',', start);
      args.push_back(inner.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }
  return {name, args};
}

}  // namespace detail

inline Term parse_term(const Vocabulary& v, std::string_view text) {
  auto [name, args] = detail::split_call(text);
  SymbolId f = v.function(name);
  Term t{f, {}};
  for (auto a : args) t.args.push_back(detail::parse_arg(v, a));
  if (static_cast<int>(t.args.size()) != v.function_symbol(f).arity) {
    throw VocabularyError("arity mismatch in term '" + std::string(text) + "'");
  }
  return t;
}

inline Arg parse_value(const Vocabulary& v, std::string_view text) { return detail::parse_arg(v, text); }

inline ActionTerm parse_action(const Vocabulary& v, std::string_view text) {
  auto [name, args] = detail::split_call(text);
  SymbolId a = v.action(name);
  ActionTerm z{a, {}};
  for (auto s : args) z.args.push_back(detail::parse_arg(v, s));
  if (static_cast<int>(z.args.size()) != v.action_symbol(a).arity) {
    throw VocabularyError("arity mismatch in action '" + std::string(text) + "'");
  }
  return z;
}

// Literal text: "t" (= TRUE), "~t" (= FALSE) or "t=value".
inline Literal parse_literal(const Vocabulary& v, std::string_view text) {
  text = detail::trim(text);
  if (!text.empty() && (text[0] == '~' || text[0] == '!')) {
    return {parse_term(v, text.substr(1)), Arg::constant(Vocabulary::kFalse)};
  }
  auto eq = text.rfind('=');
  if (eq == std::string_view::npos) return {parse_term(v, text), Arg::constant(Vocabulary::kTrue)};
  return {parse_term(v, text.substr(0, eq)), parse_value(v, text.substr(eq + 1))};
}

inline Formula parse_formula(const Vocabulary& v, const std::vector<std::string>& literals) {
  std::vector<Literal> lits;
  for (const auto& s : literals) lits.push_back(parse_literal(v, s));
  return Formula::from_literals(std::move(lits));
}

// Builds a state from the literals listed as true plus explicit non-boolean
// values; every other boolean slot is FALSE. Non-boolean slots must be given.
inline State state_from_literals(const std::shared_ptr<const World>& world,
                                 const std::vector<std::string>& literals) {
  const Vocabulary& v = world->vocab();
  std::vector<ConstId> values(world->num_slots(), -1);
  for (int s = 0; s < world->num_slots(); ++s) {
    if (v.in_range(world->slot_term(s).function, Vocabulary::kFalse)) values[s] = Vocabulary::kFalse;
  }
  for (const auto& text : literals) {
    Literal l = parse_literal(v, text);
    int slot = world->slot_of(l.term);
    if (slot < 0) throw VocabularyError("literal '" + text + "' is not a ground world term");
    if (!l.value.is_constant()) throw VocabularyError("state literal '" + text + "' is not ground");
    values[slot] = l.value.constant_id();
  }
  for (int s = 0; s < world->num_slots(); ++s) {
    if (values[s] < 0) {
      throw VocabularyError("no value given for " + to_string(v, world->slot_term(s)));
    }
  }
  return State(world, std::move(values));
}

}  // namespace ruleproto
