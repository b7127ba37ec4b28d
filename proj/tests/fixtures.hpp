#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ruleproto/rules.hpp"

namespace fixtures {

using namespace ruleproto;

// The two-block world of the slippery-gripper example rules.
struct SlipperyPair {
  std::shared_ptr<Vocabulary> vocab;
  std::shared_ptr<const World> world;
  Rule dry;
  Rule wet;
  State s1;  // inhand-nil, on(B-A,B-B), on(B-B,TABLE), clear(B-A), block(B-A), block(B-B), table(TABLE)
  ActionTerm a;

  SlipperyPair() {
    vocab = std::make_shared<Vocabulary>();
    const ConstId ba = vocab->add_constant("B-A", "block");
    const ConstId bb = vocab->add_constant("B-B", "block");
    const ConstId table = vocab->add_constant("TABLE", "table");
    vocab->add_predicate("on", 2);
    vocab->add_predicate("clear", 1);
    vocab->add_predicate("inhand", 1);
    vocab->add_predicate("inhand-nil", 0);
    vocab->add_predicate("block", 1);
    vocab->add_predicate("table", 1);
    vocab->add_predicate("wet", 0);
    vocab->add_action("pickup", 2);
    world = std::make_shared<World>(vocab, std::vector<ConstId>{ba, bb, table});
    const Vocabulary& v = *vocab;
    const ActionTerm z = parse_action(v, "pickup(X,Y)");
    const Formula success =
        parse_formula(v, {"inhand(X)", "~clear(X)", "~inhand-nil", "~on(X,Y)", "clear(Y)"});
    const Formula fall = parse_formula(v, {"on(X,TABLE)", "~on(X,Y)"});
    dry = Rule{z, parse_formula(v, {"on(X,Y)", "clear(X)", "inhand-nil", "block(Y)", "~wet"}),
               {success, fall, Formula{}}, {0.7, 0.2, 0.05, 0.05}};
    wet = Rule{z, parse_formula(v, {"on(X,Y)", "clear(X)", "inhand-nil", "block(Y)", "wet"}),
               {success, fall, Formula{}}, {0.2, 0.2, 0.3, 0.3}};
    s1 = state_from_literals(world, {"inhand-nil", "on(B-A,B-B)", "on(B-B,TABLE)", "clear(B-A)", "block(B-A)",
                                     "block(B-B)", "table(TABLE)"});
    a = parse_action(v, "pickup(B-A,B-B)");
  }

  template <class Rng>
  State random_state(Rng& rng) const {
    std::vector<ConstId> values;
    for (int i = 0; i < world->num_slots(); ++i) {
      const auto& r = world->slot_range(i);
      values.push_back(r[std::uniform_int_distribution<std::size_t>(0, r.size() - 1)(rng)]);
    }
    return State(world, std::move(values));
  }

  RuleSet rules() const { return RuleSet({dry, wet}); }
  State make(const std::vector<std::string>& lits) const { return state_from_literals(world, lits); }
};

// Two blocks and five predicates: ten boolean slots, 1024 states, small
// enough to enumerate.
struct TwoBlock {
  std::shared_ptr<Vocabulary> vocab;
  std::shared_ptr<const World> world;
  Rule dry;
  Rule wet;
  ActionTerm a;

  TwoBlock() {
    vocab = std::make_shared<Vocabulary>();
    const ConstId ba = vocab->add_constant("B-A", "block");
    const ConstId bb = vocab->add_constant("B-B", "block");
    vocab->add_predicate("on", 2);
    vocab->add_predicate("clear", 1);
    vocab->add_predicate("inhand", 1);
    vocab->add_predicate("inhand-nil", 0);
    vocab->add_predicate("wet", 0);
    vocab->add_action("pickup", 2);
    world = std::make_shared<World>(vocab, std::vector<ConstId>{ba, bb});
    const Vocabulary& v = *vocab;
    const ActionTerm z = parse_action(v, "pickup(X,Y)");
    const Formula success = parse_formula(v, {"inhand(X)", "~inhand-nil", "~on(X,Y)", "clear(Y)"});
    const Formula drop = parse_formula(v, {"~on(X,Y)", "clear(Y)"});
    dry = Rule{z, parse_formula(v, {"on(X,Y)", "inhand-nil", "~inhand(X)", "~wet"}), {success, drop, Formula{}},
               {0.7, 0.2, 0.05, 0.05}};
    wet = Rule{z, parse_formula(v, {"on(X,Y)", "inhand-nil", "~inhand(X)", "wet"}), {success, drop, Formula{}},
               {0.2, 0.2, 0.3, 0.3}};
    a = parse_action(v, "pickup(B-A,B-B)");
  }

  RuleSet rules() const { return RuleSet({dry, wet}); }
  std::vector<State> states() const { return enumerate_states(world); }
};

}  // namespace fixtures
