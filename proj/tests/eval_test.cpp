#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "ruleproto/eval.hpp"
#include "ruleproto/io.hpp"

using namespace ruleproto;

namespace {

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.family = Family::kGripperSize;
  c.K = 2;
  c.N_source = 30;
  c.N_target = {2, 5};
  c.repetitions = 2;
  c.test_size = 50;
  c.seed = 5;
  c.config_hash = config_hash(c);
  return c;
}

}  // namespace

TEST(Distance, IdenticalRuleSetsAreZero) {
  fixtures::SlipperyPair f;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const State s = f.random_state(rng);
    EXPECT_EQ(variational_distance(f.rules(), f.rules(), s, f.a), 0.0);
  }
}

TEST(Distance, DisjointDeterministicOutcomesAreTwo) {
  fixtures::SlipperyPair f;
  const Vocabulary& v = *f.vocab;
  const ActionTerm z = parse_action(v, "pickup(X,Y)");
  const RuleSet up({Rule{z, Formula{}, {parse_formula(v, {"inhand(X)"})}, {1.0, 0.0}}});
  const RuleSet down({Rule{z, Formula{}, {parse_formula(v, {"on(X,TABLE)", "~on(X,Y)"})}, {1.0, 0.0}}});
  EXPECT_DOUBLE_EQ(variational_distance(up, down, f.s1, f.a), 2.0);
}

TEST(Distance, BucketedMatchesEnumeration) {
  fixtures::TwoBlock f;
  const RuleSet other({f.dry}, 0.7);
  const auto all = f.states();
  for (double p_min : {1e-6, 1e-4}) {
    const NoiseFloor floor(p_min);
    const std::uint64_t n_states = all.size();
    ASSERT_EQ(n_states, 1024u);
    for (std::size_t i = 0; i < all.size(); i += 7) {
      const State& s = all[i];
      const double b = variational_distance(f.rules(), other, s, f.a, DistanceMode::kBucketed, floor);
      const double e = variational_distance(f.rules(), other, s, f.a, DistanceMode::kEnumerated, floor);
      // Enumeration replaces |dn| by |dn| * p_min * (states off the explicit successors).
      const auto d1 = explicit_successors(*applicable_rule(f.rules(), s, f.a).rule, s,
                                          applicable_rule(f.rules(), s, f.a).binding);
      const auto d2 = explicit_successors(*applicable_rule(other, s, f.a).rule, s,
                                          applicable_rule(other, s, f.a).binding);
      std::vector<State> u;
      for (const auto* d : {&d1, &d2})
        for (const auto& [t, p] : *d)
          if (std::find(u.begin(), u.end(), t) == u.end()) u.push_back(t);
      const double dn = std::abs(applicable_rule(f.rules(), s, f.a).rule->noise_prob() -
                                 applicable_rule(other, s, f.a).rule->noise_prob());
      EXPECT_NEAR(e - b, dn * (p_min * static_cast<double>(n_states - u.size()) - 1.0), 1e-12);
    }
  }
}

TEST(Accuracy, SelfAccuracyIsOne) {
  fixtures::SlipperyPair f;
  std::mt19937_64 rng(2);
  std::vector<State> tests;
  for (int i = 0; i < 100; ++i) tests.push_back(f.random_state(rng));
  EXPECT_EQ(accuracy(f.rules(), f.rules(), tests, f.a), 1.0);
  EXPECT_THROW(accuracy(f.rules(), f.rules(), {}, f.a), std::invalid_argument);
}

TEST(Accuracy, DefaultOnlyClosedForm) {
  fixtures::SlipperyPair f;
  const Vocabulary& v = *f.vocab;
  const ActionTerm z = parse_action(v, "pickup(X,Y)");
  const double p = 0.8;
  const RuleSet truth({Rule{z, parse_formula(v, {"inhand-nil"}), {parse_formula(v, {"inhand(X)", "~inhand-nil"})},
                            {p, 1 - p}}});
  const State yes = f.s1;
  const State no = f.make({"on(B-A,B-B)"});
  // The default rule puts mass 1 on s; truth puts (1-p) p_min on s, p on the
  // success successor and 1-p on noise.
  const double p_min = 1e-6;
  EXPECT_NEAR(accuracy(truth, RuleSet{}, {yes, no}, f.a), 1.0 - ((1.0 - (1 - p) * p_min) + p + (1 - p)) / 2.0, 1e-12);
}

TEST(Accuracy, InvariantToTestOrderAndRuleOrder) {
  fixtures::SlipperyPair f;
  std::mt19937_64 rng(3);
  std::vector<State> tests;
  for (int i = 0; i < 60; ++i) tests.push_back(f.random_state(rng));
  const RuleSet other({f.wet}, 0.4);
  const double a = accuracy(f.rules(), other, tests, f.a);
  std::reverse(tests.begin(), tests.end());
  EXPECT_NEAR(accuracy(f.rules(), other, tests, f.a), a, 1e-12);
  EXPECT_NEAR(accuracy(RuleSet({f.wet, f.dry}), other, tests, f.a), a, 1e-12);
}

TEST(Summary, StudentInterval) {
  std::vector<double> xs(20);
  for (int i = 0; i < 20; ++i) xs[i] = i;
  const Summary s = summarize(xs);
  EXPECT_DOUBLE_EQ(s.mean, 9.5);
  const double sd = std::sqrt(35.0);  // sample variance of 0..19
  EXPECT_NEAR(s.ci95, 2.093024054 * sd / std::sqrt(20.0), 1e-8);
  EXPECT_EQ(summarize({0.5}).ci95, 0.0);
}

TEST(Experiment, SeedsDifferPerRepetition) {
  EXPECT_NE(repetition_seed(1, 0), repetition_seed(1, 1));
  EXPECT_EQ(repetition_seed(7, 3), repetition_seed(7, 3));
}

TEST(Experiment, CsvSchemaAndReproducibility) {
  const ExperimentConfig c = small_config();
  const ExperimentResult a = run_experiment(c);
  ExperimentConfig c2 = c;
  c2.jobs = 2;
  const ExperimentResult b = run_experiment(c2);
  std::ostringstream raw, agg_a, agg_b;
  write_raw_csv(raw, c, a);
  write_aggregate_csv(agg_a, c, a);
  write_aggregate_csv(agg_b, c, b);
  EXPECT_EQ(agg_a.str(), agg_b.str());

  const auto r = lines(raw.str());
  ASSERT_EQ(r.size(), 1u + 2 * 2 * 2);
  EXPECT_EQ(r[0], "family,condition,K,N_source,N_target,repetition,accuracy,wall_time_seconds,config_hash");
  const auto g = lines(agg_a.str());
  ASSERT_EQ(g.size(), 1u + 2 * 2);
  EXPECT_EQ(g[0], "family,condition,K,N_source,N_target,repetitions,mean,ci95,config_hash");
  for (std::size_t i = 1; i < g.size(); ++i) {
    EXPECT_EQ(std::count(g[i].begin(), g[i].end(), ','), 8);
    EXPECT_EQ(g[i].rfind("gripper-size,", 0), 0u);
    EXPECT_NE(g[i].find("," + c.config_hash), std::string::npos);
  }
  for (const auto& rep : a.repetitions) {
    EXPECT_TRUE(rep.ok);
    for (const auto& run : rep.runs) EXPECT_LE(run.accuracy, 1.0);
  }
  ASSERT_NE(a.find(kTransfer, 5), nullptr);
  EXPECT_EQ(a.find(kTransfer, 5)->stats.n, 2u);
}

TEST(Experiment, BaselineOnlyCondition) {
  ExperimentConfig c = small_config();
  c.run_transfer = false;
  const ExperimentResult r = run_experiment(c);
  EXPECT_EQ(r.find(kTransfer, 2), nullptr);
  ASSERT_NE(r.find(kNoTransfer, 2), nullptr);
}

TEST(Experiment, InvalidConfigRejected) {
  ExperimentConfig c = small_config();
  c.N_target = {-1};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config();
  c.repetitions = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
