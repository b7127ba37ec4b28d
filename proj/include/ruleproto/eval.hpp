#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "ruleproto/blocksworld.hpp"
#include "ruleproto/rules.hpp"
#include "ruleproto/search.hpp"

namespace ruleproto {

enum class DistanceMode { kBucketed, kEnumerated };

namespace detail {

struct SuccessorDist {
  std::vector<std::pair<State, double>> explicit_;
  double noise = 0.0;

  double prob(const State& s, double p_min) const {
    for (const auto& [t, p] : explicit_)
      if (t == s) return p;
    return noise * p_min;
  }
};

inline SuccessorDist successors(const RuleSet& rs, const State& s, const ActionTerm& a) {
  AppliedRule ar = applicable_rule(rs, s, a);
  return {explicit_successors(*ar.rule, s, ar.binding), ar.rule->noise_prob()};
}

}  // namespace detail

// Sum of |p1(s') - p2(s')| under the p_min noise approximation. Bucketed mode sums
// over both models' explicit successors and adds one term for the noise mass;
// enumerated mode sums over every state of the world.
inline double variational_distance(const RuleSet& r1, const RuleSet& r2, const State& s, const ActionTerm& a,
                                   DistanceMode mode = DistanceMode::kBucketed, NoiseFloor floor = NoiseFloor{},
                                   std::uint64_t cap = kDefaultStateCap) {
  if (!a.is_ground()) throw std::invalid_argument("variational_distance needs a ground action");
  const auto d1 = detail::successors(r1, s, a);
  const auto d2 = detail::successors(r2, s, a);
  const double p_min = floor.value();
  if (mode == DistanceMode::kEnumerated) {
    CompensatedSum sum;
    for_each_state(s.world_ptr(), cap, [&](const State& t) {
      sum.add(std::abs(static_cast<long double>(d1.prob(t, p_min)) - d2.prob(t, p_min)));
    });
    return sum.value();
  }
  std::vector<State> u;
  for (const auto* d : {&d1, &d2})
    for (const auto& [t, p] : d->explicit_)
      if (std::find(u.begin(), u.end(), t) == u.end()) u.push_back(t);
  double sum = 0.0;
  for (const State& t : u) sum += std::abs(d1.prob(t, p_min) - d2.prob(t, p_min));
  return sum + std::abs(d1.noise - d2.noise);
}

// 1 minus the mean distance over the test states. Not clipped at zero.
inline double accuracy(const RuleSet& truth, const RuleSet& learned, const std::vector<State>& tests,
                       const ActionTerm& a, NoiseFloor floor = NoiseFloor{}) {
  if (tests.empty()) throw std::invalid_argument("accuracy needs at least one test state");
  double sum = 0.0;
  for (const State& s : tests) sum += variational_distance(truth, learned, s, a, DistanceMode::kBucketed, floor);
  return 1.0 - sum / static_cast<double>(tests.size());
}

// ---- statistics ------------------------------------------------------------

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double ci95 = 0.0;  // half-width, Student-t
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  boost::math::students_t t(static_cast<double>(s.n - 1));
  s.ci95 = boost::math::quantile(boost::math::complement(t, 0.025)) * sd / std::sqrt(static_cast<double>(s.n));
  return s;
}

inline std::uint64_t repetition_seed(std::uint64_t master, int rep) {
  return splitmix64(master + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(rep));
}

// ---- experiment ------------------------------------------------------------

inline const char* kTransfer = "transfer";
inline const char* kNoTransfer = "no-transfer";

struct ExperimentConfig {
  Family family = Family::kGripperSize;
  FamilyParams family_params;
  int K = 5;
  int N_source = 200;
  std::vector<int> N_target{2, 5, 10, 20, 50, 100};
  int repetitions = 20;
  int test_size = 1000;
  std::uint64_t seed = 1;
  Hyperparams hyper;
  SearchSettings search;
  int jobs = 1;
  bool run_transfer = true;
  bool run_baseline = true;
  std::string config_hash;  // stamped into CSV rows

  void validate() const {
    if (K < 1 || N_source < 0 || repetitions < 2 || test_size < 1 || jobs < 1)
      throw std::invalid_argument("experiment counts must be positive (repetitions >= 2)");
    if (N_target.empty()) throw std::invalid_argument("experiment needs at least one N_target");
    for (int n : N_target)
      if (n < 0) throw std::invalid_argument("N_target values must be non-negative");
    if (!run_transfer && !run_baseline) throw std::invalid_argument("experiment has no condition to run");
    family_params.validate();
    hyper.validate();
  }
};

struct RunRecord {
  std::string condition;
  int N_target = 0;
  int repetition = 0;
  double accuracy = 0.0;
  double wall_time_seconds = 0.0;
};

struct RepetitionResult {
  int repetition = 0;
  bool ok = false;
  std::string error;
  double wall_time_seconds = 0.0;
  double source_time_seconds = 0.0;
  int alternations = 0;
  bool converged = true;
  std::size_t prototypes = 0;
  std::vector<RunRecord> runs;
};

struct Aggregate {
  std::string condition;
  int N_target = 0;
  Summary stats;
};

struct ExperimentResult {
  std::vector<RepetitionResult> repetitions;
  std::vector<Aggregate> aggregates;
  std::vector<std::string> warnings;

  const Aggregate* find(const std::string& condition, int n) const {
    for (const auto& a : aggregates)
      if (a.condition == condition && a.N_target == n) return &a;
    return nullptr;
  }
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Every learned rule must be well formed and no two rules of one action may
// apply to the same state.
inline void check_learned(const Vocabulary& v, const RuleSet& rs) {
  const auto& rules = rs.rules();
  for (const Rule& r : rules) validate_rule(v, r);
  for (std::size_t i = 0; i < rules.size(); ++i)
    for (std::size_t j = i + 1; j < rules.size(); ++j)
      if (rules[i].action.action == rules[j].action.action && !contexts_disjoint(rules[i].context, rules[j].context))
        throw std::logic_error("learned rules may apply to the same state");
}

// One repetition of the protocol: source tasks, prototype learning, target
// task, per-N_target learning under each condition, test-set accuracy.
inline RepetitionResult run_repetition(const ExperimentConfig& cfg, int rep) {
  const auto t0 = std::chrono::steady_clock::now();
  RepetitionResult out;
  out.repetition = rep;
  std::mt19937_64 rng(repetition_seed(cfg.seed, rep));
  const Domain d = make_domain(cfg.family, cfg.family_params);
  const NoiseFloor floor(cfg.hyper.p_min);

  RuleSetProto g_star;
  std::vector<TaskSpec> sources;
  std::vector<std::vector<Example>> source_data;
  for (int k = 0; k < cfg.K; ++k) {
    sources.push_back(gen_task(d, rng));
    source_data.push_back(gen_dataset(d, sources.back(), static_cast<std::size_t>(cfg.N_source), rng));
  }
  if (cfg.run_transfer) {
    const auto ts = std::chrono::steady_clock::now();
    std::vector<TaskData> tasks;
    for (auto& xs : source_data) tasks.emplace_back(d.vocab, xs);
    AscentResult ar = coordinate_ascent(tasks, cfg.hyper, cfg.search);
    g_star = std::move(ar.prototype);
    out.alternations = ar.alternations;
    out.converged = ar.converged;
    out.source_time_seconds = seconds_since(ts);
  }
  out.prototypes = g_star.size();

  const TaskSpec target = gen_task(d, rng);
  int n_max = 0;
  for (int n : cfg.N_target) n_max = std::max(n_max, n);
  const auto target_data = gen_dataset(d, target, static_cast<std::size_t>(n_max), rng);
  std::vector<State> tests;
  for (int i = 0; i < cfg.test_size; ++i) tests.push_back(gen_state(d, rng));

  const RuleSetProto empty;
  for (int n : cfg.N_target) {
    std::vector<Example> xs(target_data.begin(), target_data.begin() + n);
    for (const char* cond : {kTransfer, kNoTransfer}) {
      const bool transfer = std::string(cond) == kTransfer;
      if (transfer ? !cfg.run_transfer : !cfg.run_baseline) continue;
      const auto tr = std::chrono::steady_clock::now();
      TaskData task(d.vocab, xs);
      LearnedRuleSet l = transfer_learn(transfer ? g_star : empty, task, cfg.hyper, cfg.search);
      check_learned(*d.vocab, l.rules);
      const double acc = accuracy(target.truth, l.rules, tests, d.action, floor);
      out.runs.push_back({cond, n, rep, acc, seconds_since(tr)});
    }
  }
  out.ok = true;
  out.wall_time_seconds = seconds_since(t0);
  return out;
}

using ProgressFn = std::function<void(const RepetitionResult&)>;

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  ExperimentResult res;
  res.repetitions.resize(static_cast<std::size_t>(cfg.repetitions));
  std::mutex mu;
  int next = 0;
  auto worker = [&] {
    while (true) {
      int rep;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= cfg.repetitions) return;
        rep = next++;
      }
      RepetitionResult r;
      try {
        r = run_repetition(cfg, rep);
      } catch (const std::exception& e) {
        r.repetition = rep;
        r.ok = false;
        r.error = e.what();
      }
      std::lock_guard<std::mutex> lock(mu);
      res.repetitions[static_cast<std::size_t>(rep)] = r;
      if (progress) progress(r);
    }
  };
  const int jobs = std::min(cfg.jobs, cfg.repetitions);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  int failed = 0;
  for (const auto& r : res.repetitions) {
    if (r.ok) continue;
    ++failed;
    res.warnings.push_back("repetition " + std::to_string(r.repetition) + " failed: " + r.error);
  }
  if (failed > 0 && failed * 10 >= cfg.repetitions) {
    throw std::runtime_error(std::to_string(failed) + " of " + std::to_string(cfg.repetitions) +
                             " repetitions failed; first error: " + res.warnings.front());
  }

  for (const char* cond : {kTransfer, kNoTransfer}) {
    for (int n : cfg.N_target) {
      std::vector<double> xs;
      for (const auto& r : res.repetitions)
        for (const auto& run : r.runs)
          if (run.condition == cond && run.N_target == n) xs.push_back(run.accuracy);
      if (xs.empty()) continue;
      res.aggregates.push_back({cond, n, summarize(xs)});
    }
  }
  return res;
}

// ---- CSV -------------------------------------------------------------------

inline std::string format_double(double x, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline const char* kRawCsvHeader =
    "family,condition,K,N_source,N_target,repetition,accuracy,wall_time_seconds,config_hash";
inline const char* kAggregateCsvHeader = "family,condition,K,N_source,N_target,repetitions,mean,ci95,config_hash";

inline void write_raw_csv(std::ostream& os, const ExperimentConfig& cfg, const ExperimentResult& res) {
  os << kRawCsvHeader << '\n';
  for (const auto& r : res.repetitions) {
    if (!r.ok) continue;
    for (const auto& run : r.runs) {
      os << family_name(cfg.family) << ',' << run.condition << ',' << cfg.K << ',' << cfg.N_source << ','
         << run.N_target << ',' << run.repetition << ',' << format_double(run.accuracy) << ','
         << format_double(run.wall_time_seconds, 3) << ',' << cfg.config_hash << '\n';
    }
  }
}

inline void write_aggregate_csv(std::ostream& os, const ExperimentConfig& cfg, const ExperimentResult& res) {
  os << kAggregateCsvHeader << '\n';
  for (const auto& a : res.aggregates) {
    os << family_name(cfg.family) << ',' << a.condition << ',' << cfg.K << ',' << cfg.N_source << ',' << a.N_target
       << ',' << a.stats.n << ',' << format_double(a.stats.mean) << ',' << format_double(a.stats.ci95) << ','
       << cfg.config_hash << '\n';
  }
}

}  // namespace ruleproto
