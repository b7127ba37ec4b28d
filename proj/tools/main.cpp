// Command-line front end: gen, learn, transfer, eval, experiment.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ruleproto/ruleproto.hpp"

namespace fs = std::filesystem;
using namespace ruleproto;

namespace {

// Usage and config problems exit with 2, everything else with 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string family;
  int k = 0;
  int n_source = -1;
  std::vector<int> n_target;
  int reps = 0;
  int jobs = 0;
  bool no_transfer_baseline = false;
  std::string world;
  std::string proto;
  std::string truth;
  std::string ruleset;
  std::string trace;
  int test_size = 0;
  std::vector<std::string> datasets;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    try {
      apply_config(read_json_file(o.config), c);
    } catch (const FormatError& e) {
      throw UsageError(e.what());
    }
  }
  if (!o.family.empty()) {
    auto f = parse_family(o.family);
    if (!f) throw UsageError("unknown family '" + o.family + "'");
    c.family = *f;
  }
  if (o.seed_set) c.seed = o.seed;
  if (o.k > 0) c.K = o.k;
  if (o.n_source >= 0) c.N_source = o.n_source;
  if (!o.n_target.empty()) c.N_target = o.n_target;
  if (o.reps > 0) c.repetitions = o.reps;
  if (o.jobs > 0) c.jobs = o.jobs;
  if (o.test_size > 0) c.test_size = o.test_size;
  if (o.no_transfer_baseline) c.run_transfer = false;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  c.config_hash = config_hash(c);
  return c;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

// The domain either comes from --world or is rebuilt from the family.
DomainFile load_domain(const Options& o, const ExperimentConfig& c) {
  if (!o.world.empty()) {
    try {
      return domain_from_json(read_json_file(o.world));
    } catch (const std::exception& e) {
      throw UsageError(o.world + ": " + e.what());
    }
  }
  const Domain d = make_domain(c.family, c.family_params);
  return DomainFile{d.vocab, d.world, d.family};
}

std::vector<Example> load_dataset(const std::string& path, const DomainFile& d) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_dataset(in, d.world, path);
}

int cmd_gen(const Options& o) {
  const ExperimentConfig c = resolve(o);
  if (o.out.empty()) throw UsageError("gen needs --out");
  const Domain d = make_domain(c.family, c.family_params);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  open_out(dir / "domain.json") << to_json(d).dump(2) << '\n';
  for (int k = 0; k < c.K; ++k) {
    const std::uint64_t seed = repetition_seed(c.seed, k);
    std::mt19937_64 rng(seed);
    TaskSpec t = gen_task(d, rng);
    t.seed = seed;
    const auto xs = gen_dataset(d, t, static_cast<std::size_t>(c.N_source), rng);
    open_out(dir / ("task_" + std::to_string(k) + ".json")) << to_json(d, t).dump(2) << '\n';
    auto f = open_out(dir / ("task_" + std::to_string(k) + ".jsonl"));
    write_dataset(f, xs);
  }
  std::cout << "wrote " << c.K << " tasks of " << c.N_source << " examples to " << dir.string() << '\n';
  return 0;
}

int cmd_learn(const Options& o) {
  const ExperimentConfig c = resolve(o);
  if (o.out.empty()) throw UsageError("learn needs --out");
  if (o.datasets.empty()) throw UsageError("learn needs at least one dataset");
  const DomainFile d = load_domain(o, c);
  std::vector<TaskData> tasks;
  for (const auto& p : o.datasets) tasks.emplace_back(d.vocab, load_dataset(p, d));
  const std::string trace_path = o.trace.empty() ? o.out + ".trace.jsonl" : o.trace;
  auto trace = open_out(trace_path);
  AscentResult res = coordinate_ascent(tasks, c.hyper, c.search,
                                       [&](const TraceEntry& e) { trace << to_json(e).dump() << '\n'; });
  if (!res.converged)
    std::cerr << "warning: coordinate ascent stopped at the alternation cap (" << c.search.max_alternations << ")\n";
  open_out(o.out) << to_json(*d.vocab, res.prototype).dump(2) << '\n';
  std::cout << "learned " << res.prototype.size() << " prototype(s) in " << res.alternations << " alternation(s)\n";
  return 0;
}

int cmd_transfer(const Options& o) {
  const ExperimentConfig c = resolve(o);
  if (o.out.empty()) throw UsageError("transfer needs --out");
  if (o.datasets.size() != 1) throw UsageError("transfer needs exactly one target dataset");
  const DomainFile d = load_domain(o, c);
  RuleSetProto g;
  if (!o.proto.empty()) {
    try {
      g = prototype_from_json(*d.vocab, read_json_file(o.proto));
    } catch (const std::exception& e) {
      throw UsageError(o.proto + ": " + e.what());
    }
  }
  TaskData task(d.vocab, load_dataset(o.datasets.front(), d));
  LearnedRuleSet l = transfer_learn(g, task, c.hyper, c.search);
  open_out(o.out) << to_json(*d.vocab, l.rules).dump(2) << '\n';
  std::cout << "learned " << l.rules.size() << " rule(s), score " << l.score << '\n';
  return 0;
}

RuleSet load_ruleset(const std::string& path, const Vocabulary& v) {
  try {
    const json j = read_json_file(path);
    return ruleset_from_json(v, j.contains("truth") ? j.at("truth") : j);
  } catch (const std::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

int cmd_eval(const Options& o) {
  const ExperimentConfig c = resolve(o);
  if (o.truth.empty() || o.ruleset.empty()) throw UsageError("eval needs --truth and --ruleset");
  const DomainFile df = load_domain(o, c);
  const Family family = df.family.value_or(c.family);
  const Domain d = make_domain(family, c.family_params);
  if (to_json(*d.vocab) != to_json(*df.vocab)) throw UsageError("--world does not match the " + family_name(family) + " family");
  const RuleSet truth = load_ruleset(o.truth, *d.vocab);
  const RuleSet learned = load_ruleset(o.ruleset, *d.vocab);
  std::mt19937_64 rng(c.seed);
  std::vector<State> tests;
  for (int i = 0; i < c.test_size; ++i) tests.push_back(gen_state(d, rng));
  std::cout << format_double(accuracy(truth, learned, tests, d.action, NoiseFloor(c.hyper.p_min))) << '\n';
  return 0;
}

int cmd_experiment(const Options& o) {
  const ExperimentConfig c = resolve(o);
  const fs::path dir(o.out.empty() ? "." : o.out);
  fs::create_directories(dir);
  ExperimentResult res = run_experiment(c, [](const RepetitionResult& r) {
    std::cerr << "repetition " << r.repetition << (r.ok ? " done in " : " failed after ") << r.wall_time_seconds
              << " s" << (r.ok ? "" : ": " + r.error) << '\n';
  });
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  {
    auto f = open_out(dir / "raw.csv");
    write_raw_csv(f, c, res);
  }
  {
    auto f = open_out(dir / "aggregate.csv");
    write_aggregate_csv(f, c, res);
  }
  open_out(dir / "config.json") << to_json(c).dump(2) << '\n';
  for (const auto& a : res.aggregates)
    std::cout << a.condition << " N_target=" << a.N_target << " mean=" << format_double(a.stats.mean, 4)
              << " ci95=" << format_double(a.stats.ci95, 4) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn probabilistic relational rules across tasks with rule set prototypes"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { o.seed = s; o.seed_set = true; },
                                             "master seed");
    sub->add_option("--family", o.family, "task family");
    sub->add_option("--world", o.world, "domain JSON written by gen")->check(CLI::ExistingFile);
  };
  auto* gen = app.add_subcommand("gen", "sample source tasks and datasets");
  common(gen);
  gen->add_option("--k", o.k, "number of tasks");
  gen->add_option("--n-source", o.n_source, "examples per task");
  gen->add_option("--out", o.out, "output directory")->required();

  auto* learn = app.add_subcommand("learn", "learn a rule set prototype from source datasets");
  common(learn);
  learn->add_option("datasets", o.datasets, "JSONL datasets")->required()->check(CLI::ExistingFile);
  learn->add_option("--out", o.out, "prototype JSON")->required();
  learn->add_option("--trace", o.trace, "search trace (JSON lines)");

  auto* transfer = app.add_subcommand("transfer", "learn a target rule set under a prototype");
  common(transfer);
  transfer->add_option("dataset", o.datasets, "target JSONL dataset")->required()->check(CLI::ExistingFile);
  transfer->add_option("--proto", o.proto, "prototype JSON (omit for no transfer)")->check(CLI::ExistingFile);
  transfer->add_option("--out", o.out, "rule set JSON")->required();

  auto* eval = app.add_subcommand("eval", "accuracy of a rule set against a ground truth");
  common(eval);
  eval->add_option("--truth", o.truth, "task spec or rule set JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--ruleset", o.ruleset, "learned rule set JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--test-size", o.test_size, "number of test states");

  auto* exp = app.add_subcommand("experiment", "run the transfer experiment and write CSVs");
  common(exp);
  exp->add_option("--k", o.k, "source tasks");
  exp->add_option("--n-source", o.n_source, "examples per source task");
  exp->add_option("--n-target", o.n_target, "target training sizes (repeatable)");
  exp->add_option("--reps", o.reps, "repetitions");
  exp->add_option("--jobs", o.jobs, "parallel repetitions");
  exp->add_option("--test-size", o.test_size, "test states per repetition");
  exp->add_flag("--no-transfer-baseline", o.no_transfer_baseline, "run only the no-transfer condition");
  exp->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*gen) return cmd_gen(o);
    if (*learn) return cmd_learn(o);
    if (*transfer) return cmd_transfer(o);
    if (*eval) return cmd_eval(o);
    if (*exp) return cmd_experiment(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
