#include "dkg/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "dkg/compiler.hpp"
#include "dkg/errors.hpp"
#include "dkg/learner.hpp"
#include "dkg/runtime.hpp"
#include "text_util.hpp"

namespace dkg {

Program build_task_program(const GeneratedTask& task) {
  std::istringstream facts(task.facts);
  std::istringstream types(task.types);
  std::vector<ExampleSet> all = task.train;
  all.insert(all.end(), task.test.begin(), task.test.end());
  Program program = load_program(task.rules, facts, &types, all);
  for (const auto& p : task.trainable) program.kg.set_trainable(p, true);
  return program;
}

namespace {

void split_examples(std::vector<Example> examples, const Mode& mode, double train_fraction,
                    std::mt19937_64& rng, GeneratedTask& task) {
  std::shuffle(examples.begin(), examples.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(examples.size())));
  ExampleSet train{mode, {}};
  ExampleSet test{mode, {}};
  for (std::size_t i = 0; i < examples.size(); ++i) (i < n_train ? train : test).examples.push_back(examples[i]);
  task.train = {std::move(train)};
  task.test = {std::move(test)};
}

std::string padded(std::size_t i, std::size_t width) {
  std::string s = std::to_string(i);
  return std::string(s.size() < width ? width - s.size() : 0, '0') + s;
}

}  // namespace

// ---------------------------------------------------------------------------
// grid

Neighborhood parse_neighborhood(std::string_view text) {
  if (text == "4") return Neighborhood::kFour;
  if (text == "8") return Neighborhood::kEight;
  if (text == "8+self") return Neighborhood::kEightWithSelf;
  throw UsageError("unknown neighborhood '" + std::string(text) + "' (4|8|8+self)");
}

std::string_view neighborhood_name(Neighborhood n) {
  switch (n) {
    case Neighborhood::kFour: return "4";
    case Neighborhood::kEight: return "8";
    case Neighborhood::kEightWithSelf: return "8+self";
  }
  return "?";
}

void GridSpec::validate() const {
  if (n < 2) throw UsageError("grid side must be at least 2");
  if (depth < 1) throw UsageError("grid depth must be at least 1");
  if (!(edge_weight > 0.0)) throw UsageError("edge weight must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train fraction must be in (0,1)");
}

std::string grid_cell(int row, int col) { return "c" + std::to_string(row) + "_" + std::to_string(col); }

namespace {

std::vector<std::pair<int, int>> grid_offsets(Neighborhood neighborhood) {
  std::vector<std::pair<int, int>> out = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  if (neighborhood != Neighborhood::kFour) {
    out.insert(out.end(), {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}});
  }
  if (neighborhood == Neighborhood::kEightWithSelf) out.emplace_back(0, 0);
  return out;
}

}  // namespace

std::size_t grid_edge_count(int n, Neighborhood neighborhood) {
  std::size_t count = 0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      for (const auto& [dr, dc] : grid_offsets(neighborhood)) {
        if (r + dr >= 0 && r + dr < n && c + dc >= 0 && c + dc < n) ++count;
      }
    }
  }
  return count;
}

GeneratedTask gen_grid(const GridSpec& spec) {
  spec.validate();
  const int n = spec.n;
  GeneratedTask task;
  task.rules = "path(X,Y) :- edge(X,Y).\npath(X,Y) :- edge(X,Z), path(Z,Y).\n";
  task.types = "edge\tcell\tcell\n";
  task.trainable = {"edge"};
  task.query_mode = Mode{"path", Direction::kIO};
  task.max_depth = spec.depth;

  std::ostringstream facts;
  const std::string w = format_weight(spec.edge_weight);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      for (const auto& [dr, dc] : grid_offsets(spec.neighborhood)) {
        const int r2 = r + dr;
        const int c2 = c + dc;
        if (r2 < 0 || r2 >= n || c2 < 0 || c2 >= n) continue;
        facts << "edge\t" << grid_cell(r, c) << "\t" << grid_cell(r2, c2) << "\t" << w << "\n";
      }
    }
  }
  task.facts = facts.str();

  const std::vector<std::pair<int, int>> corners = {{0, 0}, {0, n - 1}, {n - 1, 0}, {n - 1, n - 1}};
  std::vector<Example> examples;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      int best = std::numeric_limits<int>::max();
      for (const auto& [cr, cc] : corners) best = std::min(best, (r - cr) * (r - cr) + (c - cc) * (c - cc));
      Example ex;
      ex.input = grid_cell(r, c);
      std::set<std::string> seen;
      for (const auto& [cr, cc] : corners) {
        const std::string corner = grid_cell(cr, cc);
        if ((r - cr) * (r - cr) + (c - cc) * (c - cc) == best && seen.insert(corner).second) {
          ex.answers.emplace_back(corner, 1.0);
        }
      }
      examples.push_back(std::move(ex));
    }
  }
  std::mt19937_64 rng(spec.seed);
  split_examples(std::move(examples), task.query_mode, spec.train_fraction, rng, task);
  for (const auto& ex : task.train[0].examples) task.queries.push_back("path(" + ex.input + ",Y)");
  for (const auto& ex : task.test[0].examples) task.queries.push_back("path(" + ex.input + ",Y)");
  return task;
}

// ---------------------------------------------------------------------------
// smokers

void SmokersSpec::validate() const {
  if (nodes < 1) throw UsageError("smokers graph needs at least one node");
  if (depth < 1) throw UsageError("smokers depth must be at least 1");
  if (!(min_weight > 0.0 && min_weight <= max_weight)) throw UsageError("weights need 0 < min <= max");
  if (stress_probability < 0.0 || stress_probability > 1.0) throw UsageError("stress probability must be in [0,1]");
  for (const auto& [a, b] : edges) {
    if (a >= nodes || b >= nodes) throw UsageError("smokers edge names a node out of range");
  }
  for (const auto& [a, w] : stress) {
    if (a >= nodes || !(w >= 0.0)) throw UsageError("bad stress entry");
  }
}

std::string person(std::size_t i) { return "p" + std::to_string(i); }

GeneratedTask gen_smokers(const SmokersSpec& spec) {
  spec.validate();
  GeneratedTask task;
  task.rules = "smokes(X) :- stress(X).\nsmokes(X) :- influences(Y,X), smokes(Y).\n";
  task.types = "influences\tperson\tperson\nstress\tperson\n";
  task.query_mode = Mode{"smokes", Direction::kI};
  task.max_depth = spec.depth;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> weight(spec.min_weight, spec.max_weight);
  std::bernoulli_distribution stressed(spec.stress_probability);
  std::vector<std::pair<std::size_t, std::size_t>> edges = spec.edges;
  std::vector<std::pair<std::size_t, double>> stress = spec.stress;
  std::vector<double> edge_weights;

  if (spec.edges.empty()) {
    // Preferential attachment; each friendship yields influence both ways.
    std::vector<std::size_t> endpoints;  // node repeated once per incident edge
    for (std::size_t i = 1; i < spec.nodes; ++i) {
      std::set<std::size_t> targets;
      const std::size_t want = std::min(spec.attach, i);
      while (targets.size() < want) {
        std::size_t t;
        if (endpoints.empty()) {
          t = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
        } else {
          t = endpoints[std::uniform_int_distribution<std::size_t>(0, endpoints.size() - 1)(rng)];
        }
        targets.insert(t);
      }
      for (std::size_t t : targets) {
        edges.emplace_back(i, t);
        edges.emplace_back(t, i);
        endpoints.push_back(i);
        endpoints.push_back(t);
      }
    }
    for (std::size_t i = 0; i < spec.nodes; ++i) {
      if (stressed(rng) || (spec.nodes == 1 && i == 0)) stress.emplace_back(i, weight(rng));
    }
    for (std::size_t e = 0; e < edges.size(); ++e) edge_weights.push_back(weight(rng));
  } else {
    edge_weights.assign(edges.size(), 1.0);
  }

  std::ostringstream facts;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    facts << "influences\t" << person(edges[e].first) << "\t" << person(edges[e].second) << "\t"
          << format_weight(edge_weights[e]) << "\n";
  }
  for (const auto& [i, w] : stress) facts << "stress\t" << person(i) << "\t" << format_weight(w) << "\n";
  task.facts = facts.str();

  std::set<std::size_t> present;
  for (const auto& [a, b] : edges) present.insert({a, b});
  for (const auto& [a, w] : stress) present.insert(a);
  for (std::size_t i : present) task.queries.push_back("smokes(" + person(i) + ")");
  return task;
}

// ---------------------------------------------------------------------------
// synthetic question answering

void SynthQASpec::validate() const {
  if (relations < 1) throw UsageError("synthqa needs at least one relation");
  if (entities < 2 * relations + 2) throw UsageError("synthqa needs more entities per relation");
  if (questions < 2) throw UsageError("synthqa needs at least two questions");
  if (fillers_per_question > filler_words) throw UsageError("more fillers per question than filler words");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train fraction must be in (0,1)");
  if (!(indicator_weight > 0.0)) throw UsageError("indicator weight must be positive");
}

std::vector<std::string> synth_qa_relations(std::size_t count) {
  static const std::vector<std::string> kNames = {"directedBy", "writtenBy",  "starredActors", "hasGenre",
                                                  "releaseYear", "inLanguage", "hasTags",       "hasRating"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(i < kNames.size() ? kNames[i] : "relation" + std::to_string(i + 1));
  }
  return out;
}

GeneratedTask gen_synth_qa(const SynthQASpec& spec) {
  spec.validate();
  const auto relations = synth_qa_relations(spec.relations);
  const std::size_t n_movies = spec.entities / 2;
  const std::size_t pool = (spec.entities - n_movies) / spec.relations;
  std::mt19937_64 rng(spec.seed);

  GeneratedTask task;
  task.query_mode = Mode{"answer", Direction::kIO};
  task.max_depth = 1;

  auto indicator = [](const std::string& r, int d) { return "indicatesQuestionType_" + r + "_" + std::to_string(d); };
  std::ostringstream rules;
  std::ostringstream types;
  types << "mentionsEntity\tquestion\tentity\nhasFeature\tquestion\tword\n";
  for (const auto& r : relations) {
    rules << "answer(Question,Movie) :- mentionsEntity(Question,Entity), " << r
          << "(Movie,Entity), hasFeature(Question,Word), " << indicator(r, 1) << "(Word).\n";
    rules << "answer(Question,Entity) :- mentionsEntity(Question,Movie), " << r
          << "(Movie,Entity), hasFeature(Question,Word), " << indicator(r, 2) << "(Word).\n";
    types << r << "\tentity\tentity\n" << indicator(r, 1) << "\tword\n" << indicator(r, 2) << "\tword\n";
    task.trainable.push_back(indicator(r, 1));
    task.trainable.push_back(indicator(r, 2));
  }
  task.rules = rules.str();
  task.types = types.str();

  std::vector<std::string> movies;
  for (std::size_t m = 0; m < n_movies; ++m) movies.push_back("movie" + padded(m, 3));
  // objects[r][i]; object_of[r][m]; movies_of[r][i]
  std::vector<std::vector<std::string>> objects(relations.size());
  std::vector<std::vector<std::size_t>> object_of(relations.size());
  std::vector<std::vector<std::vector<std::size_t>>> movies_of(relations.size());
  std::ostringstream facts;
  for (std::size_t r = 0; r < relations.size(); ++r) {
    for (std::size_t i = 0; i < pool; ++i) objects[r].push_back(relations[r] + "_e" + padded(i, 3));
    movies_of[r].resize(pool);
    std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
    for (std::size_t m = 0; m < n_movies; ++m) {
      const std::size_t o = pick(rng);
      object_of[r].push_back(o);
      movies_of[r][o].push_back(m);
      facts << relations[r] << "\t" << movies[m] << "\t" << objects[r][o] << "\t1.0\n";
    }
  }

  // Vocabulary: per-direction and per-relation cue words plus shared fillers.
  auto cue = [&](std::size_t r, int d) { return relations[r] + "_cue" + std::to_string(d); };
  auto topic = [&](std::size_t r) { return relations[r] + "_topic"; };
  const std::vector<std::string> direction_word = {"which_movies", "what_is"};
  std::vector<std::string> fillers;
  for (std::size_t i = 0; i < spec.filler_words; ++i) fillers.push_back("filler" + padded(i, 2));
  std::vector<std::string> vocabulary = direction_word;
  for (std::size_t r = 0; r < relations.size(); ++r) {
    vocabulary.insert(vocabulary.end(), {topic(r), cue(r, 1), cue(r, 2)});
  }
  vocabulary.insert(vocabulary.end(), fillers.begin(), fillers.end());
  for (std::size_t r = 0; r < relations.size(); ++r) {
    for (int d = 1; d <= 2; ++d) {
      for (const auto& w : vocabulary) facts << indicator(relations[r], d) << "\t" << w << "\t"
                                             << format_weight(spec.indicator_weight) << "\n";
    }
  }

  std::uniform_int_distribution<std::size_t> pick_relation(0, relations.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_movie(0, n_movies - 1);
  std::bernoulli_distribution pick_direction(0.5);
  std::vector<Example> examples;
  const std::size_t width = std::to_string(spec.questions).size();
  for (std::size_t q = 0; q < spec.questions; ++q) {
    const std::string question = "q" + padded(q, width);
    const std::size_t r = pick_relation(rng);
    const int d = pick_direction(rng) ? 1 : 2;
    const std::size_t m = pick_movie(rng);
    Example ex;
    ex.input = question;
    if (d == 1) {
      const std::size_t o = object_of[r][m];
      facts << "mentionsEntity\t" << question << "\t" << objects[r][o] << "\t1.0\n";
      for (std::size_t answer : movies_of[r][o]) ex.answers.emplace_back(movies[answer], 1.0);
    } else {
      facts << "mentionsEntity\t" << question << "\t" << movies[m] << "\t1.0\n";
      ex.answers.emplace_back(objects[r][object_of[r][m]], 1.0);
    }
    std::vector<std::string> words = {direction_word[static_cast<std::size_t>(d - 1)], topic(r), cue(r, d)};
    std::vector<std::string> shuffled = fillers;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    words.insert(words.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(spec.fillers_per_question));
    for (const auto& w : words) facts << "hasFeature\t" << question << "\t" << w << "\t1.0\n";
    examples.push_back(std::move(ex));
  }
  task.facts = facts.str();
  split_examples(std::move(examples), task.query_mode, spec.train_fraction, rng, task);
  return task;
}

// ---------------------------------------------------------------------------
// experiments

double ExperimentReport::metric(std::string_view key) const {
  for (const auto& [k, v] : metrics) {
    if (k == key) return v;
  }
  throw UsageError("report has no metric '" + std::string(key) + "'");
}

std::string ExperimentReport::to_tsv() const {
  std::ostringstream out;
  out << "experiment\t" << name << "\n";
  for (const auto& [k, v] : parameters) out << "param\t" << k << "\t" << v << "\n";
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    out << "epoch\t" << e + 1 << "\t" << format_weight(epoch_loss[e]) << "\n";
  }
  for (const auto& [k, v] : metrics) out << "metric\t" << k << "\t" << format_weight(v) << "\n";
  for (const auto& [k, v] : timings) out << "time\t" << k << "\t" << format_weight(v) << "\n";
  return out.str();
}

namespace {

class Settings {
 public:
  explicit Settings(const std::map<std::string, std::string>& values) : values_(values) {}

  std::string text(const std::string& key, std::string fallback) {
    used_.insert(key);
    const auto it = values_.find(key);
    std::string v = it == values_.end() ? std::move(fallback) : it->second;
    params_.emplace_back(key, v);
    return v;
  }
  double number(const std::string& key, double fallback) { return parse(key, text(key, format_weight(fallback))); }
  long long integer(const std::string& key, long long fallback) {
    const double v = parse(key, text(key, std::to_string(fallback)));
    if (v != std::floor(v) || v < 0) throw UsageError("setting " + key + " needs a nonnegative integer");
    return static_cast<long long>(v);
  }
  void finish() const {
    for (const auto& [k, v] : values_) {
      if (used_.count(k) == 0) throw UsageError("unknown setting '" + k + "'");
    }
  }
  std::vector<std::pair<std::string, std::string>> parameters() const { return params_; }

 private:
  static double parse(const std::string& key, const std::string& v) {
    const auto parsed = detail::parse_double(v);
    if (!parsed) throw UsageError("setting " + key + " needs a number, got '" + v + "'");
    return *parsed;
  }

  const std::map<std::string, std::string>& values_;
  std::set<std::string> used_;
  std::vector<std::pair<std::string, std::string>> params_;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

TrainingConfig training_settings(Settings& s, const TrainingConfig& defaults) {
  TrainingConfig config = defaults;
  config.epochs = static_cast<std::size_t>(s.integer("epochs", static_cast<long long>(defaults.epochs)));
  config.learning_rate = s.number("rate", defaults.learning_rate);
  config.batch_size = static_cast<std::size_t>(s.integer("batch", static_cast<long long>(defaults.batch_size)));
  config.optimizer = parse_optimizer(
      s.text("optimizer", defaults.optimizer == OptimizerKind::kAdagrad ? "adagrad" : "sgd"));
  config.loss = parse_loss_mode(s.text("loss", defaults.loss == LossMode::kSigmoid ? "sigmoid" : "softmax"));
  config.clip_norm = s.number("clip", defaults.clip_norm);
  return config;
}

void train_and_report(const GeneratedTask& task, const TrainingConfig& config, ExperimentReport& report) {
  auto start = Clock::now();
  Program program = build_task_program(task);
  Registry registry(program, task.max_depth);
  registry.compile(task.query_mode, 0);
  report.timings.emplace_back("compile_seconds", seconds_since(start));

  report.metrics.emplace_back("initial_test_accuracy", evaluate_accuracy(registry, task.test));
  start = Clock::now();
  const TrainResult result = train(registry, program, task.train, config);
  report.timings.emplace_back("train_seconds", seconds_since(start));
  report.epoch_loss = result.loss_history;

  report.metrics.emplace_back("train_accuracy", evaluate_accuracy(registry, task.train));
  start = Clock::now();
  report.metrics.emplace_back("accuracy", evaluate_accuracy(registry, task.test));
  report.timings.emplace_back("test_eval_seconds", seconds_since(start));
}

}  // namespace

ExperimentReport run_experiment(std::string_view name, const std::map<std::string, std::string>& overrides) {
  ExperimentReport report;
  report.name = std::string(name);
  Settings s(overrides);

  if (name == "grid") {
    GridSpec spec;
    spec.n = static_cast<int>(s.integer("n", 16));
    spec.depth = static_cast<int>(s.integer("depth", 10));
    spec.edge_weight = s.number("weight", 0.2);
    spec.neighborhood = parse_neighborhood(s.text("neighborhood", "8+self"));
    spec.seed = static_cast<std::uint64_t>(s.integer("seed", 0));
    TrainingConfig defaults;
    defaults.epochs = 30;
    defaults.learning_rate = 0.5;
    defaults.batch_size = 10;
    defaults.optimizer = OptimizerKind::kAdagrad;
    defaults.seed = spec.seed;
    TrainingConfig config = training_settings(s, defaults);
    s.finish();
    report.parameters = s.parameters();

    auto start = Clock::now();
    const GeneratedTask task = gen_grid(spec);
    report.timings.emplace_back("generate_seconds", seconds_since(start));
    report.metrics.emplace_back("cells", static_cast<double>(spec.n * spec.n));
    report.metrics.emplace_back("edges", static_cast<double>(grid_edge_count(spec.n, spec.neighborhood)));
    train_and_report(task, config, report);
  } else if (name == "synthqa") {
    SynthQASpec spec;
    spec.relations = static_cast<std::size_t>(s.integer("relations", 4));
    spec.entities = static_cast<std::size_t>(s.integer("entities", 200));
    spec.questions = static_cast<std::size_t>(s.integer("questions", 2000));
    spec.seed = static_cast<std::uint64_t>(s.integer("seed", 0));
    TrainingConfig defaults;
    defaults.epochs = 10;
    defaults.learning_rate = 0.5;
    defaults.batch_size = 100;
    defaults.optimizer = OptimizerKind::kAdagrad;
    defaults.seed = spec.seed;
    TrainingConfig config = training_settings(s, defaults);
    s.finish();
    report.parameters = s.parameters();

    auto start = Clock::now();
    const GeneratedTask task = gen_synth_qa(spec);
    report.timings.emplace_back("generate_seconds", seconds_since(start));
    train_and_report(task, config, report);
  } else if (name == "smokers") {
    SmokersSpec spec;
    spec.nodes = static_cast<std::size_t>(s.integer("nodes", 3327));
    spec.attach = static_cast<std::size_t>(s.integer("attach", 2));
    spec.depth = static_cast<int>(s.integer("depth", 3));
    spec.seed = static_cast<std::uint64_t>(s.integer("seed", 0));
    const auto chunk = static_cast<std::size_t>(s.integer("batch", 512));
    s.finish();
    if (chunk == 0) throw UsageError("batch must be positive");
    report.parameters = s.parameters();

    auto start = Clock::now();
    const GeneratedTask task = gen_smokers(spec);
    report.timings.emplace_back("generate_seconds", seconds_since(start));
    start = Clock::now();
    Program program = build_task_program(task);
    Registry registry(program, task.max_depth);
    const CompiledFunction& fn = registry.compile(task.query_mode, 0);
    report.timings.emplace_back("compile_seconds", seconds_since(start));

    std::vector<std::string> people;
    for (std::size_t i = 0; i < spec.nodes; ++i) {
      if (program.kg.symbols().find(person(i), "person")) people.push_back(person(i));
    }
    const Evaluator evaluator(registry);
    start = Clock::now();
    double total = 0.0;
    std::size_t positive = 0;
    for (std::size_t begin = 0; begin < people.size(); begin += chunk) {
      const std::size_t end = std::min(people.size(), begin + chunk);
      const std::span<const std::string> slice(people.data() + begin, end - begin);
      const Batch out = evaluator.eval(fn, evaluator.encode("person", slice));
      total += out.sum();
      positive += static_cast<std::size_t>((out.array() > 0.0).count());
    }
    report.timings.emplace_back("query_seconds", seconds_since(start));
    report.metrics.emplace_back("queries", static_cast<double>(people.size()));
    report.metrics.emplace_back("facts", static_cast<double>(program.kg.num_facts()));
    report.metrics.emplace_back("positive_answers", static_cast<double>(positive));
    report.metrics.emplace_back("total_weight", total);
  } else {
    throw UsageError("unknown experiment '" + std::string(name) + "' (grid|smokers|synthqa)");
  }
  return report;
}

}  // namespace dkg
