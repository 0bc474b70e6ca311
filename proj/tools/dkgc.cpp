// dkgc: compile, query, train and evaluate probabilistic deductive knowledge
// graphs from the command line.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dkg/compiler.hpp"
#include "dkg/errors.hpp"
#include "dkg/experiments.hpp"
#include "dkg/learner.hpp"
#include "dkg/oracle.hpp"
#include "dkg/program.hpp"
#include "dkg/runtime.hpp"

namespace fs = std::filesystem;
using namespace dkg;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<ExampleSet> read_examples(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  return parse_examples(in);
}

struct ProgramFiles {
  std::string rules;
  std::string facts;
  std::string types;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--rules", rules, "Rules file")->required();
    cmd->add_option("--facts", facts, "Facts file")->required();
    cmd->add_option("--types", types, "Types file");
  }

  Program load(std::span<const ExampleSet> examples = {}) const {
    std::ifstream facts_in(facts);
    if (!facts_in) throw UsageError("cannot open '" + facts + "'");
    std::ifstream types_in;
    if (!types.empty()) {
      types_in.open(types);
      if (!types_in) throw UsageError("cannot open '" + types + "'");
    }
    return load_program(read_file(rules), facts_in, types.empty() ? nullptr : &types_in, examples);
  }
};

int resolve_depth(const Program& program, const std::string& predicate, int requested) {
  if (requested > 0) return requested;
  if (!program.theory.defines(predicate)) return 1;
  return default_max_depth(program.theory, predicate);
}

std::vector<std::pair<std::size_t, double>> top_k(const Eigen::RowVectorXd& row, std::size_t k) {
  std::vector<std::size_t> idx;
  for (Eigen::Index c = 0; c < row.size(); ++c) {
    if (row[c] > 0.0) idx.push_back(static_cast<std::size_t>(c));
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return row[static_cast<Eigen::Index>(a)] > row[static_cast<Eigen::Index>(b)];
  });
  if (k > 0 && idx.size() > k) idx.resize(k);
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t i : idx) out.emplace_back(i, row[static_cast<Eigen::Index>(i)]);
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Literal query_literal(const Mode& mode, const std::string& input) {
  switch (mode.direction) {
    case Direction::kIO: return {mode.predicate, {input, "Y"}};
    case Direction::kOI: return {mode.predicate, {"Y", input}};
    case Direction::kO: return {mode.predicate, {"Y"}};
    case Direction::kI: return {mode.predicate, {input}};
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile and run probabilistic deductive knowledge graphs"};
  app.require_subcommand(1);

  // compile
  ProgramFiles compile_files;
  std::string compile_mode;
  int compile_depth = 0;
  bool no_optimize = false;
  bool dot = false;
  auto* compile = app.add_subcommand("compile", "Print the operator IR (or factor graphs) for a query mode");
  compile_files.add_to(compile);
  compile->add_option("--mode", compile_mode, "Query mode, e.g. uncle/io")->required();
  compile->add_option("--depth", compile_depth, "Maximum call depth (default: derived for non-recursive theories)");
  compile->add_flag("--no-optimize", no_optimize, "Keep any-factor matrix products");
  compile->add_flag("--dot", dot, "Print each clause's factor graph in DOT format instead");

  // query / oracle
  ProgramFiles query_files;
  std::string query_mode;
  int query_depth = 0;
  std::vector<std::string> query_inputs;
  std::size_t query_top = 10;
  auto* query = app.add_subcommand(
      "query", "Evaluate a compiled query. Columns: input, answer, score, normalized score");
  query_files.add_to(query);
  query->add_option("--mode", query_mode, "Query mode, e.g. uncle/io")->required();
  query->add_option("--depth", query_depth, "Maximum call depth");
  query->add_option("--input", query_inputs, "Input constants (ignored for mode o)");
  query->add_option("--top", query_top, "Answers per input, 0 for all");

  ProgramFiles oracle_files;
  std::string oracle_mode;
  int oracle_depth = 0;
  std::vector<std::string> oracle_inputs;
  std::size_t oracle_budget = 5'000'000;
  auto* oracle = app.add_subcommand(
      "oracle", "Enumerate proofs for the same query. Columns: input, answer, weight, normalized weight");
  oracle_files.add_to(oracle);
  oracle->add_option("--mode", oracle_mode, "Query mode")->required();
  oracle->add_option("--depth", oracle_depth, "Maximum call depth");
  oracle->add_option("--input", oracle_inputs, "Input constants (ignored for mode o)");
  oracle->add_option("--budget", oracle_budget, "Proof-graph vertex budget");

  // train
  ProgramFiles train_files;
  std::string train_path;
  std::string test_path;
  std::string trainable;
  std::string loss_name = "softmax";
  std::string optimizer_name = "sgd";
  std::string save_facts;
  int train_depth = 0;
  double init_weight = 0.0;
  TrainingConfig config;
  auto* train_cmd = app.add_subcommand(
      "train", "Train fact weights. Per epoch: 'epoch', epoch, loss, train accuracy, test accuracy");
  train_files.add_to(train_cmd);
  train_cmd->add_option("--train", train_path, "Training examples")->required();
  train_cmd->add_option("--test", test_path, "Held-out examples");
  train_cmd->add_option("--epochs", config.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--rate", config.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--batch", config.batch_size, "Minibatch size")->capture_default_str();
  train_cmd->add_option("--depth", train_depth, "Maximum call depth");
  train_cmd->add_option("--loss", loss_name, "softmax or sigmoid")->capture_default_str();
  train_cmd->add_option("--optimizer", optimizer_name, "sgd or adagrad")->capture_default_str();
  train_cmd->add_option("--seed", config.seed, "Shuffling seed")->capture_default_str();
  train_cmd->add_option("--trainable", trainable, "Comma-separated trainable predicates");
  train_cmd->add_option("--init", init_weight, "Initial weight of every trainable fact (default: as loaded)");
  train_cmd->add_option("--l1", config.l1, "L1 penalty")->capture_default_str();
  train_cmd->add_option("--l2", config.l2, "L2 penalty")->capture_default_str();
  train_cmd->add_option("--clip", config.clip_norm, "Gradient norm bound, 0 = off")->capture_default_str();
  train_cmd->add_option("--save-facts", save_facts, "Write the trained facts here");

  // eval
  ProgramFiles eval_files;
  std::string eval_path;
  int eval_depth = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Argmax accuracy. Columns: 'accuracy', value, examples");
  eval_files.add_to(eval_cmd);
  eval_cmd->add_option("--examples", eval_path, "Examples")->required();
  eval_cmd->add_option("--depth", eval_depth, "Maximum call depth");

  // generators
  GridSpec grid;
  std::string grid_neighborhood = "4";
  std::string grid_out;
  auto* gen_grid_cmd = app.add_subcommand(
      "gen-grid", "Write grid.rules, grid.facts, grid.types, train.examples, test.examples");
  gen_grid_cmd->add_option("--n", grid.n, "Side length")->capture_default_str();
  gen_grid_cmd->add_option("--depth", grid.depth, "Maximum depth (informational)")->capture_default_str();
  gen_grid_cmd->add_option("--weight", grid.edge_weight, "Initial edge weight")->capture_default_str();
  gen_grid_cmd->add_option("--neighborhood", grid_neighborhood, "4, 8 or 8+self")->capture_default_str();
  gen_grid_cmd->add_option("--seed", grid.seed, "Split seed")->capture_default_str();
  gen_grid_cmd->add_option("--out", grid_out, "Output directory")->required();

  SmokersSpec smokers;
  std::string smokers_out;
  auto* gen_smokers_cmd = app.add_subcommand(
      "gen-smokers", "Write smokers.rules, smokers.facts, smokers.types, queries.txt");
  gen_smokers_cmd->add_option("--nodes", smokers.nodes, "People")->capture_default_str();
  gen_smokers_cmd->add_option("--attach", smokers.attach, "Friends per new person")->capture_default_str();
  gen_smokers_cmd->add_option("--seed", smokers.seed, "Seed")->capture_default_str();
  gen_smokers_cmd->add_option("--out", smokers_out, "Output directory")->required();

  SynthQASpec qa;
  std::string qa_out;
  auto* gen_qa_cmd = app.add_subcommand(
      "gen-synthqa", "Write qa.rules, qa.facts, qa.types, train.examples, test.examples");
  gen_qa_cmd->add_option("--relations", qa.relations, "KB relations")->capture_default_str();
  gen_qa_cmd->add_option("--entities", qa.entities, "Entities")->capture_default_str();
  gen_qa_cmd->add_option("--questions", qa.questions, "Questions")->capture_default_str();
  gen_qa_cmd->add_option("--seed", qa.seed, "Seed")->capture_default_str();
  gen_qa_cmd->add_option("--out", qa_out, "Output directory")->required();

  std::string run_name;
  std::vector<std::string> run_settings;
  auto* run = app.add_subcommand(
      "run", "Run an experiment (grid, smokers, synthqa). Lines: param/epoch/metric/time, tab-separated");
  run->add_option("name", run_name, "Experiment")->required();
  run->add_option("settings", run_settings, "key=value overrides");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compile) {
      const Mode mode = Mode::parse(compile_mode);
      const Program program = compile_files.load();
      if (dot) {
        for (const Clause* c : program.theory.clauses_for(mode.predicate)) {
          std::cout << build_factor_graph(*c, mode, program.signatures).to_dot(c->to_string());
        }
        return 0;
      }
      Registry registry(program, resolve_depth(program, mode.predicate, compile_depth), !no_optimize);
      registry.compile(mode, 0);
      std::cout << registry.to_string();
    } else if (*query) {
      const Mode mode = Mode::parse(query_mode);
      if (mode.direction == Direction::kO) query_inputs = {std::string(kUnitConstant)};
      if (query_inputs.empty()) throw UsageError("--input is required for this mode");
      const Program program = query_files.load();
      Registry registry(program, resolve_depth(program, mode.predicate, query_depth));
      const CompiledFunction& fn = registry.compile(mode, 0);
      const Evaluator evaluator(registry);
      const Batch out = evaluator.eval(fn, evaluator.encode(fn.input_type, query_inputs));
      const NormalizedBatch norm = normalize_ratio(out);
      for (std::size_t r = 0; r < query_inputs.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        for (const auto& [c, w] : top_k(out.row(row), query_top)) {
          std::cout << query_inputs[r] << "\t" << program.kg.symbols().name(static_cast<ConstId>(c), fn.output_type)
                    << "\t" << format_weight(w) << "\t"
                    << format_weight(norm.values(row, static_cast<Eigen::Index>(c))) << "\n";
        }
      }
    } else if (*oracle) {
      const Mode mode = Mode::parse(oracle_mode);
      if (mode.direction == Direction::kO) oracle_inputs = {std::string(kUnitConstant)};
      if (oracle_inputs.empty()) throw UsageError("--input is required for this mode");
      const Program program = oracle_files.load();
      OracleOptions options;
      options.max_depth = resolve_depth(program, mode.predicate, oracle_depth);
      options.max_vertices = oracle_budget;
      for (const auto& input : oracle_inputs) {
        const AnswerTable table = prove(query_literal(mode, input), program.theory, program.kg, options);
        double total = 0.0;
        for (const auto& [a, w] : table) total += w;
        std::vector<std::pair<std::string, double>> rows(table.begin(), table.end());
        std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        for (const auto& [a, w] : rows) {
          if (w <= 0.0) continue;
          std::cout << input << "\t" << a << "\t" << format_weight(w) << "\t" << format_weight(w / total) << "\n";
        }
      }
    } else if (*train_cmd) {
      config.loss = parse_loss_mode(loss_name);
      config.optimizer = parse_optimizer(optimizer_name);
      const auto train_sets = read_examples(train_path);
      const auto test_sets = read_examples(test_path);
      std::vector<ExampleSet> all = train_sets;
      all.insert(all.end(), test_sets.begin(), test_sets.end());
      Program program = train_files.load(all);
      for (const auto& p : split_list(trainable)) program.kg.set_trainable(p, true);
      if (init_weight > 0.0) {
        for (const auto& p : program.kg.trainable_predicates()) {
          RelationMatrix& rel = program.kg.relation(p);
          for (std::size_t k = 0; k < rel.size(); ++k) rel.set_weight(k, init_weight);
        }
      }
      int depth = train_depth;
      for (const auto& set : train_sets) depth = std::max(depth, resolve_depth(program, set.mode.predicate, train_depth));
      Registry registry(program, depth);
      train(registry, program, train_sets, config, [&](std::size_t epoch, double loss_value) {
        std::cout << "epoch\t" << epoch << "\t" << format_weight(loss_value) << "\t"
                  << format_weight(evaluate_accuracy(registry, train_sets)) << "\t"
                  << (test_sets.empty() ? std::string("-") : format_weight(evaluate_accuracy(registry, test_sets)))
                  << "\n";
      });
      if (!save_facts.empty()) write_file(save_facts, serialize_facts(program.kg));
    } else if (*eval_cmd) {
      const auto sets = read_examples(eval_path);
      const Program program = eval_files.load(sets);
      int depth = eval_depth;
      for (const auto& set : sets) depth = std::max(depth, resolve_depth(program, set.mode.predicate, eval_depth));
      Registry registry(program, depth);
      std::size_t n = 0;
      for (const auto& s : sets) n += s.examples.size();
      std::cout << "accuracy\t" << format_weight(evaluate_accuracy(registry, sets)) << "\t" << n << "\n";
    } else if (*gen_grid_cmd || *gen_smokers_cmd || *gen_qa_cmd) {
      GeneratedTask task;
      std::string dir;
      std::string stem;
      if (*gen_grid_cmd) {
        grid.neighborhood = parse_neighborhood(grid_neighborhood);
        task = gen_grid(grid);
        dir = grid_out;
        stem = "grid";
      } else if (*gen_smokers_cmd) {
        task = gen_smokers(smokers);
        dir = smokers_out;
        stem = "smokers";
      } else {
        task = gen_synth_qa(qa);
        dir = qa_out;
        stem = "qa";
      }
      fs::create_directories(dir);
      write_file(fs::path(dir) / (stem + ".rules"), task.rules);
      write_file(fs::path(dir) / (stem + ".facts"), task.facts);
      write_file(fs::path(dir) / (stem + ".types"), task.types);
      if (!task.train.empty()) {
        write_file(fs::path(dir) / "train.examples", format_examples(task.train[0]));
        write_file(fs::path(dir) / "test.examples", format_examples(task.test[0]));
      } else {
        std::string lines;
        for (const auto& q : task.queries) lines += q + "\n";
        write_file(fs::path(dir) / "queries.txt", lines);
      }
      if (!task.trainable.empty()) {
        std::string list;
        for (const auto& p : task.trainable) list += (list.empty() ? "" : ",") + p;
        write_file(fs::path(dir) / "trainable.txt", list + "\n");
      }
      std::cout << "wrote\t" << dir << "\n";
    } else if (*run) {
      std::map<std::string, std::string> overrides;
      for (const auto& kv : run_settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("expected key=value, got '" + kv + "'");
        overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      std::cout << run_experiment(run_name, overrides).to_tsv();
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
