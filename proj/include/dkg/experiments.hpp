#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dkg/lang.hpp"
#include "dkg/program.hpp"

namespace dkg {

// Files and example sets produced by a dataset generator.
struct GeneratedTask {
  std::string rules;
  std::string facts;
  std::string types;
  std::vector<std::string> trainable;
  std::vector<ExampleSet> train;
  std::vector<ExampleSet> test;
  std::vector<std::string> queries;  // ground query literals, one per line when written out
  Mode query_mode;
  int max_depth = 1;
};

// Parses the generated files and marks the trainable predicates.
Program build_task_program(const GeneratedTask& task);

// ---------------------------------------------------------------------------

enum class Neighborhood {
  kFour,           // up/down/left/right
  kEight,          // plus diagonals
  kEightWithSelf,  // plus one self-loop per cell
};

Neighborhood parse_neighborhood(std::string_view text);  // "4" | "8" | "8+self"
std::string_view neighborhood_name(Neighborhood n);

struct GridSpec {
  int n = 16;
  int depth = 10;
  double edge_weight = 0.2;
  Neighborhood neighborhood = Neighborhood::kFour;
  double train_fraction = 2.0 / 3.0;
  std::uint64_t seed = 0;

  void validate() const;
};

std::string grid_cell(int row, int col);
std::size_t grid_edge_count(int n, Neighborhood neighborhood);

// One path(cell,Y) example per cell whose answer is the nearest corner
// (every tied corner when several are equally near).
GeneratedTask gen_grid(const GridSpec& spec);

// ---------------------------------------------------------------------------

struct SmokersSpec {
  std::size_t nodes = 3327;
  std::size_t attach = 2;            // edges per new node under preferential attachment
  double stress_probability = 0.3;
  double min_weight = 0.1;
  double max_weight = 0.5;
  int depth = 3;
  std::uint64_t seed = 0;
  // When non-empty, used instead of the random graph: directed influences(a,b).
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  // When non-empty together with `edges`, the stressed persons and weights.
  std::vector<std::pair<std::size_t, double>> stress;

  void validate() const;
};

std::string person(std::size_t i);

// smokes(X) :- stress(X).
// smokes(X) :- influences(Y,X), smokes(Y).
GeneratedTask gen_smokers(const SmokersSpec& spec);

// ---------------------------------------------------------------------------

struct SynthQASpec {
  std::size_t relations = 4;
  std::size_t entities = 200;      // half movies, half spread over the relations' object pools
  std::size_t questions = 2000;
  std::size_t filler_words = 40;
  std::size_t fillers_per_question = 3;
  double train_fraction = 0.75;
  double indicator_weight = 1.0;   // uniform initial weight of every indicatesQuestionType fact
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<std::string> synth_qa_relations(std::size_t count);

// Two rules per relation R:
//   answer(Q,M) :- mentionsEntity(Q,E), R(M,E), hasFeature(Q,W), indicatesQuestionType_R_1(W).
//   answer(Q,E) :- mentionsEntity(Q,M), R(M,E), hasFeature(Q,W), indicatesQuestionType_R_2(W).
GeneratedTask gen_synth_qa(const SynthQASpec& spec);

// ---------------------------------------------------------------------------

struct ExperimentReport {
  std::string name;
  std::vector<std::pair<std::string, std::string>> parameters;
  std::vector<double> epoch_loss;
  std::vector<std::pair<std::string, double>> metrics;   // deterministic under a seed
  std::vector<std::pair<std::string, double>> timings;   // wall-clock seconds

  double metric(std::string_view key) const;
  // Tab-separated: "param", "epoch", "metric" and "time" lines.
  std::string to_tsv() const;
};

// name is grid, smokers or synthqa. Overrides are key=value settings of the
// generator and trainer (n, depth, seed, epochs, rate, optimizer, batch, ...).
ExperimentReport run_experiment(std::string_view name, const std::map<std::string, std::string>& overrides);

}  // namespace dkg
