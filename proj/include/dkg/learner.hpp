#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dkg/compiler.hpp"
#include "dkg/lang.hpp"
#include "dkg/program.hpp"
#include "dkg/runtime.hpp"

namespace dkg {

// ln(1 + e^x), computed without overflow.
double softplus(double x);
// ln(e^theta - 1); throws std::domain_error for theta <= 0.
double inverse_softplus(double theta);
double sigmoid(double x);

enum class LossMode { kSoftmax, kSigmoid };
enum class OptimizerKind { kFixedRate, kAdagrad };

LossMode parse_loss_mode(std::string_view text);          // "softmax" | "sigmoid"
OptimizerKind parse_optimizer(std::string_view text);     // "sgd" | "adagrad"

// Softmax mode: mean over rows of cross-entropy between the row-normalized
// target and softmax(prediction). Sigmoid mode: mean over rows of the summed
// elementwise logistic loss of prediction + bias. Optionally returns the
// gradient with respect to the prediction and the bias.
double loss(const Batch& prediction, const Batch& target, LossMode mode, double bias = 0.0,
            Batch* gradient = nullptr, double* bias_gradient = nullptr);

struct TrainingConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.1;
  std::size_t batch_size = 100;
  LossMode loss = LossMode::kSoftmax;
  OptimizerKind optimizer = OptimizerKind::kFixedRate;
  std::uint64_t seed = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double clip_norm = 0.0;         // global gradient norm bound; 0 disables clipping
  double adagrad_initial = 0.1;   // initial squared-gradient accumulator

  void validate() const;
};

// Unconstrained parameters of every trainable fact; weight = softplus(value).
struct ReparamState {
  std::map<std::string, Eigen::VectorXd, std::less<>> values;

  // Weights at or below zero start at softplus^-1(kMinWeight).
  static constexpr double kMinWeight = 1e-12;

  static ReparamState capture(const KnowledgeGraph& kg);
  void apply(KnowledgeGraph& kg) const;
};

// One example set as dense input / target batches.
struct EncodedExamples {
  FunctionKey key;
  Batch inputs;
  Batch targets;
};

EncodedExamples encode_examples(const Program& program, const ExampleSet& set);

struct TrainResult {
  std::vector<double> loss_history;  // mean minibatch loss per epoch
  std::map<std::string, double> biases;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Minibatch gradient descent on the trainable facts of `program.kg`, which
// must be the program `registry` was built on. Example sets of different
// predicates are trained jointly: their minibatches are interleaved.
TrainResult train(Registry& registry, Program& program, std::span<const ExampleSet> examples,
                  const TrainingConfig& config, const EpochCallback& on_epoch = {});

// Fraction of examples whose top-scoring answer (lowest id on ties) is one of
// the target answers. Rows with no answer at all count as wrong.
double evaluate_accuracy(Registry& registry, std::span<const ExampleSet> examples);

}  // namespace dkg
