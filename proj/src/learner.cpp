#include "dkg/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "dkg/errors.hpp"

namespace dkg {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double inverse_softplus(double theta) {
  if (!(theta > 0.0)) throw std::domain_error("inverse softplus needs a positive weight");
  // ln(e^t - 1) = t + ln(1 - e^-t)
  return theta + std::log(-std::expm1(-theta));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "softmax") return LossMode::kSoftmax;
  if (text == "sigmoid") return LossMode::kSigmoid;
  throw UsageError("unknown loss '" + std::string(text) + "' (softmax|sigmoid)");
}

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "sgd") return OptimizerKind::kFixedRate;
  if (text == "adagrad") return OptimizerKind::kAdagrad;
  throw UsageError("unknown optimizer '" + std::string(text) + "' (sgd|adagrad)");
}

double loss(const Batch& prediction, const Batch& target, LossMode mode, double bias, Batch* gradient,
            double* bias_gradient) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    throw UsageError("prediction and target shapes differ");
  }
  if ((target.array() < 0.0).any()) throw ValidationError("targets must be nonnegative");
  const Eigen::Index rows = prediction.rows();
  if (gradient != nullptr) *gradient = Batch::Zero(rows, prediction.cols());
  if (bias_gradient != nullptr) *bias_gradient = 0.0;
  if (rows == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(rows);

  double total = 0.0;
  if (mode == LossMode::kSoftmax) {
    const Batch p = softmax(prediction);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double mass = target.row(r).sum();
      if (mass <= 0.0) continue;
      const double m = prediction.row(r).maxCoeff();
      const double log_z = m + std::log((prediction.row(r).array() - m).exp().sum());
      for (Eigen::Index c = 0; c < prediction.cols(); ++c) {
        const double t = target(r, c) / mass;
        if (t > 0.0) total -= t * (prediction(r, c) - log_z);
      }
      if (gradient != nullptr) gradient->row(r) = (p.row(r) - target.row(r) / mass) * scale;
    }
  } else {
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < prediction.cols(); ++c) {
        const double z = prediction(r, c) + bias;
        const double t = target(r, c);
        total += softplus(z) - t * z;
        const double g = (sigmoid(z) - t) * scale;
        if (gradient != nullptr) (*gradient)(r, c) = g;
        if (bias_gradient != nullptr) *bias_gradient += g;
      }
    }
  }
  return total * scale;
}

void TrainingConfig::validate() const {
  if (epochs == 0) throw UsageError("epochs must be positive");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (batch_size == 0) throw UsageError("batch size must be positive");
  if (l1 < 0.0 || l2 < 0.0 || clip_norm < 0.0) throw UsageError("penalties and clip norm must be >= 0");
  if (!(adagrad_initial > 0.0)) throw UsageError("adagrad initial accumulator must be positive");
}

ReparamState ReparamState::capture(const KnowledgeGraph& kg) {
  ReparamState state;
  for (const auto& p : kg.trainable_predicates()) {
    const RelationMatrix& rel = kg.relation(p);
    Eigen::VectorXd v(static_cast<Eigen::Index>(rel.size()));
    for (std::size_t k = 0; k < rel.size(); ++k) {
      v[static_cast<Eigen::Index>(k)] = inverse_softplus(std::max(rel.weight(k), kMinWeight));
    }
    state.values.emplace(p, std::move(v));
  }
  return state;
}

void ReparamState::apply(KnowledgeGraph& kg) const {
  for (const auto& [p, v] : values) {
    RelationMatrix& rel = kg.relation(p);
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      // softplus underflows to 0 below about -745
      rel.set_weight(static_cast<std::size_t>(k),
                     std::max(softplus(v[k]), std::numeric_limits<double>::denorm_min()));
    }
  }
}

EncodedExamples encode_examples(const Program& program, const ExampleSet& set) {
  const std::string in_type = program.input_type(set.mode);
  const std::string out_type = program.output_type(set.mode);
  const auto& symbols = program.kg.symbols();
  const auto n = static_cast<Eigen::Index>(set.examples.size());
  EncodedExamples out{FunctionKey{set.mode, 0},
                      Batch::Zero(n, static_cast<Eigen::Index>(symbols.domain_size(in_type))),
                      Batch::Zero(n, static_cast<Eigen::Index>(symbols.domain_size(out_type)))};
  for (Eigen::Index r = 0; r < n; ++r) {
    const Example& ex = set.examples[static_cast<std::size_t>(r)];
    out.inputs(r, symbols.id(ex.input, in_type)) = 1.0;
    for (const auto& [name, w] : ex.answers) {
      if (!(w >= 0.0)) throw ValidationError("negative target weight for '" + name + "'");
      out.targets(r, symbols.id(name, out_type)) += w;
    }
  }
  return out;
}

namespace {

Batch take_rows(const Batch& m, std::span<const std::size_t> rows) {
  Batch out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

class Optimizer {
 public:
  Optimizer(const TrainingConfig& config) : config_(config) {}

  void step(const std::string& slot, Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (config_.optimizer == OptimizerKind::kFixedRate) {
      params -= config_.learning_rate * grad;
      return;
    }
    auto [it, inserted] = accum_.try_emplace(slot);
    if (inserted) it->second = Eigen::VectorXd::Constant(grad.size(), config_.adagrad_initial);
    it->second.array() += grad.array().square();
    params.array() -= config_.learning_rate * grad.array() / it->second.array().sqrt();
  }

 private:
  const TrainingConfig& config_;
  std::map<std::string, Eigen::VectorXd> accum_;
};

}  // namespace

TrainResult train(Registry& registry, Program& program, std::span<const ExampleSet> examples,
                  const TrainingConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (&registry.program() != &program) throw UsageError("registry was built on a different program");
  if (program.kg.trainable_predicates().empty()) throw UsageError("no trainable predicates");
  std::size_t total_examples = 0;
  for (const auto& set : examples) total_examples += set.examples.size();
  if (total_examples == 0) throw UsageError("no training examples");

  std::vector<EncodedExamples> encoded;
  std::vector<const CompiledFunction*> functions;
  for (const auto& set : examples) {
    encoded.push_back(encode_examples(program, set));
    functions.push_back(&registry.compile(set.mode, 0));
  }

  const Evaluator evaluator(registry);
  ReparamState state = ReparamState::capture(program.kg);
  Optimizer optimizer(config);
  std::mt19937_64 rng(config.seed);
  TrainResult result;
  if (config.loss == LossMode::kSigmoid) {
    for (const auto& set : examples) result.biases.emplace(set.mode.predicate, 0.0);
  }

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> batches;
    for (std::size_t s = 0; s < encoded.size(); ++s) {
      std::vector<std::size_t> order(static_cast<std::size_t>(encoded[s].inputs.rows()));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        batches.emplace_back(s, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                         order.begin() + static_cast<std::ptrdiff_t>(stop)));
      }
    }
    std::shuffle(batches.begin(), batches.end(), rng);

    double epoch_loss = 0.0;
    for (const auto& [s, rows] : batches) {
      const Batch inputs = take_rows(encoded[s].inputs, rows);
      const Batch targets = take_rows(encoded[s].targets, rows);
      Tape tape;
      const Batch prediction = evaluator.eval(*functions[s], inputs, &tape);

      const std::string& head = examples[s].mode.predicate;
      const double bias = config.loss == LossMode::kSigmoid ? result.biases.at(head) : 0.0;
      Batch upstream;
      double bias_grad = 0.0;
      double value = loss(prediction, targets, config.loss, bias, &upstream, &bias_grad);
      GradientMap grads = evaluator.grad(tape, upstream);

      // Chain through the regularizers and softplus to the free parameters.
      std::map<std::string, Eigen::VectorXd> free_grads;
      double norm2 = bias_grad * bias_grad;
      for (auto& [p, theta_tilde] : state.values) {
        const RelationMatrix& rel = program.kg.relation(p);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(theta_tilde.size());
        if (const auto it = grads.find(p); it != grads.end()) g = it->second;
        if (config.l1 > 0.0 || config.l2 > 0.0) {
          for (Eigen::Index k = 0; k < g.size(); ++k) {
            const double w = rel.weight(static_cast<std::size_t>(k));
            value += config.l1 * w + config.l2 * w * w;
            g[k] += config.l1 + 2.0 * config.l2 * w;
          }
        }
        for (Eigen::Index k = 0; k < g.size(); ++k) g[k] *= sigmoid(theta_tilde[k]);
        norm2 += g.squaredNorm();
        free_grads.emplace(p, std::move(g));
      }
      if (config.clip_norm > 0.0 && norm2 > config.clip_norm * config.clip_norm) {
        const double shrink = config.clip_norm / std::sqrt(norm2);
        for (auto& [p, g] : free_grads) g *= shrink;
        bias_grad *= shrink;
      }

      for (auto& [p, theta_tilde] : state.values) optimizer.step(p, theta_tilde, free_grads.at(p));
      if (config.loss == LossMode::kSigmoid) {
        Eigen::VectorXd b(1);
        b[0] = result.biases.at(head);
        optimizer.step("bias:" + head, b, Eigen::VectorXd::Constant(1, bias_grad));
        result.biases[head] = b[0];
      }
      for (const auto& [p, theta_tilde] : state.values) {
        RelationMatrix& rel = program.kg.relation(p);
        const Eigen::VectorXd& g = free_grads.at(p);
        for (Eigen::Index k = 0; k < g.size(); ++k) {
          if (g[k] == 0.0) continue;
          rel.set_weight(static_cast<std::size_t>(k),
                         std::max(softplus(theta_tilde[k]), std::numeric_limits<double>::denorm_min()));
        }
      }
      epoch_loss += value * static_cast<double>(rows.size());
    }
    epoch_loss /= static_cast<double>(total_examples);
    result.loss_history.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }
  return result;
}

double evaluate_accuracy(Registry& registry, std::span<const ExampleSet> examples) {
  const Program& program = registry.program();
  const Evaluator evaluator(registry);
  constexpr Eigen::Index kChunk = 512;
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& set : examples) {
    const CompiledFunction& fn = registry.compile(set.mode, 0);
    const EncodedExamples enc = encode_examples(program, set);
    for (Eigen::Index start = 0; start < enc.inputs.rows(); start += kChunk) {
      const Eigen::Index n = std::min(kChunk, enc.inputs.rows() - start);
      const Batch out = evaluator.eval(fn, enc.inputs.middleRows(start, n));
      const NormalizedBatch norm = normalize_ratio(out);
      for (Eigen::Index r = 0; r < n; ++r) {
        ++total;
        if (norm.zero_rows[static_cast<std::size_t>(r)]) continue;
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < norm.values.cols(); ++c) {
          if (norm.values(r, c) > norm.values(r, best)) best = c;
        }
        if (enc.targets(start + r, best) > 0.0) ++correct;
      }
    }
  }
  if (total == 0) throw UsageError("no evaluation examples");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace dkg
