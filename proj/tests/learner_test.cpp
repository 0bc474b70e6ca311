#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dkg/errors.hpp"
#include "dkg/learner.hpp"
#include "test_support.hpp"

using namespace dkg;
using fixtures::make_program;

namespace {

std::vector<ExampleSet> examples(const char* text) {
  std::istringstream in(text);
  return parse_examples(in);
}

constexpr const char* kFamilyExamples = "uncle(liam,Y)\tchip\nuncle(joe,Y)\tbob\n";

constexpr const char* kRuleWeightRules =
    "p(X,Y) :- good(X,Y) {rg}.\n"
    "p(X,Y) :- bad(X,Y) {rb}.\n";

std::string rule_weight_facts() {
  std::ostringstream f;
  for (int i = 0; i < 8; ++i) {
    f << "bad\tx" << i << "\tz" << i << "\n";
    f << "good\tx" << i << "\ty" << i << "\n";
  }
  return f.str();
}

std::string rule_weight_examples() {
  std::ostringstream f;
  for (int i = 0; i < 8; ++i) f << "p(x" << i << ",Y)\ty" << i << "\n";
  return f.str();
}

// Softmax loss of the whole example set at the program's current weights.
double dataset_loss(const Program& p, const ExampleSet& set, int depth = 1) {
  Registry registry(p, depth);
  const Evaluator e(registry);
  const EncodedExamples enc = encode_examples(p, set);
  return loss(e.eval(registry.compile(set.mode), enc.inputs), enc.targets, LossMode::kSoftmax);
}

}  // namespace

TEST(Softplus, Values) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(softplus(1000.0), 1000.0);
  EXPECT_GE(softplus(-1000.0), 0.0);
  EXPECT_TRUE(std::isfinite(softplus(-1000.0)));
  for (double t : {1e-9, 0.1, 0.891, 1.0, 5.0, 40.0}) EXPECT_NEAR(softplus(inverse_softplus(t)), t, 1e-12 * std::max(1.0, t));
  EXPECT_THROW(inverse_softplus(0.0), std::domain_error);
  EXPECT_THROW(inverse_softplus(-1.0), std::domain_error);
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
}

TEST(Loss, UniformPredictionIsLogN) {
  for (int n : {2, 5, 17}) {
    Batch pred = Batch::Zero(3, n);
    Batch target = Batch::Zero(3, n);
    for (int r = 0; r < 3; ++r) target(r, r % n) = 1.0;
    EXPECT_NEAR(loss(pred, target, LossMode::kSoftmax), std::log(static_cast<double>(n)), 1e-12);
  }
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Batch pred(2, 3);
  pred << 0.3, -1.2, 2.0, 0.0, 0.5, 0.1;
  Batch target(2, 3);
  target << 0, 1, 0.5, 1, 0, 0;
  for (const LossMode mode : {LossMode::kSoftmax, LossMode::kSigmoid}) {
    const double bias = mode == LossMode::kSigmoid ? 0.4 : 0.0;
    Batch g;
    double gb = 0.0;
    loss(pred, target, mode, bias, &g, &gb);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      Batch up = pred;
      Batch down = pred;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double fd = (loss(up, target, mode, bias) - loss(down, target, mode, bias)) / (2 * h);
      EXPECT_NEAR(g.data()[i], fd, 1e-8);
    }
    if (mode == LossMode::kSigmoid) {
      const double fd = (loss(pred, target, mode, bias + h) - loss(pred, target, mode, bias - h)) / (2 * h);
      EXPECT_NEAR(gb, fd, 1e-8);
    }
  }
}

TEST(Loss, Errors) {
  EXPECT_THROW(loss(Batch::Zero(1, 2), Batch::Zero(1, 3), LossMode::kSoftmax), UsageError);
  EXPECT_THROW(loss(Batch::Zero(1, 2), Batch::Constant(1, 2, -1.0), LossMode::kSoftmax), ValidationError);
  EXPECT_DOUBLE_EQ(loss(Batch::Zero(0, 2), Batch::Zero(0, 2), LossMode::kSoftmax), 0.0);
  EXPECT_THROW(parse_loss_mode("hinge"), UsageError);
  EXPECT_THROW(parse_optimizer("adam"), UsageError);
}

TEST(Config, Validate) {
  TrainingConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.l2 = -1.0;
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(Reparam, CaptureApplyRoundTrip) {
  Program p = make_program("p(X,Y) :- e(X,Y).\n", "e\ta\tb\t0.25\ne\tb\tc\t0.0\n");
  p.kg.set_trainable("e", true);
  const ReparamState s = ReparamState::capture(p.kg);
  ASSERT_EQ(s.values.at("e").size(), 2);
  s.apply(p.kg);
  EXPECT_NEAR(p.kg.relation("e").weight(0), 0.25, 1e-15);
  EXPECT_NEAR(p.kg.relation("e").weight(1), ReparamState::kMinWeight, 1e-20);
}

TEST(Train, FamilyLossDecreasesMonotonically) {
  const auto sets = examples(kFamilyExamples);
  Program p = make_program(fixtures::kFamilyRules, fixtures::kFamilyFacts, "", sets);
  for (const char* pred : {"child", "brother", "husband", "aunt"}) p.kg.set_trainable(pred, true);
  Registry registry(p, 1);
  TrainingConfig config;
  config.epochs = 25;
  config.learning_rate = 0.1;
  config.batch_size = 2;
  std::vector<std::size_t> seen;
  const TrainResult r = train(registry, p, sets, config, [&](std::size_t epoch, double) { seen.push_back(epoch); });
  ASSERT_EQ(r.loss_history.size(), 25u);
  EXPECT_EQ(seen.front(), 1u);
  EXPECT_EQ(seen.back(), 25u);
  for (std::size_t i = 1; i < r.loss_history.size(); ++i) {
    EXPECT_LE(r.loss_history[i], r.loss_history[i - 1] + 1e-12) << i;
  }
  EXPECT_LT(r.loss_history.back(), r.loss_history.front());
  EXPECT_DOUBLE_EQ(evaluate_accuracy(registry, sets), 1.0);
}

// One full-batch fixed-rate step equals theta~ - rate * dL/dtheta~, the
// derivative taken by central differences through softplus.
TEST(Train, OneStepMatchesFiniteDifferenceUpdate) {
  const auto sets = examples(kFamilyExamples);
  Program p = make_program(fixtures::kFamilyRules, fixtures::kFamilyFacts, "", sets);
  p.kg.set_trainable("brother", true);
  p.kg.set_trainable("child", true);
  const ReparamState before = ReparamState::capture(p.kg);
  const double rate = 0.3;

  std::map<std::string, Eigen::VectorXd> expected;
  for (const auto& [pred, values] : before.values) {
    Eigen::VectorXd next = values;
    auto& rel = p.kg.relation(pred);
    for (Eigen::Index k = 0; k < values.size(); ++k) {
      const double h = 1e-6;
      rel.set_weight(static_cast<std::size_t>(k), softplus(values[k] + h));
      const double up = dataset_loss(p, sets[0]);
      rel.set_weight(static_cast<std::size_t>(k), softplus(values[k] - h));
      const double down = dataset_loss(p, sets[0]);
      rel.set_weight(static_cast<std::size_t>(k), softplus(values[k]));
      next[k] -= rate * (up - down) / (2 * h);
    }
    expected.emplace(pred, next);
  }

  Registry registry(p, 1);
  TrainingConfig config;
  config.epochs = 1;
  config.learning_rate = rate;
  config.batch_size = 100;
  train(registry, p, sets, config);
  for (const auto& [pred, next] : expected) {
    const auto& rel = p.kg.relation(pred);
    for (Eigen::Index k = 0; k < next.size(); ++k) {
      EXPECT_NEAR(rel.weight(static_cast<std::size_t>(k)), softplus(next[k]), 1e-7) << pred << " " << k;
    }
  }
}

TEST(Train, DeterministicUnderSeed) {
  const auto sets = examples(rule_weight_examples().c_str());
  auto run = [&](std::uint64_t seed) {
    Program p = make_program(kRuleWeightRules, rule_weight_facts(), "", sets);
    Registry registry(p, 1);
    TrainingConfig config;
    config.epochs = 4;
    config.batch_size = 3;
    config.seed = seed;
    config.optimizer = OptimizerKind::kAdagrad;
    const TrainResult r = train(registry, p, sets, config);
    return std::make_pair(r.loss_history, serialize_facts(p.kg));
  };
  const auto a = run(7);
  const auto b = run(7);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Train, LearnsRuleWeights) {
  const auto sets = examples(rule_weight_examples().c_str());
  Program p = make_program(kRuleWeightRules, rule_weight_facts(), "", sets);
  Registry registry(p, 1);
  EXPECT_DOUBLE_EQ(evaluate_accuracy(registry, sets), 0.0);
  TrainingConfig config;
  config.epochs = 40;
  config.learning_rate = 0.5;
  config.batch_size = 4;
  config.optimizer = OptimizerKind::kAdagrad;
  train(registry, p, sets, config);
  const auto& w = p.kg.relation("weighted");
  const auto& sym = p.kg.symbols();
  const double good = w.vector()[sym.id("rg", p.signature("weighted")[0])];
  const double bad = w.vector()[sym.id("rb", p.signature("weighted")[0])];
  EXPECT_LT(bad, 0.1 * good) << good << " " << bad;
  EXPECT_DOUBLE_EQ(evaluate_accuracy(registry, sets), 1.0);
  for (const char* pred : {"good", "bad", "assign_rg", "assign_rb"}) {
    const auto& rel = p.kg.relation(pred);
    for (std::size_t k = 0; k < rel.size(); ++k) EXPECT_DOUBLE_EQ(rel.weight(k), 1.0) << pred;
  }
}

TEST(Train, NonTrainableUnchanged) {
  const auto sets = examples(kFamilyExamples);
  Program p = make_program(fixtures::kFamilyRules, fixtures::kFamilyFacts, "", sets);
  p.kg.set_trainable("brother", true);
  const std::string before = serialize_facts(p.kg);
  Registry registry(p, 1);
  TrainingConfig config;
  config.epochs = 5;
  train(registry, p, sets, config);
  const auto& child = p.kg.relation("child");
  EXPECT_DOUBLE_EQ(child.weight(0), 0.99);
  EXPECT_DOUBLE_EQ(p.kg.relation("husband").weight(0), 0.9);
  EXPECT_DOUBLE_EQ(p.kg.relation("infant").weight(0), 0.7);
  EXPECT_NE(serialize_facts(p.kg), before);
}

TEST(Train, SigmoidLossLearnsBias) {
  const auto sets = examples(rule_weight_examples().c_str());
  Program p = make_program(kRuleWeightRules, rule_weight_facts(), "", sets);
  Registry registry(p, 1);
  TrainingConfig config;
  config.epochs = 30;
  config.learning_rate = 0.5;
  config.loss = LossMode::kSigmoid;
  config.optimizer = OptimizerKind::kAdagrad;
  const TrainResult r = train(registry, p, sets, config);
  ASSERT_EQ(r.biases.count("p"), 1u);
  EXPECT_NE(r.biases.at("p"), 0.0);
  EXPECT_LT(r.loss_history.back(), r.loss_history.front());
}

TEST(Train, ClippingBoundsTheStep) {
  const auto sets = examples(rule_weight_examples().c_str());
  Program p = make_program(kRuleWeightRules, rule_weight_facts(), "", sets);
  const ReparamState before = ReparamState::capture(p.kg);
  Registry registry(p, 1);
  TrainingConfig config;
  config.epochs = 1;
  config.batch_size = 100;
  config.learning_rate = 1.0;
  config.clip_norm = 1e-3;
  train(registry, p, sets, config);
  const ReparamState after = ReparamState::capture(p.kg);
  const double moved = (after.values.at("weighted") - before.values.at("weighted")).norm();
  EXPECT_GT(moved, 0.0);
  EXPECT_LE(moved, 1e-3 * (1 + 1e-9));
}

TEST(Train, L2ShrinksWeights) {
  const auto sets = examples(rule_weight_examples().c_str());
  auto final_good = [&](double l2) {
    Program p = make_program(kRuleWeightRules, rule_weight_facts(), "", sets);
    Registry registry(p, 1);
    TrainingConfig config;
    config.epochs = 20;
    config.l2 = l2;
    train(registry, p, sets, config);
    return p.kg.relation("weighted").vector().maxCoeff();
  };
  EXPECT_LT(final_good(1.0), final_good(0.0));
}

TEST(Train, Preconditions) {
  const auto sets = examples(kFamilyExamples);
  Program p = make_program(fixtures::kFamilyRules, fixtures::kFamilyFacts, "", sets);
  Registry registry(p, 1);
  EXPECT_THROW(train(registry, p, sets, TrainingConfig{}), UsageError);
  p.kg.set_trainable("brother", true);
  Program other = make_program(fixtures::kFamilyRules, fixtures::kFamilyFacts, "", sets);
  EXPECT_THROW(train(registry, other, sets, TrainingConfig{}), UsageError);
  EXPECT_THROW(train(registry, p, std::span<const ExampleSet>{}, TrainingConfig{}), UsageError);
}

TEST(Accuracy, TiesTakeLowestIdAndZeroRowsAreWrong) {
  // b and c tie for x; b has the lower id.
  const auto sets = examples("p(x,Y)\tc\np(y,Y)\tb\n");
  const Program p = make_program("p(X,Y) :- e(X,Y).\n", "e\tx\tb\t0.5\ne\tx\tc\t0.5\n", "", sets);
  Registry registry(p, 1);
  EXPECT_DOUBLE_EQ(evaluate_accuracy(registry, sets), 0.0);
  const auto hit = examples("p(x,Y)\tb\n");
  EXPECT_DOUBLE_EQ(evaluate_accuracy(registry, hit), 1.0);
}
