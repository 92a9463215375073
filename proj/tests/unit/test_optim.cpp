#include <cmath>

#include <gtest/gtest.h>

#include "trlab/nn/optim.hpp"

using namespace trlab;
using namespace trlab::nn;

TEST(Optim, SgdMomentumClosedForm) {
  OptimizerConfig c;
  c.kind = OptimizerKind::sgd_momentum;
  c.momentum = 0.5;
  Optimizer<double> opt(c);
  TensorD p({2}, std::vector<double>{1.0, -2.0});
  const TensorD g({2}, std::vector<double>{0.5, 1.0});
  opt.step({&p}, {&g}, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.1 * 0.5);
  opt.step({&p}, {&g}, 0.1);
  // v = 0.5 * 0.5 + 0.5 = 0.75
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.05 - 0.075);
  EXPECT_EQ(opt.slots(0).size(), 1u);
}

TEST(Optim, AdamFirstStepMovesByLr) {
  Optimizer<double> opt;
  TensorD p({3}, std::vector<double>{0.0, 1.0, 2.0});
  const TensorD g({3}, std::vector<double>{0.3, -2.0, 1e-3});
  opt.step({&p}, {&g}, 0.01);
  // Bias-corrected first step: m_hat / sqrt(v_hat) = sign(g) up to epsilon.
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 1.01, 1e-9);
  EXPECT_NEAR(p[2], 2.0 - 0.01 * 1e-3 / (1e-3 + 1e-8), 1e-12);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Optim, AdamSecondStepClosedForm) {
  Optimizer<double> opt;
  TensorD p({1}, 0.0);
  const TensorD g1({1}, 1.0), g2({1}, 3.0);
  opt.step({&p}, {&g1}, 0.1);
  opt.step({&p}, {&g2}, 0.1);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0], -0.1 / (1 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-12);
}

TEST(Optim, NullGradientSkipsAndShapeMismatchThrows) {
  Optimizer<double> opt;
  TensorD a({2}, 1.0), b({2}, 1.0);
  const TensorD g({2}, 1.0), bad({3}, 1.0);
  opt.step({&a, &b}, {&g, nullptr}, 0.1);
  EXPECT_EQ(b[0], 1.0);
  EXPECT_NE(a[0], 1.0);
  EXPECT_TRUE(opt.slots(1).empty());
  EXPECT_THROW(opt.step({&a}, {&bad}, 0.1), ShapeError);
}

TEST(Schedule, ChexpertValuesAreExact) {
  const LrSchedule s = chexpert_schedule(100, 32);
  EXPECT_EQ(s.lr_at(0), 0.0);
  EXPECT_EQ(s.lr_at(5 * 100), 0.0125);
  EXPECT_EQ(s.lr_at(29 * 100 + 99), 0.0125);
  EXPECT_EQ(s.lr_at(30 * 100), 0.00125);
  EXPECT_NEAR(s.lr_at(60 * 100), 0.000125, 1e-18);
  EXPECT_NEAR(s.lr_at(250), 0.0125 * 2.5 / 5, 1e-18);
}

TEST(Schedule, ConstantAndParsing) {
  LrSchedule s;
  s.base_lr = 0.003;
  EXPECT_EQ(s.lr_at(0), 0.003);
  EXPECT_EQ(s.lr_at(100000), 0.003);
  EXPECT_EQ(parse_schedule("constant"), ScheduleKind::constant);
  EXPECT_THROW(parse_schedule("cosine"), InvalidArgument);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::sgd_momentum);
  EXPECT_THROW(parse_optimizer("rmsprop"), InvalidArgument);
}
