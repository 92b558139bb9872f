#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "aimdit/error.hpp"
#include "aimdit/gradcheck.hpp"
#include "aimdit/metrics.hpp"
#include "aimdit/model.hpp"
#include "aimdit/numerics/ops.hpp"
#include "aimdit/numerics/random.hpp"
#include "oracle/helpers.hpp"
#include "oracle/reference.hpp"

namespace nn = aimdit::nn;
using aimdit::AimditModel;
using aimdit::InitScheme;
using aimdit::ModelConfig;
using nn::Tensor;
using testutil::random_features;
using testutil::random_tensor;

namespace {

ModelConfig tiny(std::size_t classes = 7) {
  ModelConfig c;
  c.d = 4;
  c.heads = 2;
  c.man_layers = 2;
  c.min_layers = 2;
  c.classes = classes;
  return c;
}

aimdit::ModalityFeatures features(nn::Rng& rng, std::size_t d = 4, std::size_t max_len = 4) {
  return random_features(d, {1 + rng.index(max_len), 1 + rng.index(max_len), 1 + rng.index(max_len)}, rng);
}

aimdit::InteractionOutput random_y(std::size_t t, std::size_t d, nn::Rng& rng) {
  aimdit::InteractionOutput y;
  for (auto& m : y.y) m = random_tensor({t, d}, rng);
  return y;
}

}  // namespace

TEST(Classify, ZeroOutputLayerIsUniform) {
  nn::Rng rng(1);
  AimditModel model = aimdit::make_model(tiny(), 1, InitScheme::kDense);
  model.clf.w2 = Tensor::zeros(model.clf.w2.shape());
  model.clf.b2 = Tensor::zeros(model.clf.b2.shape());
  Tensor p = aimdit::classify(random_y(3, 4, rng), Tensor::full({3, 3}, 1.0), model.clf);
  for (double v : p.data()) EXPECT_EQ(v, 1.0 / 7.0);
}

TEST(Classify, ConstantHiddenStateConcentratesOnLargestLogit) {
  nn::Rng rng(2);
  AimditModel model = aimdit::make_model(tiny(3), 1, InitScheme::kDense);
  model.clf.w1 = Tensor::zeros(model.clf.w1.shape());
  model.clf.b1 = Tensor::zeros(model.clf.b1.shape());
  model.clf.b1.mutable_data()[1] = 50.0;
  model.clf.w2 = Tensor::zeros(model.clf.w2.shape());
  for (std::size_t c = 0; c < 3; ++c) model.clf.w2.mutable_data()[c * 3 + c] = 1.0;
  model.clf.b2 = Tensor::zeros({3});
  Tensor p = aimdit::classify(random_y(2, 4, rng), Tensor::full({2, 3}, 1.0), model.clf);
  EXPECT_EQ(aimdit::argmax(p.data()), 1);
  EXPECT_GT(p.data()[1], 1.0 - 1e-12);
}

TEST(Classify, MatchesComposedOracle) {
  nn::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    AimditModel model = aimdit::make_model(tiny(), trial, InitScheme::kDense);
    auto y = random_y(4, 4, rng);
    Tensor mask = Tensor::zeros({4, 3});
    std::array<std::vector<bool>, 3> valid;
    for (std::size_t m = 0; m < 3; ++m) {
      const std::size_t len = 1 + rng.index(4);
      for (std::size_t r = 0; r < 4; ++r) {
        mask.mutable_data()[r * 3 + m] = r < len ? 1.0 : 0.0;
        valid[m].push_back(r < len);
      }
    }
    const auto want = oracle::classify({oracle::of(y.y[0]), oracle::of(y.y[1]), oracle::of(y.y[2])}, valid, model.clf);
    Tensor got = aimdit::classify(y, mask, model.clf);
    for (std::size_t c = 0; c < 7; ++c) EXPECT_NEAR(got.data()[c], want[c], 1e-10);
  }
}

TEST(Classify, WidthMismatch) {
  nn::Rng rng(4);
  AimditModel model = aimdit::make_model(tiny(), 1);
  EXPECT_THROW(aimdit::classify(random_y(2, 5, rng), Tensor::full({2, 3}, 1.0), model.clf), aimdit::Error);
}

TEST(CrossEntropy, HandValues) {
  EXPECT_EQ(aimdit::cross_entropy({Tensor::from({1, 3}, {0, 1, 0})}, {1}).item(), 0.0);
  EXPECT_NEAR(aimdit::cross_entropy({Tensor::full({1, 7}, 1.0 / 7)}, {4}).item(), 1.94591, 1e-5);
  EXPECT_NEAR(aimdit::cross_entropy({Tensor::full({1, 7}, 1.0 / 7)}, {4}).item(), std::log(7.0), 1e-15);
  const double two = aimdit::cross_entropy({Tensor::from({1, 2}, {0.5, 0.5}), Tensor::from({1, 2}, {0.75, 0.25})},
                                           {0, 1})
                         .item();
  EXPECT_NEAR(two, 1.03972, 1e-5);
  EXPECT_NEAR(two, (-std::log(0.5) - std::log(0.25)) / 2, 1e-15);
}

TEST(CrossEntropy, InvalidLabel) {
  EXPECT_THROW(aimdit::cross_entropy({Tensor::full({1, 7}, 1.0 / 7)}, {7}), aimdit::Error);
}

TEST(Forward, ZeroModelIsUniformForArbitraryInputs) {
  nn::Rng rng(5);
  for (const bool man : {true, false})
    for (const bool min : {true, false}) {
      ModelConfig c = tiny();
      c.use_man = man;
      c.use_min = min;
      AimditModel model = aimdit::make_model(c, 3, InitScheme::kZero);
      for (int trial = 0; trial < 10; ++trial) {
        Tensor p = aimdit::forward(model, features(rng));
        for (double v : p.data()) ASSERT_EQ(v, 1.0 / 7.0);
      }
    }
}

TEST(Forward, MatchesModuleByModuleOracle) {
  nn::Rng rng(6);
  int cases = 0;
  for (const char* mods : {"tav", "t", "av"})
    for (const bool man : {true, false})
      for (const bool min : {true, false}) {
        ModelConfig c = tiny();
        c.modalities = mods;
        c.use_man = man;
        c.use_min = min;
        for (int trial = 0; trial < 10; ++trial, ++cases) {
          AimditModel model = aimdit::make_model(c, 100 + cases, InitScheme::kDense);
          auto f = features(rng);
          Tensor got = aimdit::forward(model, f);
          const auto want = oracle::forward(model, f);
          for (std::size_t k = 0; k < 7; ++k) EXPECT_NEAR(got.data()[k], want[k], 1e-10) << mods << man << min;
        }
      }
  EXPECT_GE(cases, 100);
}

TEST(Forward, OutputIsDistribution) {
  nn::Rng rng(7);
  AimditModel model = aimdit::make_model(ModelConfig{}, 9, InitScheme::kDense);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = aimdit::forward(model, features(rng, 8, 8));
    double s = 0.0;
    for (double v : p.data()) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Forward, RecordingDoesNotChangeValues) {
  nn::Rng rng(8);
  AimditModel model = aimdit::make_model(tiny(), 4, InitScheme::kDense);
  auto f = features(rng);
  Tensor plain;
  {
    nn::NoGradGuard no_grad;
    plain = aimdit::forward(model, f);
  }
  nn::Graph g;
  Tensor recorded = aimdit::forward(model, f);
  for (std::size_t k = 0; k < 7; ++k) ASSERT_EQ(plain.data()[k], recorded.data()[k]);
  EXPECT_EQ(aimdit::cross_entropy({recorded}, {2}).item(),
            nn::cross_entropy_from_probs(plain, {2}).item());
}

TEST(Forward, PositiveScalingOfOutputLayerKeepsArgmax) {
  nn::Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    AimditModel model = aimdit::make_model(tiny(), 20 + trial, InitScheme::kDense);
    auto f = features(rng);
    const int before = aimdit::argmax(aimdit::forward(model, f).data());
    const double s = rng.uniform(0.1, 10.0);
    for (auto& v : model.clf.w2.mutable_data()) v *= s;
    for (auto& v : model.clf.b2.mutable_data()) v *= s;
    EXPECT_EQ(aimdit::argmax(aimdit::forward(model, f).data()), before);
  }
}

TEST(Forward, WidthMismatchIsDimensionError) {
  nn::Rng rng(10);
  AimditModel model = aimdit::make_model(tiny(), 1);
  try {
    aimdit::forward(model, features(rng, 6));
    FAIL();
  } catch (const aimdit::Error& e) {
    EXPECT_EQ(e.code(), aimdit::ErrorCode::kDimension);
  }
}

TEST(Model, ParameterNamesAreUniqueAndCountsAdd) {
  AimditModel model = aimdit::make_model(ModelConfig{}, 1);
  std::set<std::string> names;
  std::size_t total = 0;
  for (const auto& p : model.parameters()) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    total += p.tensor.numel();
  }
  EXPECT_EQ(total, model.parameter_count());
  ModelConfig no_man;
  no_man.use_man = false;
  ModelConfig no_min;
  no_min.use_min = false;
  EXPECT_LT(aimdit::make_model(no_man, 1).parameter_count(), model.parameter_count());
  EXPECT_LT(aimdit::make_model(no_min, 1).parameter_count(), model.parameter_count());
}

TEST(Model, ConfigValidation) {
  auto rejects = [](auto edit) {
    ModelConfig c;
    edit(c);
    try {
      c.resolved().validate();
      return false;
    } catch (const aimdit::Error& e) {
      return e.code() == aimdit::ErrorCode::kConfig;
    }
  };
  EXPECT_TRUE(rejects([](ModelConfig& c) { c.heads = 3; }));
  EXPECT_TRUE(rejects([](ModelConfig& c) { c.classes = 1; }));
  EXPECT_TRUE(rejects([](ModelConfig& c) { c.man_layers = 0; }));
  EXPECT_TRUE(rejects([](ModelConfig& c) { c.min_layers = 0; }));
  EXPECT_TRUE(rejects([](ModelConfig& c) { c.kernel_scales = {1, 4}; }));
  EXPECT_TRUE(rejects([](ModelConfig& c) { c.modalities = "tx"; }));
  EXPECT_TRUE(rejects([](ModelConfig& c) { c.modalities = ""; }));
  EXPECT_FALSE(rejects([](ModelConfig&) {}));
}

TEST(Model, ConfigJsonRoundTrip) {
  ModelConfig c = tiny(5);
  c.kernel_scales = {3, 7};
  c.use_min = false;
  c.modalities = "ta";
  ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Model, SameSeedSameParameters) {
  AimditModel a = aimdit::make_model(ModelConfig{}, 42), b = aimdit::make_model(ModelConfig{}, 42);
  auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t k = 0; k < pa[i].tensor.numel(); ++k) ASSERT_EQ(pa[i].tensor.data()[k], pb[i].tensor.data()[k]);
}

TEST(Gradcheck, DefaultTinyModelPassesEveryGroup) {
  auto report = aimdit::run_gradcheck({});
  EXPECT_TRUE(report.passed);
  std::set<std::string> groups;
  for (const auto& g : report.groups) {
    EXPECT_TRUE(g.passed) << g.group << " " << g.max_rel_error;
    EXPECT_LT(g.max_rel_error, 1e-4) << g.group;
    groups.insert(g.group);
  }
  for (const char* want : {"man.joint.kernel", "man.joint.bias", "man.visual.kernel", "min.cmt.text.attn",
                           "min.smt.audio.ffn", "min.cmt.visual.norm", "clf.w1", "clf.b2"})
    EXPECT_TRUE(groups.count(want)) << want;
}

TEST(Gradcheck, CorruptedBackwardIsCaught) {
  for (const char* op : {"matmul", "conv2d_same", "softmax_lastdim", "layer_norm", "gelu"}) {
    aimdit::GradcheckOptions o;
    o.fault_op = op;
    o.fault_scale = 1.01;
    EXPECT_FALSE(aimdit::run_gradcheck(o).passed) << op;
  }
}

TEST(Gradcheck, UnknownFaultOpIsRefused) {
  aimdit::GradcheckOptions o;
  o.fault_op = "softmax";
  EXPECT_THROW(aimdit::run_gradcheck(o), aimdit::Error);
}

TEST(Gradcheck, RefusesLargeConfigurations) {
  aimdit::GradcheckOptions o;
  o.model.d = 16;
  o.model.heads = 2;
  EXPECT_THROW(aimdit::run_gradcheck(o), aimdit::Error);
  aimdit::GradcheckOptions t;
  t.max_len = 5;
  EXPECT_THROW(aimdit::run_gradcheck(t), aimdit::Error);
  aimdit::GradcheckOptions b;
  b.batch = 3;
  EXPECT_THROW(aimdit::run_gradcheck(b), aimdit::Error);
}

TEST(Metrics, PerfectPredictions) {
  auto m = aimdit::compute_metrics({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.weighted_f1, 1.0);
}

TEST(Metrics, HandComputedBinaryCase) {
  auto m = aimdit::compute_metrics({0, 1, 1, 1}, {0, 0, 1, 1}, 2);
  EXPECT_EQ(m.accuracy, 0.75);
  EXPECT_NEAR(m.per_class_f1[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.per_class_f1[1], 0.8, 1e-15);
  EXPECT_NEAR(m.weighted_f1, 0.7333333333333333, 1e-15);
  EXPECT_EQ(m.confusion[0][1], 1u);
  EXPECT_EQ(m.confusion[1][1], 2u);
}

TEST(Metrics, AllOneClassOnBalancedSeven) {
  std::vector<int> labels, preds;
  for (int c = 0; c < 7; ++c)
    for (int k = 0; k < 10; ++k) {
      labels.push_back(c);
      preds.push_back(3);
    }
  auto m = aimdit::compute_metrics(preds, labels, 7);
  EXPECT_NEAR(m.accuracy, 1.0 / 7.0, 1e-15);
  EXPECT_NEAR(m.per_class_f1[3], 0.25, 1e-15);
  for (int c = 0; c < 7; ++c)
    if (c != 3) EXPECT_EQ(m.per_class_f1[c], 0.0);
  EXPECT_NEAR(m.weighted_f1, 1.0 / 28.0, 1e-15);
}

TEST(Metrics, AgreesWithConfusionOracleOnRandomSets) {
  nn::Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng.index(6), n = 1 + rng.index(60);
    std::vector<int> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.index(c));
      preds[i] = rng.uniform() < 0.5 ? labels[i] : static_cast<int>(rng.index(c));
    }
    auto m = aimdit::compute_metrics(preds, labels, c);
    auto want = oracle::metrics(preds, labels, c);
    ASSERT_NEAR(m.accuracy, want.accuracy, 1e-12);
    ASSERT_NEAR(m.weighted_f1, want.weighted_f1, 1e-12);
    for (std::size_t k = 0; k < c; ++k) {
      ASSERT_NEAR(m.per_class_f1[k], want.f1[k], 1e-12);
      std::size_t row = 0;
      for (auto v : m.confusion[k]) row += v;
      ASSERT_EQ(row, m.support[k]);
      for (double f : {m.precision[k], m.recall[k], m.per_class_f1[k]}) {
        ASSERT_GE(f, 0.0);
        ASSERT_LE(f, 1.0);
      }
    }
  }
}

TEST(Metrics, Errors) {
  EXPECT_THROW(aimdit::compute_metrics({}, {}, 3), aimdit::Error);
  EXPECT_THROW(aimdit::compute_metrics({0, 1}, {0}, 3), aimdit::Error);
  EXPECT_THROW(aimdit::compute_metrics({0, 3}, {0, 1}, 3), aimdit::Error);
}
