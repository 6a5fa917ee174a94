#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gradcheck.hpp"
#include "ser/model.hpp"

using namespace ser;
using namespace ser::model;
using ser::ad::Shape;
using ser::testing::check_gradients;
using ser::testing::probe;
using ser::testing::random_tensor;

namespace {

// Independent count oracle: closed-form per-layer sums.
std::size_t conv_count(std::size_t k, std::size_t in, std::size_t out) { return k * in * out + out; }
std::size_t bn_count(std::size_t c) { return 4 * c; }
std::size_t bilstm_count(std::size_t in, std::size_t u) { return 2 * 4 * u * (u + in + 1); }

// Nearest odd integer to t by search, ties to the larger.
std::size_t nearest_odd(double t) {
  std::size_t best = 1;
  for (std::size_t o = 1; o < 64; o += 2) {
    const double d = std::abs(t - static_cast<double>(o)), bd = std::abs(t - static_cast<double>(best));
    if (d < bd || (d == bd && o > best)) best = o;
  }
  return best;
}

std::vector<std::size_t> oracle_counts(const ModelConfig& c) {
  const bool eca = c.variant == Variant::full || c.variant == Variant::no_gfb || c.variant == Variant::one_gfb;
  const std::size_t gfbs = c.variant == Variant::full || c.variant == Variant::no_eca ? 2
                           : c.variant == Variant::one_gfb                            ? 1
                                                                                      : 0;
  std::vector<std::size_t> out;
  std::size_t in = 1, time = c.input_len;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t f = c.alfb_filters[i];
    std::size_t eca_params = 0;
    if (eca) eca_params = c.eca_mode == EcaMode::table1 ? 2 : nearest_odd(std::log2(static_cast<double>(f)) / 2.0 + 0.5);
    out.push_back(conv_count(c.alfb_kernels[i], in, f) + eca_params + bn_count(f));
    in = f;
    time = (time + c.alfb_pools[i].stride - 1) / c.alfb_pools[i].stride;
  }
  std::size_t width = time * in, d = 1;
  for (std::size_t j = 0; j < gfbs; ++j) {
    out.push_back(bilstm_count(d, c.gfb_units[j]) + bn_count(2 * c.gfb_units[j]));
    d = 2 * c.gfb_units[j];
  }
  if (gfbs > 0) width += d;
  out.push_back(width * c.dense_units + c.dense_units + bn_count(c.dense_units));
  out.push_back(c.dense_units * c.n_classes + c.n_classes);
  return out;
}

ModelConfig small_config() {
  ModelConfig c;
  c.input_len = 30;
  c.alfb_filters = {8, 8, 8, 4};
  c.gfb_units = {16, 16};
  c.dense_units = 8;
  c.n_classes = 3;
  return c;
}

LstmParams random_lstm(std::size_t in, std::size_t units, std::uint64_t seed) {
  Rng rng(seed);
  auto p = LstmParams::create(in, units, rng);
  std::normal_distribution<double> d(0.0, 0.4);
  for (auto& [name, t] : p.named()) {
    for (double& v : t->mutable_data()) v = d(rng);
  }
  return p;
}

std::vector<Tensor> lstm_tensors(LstmParams& p) {
  std::vector<Tensor> out;
  for (auto& [name, t] : p.named()) out.push_back(*t);
  return out;
}

}  // namespace

TEST(EcaKernel, AdaptiveRule) {
  EXPECT_EQ(eca_kernel_size(256), 5u);
  EXPECT_EQ(eca_kernel_size(32), 3u);
  EXPECT_EQ(eca_kernel_size(2), 1u);
  EXPECT_EQ(eca_kernel_size(8), 3u);    // t = 2, tie rounds up
  EXPECT_EQ(eca_kernel_size(128), 5u);  // t = 4, tie rounds up
  EXPECT_EQ(eca_kernel_size(1), 1u);
  for (std::size_t c = 1; c <= 4096; c *= 2) {
    EXPECT_EQ(eca_kernel_size(c), nearest_odd(std::log2(static_cast<double>(c)) / 2.0 + 0.5)) << c;
  }
  EXPECT_THROW(eca_kernel_size(0), std::invalid_argument);
}

TEST(ParameterCount, TableOneRowsAndTotal) {
  const Network net(ModelConfig{});
  const auto counts = net.count_parameters();
  const std::vector<std::pair<std::string, std::size_t>> table{
      {"alfb1", 2562},    {"alfb2", 328962},  {"alfb3", 328962}, {"alfb4", 24738},
      {"gfb1", 2109440},  {"gfb2", 6299648},  {"dense", 43168},  {"output", 231}};
  ASSERT_EQ(counts.blocks.size(), table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(counts.blocks[i].block, table[i].first);
    EXPECT_EQ(counts.blocks[i].count, table[i].second);
  }
  EXPECT_EQ(counts.total, 9137711u);
}

TEST(ParameterCount, MatchesOracleForEveryVariantAndMode) {
  for (auto mode : {EcaMode::table1, EcaMode::eq4}) {
    for (auto v : {Variant::full, Variant::no_eca, Variant::no_gfb, Variant::one_gfb, Variant::no_eca_no_gfb}) {
      ModelConfig c;
      c.eca_mode = mode;
      auto with_variant = c;
      with_variant.variant = v;
      const auto expected = oracle_counts(with_variant);
      const auto counts = build_ablation(c, v).count_parameters();
      ASSERT_EQ(counts.blocks.size(), expected.size()) << to_string(v);
      std::size_t total = 0;
      for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(counts.blocks[i].count, expected[i]) << to_string(mode) << " " << to_string(v) << " block " << i;
        total += expected[i];
      }
      EXPECT_EQ(counts.total, total);
    }
  }
}

TEST(ParameterCount, Eq4DiffersOnlyInEca) {
  ModelConfig a, b;
  b.eca_mode = EcaMode::eq4;
  const auto ca = Network(a).count_parameters(), cb = Network(b).count_parameters();
  EXPECT_EQ(ca.total - cb.total, 4 * 2 - (5 + 5 + 5 + 3));
}

TEST(ParameterCount, NoEcaNoGfbHandSum) {
  // Four conv+BN blocks, dense over the 320-wide flatten, output.
  const std::size_t expected = (5 * 1 * 256 + 256 + 1024) + 2 * (5 * 256 * 256 + 256 + 1024) + (3 * 256 * 32 + 32 + 128) +
                               (320 * 32 + 32 + 128) + (32 * 7 + 7);
  EXPECT_EQ(build_ablation({}, Variant::no_eca_no_gfb).count_parameters().total, expected);
}

TEST(Network, ShapeChainAndConcatWidth) {
  const Network net(ModelConfig{});
  EXPECT_EQ(net.local_time_chain(), (std::vector<std::size_t>{150, 75, 38, 19, 10}));
  EXPECT_EQ(net.concat_width(), 1344u);
  EXPECT_EQ(build_ablation({}, Variant::no_gfb).concat_width(), 320u);
}

TEST(Network, AlfbBlockShapes) {
  Network net(ModelConfig{});
  auto& blocks = net.alfbs();
  EXPECT_EQ(blocks[0].forward(random_tensor({1, 150, 1}, 1, 1.0, false), Mode::infer).shape(), (Shape{1, 75, 256}));
  EXPECT_EQ(blocks[3].forward(random_tensor({1, 19, 256}, 2, 1.0, false), Mode::infer).shape(), (Shape{1, 10, 32}));
}

TEST(Eca, ZeroWeightsHalveInput) {
  EcaBlock eca{Tensor::zeros({1, 1, 1}), Tensor::zeros({1})};
  const auto x = random_tensor({2, 6, 4}, 3, 1.0, false);
  const auto y = eca.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i] / 2.0);
}

TEST(Eca, AttentionInOpenUnitInterval) {
  EcaBlock eca{random_tensor({5, 1, 1}, 4, 3.0, false), Tensor()};
  const auto a = eca.attention(random_tensor({3, 7, 16}, 5, 4.0, false));
  EXPECT_EQ(a.shape(), (Shape{3, 16}));
  for (double v : a.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Eca, GradientCheck) {
  auto x = random_tensor({1, 8, 4}, 6), w = random_tensor({3, 1, 1}, 7), b = random_tensor({1}, 8);
  EcaBlock eca{w, b};
  const auto r = check_gradients([&] { return probe(eca.forward(x)); }, {x, w, b});
  EXPECT_LT(r.max_error, 1e-6) << r.worst;
}

TEST(Se, ZeroWeightsGiveHalfScale) {
  SeBlock se{Tensor::zeros({4, 2}), Tensor::zeros({2, 4})};
  const auto a = se.attention(random_tensor({2, 5, 4}, 9, 1.0, false));
  for (double v : a.data()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Se, ShapePreservedAndDivisibilityChecked) {
  Rng rng(1);
  for (auto [t, c, r] : {std::tuple{3, 8, 2}, {5, 6, 3}, {1, 4, 4}, {7, 5, 1}}) {
    auto se = SeBlock::create(c, r, rng);
    const auto x = random_tensor({2, static_cast<std::size_t>(t), static_cast<std::size_t>(c)}, 2, 1.0, false);
    EXPECT_EQ(se.forward(x).shape(), x.shape());
  }
  EXPECT_THROW(SeBlock::create(6, 4, rng), std::invalid_argument);
}

TEST(Se, GradientCheck) {
  auto x = random_tensor({1, 6, 4}, 10), w1 = random_tensor({4, 4}, 11, 0.3), w2 = random_tensor({4, 4}, 12, 0.3);
  SeBlock se{w1, w2};
  const auto r = check_gradients([&] { return probe(se.forward(x)); }, {x, w1, w2});
  EXPECT_LT(r.max_error, 1e-6) << r.worst;
}

TEST(LstmCell, ZeroParametersAreAFixedPoint) {
  Rng rng(1);
  auto p = LstmParams::create(3, 4, rng);
  for (auto& [name, t] : p.named()) std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
  const auto [h, c] = lstm_cell(random_tensor({2, 3}, 1, 1.0, false), Tensor::zeros({2, 4}), Tensor::zeros({2, 4}), p);
  for (double v : h.data()) EXPECT_EQ(v, 0.0);
  for (double v : c.data()) EXPECT_EQ(v, 0.0);
}

TEST(LstmCell, SaturatedForgetGateKeepsCell) {
  auto p = random_lstm(3, 4, 2);
  std::fill(p.bf.mutable_data().begin(), p.bf.mutable_data().end(), 60.0);
  const auto x = random_tensor({2, 3}, 3, 1.0, false), h0 = random_tensor({2, 4}, 4, 0.5, false),
             c0 = random_tensor({2, 4}, 5, 1.0, false);
  const auto [h, c] = lstm_cell(x, h0, c0, p);
  // With f = 1: c = c_prev + i * g.
  auto pre = [&](const Tensor& wx, const Tensor& wh, const Tensor& b) {
    return ad::add(ad::add(ad::matmul(x, wx), ad::matmul(h0, wh)), b);
  };
  const auto ig = ad::mul(ad::sigmoid(pre(p.wxi, p.whi, p.bi)), ad::tanh(pre(p.wxc, p.whc, p.bc)));
  for (std::size_t i = 0; i < c.numel(); ++i) EXPECT_NEAR(c.data()[i], c0.data()[i] + ig.data()[i], 1e-12);
}

TEST(LstmCell, GradientCheckOverAllParameters) {
  auto p = random_lstm(3, 4, 6);
  auto x = random_tensor({2, 3}, 7), h0 = random_tensor({2, 4}, 8, 0.5), c0 = random_tensor({2, 4}, 9);
  auto inputs = lstm_tensors(p);
  inputs.insert(inputs.end(), {x, h0, c0});
  const auto r = check_gradients(
      [&] {
        const auto [h, c] = lstm_cell(x, h0, c0, p);
        return ad::add(probe(h, 1), probe(c, 2));
      },
      inputs);
  EXPECT_LT(r.max_error, 1e-6) << r.worst;
}

TEST(Lstm, FusedSequenceMatchesCellLoop) {
  auto p = random_lstm(3, 5, 10);
  const auto x = random_tensor({2, 6, 3}, 11, 1.0, false);
  for (bool reverse : {false, true}) {
    const auto y = p.run(x, reverse);
    auto h = Tensor::zeros({2, 5}), c = Tensor::zeros({2, 5});
    for (std::size_t s = 0; s < 6; ++s) {
      const std::size_t t = reverse ? 5 - s : s;
      std::tie(h, c) = lstm_cell(ad::reshape(ad::slice(x, 1, t, 1), {2, 3}), h, c, p);
      for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t u = 0; u < 5; ++u) EXPECT_NEAR(y.at({b, t, u}), h.at({b, u}), 1e-12);
      }
    }
  }
}

TEST(BiLstm, OutputShapeForFullWidth) {
  Rng rng(1);
  const auto fw = LstmParams::create(1, 512, rng), bw = LstmParams::create(1, 512, rng);
  EXPECT_EQ(bilstm(random_tensor({150, 1}, 1, 1.0, false), fw, bw).shape(), (Shape{150, 1024}));
}

TEST(BiLstm, TimeReversalSymmetry) {
  auto fw = random_lstm(2, 3, 12), bw = random_lstm(2, 3, 13);
  const auto x = random_tensor({7, 2}, 14, 1.0, false);
  const auto y = bilstm(x, fw, bw);
  const auto y_swapped = bilstm(ad::flip(x, 0), bw, fw);
  for (std::size_t t = 0; t < 7; ++t) {
    for (std::size_t u = 0; u < 3; ++u) {
      EXPECT_NEAR(y_swapped.at({6 - t, u}), y.at({t, 3 + u}), 1e-12);
      EXPECT_NEAR(y_swapped.at({6 - t, 3 + u}), y.at({t, u}), 1e-12);
    }
  }
}

TEST(BiLstm, GradientCheck) {
  auto fw = random_lstm(2, 3, 15), bw = random_lstm(2, 3, 16);
  auto x = random_tensor({5, 2}, 17);
  auto inputs = lstm_tensors(fw);
  const auto more = lstm_tensors(bw);
  inputs.insert(inputs.end(), more.begin(), more.end());
  inputs.push_back(x);
  const auto r = check_gradients([&] { return probe(bilstm(x, fw, bw)); }, inputs);
  EXPECT_LT(r.max_error, 1e-5) << r.worst;
}

TEST(Gfb, InferModeIsDeterministic) {
  Network net(small_config());
  const auto x = random_tensor({3, 30, 1}, 18, 1.0, false);
  Rng r1(1), r2(2);
  const auto a = net.gfbs()[0].forward(x, Mode::infer, r1), b = net.gfbs()[0].forward(x, Mode::infer, r2);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  EXPECT_EQ(a.shape(), (Shape{3, 30, 32}));
}

TEST(Network, ProbabilityRowsSumToOne) {
  for (auto v : {Variant::full, Variant::no_gfb, Variant::no_eca_no_gfb}) {
    Network net(build_ablation(small_config(), v));
    const auto p = net.predict_proba(random_tensor({4, 30}, 19, 1.0, false));
    ASSERT_EQ(p.shape(), (Shape{4, 3}));
    for (std::size_t r = 0; r < 4; ++r) {
      EXPECT_NEAR(p.at({r, 0}) + p.at({r, 1}) + p.at({r, 2}), 1.0, 1e-12);
    }
  }
}

TEST(Network, ArgmaxInvariantToLogitShift) {
  Network net(small_config());
  Rng rng(1);
  const auto logits = net.forward(random_tensor({5, 30}, 20, 1.0, false), Mode::infer, rng);
  const auto shifted = ad::add(logits, Tensor::scalar(123.0));
  const auto p = ad::softmax(logits, 1), q = ad::softmax(shifted, 1);
  for (std::size_t r = 0; r < 5; ++r) {
    auto row = [&](const Tensor& t) {
      const auto d = t.data().subspan(r * 3, 3);
      return std::max_element(d.begin(), d.end()) - d.begin();
    };
    EXPECT_EQ(row(p), row(q));
  }
}

TEST(Network, SameSeedSameWeightsAndFirstLoss) {
  const auto cfg = small_config();
  Network a(cfg), b(cfg);
  const auto sa = a.state(), sb = b.state();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_TRUE(std::equal(sa[i].tensor.data().begin(), sa[i].tensor.data().end(), sb[i].tensor.data().begin()));
  }
  const auto x = random_tensor({4, 30}, 21, 1.0, false);
  const auto y = ad::one_hot({0, 1, 2, 0}, 3);
  Rng ra(5), rb(5);
  EXPECT_EQ(ad::softmax_cross_entropy(a.forward(x, Mode::train, ra), y).item(),
            ad::softmax_cross_entropy(b.forward(x, Mode::train, rb), y).item());
  auto other = cfg;
  other.seed = 43;
  EXPECT_NE(Network(other).state()[2].tensor.data()[0], sa[2].tensor.data()[0]);
}

TEST(Network, InitialisationConventions) {
  Network net(small_config());
  for (const auto& [name, t] : net.state()) {
    const bool is_bias = name.ends_with(".b") || name.ends_with(".beta") || name.ends_with("bi") ||
                         name.ends_with("bc") || name.ends_with("bo") || name.ends_with("moving_mean");
    if (is_bias) {
      for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
    }
    if (name.ends_with(".bf") || name.ends_with("gamma") || name.ends_with("moving_var")) {
      for (double v : t.data()) EXPECT_EQ(v, 1.0) << name;
    }
  }
}

TEST(Network, WholeModelGradientCheck) {
  Network net(small_config());
  const auto x = random_tensor({2, 30}, 22, 1.0, false);
  const auto y = ad::one_hot({0, 2}, 3);
  const auto named = net.named_parameters();
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (const auto& p : named) {
    params.push_back(p.tensor);
    names.push_back(p.name);
  }
  const auto r = check_gradients(
      [&] {
        Rng rng(7);
        return ad::softmax_cross_entropy(net.forward(x, Mode::train, rng), y);
      },
      params, names);
  EXPECT_LT(r.max_error, 1e-4) << r.worst;
}

TEST(Network, StateRoundTripThroughCheckpoint) {
  const auto path = std::filesystem::temp_directory_path() / "ser_model_state.ckpt";
  auto cfg = small_config();
  Network a(cfg);
  a.set_input_normalization(std::vector<double>(30, 0.5), std::vector<double>(30, 2.0));
  ad::save_checkpoint(path, a.state());
  cfg.seed = 99;
  Network b(cfg);
  b.load_state(ad::load_checkpoint(path));
  const auto x = random_tensor({3, 30}, 23, 1.0, false);
  const auto pa = a.predict_proba(x), pb = b.predict_proba(x);
  EXPECT_TRUE(std::equal(pa.data().begin(), pa.data().end(), pb.data().begin()));
  std::filesystem::remove(path);
}

TEST(Network, LoadStateAuditsNamesAndShapes) {
  Network net(small_config());
  auto state = Network(small_config()).state();
  state.pop_back();
  EXPECT_THROW(net.load_state(state), std::invalid_argument);
  auto bigger = small_config();
  bigger.dense_units = 9;
  try {
    net.load_state(Network(bigger).state());
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("dense.w"), std::string::npos);
  }
  EXPECT_THROW(net.load_state(build_ablation(small_config(), Variant::no_eca).state()), std::invalid_argument);
}

TEST(ModelConfig, ValidationNamesField) {
  auto c = ModelConfig{};
  c.n_classes = 1;
  try {
    c.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("n_classes"), std::string::npos);
  }
  c = {};
  c.alfb_kernels = {5, 5, 5};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(parse_variant("tiny"), std::invalid_argument);
  EXPECT_EQ(parse_eca_mode("eq4"), EcaMode::eq4);
}
