#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "restorer/nn/checkpoint.hpp"
#include "restorer/nn/grad_check.hpp"
#include "restorer/nn/ops.hpp"
#include "restorer/random.hpp"

using namespace restorer;
using namespace restorer::nn;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so kinks are not straddled by the stencil.
Tensor<double> away_from_zero(Shape shape, std::uint64_t seed) {
  auto t = random_tensor(std::move(shape), seed, 0.1, 1.0);
  Rng rng(seed + 1);
  for (auto& v : t.values())
    if (rng.uniform() < 0.5) v = -v;
  return t;
}

// Definition-level cross-correlation: out[n,o,y,x] = b[o] + sum w[o,c,i,j] * in[n, g*cig + c, y*sh - ph + i, x*sw - pw + j].
Tensor<double> conv2d_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                             const Conv2dSpec& s) {
  const auto n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto co = w.dim(0), cig = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const auto cog = co / s.groups;
  const auto oh = (h + s.pad_begin[0] + s.pad_end[0] - kh) / s.stride[0] + 1;
  const auto ow = (wd + s.pad_begin[1] + s.pad_end[1] - kw) / s.stride[1] + 1;
  (void)ci;
  Tensor<double> out({n, co, oh, ow});
  for (std::int64_t b0 = 0; b0 < n; ++b0)
    for (std::int64_t o = 0; o < co; ++o) {
      const auto g = o / cog;
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          double acc = b ? (*b)[o] : 0.0;
          for (std::int64_t c = 0; c < cig; ++c)
            for (std::int64_t i = 0; i < kh; ++i)
              for (std::int64_t j = 0; j < kw; ++j) {
                const auto iy = y * s.stride[0] - s.pad_begin[0] + i;
                const auto ix = xx * s.stride[1] - s.pad_begin[1] + j;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += w.at({o, c, i, j}) * x.at({b0, g * cig + c, iy, ix});
              }
          out.at({b0, o, y, xx}) = acc;
        }
    }
  return out;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

// Weighted sum with fixed random weights so every output element matters.
Var<double> probe(const Var<double>& y, std::uint64_t seed) {
  auto& tape = y.tape();
  return sum(mul(y, tape.constant(random_tensor(y.shape(), seed))));
}

void expect_grad_ok(const ScalarFn& fn, std::vector<Tensor<double>> inputs, double tol = 1e-4) {
  const auto r = grad_check(fn, std::move(inputs));
  EXPECT_LT(r.max_relative_error, tol) << "input " << r.worst_input << " index " << r.worst_index << " analytic "
                                       << r.analytic << " numeric " << r.numeric;
}

struct ConvCase {
  int kh, kw, sh, sw;
};

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24);
  EXPECT_EQ(t.rank(), 3);
  EXPECT_EQ(t.dim(-1), 4);
  t.at({1, 2, 3}) = 5.0f;
  EXPECT_EQ(t[23], 5.0f);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
  EXPECT_EQ(to_string(Shape{2, 3}), "[2, 3]");
}

TEST(Tape, DiamondGraphAccumulatesOnce) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({3}, std::vector<double>{1.0, -2.0, 0.5}));
  auto y = sum(add(mul(x, x), x));
  tape.backward(y);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.value()[i] + 1.0);
}

TEST(Tape, NonRecordingTapeKeepsNoGraph) {
  Tape<float> tape(false);
  Parameter<float> p{"w", Tensor<float>({4}, 1.0f), {}};
  auto y = sum(mul(tape.parameter(p), tape.constant(Tensor<float>({4}, 2.0f))));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FLOAT_EQ(y.item(), 8.0f);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tape, ParameterGradientsAccumulate) {
  Parameter<double> p{"w", Tensor<double>({2}, std::vector<double>{3.0, 4.0}), {}};
  for (int step = 0; step < 2; ++step) {
    Tape<double> tape;
    tape.backward(sum(mul(tape.parameter(p), tape.parameter(p))));
  }
  EXPECT_DOUBLE_EQ(p.grad[0], 12.0);
  EXPECT_DOUBLE_EQ(p.grad[1], 16.0);
  p.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad[0], 0.0);
}

TEST(Tape, BackwardRequiresScalar) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({2}));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Elementwise, ShapeMismatchNamesAxis) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 3}));
  auto b = tape.constant(Tensor<double>({2, 4}));
  try {
    add(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("axis 1"), std::string::npos);
  }
}

TEST(Activations, Definitions) {
  Tape<double> tape(false);
  auto x = tape.constant(Tensor<double>({4}, std::vector<double>{0.0, -2.0, 1.5, -0.5}));
  const auto e = elu(x).value();
  const auto l = leaky_relu(x, 0.3).value();
  EXPECT_EQ(e[0], 0.0);
  EXPECT_EQ(l[0], 0.0);
  EXPECT_DOUBLE_EQ(l[1], -0.6);
  EXPECT_DOUBLE_EQ(e[1], std::exp(-2.0) - 1.0);
  EXPECT_DOUBLE_EQ(e[2], 1.5);
  EXPECT_DOUBLE_EQ(relu(x).value()[3], 0.0);
}

TEST(Activations, GradCheck) {
  const auto x = away_from_zero({3, 7}, 1);
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(elu(v[0]), 2); }, {x});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(leaky_relu(v[0], 0.3), 3); }, {x});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(relu(v[0]), 4); }, {x});
  expect_grad_ok([](Tape<double>&, const auto& v) { return mean(abs(v[0])); }, {x});
}

TEST(Elementwise, GradCheck) {
  const auto a = random_tensor({2, 3, 4}, 5), b = random_tensor({2, 3, 4}, 6);
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(add(v[0], v[1]), 7); }, {a, b});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(sub(v[0], v[1]), 8); }, {a, b});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(mul(v[0], v[1]), 9); }, {a, b});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(add_scalar(scale(v[0], 2.5), 1.0), 10); }, {a});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(reshape(v[0], {4, 6}), 11); }, {a});
}

TEST(Structural, ConcatSlicePadValues) {
  Tape<double> tape(false);
  auto a = tape.constant(Tensor<double>({1, 2}, std::vector<double>{1, 2}));
  auto b = tape.constant(Tensor<double>({1, 3}, std::vector<double>{3, 4, 5}));
  const auto c = concat<double>({a, b}, 1);
  EXPECT_EQ(c.value().storage(), (std::vector<double>{1, 2, 3, 4, 5}));
  EXPECT_EQ(slice(c, 1, 1, 3).value().storage(), (std::vector<double>{2, 3, 4}));
  EXPECT_EQ(pad_reflect(b, 1, 2, 1).value().storage(), (std::vector<double>{5, 4, 3, 4, 5, 4}));
  EXPECT_THROW(pad_reflect(b, 1, 3, 0), ShapeError);
  EXPECT_THROW(slice(c, 1, 3, 3), ShapeError);
}

TEST(Structural, GradCheck) {
  const auto a = random_tensor({2, 3, 5}, 12), b = random_tensor({2, 2, 5}, 13);
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(concat<double>({v[0], v[1]}, 1), 14); }, {a, b});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(slice(v[0], 2, 1, 3), 15); }, {a});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(pad_reflect(v[0], 2, 3, 2), 16); }, {a});
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Tape<double> tape(false);
  const auto x = random_tensor({2, 3, 5, 6}, 1);
  Tensor<double> w({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.at({c, c, 0, 0}) = 1.0;
  const auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(Tensor<double>({3})), Conv2dSpec{});
  EXPECT_EQ(y.value(), x);
}

TEST(Conv2d, OnesKernelOnOneHot) {
  Tape<double> tape(false);
  Tensor<double> x({1, 1, 7, 7});
  x.at({0, 0, 3, 3}) = 1.0;
  const auto y = conv2d(tape.constant(x), tape.constant(Tensor<double>({1, 1, 3, 3}, 1.0)), Var<double>{},
                        Conv2dSpec::same(3, 3));
  const auto oracle = conv2d_oracle(x, Tensor<double>({1, 1, 3, 3}, 1.0), nullptr, Conv2dSpec::same(3, 3));
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      const double expect = (std::abs(i - 3) <= 1 && std::abs(j - 3) <= 1) ? 1.0 : 0.0;
      EXPECT_EQ(y.value().at({0, 0, i, j}), expect);
      EXPECT_EQ(oracle.at({0, 0, i, j}), expect);
    }
}

TEST(Conv2d, MatchesDirectSummation) {
  Tape<double> tape(false);
  for (auto [kh, kw, sh, sw, groups] : std::vector<std::array<int, 5>>{
           {3, 3, 1, 1, 1}, {3, 4, 1, 2, 1}, {4, 4, 2, 2, 1}, {3, 3, 1, 1, 2}, {2, 5, 2, 3, 3}}) {
    Conv2dSpec spec = sh == 1 && sw == 1 ? Conv2dSpec::same(kh, kw) : Conv2dSpec::half(kh, kw, sh, sw);
    spec.groups = groups;
    const auto x = random_tensor({2, 6, 8, 12}, kh * 10 + kw);
    const auto w = random_tensor({6, 6 / groups, kh, kw}, kh * 100 + kw);
    const auto b = random_tensor({6}, 77);
    const auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), spec).value();
    const auto oracle = conv2d_oracle(x, w, &b, spec);
    ASSERT_EQ(y.shape(), oracle.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) ASSERT_NEAR(y[i], oracle[i], 1e-12);
  }
}

TEST(Conv2d, HalfPaddingDividesByStride) {
  Tape<double> tape(false);
  const auto x = tape.constant(Tensor<double>({1, 2, 8, 16}));
  const auto y = conv2d(x, tape.constant(Tensor<double>({3, 2, 4, 4})), Var<double>{}, Conv2dSpec::half(4, 4, 2, 2));
  EXPECT_EQ(y.shape(), (Shape{1, 3, 4, 8}));
  const auto z = conv2d(x, tape.constant(Tensor<double>({3, 2, 3, 4})), Var<double>{}, Conv2dSpec::half(3, 4, 1, 2));
  EXPECT_EQ(z.shape(), (Shape{1, 3, 8, 8}));
}

TEST(Conv2d, ShapeErrorsNameAxis) {
  Tape<double> tape(false);
  const auto x = tape.constant(Tensor<double>({1, 2, 8, 8}));
  try {
    conv2d(x, tape.constant(Tensor<double>({3, 4, 3, 3})), Var<double>{}, Conv2dSpec{});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("axis 1"), std::string::npos);
  }
  try {
    conv2d(x, tape.constant(Tensor<double>({3, 2, 9, 3})), Var<double>{}, Conv2dSpec{});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("axis 2"), std::string::npos);
  }
}

class ConvGeometry : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvGeometry, TransposeIsAdjoint) {
  const auto [kh, kw, sh, sw] = GetParam();
  const auto spec = sh == 1 && sw == 1 ? Conv2dSpec::same(kh, kw) : Conv2dSpec::half(kh, kw, sh, sw);
  Tape<double> tape(false);
  const auto x = random_tensor({2, 3, 8, 16}, 1);
  const auto w = random_tensor({5, 3, kh, kw}, 2);
  const auto cx = conv2d(tape.constant(x), tape.constant(w), Var<double>{}, spec).value();
  const auto y = random_tensor(cx.shape(), 3);
  const auto ty = conv2d_transpose(tape.constant(y), tape.constant(w), Var<double>{}, spec).value();
  ASSERT_EQ(ty.shape(), x.shape());
  EXPECT_NEAR(dot(cx, y), dot(x, ty), 1e-9 * std::abs(dot(cx, y)));
  // transposed output dims = input dims x stride
  EXPECT_EQ(ty.dim(2), y.dim(2) * sh);
  EXPECT_EQ(ty.dim(3), y.dim(3) * sw);
}

TEST_P(ConvGeometry, GradCheck) {
  const auto [kh, kw, sh, sw] = GetParam();
  const auto spec = sh == 1 && sw == 1 ? Conv2dSpec::same(kh, kw) : Conv2dSpec::half(kh, kw, sh, sw);
  expect_grad_ok([spec](Tape<double>&, const auto& v) { return probe(conv2d(v[0], v[1], v[2], spec), 9); },
                 {random_tensor({2, 2, 4, 8}, 4), random_tensor({3, 2, kh, kw}, 5), random_tensor({3}, 6)});
  expect_grad_ok(
      [spec](Tape<double>&, const auto& v) { return probe(conv2d_transpose(v[0], v[1], v[2], spec), 10); },
      {random_tensor({2, 3, 4 / sh, 8 / sw}, 7), random_tensor({3, 2, kh, kw}, 8), random_tensor({2}, 9)});
}

INSTANTIATE_TEST_SUITE_P(ModelShapes, ConvGeometry,
                         ::testing::Values(ConvCase{3, 3, 1, 1}, ConvCase{3, 4, 1, 2}, ConvCase{4, 4, 2, 2}));

TEST(Conv2d, GroupedGradCheck) {
  Conv2dSpec spec = Conv2dSpec::same(3, 3);
  spec.groups = 2;
  expect_grad_ok([spec](Tape<double>&, const auto& v) { return probe(conv2d(v[0], v[1], v[2], spec), 11); },
                 {random_tensor({1, 4, 5, 5}, 1), random_tensor({6, 2, 3, 3}, 2), random_tensor({6}, 3)});
}

TEST(Conv2dTranspose, UnitKernelIsIdentity) {
  Tape<double> tape(false);
  const auto x = random_tensor({1, 2, 3, 4}, 1);
  Tensor<double> w({2, 2, 1, 1});
  w.at({0, 0, 0, 0}) = w.at({1, 1, 0, 0}) = 1.0;
  EXPECT_EQ(conv2d_transpose(tape.constant(x), tape.constant(w), Var<double>{}, Conv2dSpec{}).value(), x);
}

TEST(Conv1d, GroupedUnitKernelIsIdentity) {
  Tape<double> tape(false);
  const auto x = random_tensor({2, 4, 10}, 1);
  Conv1dSpec spec;
  spec.groups = 4;
  const auto y = conv1d(tape.constant(x), tape.constant(Tensor<double>({4, 1, 1}, 1.0)), Var<double>{}, spec);
  EXPECT_EQ(y.value(), x);
}

TEST(Conv1d, StridedLength) {
  Tape<double> tape(false);
  Conv1dSpec spec{4, 2, 2, 1};  // half padding floor((8 - 4) / 2)
  const auto y = conv1d(tape.constant(Tensor<double>({1, 1, 16})), tape.constant(Tensor<double>({1, 1, 8})),
                        Var<double>{}, spec);
  EXPECT_EQ(y.dim(2), 4);
}

TEST(Conv1d, MatchesTwoDimensionalOracle) {
  Tape<double> tape(false);
  const Conv1dSpec spec{4, 20, 20, 2};
  const auto x = random_tensor({1, 4, 64}, 3);
  const auto w = random_tensor({4, 2, 41}, 4);
  const auto y = conv1d(tape.constant(x), tape.constant(w), Var<double>{}, spec).value();
  Conv2dSpec s2;
  s2.stride = {1, 4};
  s2.pad_begin = {0, 20};
  s2.pad_end = {0, 20};
  s2.groups = 2;
  const auto oracle = conv2d_oracle(x.reshaped({1, 4, 1, 64}), w.reshaped({4, 2, 1, 41}), nullptr, s2);
  ASSERT_EQ(y.numel(), oracle.numel());
  EXPECT_EQ(y.dim(2), 16);
  for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], oracle[i], 1e-12);
}

TEST(Conv1d, WaveformShapesAdjoint) {
  // 1D strided layer geometry of the waveform discriminator, as a 2D conv with unit height.
  Tape<double> tape(false);
  Conv2dSpec spec;
  spec.stride = {1, 4};
  spec.pad_begin = {0, 20};
  spec.pad_end = {0, 20};
  // kernel 41, stride 4, padding 20: lengths 4m + 1 map to m + 1 and back exactly
  const auto x = random_tensor({1, 3, 1, 129}, 1);
  const auto w = random_tensor({5, 3, 1, 41}, 2);
  const auto cx = conv2d(tape.constant(x), tape.constant(w), Var<double>{}, spec).value();
  ASSERT_EQ(cx.dim(3), 33);
  const auto y = random_tensor(cx.shape(), 3);
  const auto ty = conv2d_transpose(tape.constant(y), tape.constant(w), Var<double>{}, spec).value();
  ASSERT_EQ(ty.shape(), x.shape());
  EXPECT_NEAR(dot(cx, y), dot(x, ty), 1e-9 * std::abs(dot(cx, y)));
}

TEST(Conv1d, GradCheck) {
  const Conv1dSpec spec{4, 2, 2, 2};
  expect_grad_ok([spec](Tape<double>&, const auto& v) { return probe(conv1d(v[0], v[1], v[2], spec), 5); },
                 {random_tensor({2, 4, 16}, 1), random_tensor({6, 2, 8}, 2), random_tensor({6}, 3)});
}

TEST(NearestUpsample, ReplicatesPixels) {
  Tape<double> tape(false);
  auto one = nearest_upsample(tape.constant(Tensor<double>({1, 1, 1, 1}, 3.0)), 2, 2).value();
  EXPECT_EQ(one, Tensor<double>({1, 1, 2, 2}, 3.0));
  Tensor<double> board({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  const auto up = nearest_upsample(tape.constant(board), 2, 2).value();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(up.at({0, 0, i, j}), (i / 2 == j / 2) ? 1.0 : 0.0);
  EXPECT_EQ(nearest_upsample(tape.constant(board), 1, 2).shape(), (Shape{1, 1, 2, 4}));
}

TEST(NearestUpsample, GradCheck) {
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(nearest_upsample(v[0], 2, 2), 3); },
                 {random_tensor({2, 2, 3, 3}, 1)});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(nearest_upsample(v[0], 1, 2), 4); },
                 {random_tensor({1, 2, 3, 3}, 2)});
}

TEST(WeightNorm, IdentityWhenGainIsNorm) {
  Tape<double> tape(false);
  const auto v = random_tensor({3, 2, 3, 3}, 1);
  Tensor<double> g({3});
  for (int o = 0; o < 3; ++o) {
    double s = 0.0;
    for (int i = 0; i < 18; ++i) s += v[o * 18 + i] * v[o * 18 + i];
    g[o] = std::sqrt(s);
  }
  const auto w = weight_norm(tape.constant(v), tape.constant(g)).value();
  for (std::int64_t i = 0; i < v.numel(); ++i) EXPECT_NEAR(w[i], v[i], 1e-14);
  auto v10 = v;
  for (auto& e : v10.values()) e *= 10.0;
  const auto w10 = weight_norm(tape.constant(v10), tape.constant(g)).value();
  for (std::int64_t i = 0; i < v.numel(); ++i) EXPECT_NEAR(w10[i], w[i], 1e-14);
}

TEST(WeightNorm, GradCheck) {
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(weight_norm(v[0], v[1]), 3); },
                 {random_tensor({3, 2, 2, 2}, 1), random_tensor({3}, 2)});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(weight_norm(v[0], v[1], 1), 4); },
                 {random_tensor({2, 3, 2, 2}, 5), random_tensor({3}, 6)});
}

TEST(LayerNorm, ConstantInputGivesBias) {
  Tape<double> tape(false);
  const auto b = random_tensor({3}, 1);
  const auto y = layer_norm(tape.constant(Tensor<double>({2, 3, 4, 4}, 0.7)), tape.constant(Tensor<double>({3}, 1.0)),
                            tape.constant(b))
                     .value();
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i) EXPECT_LT(std::abs(y[(n * 3 + c) * 16 + i] - b[c]), 1e-2);
}

TEST(LayerNorm, NormalizesEachExample) {
  Tape<double> tape(false);
  const auto x = random_tensor({2, 3, 5, 7}, 2, -3.0, 5.0);
  const auto y = layer_norm(tape.constant(x), tape.constant(Tensor<double>({3}, 1.0)),
                            tape.constant(Tensor<double>({3}, 0.0)))
                     .value();
  const std::int64_t per = 3 * 5 * 7;
  for (int n = 0; n < 2; ++n) {
    double m = 0.0, v = 0.0;
    for (std::int64_t i = 0; i < per; ++i) m += y[n * per + i];
    m /= per;
    for (std::int64_t i = 0; i < per; ++i) v += (y[n * per + i] - m) * (y[n * per + i] - m);
    v /= per;
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_LT(std::abs(v - 1.0), 1e-4);
  }
}

TEST(LayerNorm, GradCheck) {
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(layer_norm(v[0], v[1], v[2]), 4); },
                 {random_tensor({2, 3, 2, 4}, 1), random_tensor({3}, 2), random_tensor({3}, 3)});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(layer_norm(v[0], v[1], v[2]), 5); },
                 {random_tensor({2, 4, 9}, 6), random_tensor({4}, 7), random_tensor({4}, 8)});
}

TEST(GradCheck, QuadraticIsExact) {
  const auto r = grad_check([](Tape<double>&, const auto& v) { return sum(mul(v[0], v[0])); },
                            {random_tensor({10}, 1)});
  EXPECT_LT(r.max_relative_error, 1e-8);
  ASSERT_EQ(r.per_input.size(), 1u);
}

TEST(GradCheck, TwoLayerConvNetWithL1Loss) {
  const auto target = random_tensor({2, 1, 6, 6}, 9);
  expect_grad_ok(
      [target](Tape<double>& tape, const auto& v) {
        auto h = elu(conv2d(v[0], v[1], v[2], Conv2dSpec::same(3, 3)));
        auto y = conv2d(h, v[3], v[4], Conv2dSpec::same(3, 3));
        return mean(abs(sub(y, tape.constant(target))));
      },
      {random_tensor({2, 2, 6, 6}, 1), random_tensor({4, 2, 3, 3}, 2), random_tensor({4}, 3),
       random_tensor({1, 4, 3, 3}, 4), random_tensor({1}, 5)});
}

TEST(GradCheck, DeadReluHasZeroGradient) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({4}, std::vector<double>{-1.0, -0.5, -2.0, -0.1}));
  tape.backward(sum(relu(x)));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(x.grad()[i], 0.0);
}

TEST(GradCheck, NonFiniteThrows) {
  EXPECT_THROW(grad_check([](Tape<double>&, const auto& v) { return sum(scale(v[0], 1e308 * 10)); },
                          {random_tensor({2}, 1)}),
               std::domain_error);
}

TEST(SignalOps, StftMatchesDspAndRoundTrips) {
  dsp::StftConfig cfg;
  cfg.window_size = 64;
  cfg.hop_size = 16;
  Tape<double> tape(false);
  const auto x = random_tensor({2, 300}, 1);
  const auto spec = stft(tape.constant(x), cfg);
  EXPECT_EQ(spec.shape(), (Shape{2, 2, 300 / 16 + 1, 33}));
  AudioClip clip(std::vector<double>(x.data() + 300, x.data() + 600), 8000);
  const auto ref = dsp::stft(clip, cfg);
  const auto plane = spec.dim(2) * spec.dim(3);
  for (std::int64_t i = 0; i < plane; ++i) {
    EXPECT_NEAR(spec.value()[2 * plane + i], ref.values[i].real(), 1e-12);
    EXPECT_NEAR(spec.value()[3 * plane + i], ref.values[i].imag(), 1e-12);
  }
  const auto back = istft(spec, cfg, 300).value();
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(back[i], x[i], 1e-9);
}

TEST(SignalOps, GradCheck) {
  dsp::StftConfig cfg;
  cfg.window_size = 16;
  cfg.hop_size = 4;
  expect_grad_ok([cfg](Tape<double>&, const auto& v) { return probe(stft(v[0], cfg), 2); },
                 {random_tensor({2, 40}, 1)});
  expect_grad_ok([cfg](Tape<double>&, const auto& v) { return probe(istft(v[0], cfg, 40), 3); },
                 {random_tensor({2, 2, 11, 9}, 4)});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(complex_modulus(v[0]), 5); },
                 {away_from_zero({2, 2, 3, 4}, 6)});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(apply_phase(v[0], v[1]), 7); },
                 {random_tensor({2, 1, 3, 4}, 8), away_from_zero({2, 2, 3, 4}, 9)});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(downsample2(v[0]), 10); },
                 {random_tensor({2, 81}, 11)});
  expect_grad_ok([](Tape<double>&, const auto& v) { return probe(upsample2(v[0], 81), 12); },
                 {random_tensor({2, 40}, 13)});
}

TEST(SignalOps, ApplyPhaseKeepsReferencePhase) {
  Tape<double> tape(false);
  Tensor<double> ref({1, 2, 1, 2}, std::vector<double>{3.0, 0.0, 4.0, 0.0});
  Tensor<double> mag({1, 1, 1, 2}, std::vector<double>{10.0, 2.0});
  const auto out = apply_phase(tape.constant(mag), tape.constant(ref)).value();
  EXPECT_NEAR(out[0], 6.0, 1e-12);
  EXPECT_NEAR(out[2], 8.0, 1e-12);
  EXPECT_EQ(out[1], 0.0);  // zero reference stays zero
  EXPECT_EQ(out[3], 0.0);
}

TEST(Determinism, ForwardIsBitIdentical) {
  const auto x = random_tensor({2, 4, 16, 32}, 1).cast<float>();
  const auto w = random_tensor({8, 4, 4, 4}, 2).cast<float>();
  Tensor<float> first;
  for (int rep = 0; rep < 3; ++rep) {
    Tape<float> tape(false);
    const auto y = elu(conv2d(tape.constant(x), tape.constant(w), Var<float>{}, Conv2dSpec::half(4, 4, 2, 2)));
    if (rep == 0)
      first = y.value();
    else
      EXPECT_EQ(y.value(), first);
  }
}

TEST(Checkpoint, BitExactRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "restorer_ckpt_test" / "a.ckpt";
  Checkpoint c;
  c.header = {{"step", 12}, {"name", "x"}};
  c.add("w", random_tensor({2, 3}, 1).cast<float>());
  c.add("adam.m", random_tensor({4}, 2));
  c.add("scalar", Tensor<double>::scalar(1.0 / 3.0));
  save_checkpoint(path, c);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.header, c.header);
  EXPECT_EQ(back.get<float>("w"), c.get<float>("w"));
  EXPECT_EQ(back.get<double>("adam.m"), c.get<double>("adam.m"));
  EXPECT_EQ(back.get<double>("scalar"), c.get<double>("scalar"));
  EXPECT_THROW(back.get<double>("w"), CheckpointError);
  EXPECT_THROW(back.get<float>("missing"), CheckpointError);
  std::filesystem::remove_all(path.parent_path());
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, RejectsForeignFiles) {
  const auto path = std::filesystem::temp_directory_path() / "restorer_ckpt_bad.bin";
  { std::ofstream(path) << "not a checkpoint at all"; }
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
}
