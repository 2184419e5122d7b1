#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lfsr/errors.hpp"
#include "lfsr/rng.hpp"
#include "lfsr/unet.hpp"

using namespace lfsr;
using namespace lfsr::nn;

namespace {

std::size_t conv_count(std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k * k + out; }

// Encoder level l has base * 2^l filters; a decoder level sees the upsampled
// deeper features concatenated with its encoder's output.
std::size_t count_oracle(const UNetSpec& s) {
  std::size_t total = 0;
  auto width = [&](int l) { return static_cast<std::size_t>(s.base_filters) << l; };
  for (int l = 0; l < s.levels; ++l) {
    total += conv_count(l == 0 ? s.in_channels : width(l - 1), width(l), 3);
    for (int r = 1; r < s.layers; ++r) total += conv_count(width(l), width(l), 3);
  }
  for (int l = s.levels - 2; l >= 0; --l) {
    total += conv_count(width(l + 1) + width(l), width(l), 3);
    for (int r = 1; r < s.layers; ++r) total += conv_count(width(l), width(l), 3);
  }
  return total + conv_count(width(0), s.out_channels, 1);
}

template <typename T>
Tensor<T> random_tensor(Rng& rng, int c, Index3 d) {
  Tensor<T> t(c, d);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-1, 1));
  return t;
}

}  // namespace

TEST(UNetSpec, ParameterCount) {
  const UNetSpec s{1, 2, 8, 2, 1, Head::Linear};
  EXPECT_EQ(conv_count(2, 8, 3) + conv_count(8, 8, 3) + conv_count(8, 1, 1), 2185u);
  EXPECT_EQ(parameter_count(s), 2185u);
  EXPECT_EQ(UNet<float>(s).params().size(), 2185u);
  for (const UNetSpec& t : {UNetSpec{2, 2, 8, 2, 1, Head::Linear}, UNetSpec{3, 1, 4, 1, 5, Head::Softmax},
                            UNetSpec{5, 2, 24, 2, 1, Head::Linear}, UNetSpec{4, 3, 2, 3, 2, Head::Linear}}) {
    EXPECT_EQ(parameter_count(t), count_oracle(t));
    EXPECT_EQ(UNet<double>(t).params().size(), count_oracle(t));
  }
}

TEST(UNetSpec, Validation) {
  EXPECT_THROW((UNetSpec{0, 2, 8, 2, 1, Head::Linear}.validate()), SpecError);
  EXPECT_THROW((UNetSpec{2, 0, 8, 2, 1, Head::Linear}.validate()), SpecError);
  EXPECT_THROW((UNetSpec{2, 2, 8, 0, 1, Head::Linear}.validate()), SpecError);
  const UNetSpec s{3, 2, 4, 2, 1, Head::Linear};
  EXPECT_NO_THROW(s.check_input({8, 12, 4}));
  EXPECT_THROW(s.check_input({8, 10, 4}), SpecError);
  const UNet<double> net(s);
  EXPECT_THROW(net.forward(Tensor<double>(2, {8, 10, 4})), SpecError);
  EXPECT_THROW(net.forward(Tensor<double>(3, {8, 8, 4})), ShapeError);
}

TEST(UNet, SameSeedSameParameters) {
  const UNetSpec s{2, 2, 4, 2, 1, Head::Linear};
  Rng a(3), b(3), c(4);
  const auto x = UNet<float>::build(s, a), y = UNet<float>::build(s, b), z = UNet<float>::build(s, c);
  EXPECT_EQ(x.params(), y.params());
  EXPECT_EQ(x.hash(), y.hash());
  EXPECT_NE(x.params(), z.params());
  EXPECT_NE(x.hash(), z.hash());
}

TEST(UNet, ZeroParametersGiveZeroOutput) {
  Rng rng(5);
  const UNet<double> net(UNetSpec{2, 2, 4, 2, 1, Head::Linear});
  const Tensor<double> out = net.forward(random_tensor<double>(rng, 2, {6, 4, 8}));
  for (double v : out.data) ASSERT_EQ(v, 0.0);
}

TEST(UNet, OutputDimsMatchInput) {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const int levels = 1 + static_cast<int>(rng.index(3));
    const int div = 1 << (levels - 1);
    const Index3 d{div * (1 + static_cast<int>(rng.index(4))), div * (1 + static_cast<int>(rng.index(4))),
                   div * (1 + static_cast<int>(rng.index(4)))};
    const UNetSpec s{levels, 1 + static_cast<int>(rng.index(2)), 2, 2, 1 + static_cast<int>(rng.index(3)),
                     trial % 2 ? Head::Softmax : Head::Linear};
    const auto net = UNet<float>::build(s, rng);
    const Tensor<float> out = net.forward(random_tensor<float>(rng, 2, d));
    EXPECT_EQ(out.dims, d);
    EXPECT_EQ(out.channels, s.out_channels);
  }
}

TEST(UNet, SoftmaxHeadIsSimplex) {
  Rng rng(7);
  const auto net = UNet<float>::build(UNetSpec{2, 2, 4, 1, 4, Head::Softmax}, rng);
  const Tensor<float> out = net.forward(random_tensor<float>(rng, 1, {4, 6, 4}));
  for (std::size_t n = 0; n < out.voxels(); ++n) {
    double s = 0.0;
    for (int c = 0; c < 4; ++c) {
      const float p = out.channel(c)[n];
      ASSERT_GE(p, 0.0f);
      ASSERT_LE(p, 1.0f);
      s += p;
    }
    ASSERT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(UNet, LinearHeadIsAffineInLastHidden) {
  Rng rng(8);
  const auto net = UNet<double>::build(UNetSpec{2, 2, 4, 2, 1, Head::Linear}, rng);
  UNet<double>::Cache cache;
  const Tensor<double> out = net.forward(random_tensor<double>(rng, 2, {4, 4, 6}), &cache);
  const Tensor<double>& h = net.last_hidden(cache);
  const ConvLayer& head = net.layers().back();
  ASSERT_EQ(head.path, "head");
  ASSERT_EQ(head.kernel, 1);
  ASSERT_EQ(h.channels, head.in);
  const double* w = net.params().data() + head.offset;
  const double bias = w[head.weight_count()];
  for (std::size_t n = 0; n < out.voxels(); ++n) {
    double y = bias;
    for (int c = 0; c < h.channels; ++c) y += w[c] * h.channel(c)[n];
    ASSERT_NEAR(out.data[n], y, 1e-12);
  }
}

TEST(Conv3d, MatchesDirectConvolution) {
  Rng rng(9);
  const Index3 d{6, 6, 6};
  const int cin = 3, cout = 2;
  const Tensor<double> in = random_tensor<double>(rng, cin, d);
  std::vector<double> w(cout * cin * 27), b(cout);
  for (auto& v : w) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  Tensor<double> out;
  conv3d<double>(in, w.data(), b.data(), cout, 3, out);
  ASSERT_EQ(out.channels, cout);
  ASSERT_EQ(out.dims, d);
  double worst = 0.0;
  for (int co = 0; co < cout; ++co)
    for (int k = 0; k < 6; ++k)
      for (int j = 0; j < 6; ++j)
        for (int i = 0; i < 6; ++i) {
          double s = b[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int dz = -1; dz <= 1; ++dz)
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                  const int x = i + dx, y = j + dy, z = k + dz;
                  if (x < 0 || y < 0 || z < 0 || x >= 6 || y >= 6 || z >= 6) continue;
                  s += w[((co * cin + ci) * 3 + dz + 1) * 9 + (dy + 1) * 3 + dx + 1] *
                       in.channel(ci)[x + 6 * (y + 6 * z)];
                }
          worst = std::max(worst, std::abs(s - out.channel(co)[i + 6 * (j + 6 * k)]));
        }
  EXPECT_LT(worst, 1e-6);
}

TEST(UNet, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  auto net = UNet<double>::build(UNetSpec{2, 2, 3, 2, 1, Head::Linear}, rng);
  const Tensor<double> x = random_tensor<double>(rng, 2, {6, 6, 6});
  const Tensor<double> r = random_tensor<double>(rng, 1, {6, 6, 6});
  auto loss = [&]() {
    const Tensor<double> y = net.forward(x);
    double s = 0.0;
    for (std::size_t n = 0; n < y.data.size(); ++n) s += y.data[n] * r.data[n];
    return s;
  };
  UNet<double>::Cache cache;
  net.forward(x, &cache);
  std::vector<double> grad;
  net.backward(cache, r, &grad, nullptr);
  ASSERT_EQ(grad.size(), net.params().size());
  const double h = 1e-5;
  double worst = 0.0;
  for (int s = 0; s < 30; ++s) {
    const std::size_t p = rng.index(grad.size());
    const double keep = net.params()[p];
    net.params()[p] = keep + h;
    const double up = loss();
    net.params()[p] = keep - h;
    const double dn = loss();
    net.params()[p] = keep;
    const double fd = (up - dn) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[p]) / std::max({std::abs(fd), std::abs(grad[p]), 1e-8}));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(UNet, InputGradientMatchesFiniteDifferences) {
  Rng rng(11);
  const auto net = UNet<double>::build(UNetSpec{2, 1, 3, 1, 3, Head::Softmax}, rng);
  Tensor<double> x = random_tensor<double>(rng, 1, {4, 4, 4});
  const Tensor<double> r = random_tensor<double>(rng, 3, {4, 4, 4});
  auto loss = [&]() {
    const Tensor<double> y = net.forward(x);
    double s = 0.0;
    for (std::size_t n = 0; n < y.data.size(); ++n) s += y.data[n] * r.data[n];
    return s;
  };
  UNet<double>::Cache cache;
  net.forward(x, &cache);
  Tensor<double> gx;
  net.backward(cache, r, nullptr, &gx);
  for (int s = 0; s < 10; ++s) {
    const std::size_t n = rng.index(x.data.size());
    const double keep = x.data[n];
    x.data[n] = keep + 1e-5;
    const double up = loss();
    x.data[n] = keep - 1e-5;
    const double dn = loss();
    x.data[n] = keep;
    EXPECT_NEAR(gx.data[n], (up - dn) / 2e-5, 1e-6 * std::max(1.0, std::abs(gx.data[n])));
  }
}

TEST(UNet, ZeroInputChannelGetsZeroKernelGradient) {
  Rng rng(12);
  const auto net = UNet<double>::build(UNetSpec{2, 2, 4, 2, 1, Head::Linear}, rng);
  Tensor<double> x = random_tensor<double>(rng, 2, {4, 4, 4});
  std::fill(x.channel(1), x.channel(1) + x.voxels(), 0.0);
  UNet<double>::Cache cache;
  net.forward(x, &cache);
  std::vector<double> grad;
  net.backward(cache, random_tensor<double>(rng, 1, {4, 4, 4}), &grad, nullptr);
  const ConvLayer& first = net.layers().front();
  ASSERT_EQ(first.in, 2);
  bool any_nonzero = false;
  for (int co = 0; co < first.out; ++co)
    for (int t = 0; t < 27; ++t) {
      EXPECT_EQ(grad[first.offset + (co * 2 + 1) * 27 + t], 0.0);
      any_nonzero |= grad[first.offset + (co * 2) * 27 + t] != 0.0;
    }
  EXPECT_TRUE(any_nonzero);
}

TEST(UNet, BackwardIsDeterministic) {
  Rng rng(13);
  const auto net = UNet<float>::build(UNetSpec{2, 2, 4, 2, 1, Head::Linear}, rng);
  const Tensor<float> x = random_tensor<float>(rng, 2, {4, 4, 4});
  const Tensor<float> r = random_tensor<float>(rng, 1, {4, 4, 4});
  std::vector<float> g1, g2;
  for (auto* g : {&g1, &g2}) {
    UNet<float>::Cache cache;
    net.forward(x, &cache);
    net.backward(cache, r, g, nullptr);
  }
  EXPECT_EQ(g1, g2);
}
