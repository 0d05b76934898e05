#include <doctest.h>

#include <cmath>
#include <random>

#include "frid/attention.hpp"
#include "testing_util.hpp"

using frid::ProjectionHead;
using frid::Shape;
using T64 = frid::Tensor<double>;

namespace {

ProjectionHead<double> zero_head(int channels) {
  std::mt19937_64 rng(0);
  auto h = ProjectionHead<double>::make(channels, rng);
  h.conv.weight = T64::zeros(h.conv.weight.shape(), true);
  h.conv.bias = T64::zeros(h.conv.bias.shape(), true);
  return h;
}

// sets the 1x1 projection to average channels and add a bias
ProjectionHead<double> mean_head(int channels, double scale, double bias) {
  auto h = zero_head(channels);
  for (int c = 0; c < channels; ++c)
    h.conv.weight.set_at({0, c, 0, 0}, scale / channels);
  h.conv.bias.set_at({0}, bias);
  return h;
}

}  // namespace

TEST_SUITE_BEGIN("attention");

TEST_CASE("zero projections give a map of exactly 0.5 everywhere") {
  std::mt19937_64 rng(1);
  T64 phi = T64::uniform({2, 4, 3, 3}, rng, -1.0, 1.0);
  T64 f = T64::uniform({2, 4, 3, 3}, rng, -1.0, 1.0);
  T64 m = frid::mutual_attention_map(phi, f, zero_head(4), zero_head(4));
  CHECK(m.shape() == Shape{2, 1, 3, 3});
  for (Eigen::Index i = 0; i < m.size(); ++i) CHECK(m.values()[i] == 0.5);
}

TEST_CASE("projected values 2 and 3 produce sigmoid(6)") {
  // single-pixel feature maps; heads pass the single channel through
  T64 phi = T64::from_values({1, 1, 1, 1}, {2.0});
  T64 f = T64::from_values({1, 1, 1, 1}, {3.0});
  auto ha = zero_head(1);
  ha.conv.weight.set_at({0, 0, 0, 0}, 1.0);
  auto hf = zero_head(1);
  hf.conv.weight.set_at({0, 0, 0, 0}, 1.0);
  T64 m = frid::mutual_attention_map(phi, f, ha, hf);
  CHECK(m.values()[0] == doctest::Approx(1.0 / (1.0 + std::exp(-6.0)))
                             .epsilon(1e-12));
  CHECK(m.values()[0] == doctest::Approx(0.99753).epsilon(1e-4));
}

TEST_CASE("map matches a scalar loop oracle on random tensors") {
  std::mt19937_64 rng(2);
  T64 phi = T64::uniform({2, 3, 4, 3}, rng, -1.0, 1.0);
  T64 f = T64::uniform({2, 3, 4, 3}, rng, -1.0, 1.0);
  auto ha = ProjectionHead<double>::make(3, rng);
  auto hf = ProjectionHead<double>::make(3, rng);
  T64 m = frid::mutual_attention_map(phi, f, ha, hf);
  for (Eigen::Index t = 0; t < 2; ++t)
    for (Eigen::Index y = 0; y < 4; ++y)
      for (Eigen::Index x = 0; x < 3; ++x) {
        double pa = ha.conv.bias.at({0}), pf = hf.conv.bias.at({0});
        for (int c = 0; c < 3; ++c) {
          pa += ha.conv.weight.at({0, c, 0, 0}) * phi.at({t, c, y, x});
          pf += hf.conv.weight.at({0, c, 0, 0}) * f.at({t, c, y, x});
        }
        const double rho = std::max(0.0, pa) * std::max(0.0, pf);
        const double expect = 1.0 / (1.0 + std::exp(-rho));
        CHECK(std::abs(m.at({t, 0, y, x}) - expect) < 1e-10);
      }
}

TEST_CASE("attention map entries stay strictly inside (0,1)") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    T64 phi = T64::uniform({1, 4, 3, 3}, rng, -30.0, 30.0);
    T64 f = T64::uniform({1, 4, 3, 3}, rng, -30.0, 30.0);
    auto ha = ProjectionHead<double>::make(4, rng);
    auto hf = ProjectionHead<double>::make(4, rng);
    T64 m = frid::mutual_attention_map(phi, f, ha, hf);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      CHECK(m.values()[i] > 0.0);
      CHECK(m.values()[i] < 1.0);
      CHECK(std::isfinite(m.values()[i]));
    }
  }
}

TEST_CASE("swapping the streams in the product leaves the map unchanged") {
  std::mt19937_64 rng(4);
  T64 phi = T64::uniform({2, 3, 3, 3}, rng, -1.0, 1.0);
  T64 f = T64::uniform({2, 3, 3, 3}, rng, -1.0, 1.0);
  auto ha = ProjectionHead<double>::make(3, rng);
  auto hf = ProjectionHead<double>::make(3, rng);
  T64 m1 = frid::mutual_attention_map(phi, f, ha, hf);
  // swapped: compute with the operands of the elementwise product exchanged
  T64 rho_swapped = frid::mul(hf(f), ha(phi));
  T64 m2 = frid::sigmoid(rho_swapped);
  for (Eigen::Index i = 0; i < m1.size(); ++i)
    CHECK(m1.values()[i] == m2.values()[i]);
}

TEST_CASE("monotonicity: raising a positive projected activation never "
          "lowers the map") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    T64 phi = T64::uniform({1, 1, 2, 2}, rng, 0.1, 2.0);
    T64 f = T64::uniform({1, 1, 2, 2}, rng, 0.1, 2.0);
    auto ha = zero_head(1);
    ha.conv.weight.set_at({0, 0, 0, 0}, 1.0);
    auto hf = zero_head(1);
    hf.conv.weight.set_at({0, 0, 0, 0}, 1.0);
    T64 before = frid::mutual_attention_map(phi, f, ha, hf);
    phi.mutable_values()[rep % 4] += 0.5;  // raise one positive activation
    T64 after = frid::mutual_attention_map(phi, f, ha, hf);
    for (Eigen::Index i = 0; i < before.size(); ++i)
      CHECK(after.values()[i] >= before.values()[i]);
  }
}

TEST_CASE("apply_mutual_attention gates both streams with the same map") {
  std::mt19937_64 rng(6);
  T64 phi = T64::uniform({2, 3, 2, 2}, rng, -1.0, 1.0);
  T64 f = T64::uniform({2, 3, 2, 2}, rng, -1.0, 1.0);

  SUBCASE("map of ones leaves features unchanged") {
    T64 ones = T64::full({2, 1, 2, 2}, 1.0);
    auto [pa, pf] = frid::apply_mutual_attention(phi, f, ones);
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
      CHECK(pa.values()[i] == phi.values()[i]);
      CHECK(pf.values()[i] == f.values()[i]);
    }
  }
  SUBCASE("map of 0.5 halves both streams") {
    T64 half = T64::full({2, 1, 2, 2}, 0.5);
    auto [pa, pf] = frid::apply_mutual_attention(phi, f, half);
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
      CHECK(pa.values()[i] == doctest::Approx(0.5 * phi.values()[i]));
      CHECK(pf.values()[i] == doctest::Approx(0.5 * f.values()[i]));
    }
  }
  SUBCASE("random map equals the loop oracle") {
    T64 m = T64::uniform({2, 1, 2, 2}, rng, 0.0, 1.0);
    auto [pa, pf] = frid::apply_mutual_attention(phi, f, m);
    for (Eigen::Index t = 0; t < 2; ++t)
      for (Eigen::Index c = 0; c < 3; ++c)
        for (Eigen::Index y = 0; y < 2; ++y)
          for (Eigen::Index x = 0; x < 2; ++x)
            CHECK(pa.at({t, c, y, x}) ==
                  doctest::Approx(phi.at({t, c, y, x}) * m.at({t, 0, y, x})));
  }
  SUBCASE("mismatched map shape fails") {
    T64 bad = T64::full({2, 1, 3, 2}, 1.0);
    CHECK_THROWS_AS(frid::apply_mutual_attention(phi, f, bad),
                    frid::ShapeError);
  }
}

TEST_CASE("shallow flow CNN basics") {
  std::mt19937_64 rng(7);
  auto cnn = frid::ShallowFlowCnn<double>::make(2, rng);

  SUBCASE("zero flow with zero biases gives zero features") {
    T64 zero = T64::zeros({2, 2, 16, 8});
    T64 out = cnn(zero, 4, 2);
    CHECK(out.shape() == Shape{2, 32, 4, 2});
    CHECK(out.values().abs().maxCoeff() == 0.0);
  }
  SUBCASE("a static clip yields time-constant features") {
    T64 one = T64::uniform({1, 2, 16, 8}, rng, -0.5, 0.5);
    typename T64::Storage rep(3 * one.size());
    for (int t = 0; t < 3; ++t)
      rep.segment(t * one.size(), one.size()) = one.values();
    T64 clip = T64::from_storage({3, 2, 16, 8}, rep);
    T64 out = cnn(clip, 4, 2);
    const Eigen::Index per = out.size() / 3;
    for (int t = 1; t < 3; ++t)
      for (Eigen::Index i = 0; i < per; ++i)
        CHECK(out.values()[t * per + i] == out.values()[i]);
  }
}

TEST_CASE("gated attention trivia and oracle") {
  std::mt19937_64 rng(8);
  T64 psi = T64::uniform({2, 4, 3, 2}, rng, -1.0, 1.0);

  SUBCASE("zero flow features halve the image features") {
    T64 ff = T64::zeros({2, 5, 3, 2});
    T64 out = frid::gated_attention(psi, ff);
    for (Eigen::Index i = 0; i < psi.size(); ++i)
      CHECK(out.values()[i] == doctest::Approx(0.5 * psi.values()[i]));
  }
  SUBCASE("constant flow feature k gates uniformly at sigmoid(k)") {
    const double k = 1.7;
    T64 ff = T64::full({2, 5, 3, 2}, k);
    const double gate = 1.0 / (1.0 + std::exp(-k));
    T64 out = frid::gated_attention(psi, ff);
    for (Eigen::Index i = 0; i < psi.size(); ++i)
      CHECK(out.values()[i] ==
            doctest::Approx(gate * psi.values()[i]).epsilon(1e-12));
  }
  SUBCASE("random flow features match the loop oracle") {
    T64 ff = T64::uniform({2, 5, 3, 2}, rng, -1.0, 1.0);
    T64 out = frid::gated_attention(psi, ff);
    for (Eigen::Index t = 0; t < 2; ++t)
      for (Eigen::Index y = 0; y < 3; ++y)
        for (Eigen::Index x = 0; x < 2; ++x) {
          double mean = 0.0;
          for (Eigen::Index c = 0; c < 5; ++c) mean += ff.at({t, c, y, x});
          mean /= 5.0;
          const double a = 1.0 / (1.0 + std::exp(-mean));
          for (Eigen::Index c = 0; c < 4; ++c)
            CHECK(std::abs(out.at({t, c, y, x}) -
                           a * psi.at({t, c, y, x})) < 1e-10);
        }
  }
  SUBCASE("shape mismatch after resize is rejected") {
    T64 ff = T64::zeros({2, 5, 4, 2});
    CHECK_THROWS_AS(frid::gated_attention(psi, ff), frid::ShapeError);
  }
}

TEST_CASE("gradient flows through attention compositions") {
  std::mt19937_64 rng(9);
  T64 phi = T64::uniform({1, 3, 3, 2}, rng, -1.0, 1.0, true);
  T64 f = T64::uniform({1, 3, 3, 2}, rng, -1.0, 1.0, true);
  auto ha = ProjectionHead<double>::make(3, rng);
  auto hf = ProjectionHead<double>::make(3, rng);
  T64 probe = frid::testing::random_probe({1, 3, 3, 2}, rng);
  std::vector<T64*> leaves{&phi, &f, &ha.conv.weight, &ha.conv.bias,
                           &hf.conv.weight, &hf.conv.bias};
  const double err = frid::testing::max_grad_error(leaves, [&] {
    T64 m = frid::mutual_attention_map(phi, f, ha, hf);
    auto [pa, pf] = frid::apply_mutual_attention(phi, f, m);
    return frid::sum_all(frid::mul(probe, frid::add(pa, pf)));
  });
  CHECK(err < 1e-4);
}

TEST_SUITE_END();
