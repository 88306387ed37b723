#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "harmoniad/autodiff.hpp"

namespace {

using harmoniad::ad::Tape;
using harmoniad::ad::TapeScope;
using harmoniad::ad::Var;

// d f / d x at x0 by reverse mode.
double reverse_grad(const std::function<Var(Var)>& f, double x0) {
  Tape tape;
  TapeScope scope(tape);
  const Var x = Var::leaf(x0);
  const Var y = f(x);
  return tape.backward(y.id)[static_cast<std::size_t>(x.id)];
}

double central(const std::function<Var(Var)>& f, double x0, double h = 1e-6) {
  Tape tape;
  TapeScope scope(tape);
  return (f(Var(x0 + h)).v - f(Var(x0 - h)).v) / (2.0 * h);
}

TEST(Autodiff, ElementaryDerivativesMatchFiniteDifferences) {
  using namespace harmoniad::ad;
  const std::vector<std::function<Var(Var)>> fs = {
      [](Var x) { return x * x * x; },
      [](Var x) { return Var(2.0) / (x + 3.0); },
      [](Var x) { return exp(x) - log(x + 4.0); },
      [](Var x) { return sqrt(x * x + 1.0); },
      [](Var x) { return sigmoid(x); },
      [](Var x) { return softplus(x); },
      [](Var x) { return silu(x); },
      [](Var x) { return -x * abs(x); },
  };
  for (double x0 : {-1.3, -0.2, 0.4, 2.1}) {
    for (const auto& f : fs) EXPECT_NEAR(reverse_grad(f, x0), central(f, x0), 1e-7) << "x0=" << x0;
  }
}

TEST(Autodiff, ConstantsLeaveNoTrace) {
  Tape tape;
  TapeScope scope(tape);
  const Var a(2.0);
  const Var b = a * 3.0 + harmoniad::ad::exp(a);
  EXPECT_TRUE(b.is_constant());
  EXPECT_EQ(tape.size(), 0);
}

TEST(Autodiff, ReusedNodeAccumulatesAdjoint) {
  Tape tape;
  TapeScope scope(tape);
  const Var x = Var::leaf(1.5);
  const Var y = x * x + x;  // dy/dx = 2x + 1
  EXPECT_DOUBLE_EQ(tape.backward(y.id)[static_cast<std::size_t>(x.id)], 4.0);
}

TEST(Autodiff, NaryNodesMatchScalarChains) {
  Tape tape;
  TapeScope scope(tape);
  std::vector<Var> a, b;
  for (int i = 0; i < 5; ++i) {
    a.push_back(Var::leaf(0.3 * i - 0.5));
    b.push_back(Var::leaf(1.0 - 0.2 * i));
  }
  const Var d = harmoniad::ad::strided_dot(a.data(), 1, b.data(), 1, 5);
  const std::vector<double> g = tape.backward(d.id);
  for (int i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(g[static_cast<std::size_t>(a[i].id)], b[i].v);
    EXPECT_DOUBLE_EQ(g[static_cast<std::size_t>(b[i].id)], a[i].v);
  }
  const std::vector<double> w = {0.5, -1.0, 2.0, 0.0, 3.0};
  const Var ws = harmoniad::ad::weighted_sum(w, a);
  const std::vector<double> gw = tape.backward(ws.id);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(gw[static_cast<std::size_t>(a[i].id)], w[i]);
  const Var s = harmoniad::ad::sum(a);
  const std::vector<double> gs = tape.backward(s.id);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(gs[static_cast<std::size_t>(a[i].id)], 1.0);
}

TEST(Autodiff, MagnitudeHasZeroSubgradientAtOrigin) {
  Tape tape;
  TapeScope scope(tape);
  const Var re = Var::leaf(0.0);
  const Var im = Var::leaf(0.0);
  const Var m = harmoniad::ad::magnitude(re, im);
  const std::vector<double> g = tape.backward(m.id);
  EXPECT_EQ(m.v, 0.0);
  EXPECT_EQ(g[static_cast<std::size_t>(re.id)], 0.0);
  EXPECT_EQ(g[static_cast<std::size_t>(im.id)], 0.0);

  const Var r2 = Var::leaf(3.0);
  const Var i2 = Var::leaf(-4.0);
  const Var m2 = harmoniad::ad::magnitude(r2, i2);
  const std::vector<double> g2 = tape.backward(m2.id);
  EXPECT_DOUBLE_EQ(m2.v, 5.0);
  EXPECT_DOUBLE_EQ(g2[static_cast<std::size_t>(r2.id)], 0.6);
  EXPECT_DOUBLE_EQ(g2[static_cast<std::size_t>(i2.id)], -0.8);
}

TEST(Autodiff, BackwardIntoBufferMatchesAllocatingForm) {
  Tape tape;
  TapeScope scope(tape);
  const Var x = Var::leaf(0.7);
  const Var y = harmoniad::ad::silu(x * 2.0) / (x + 1.0);
  std::vector<double> buffer(3, 42.0);
  tape.backward(y.id, buffer);
  EXPECT_EQ(buffer, tape.backward(y.id));
}

TEST(Autodiff, ArithmeticWithoutTapeThrows) {
  const Var a(1.0, 0);
  EXPECT_THROW((void)(a * a), std::logic_error);
}

TEST(Autodiff, ScopesNestAndRestore) {
  Tape outer;
  Tape inner;
  TapeScope s1(outer);
  {
    TapeScope s2(inner);
    EXPECT_EQ(harmoniad::ad::active_tape(), &inner);
  }
  EXPECT_EQ(harmoniad::ad::active_tape(), &outer);
}

}  // namespace
