#include <gtest/gtest.h>

#include "xtime/gradcheck.hpp"
#include "xtime/layers.hpp"
#include "xtime/tensor.hpp"

using namespace xtime;

TEST(Tensor, ShapeAndDataMismatchThrows) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
}

TEST(Tensor, AddAndMulValues) {
  Tensor a({3}, {1, 2, 3}), b({3}, {4, 5, 6});
  auto c = add(a, b);
  auto d = mul(a, b);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{5, 7, 9}));
  EXPECT_EQ(std::vector<double>(d.data().begin(), d.data().end()), (std::vector<double>{4, 10, 18}));
  EXPECT_THROW(add(a, Tensor({2})), ShapeError);
}

TEST(Tensor, ConcatChannelsOrder) {
  Tensor a({1, 1, 2}, {1, 2}), b({1, 2, 2}, {3, 4, 5, 6});
  auto c = concat_channels({a, b});
  EXPECT_EQ(c.shape(), (Shape{1, 3, 2}));
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(concat_channels({a, Tensor({1, 1, 3})}), ShapeError);
}

TEST(Tensor, BackwardOfSumOfSquares) {
  Tensor x({4}, {1, -2, 3, 0.5}, true);
  Tape tape;
  auto loss = sum(mul(x, x, &tape), &tape);
  backward(loss, tape);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2 * x[i]);
}

TEST(Tensor, BackwardRejectsNonScalarAndReuse) {
  Tensor x({3}, {1, 2, 3}, true);
  Tape t1;
  auto y = scale(x, 2.0, &t1);
  EXPECT_THROW(backward(y, t1), AutodiffError);
  Tape t2;
  auto s = sum(x, &t2);
  backward(s, t2);
  EXPECT_THROW(backward(s, t2), AutodiffError);
}

TEST(Tensor, NoTapeNoRecording) {
  Tensor x({3}, {1, 2, 3}, true);
  Tape tape;
  auto y = add(x, x);
  EXPECT_EQ(tape.size(), 0u);
  Tensor c({3}, {1, 1, 1});
  add(c, c, &tape);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tensor, GradientAccumulatesThroughSharedInput) {
  Tensor x({2}, {3, 4}, true);
  Tape tape;
  auto loss = sum(add(x, scale(x, 3.0, &tape), &tape), &tape);
  backward(loss, tape);
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(GradCheck, SumOfSquares) {
  Tensor x({2, 3}, {0.3, -1.2, 2.0, 0.7, -0.4, 1.5}, true);
  double err = grad_check([](const Tensor& v, Tape* t) { return sum(mul(v, v, t), t); }, x);
  EXPECT_LT(err, 1e-7);
}

TEST(GradCheck, ReluAwayFromKink) {
  Tensor x({5}, {0.5, -0.7, 1.3, -2.0, 0.9}, true);
  double err = grad_check([](const Tensor& v, Tape* t) { return sum(mul(relu(v, t), relu(v, t), t), t); }, x);
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, DetectsWrongGradient) {
  Tensor x({3}, {1.0, 2.0, 3.0}, true);
  auto bad = [](const Tensor& v, Tape* t) {
    Tensor out = sum(mul(v, v, t), t);
    if (t) {
      Tensor vv = v;
      t->record([vv]() { vv.grad()[0] += 1.0; });
    }
    return out;
  };
  EXPECT_GT(grad_check(bad, x), 1e-2);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_NEAR(relative_error(1.0, 1.0 + 1e-9), 5e-10, 1e-12);
}
