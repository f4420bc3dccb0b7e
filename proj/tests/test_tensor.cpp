#include <doctest.h>

#include <cmath>
#include <vector>

#include "fd_harness.hpp"
#include "tarnet/errors.hpp"
#include "tarnet/tensor.hpp"

using namespace tarnet;

TEST_CASE("tensor: construction enforces shape invariants") {
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), UsageError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), UsageError);
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("tensor: softmax of equal values is uniform") {
  Tape tape;
  Tensor x = Tensor::from({3}, {0.4, 0.4, 0.4});
  Tensor y = ops::softmax(tape, x);
  for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("tensor: relu definition") {
  Tape tape;
  Tensor x = Tensor::from({2}, {-2.0, 3.5});
  Tensor y = ops::relu(tape, x);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == 3.5);
}

TEST_CASE("tensor: matmul matches a triple-loop oracle") {
  Rng rng(11);
  Tensor a = fd::random_tensor({2, 3}, rng);
  Tensor b = fd::random_tensor({3, 4}, rng);
  Tape tape(Tape::Mode::kNoGrad);
  Tensor c = ops::matmul(tape, a, b);
  REQUIRE(c.shape() == std::vector<int64_t>{2, 4});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) {
      double want = 0.0;
      for (int k = 0; k < 3; ++k) want += a.at(i * 3 + k) * b.at(k * 4 + j);
      CHECK(c.at(i * 4 + j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("tensor: matmul shape mismatch names the op") {
  Tape tape;
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(ops::matmul(tape, a, b),
                       doctest::Contains("matmul"), ConfigError);
}

TEST_CASE("tensor: backward requires a scalar") {
  Tape tape;
  Tensor x = Tensor::zeros({2, 2}, true);
  Tensor y = ops::relu(tape, x);
  CHECK_THROWS_AS(tape.backward(y), UsageError);
}

TEST_CASE("tensor: grad of sum is all ones") {
  Tape tape;
  Rng rng(3);
  Tensor x = fd::random_tensor({4, 5}, rng);
  Tensor s = ops::sum_all(tape, x);
  tape.backward(s);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 1.0);
}

TEST_CASE("tensor: grad of sum(x*x) is 2x") {
  Tape tape;
  Rng rng(4);
  Tensor x = fd::random_tensor({7}, rng);
  Tensor s = ops::sum_all(tape, ops::mul(tape, x, x));
  tape.backward(s);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.at(i)).epsilon(1e-12));
}

TEST_CASE("tensor: fan-out accumulates like a duplicated input") {
  Rng rng(5);
  const std::vector<double> vals = {0.3, -0.7, 1.1, 0.2, -0.4};

  // y = sum(x * x2) with x fanned out twice
  Tensor x = Tensor::from({5}, vals, true);
  {
    Tape tape;
    Tensor y = ops::sum_all(tape, ops::mul(tape, ops::scalar_mul(tape, x, 2.0),
                                           ops::scalar_add(tape, x, 1.0)));
    tape.backward(y);
  }

  // Same formula with two independent copies; total grad must match the sum
  // of both copies' grads.
  Tensor xa = Tensor::from({5}, vals, true);
  Tensor xb = Tensor::from({5}, vals, true);
  {
    Tape tape;
    Tensor y = ops::sum_all(tape, ops::mul(tape, ops::scalar_mul(tape, xa, 2.0),
                                           ops::scalar_add(tape, xb, 1.0)));
    tape.backward(y);
  }
  for (int i = 0; i < 5; ++i)
    CHECK(x.grad()[i] == doctest::Approx(xa.grad()[i] + xb.grad()[i]).epsilon(1e-12));
}

TEST_CASE("tensor: composite graph gradient matches finite differences") {
  Rng rng(6);
  std::vector<Tensor> inputs = {fd::random_tensor({5}, rng)};
  const double err = fd::max_rel_err(
      [](Tape& t, std::vector<Tensor>& in) {
        Tensor h = ops::tanh(t, ops::scalar_mul(t, in[0], 0.8));
        h = ops::add(t, h, ops::relu(t, in[0]));
        Tensor m = ops::reshape(t, h, {1, 5});
        Tensor sm = ops::softmax_cols(t, m);
        return ops::sum_all(t, ops::mul(t, sm, ops::exp(t, m)));
      },
      inputs);
  CHECK(err < 1e-4);
}

TEST_CASE("tensor: every primitive op passes a finite-difference check") {
  Rng rng(7);
  auto fixed = [&rng](std::vector<int64_t> shape) {
    return fd::random_tensor(std::move(shape), rng, -1.0, 1.0, false);
  };
  auto weighted = [](Tape& t, const Tensor& x, const Tensor& w) {
    return ops::sum_all(t, ops::mul(t, x, w));
  };

  struct Case {
    const char* name;
    fd::Graph graph;
    std::vector<Tensor> inputs;
  };
  Tensor w34 = fixed({3, 4});
  Tensor w43 = fixed({4, 3});
  Tensor w25 = fixed({2, 5});
  Tensor w3 = fixed({3});
  Tensor w7 = fixed({7, 4});

  std::vector<Case> cases;
  cases.push_back({"add",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::add(t, in[0], in[1]), w34);
                   },
                   {fd::random_tensor({3, 4}, rng), fd::random_tensor({3, 4}, rng)}});
  cases.push_back({"sub",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::sub(t, in[0], in[1]), w34);
                   },
                   {fd::random_tensor({3, 4}, rng), fd::random_tensor({3, 4}, rng)}});
  cases.push_back({"mul+neg",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::mul(t, in[0], ops::neg(t, in[1])), w34);
                   },
                   {fd::random_tensor({3, 4}, rng), fd::random_tensor({3, 4}, rng)}});
  cases.push_back({"sadd+smul",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::smul(t, ops::sadd(t, in[0], in[1]), in[2]), w34);
                   },
                   {fd::random_tensor({3, 4}, rng), fd::random_tensor({1}, rng),
                    fd::random_tensor({1}, rng)}});
  cases.push_back({"row_add+row_mul",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(
                         t, ops::row_mul(t, ops::row_add(t, in[0], in[1]), in[2]), w34);
                   },
                   {fd::random_tensor({3, 4}, rng), fd::random_tensor({3}, rng),
                    fd::random_tensor({3}, rng)}});
  cases.push_back({"tile_cols",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::tile_cols(t, in[0], 4), w34);
                   },
                   {fd::random_tensor({3}, rng)}});
  cases.push_back({"matmul",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::matmul(t, in[0], in[1]), w25);
                   },
                   {fd::random_tensor({2, 3}, rng), fd::random_tensor({3, 5}, rng)}});
  cases.push_back({"matmul_vec",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::matmul(t, in[0], in[1]), w3);
                   },
                   {fd::random_tensor({3, 4}, rng), fd::random_tensor({4}, rng)}});
  cases.push_back({"conv1x1",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::conv1x1(t, in[0], in[1], in[2]), w25);
                   },
                   {fd::random_tensor({2, 3}, rng), fd::random_tensor({3, 5}, rng),
                    fd::random_tensor({2}, rng)}});
  cases.push_back({"concat0+slice",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     Tensor cat = ops::concat(t, {in[0], in[1]}, 0);  // {7,4}
                     return weighted(t, ops::slice(t, cat, 0, 1, 4),
                                     ops::slice(t, w7, 0, 0, 3));
                   },
                   {fd::random_tensor({3, 4}, rng), fd::random_tensor({4, 4}, rng)}});
  cases.push_back({"concat1",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::concat(t, {in[0], in[1]}, 1), w25);
                   },
                   {fd::random_tensor({2, 2}, rng), fd::random_tensor({2, 3}, rng)}});
  cases.push_back({"reshape+transpose",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     Tensor r = ops::reshape(t, in[0], {4, 3});
                     return weighted(t, ops::transpose(t, r), w34);
                   },
                   {fd::random_tensor({12}, rng)}});
  cases.push_back({"exp+log+sqrt+reciprocal",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     Tensor pos = ops::scalar_add(t, ops::exp(t, in[0]), 0.5);
                     Tensor mix = ops::add(t, ops::log(t, pos),
                                           ops::reciprocal(t, ops::sqrt(t, pos)));
                     return weighted(t, mix, w34);
                   },
                   {fd::random_tensor({3, 4}, rng)}});
  cases.push_back({"tanh+relu+clamp_min",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     Tensor h = ops::add(t, ops::tanh(t, in[0]),
                                         ops::clamp_min(t, ops::relu(t, in[0]), 0.05));
                     return weighted(t, h, w34);
                   },
                   {fd::random_tensor({3, 4}, rng, 0.2, 1.5)}});
  cases.push_back({"prelu",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::prelu(t, in[0], in[1]), w34);
                   },
                   {fd::random_tensor({3, 4}, rng, -2.0, -0.2),
                    fd::random_tensor({3}, rng, 0.1, 0.5)}});
  cases.push_back({"softmax_cols",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::softmax_cols(t, in[0]), w34);
                   },
                   {fd::random_tensor({3, 4}, rng)}});
  cases.push_back({"reductions",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     Tensor parts = ops::concat(
                         t,
                         {ops::sum_cols(t, in[0]), ops::mean_cols(t, in[0]),
                          ops::var_cols(t, in[0])},
                         0);
                     Tensor v = ops::sum_all(t, ops::mul(t, parts, parts));
                     return ops::add(t, v, ops::mean_all(t, in[0]));
                   },
                   {fd::random_tensor({3, 4}, rng)}});
  cases.push_back({"amax_cols",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::amax_cols(t, in[0]), w3);
                   },
                   {fd::random_tensor({3, 4}, rng)}});
  cases.push_back({"depthwise_conv",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::depthwise_conv(t, in[0], in[1], in[2], 2),
                                     w34);
                   },
                   {fd::random_tensor({3, 4}, rng), fd::random_tensor({3, 3}, rng),
                    fd::random_tensor({3}, rng)}});
  cases.push_back({"gln_norm",
                   [=](Tape& t, std::vector<Tensor>& in) {
                     return weighted(t, ops::gln_norm(t, in[0], 1e-8), w34);
                   },
                   {fd::random_tensor({3, 4}, rng)}});
  cases.push_back({"cross_entropy",
                   [](Tape& t, std::vector<Tensor>& in) {
                     return ops::cross_entropy(t, in[0], 2);
                   },
                   {fd::random_tensor({5}, rng)}});

  for (auto& c : cases) {
    CAPTURE(c.name);
    CHECK(fd::max_rel_err(c.graph, c.inputs) < 1e-4);
  }
}

TEST_CASE("tensor: reshape/transpose round-trip is bit exact") {
  Rng rng(9);
  Tensor x = fd::random_tensor({5, 7}, rng, -3.0, 3.0, false);
  Tape tape(Tape::Mode::kNoGrad);
  Tensor back = ops::transpose(tape, ops::transpose(tape, x));
  Tensor back2 = ops::reshape(tape, ops::reshape(tape, x, {35}), {5, 7});
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(back.at(i) == x.at(i));
    CHECK(back2.at(i) == x.at(i));
  }
}

TEST_CASE("tensor: ops never mutate their operands") {
  Rng rng(10);
  Tensor x = fd::random_tensor({3, 4}, rng);
  const std::vector<double> snapshot(x.data(), x.data() + x.numel());
  Tape tape;
  Tensor y = ops::relu(tape, ops::scalar_mul(tape, x, -2.0));
  Tensor z = ops::gln_norm(tape, x, 1e-8);
  tape.backward(ops::sum_all(tape, ops::add(tape, y, z)));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.at(i) == snapshot[i]);
}

TEST_CASE("tensor: no-grad tape records nothing") {
  Tape tape(Tape::Mode::kNoGrad);
  Tensor x = Tensor::zeros({2, 2}, true);
  ops::relu(tape, x);
  CHECK(tape.size() == 0);
}

TEST_CASE("tensor: cross_entropy rejects out-of-range labels") {
  Tape tape;
  Tensor logits = Tensor::zeros({3});
  CHECK_THROWS_AS(ops::cross_entropy(tape, logits, 3), DataError);
  CHECK_THROWS_AS(ops::cross_entropy(tape, logits, -1), DataError);
}
