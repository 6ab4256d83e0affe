#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "mstx/gradcheck.hpp"
#include "mstx/ops.hpp"
#include "mstx/tape.hpp"
#include "mstx/tensor.hpp"
#include "testutil.hpp"

using namespace mstx;
using testutil::random_tensor;

namespace {

// Scalar loss with non-degenerate output gradients: sum(out * w) for a fixed
// random weight tensor.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& out, const Tensor<T>& w) {
  return ops::reduce_sum(ops::multiply(out, w));
}

}  // namespace

TEST_CASE("matmul identity leaves the operand unchanged") {
  TensorD eye = TensorD::from({2, 2}, {1, 0, 0, 1});
  TensorD a = TensorD::from({2, 2}, {3.5, -1.25, 2.0, 7.75});
  TensorD out = ops::matmul(eye, a);
  CHECK(testutil::bitwise_equal(out, a));
}

TEST_CASE("softmax of equal logits is uniform") {
  TensorD out = ops::softmax(TensorD::from({2}, {0, 0}), 0);
  CHECK(out.value()[0] == doctest::Approx(0.5));
  CHECK(out.value()[1] == doctest::Approx(0.5));
}

TEST_CASE("layer_norm hand example: [1, 3] normalizes to [-1, 1]") {
  // mean 2, variance 1, (x - mu) / sqrt(var + eps)
  TensorD gain = TensorD::from({2}, {1, 1});
  TensorD bias = TensorD::from({2}, {0, 0});
  TensorD out = ops::layer_norm(TensorD::from({1, 2}, {1, 3}), gain, bias, 1e-6);
  CHECK(std::abs(out.value()[0] - (-1.0)) < 1e-5);
  CHECK(std::abs(out.value()[1] - 1.0) < 1e-5);
}

TEST_CASE("backward: d(sum(x*x))/dx = 2x") {
  TensorD x = TensorD::from({1}, {3}, true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  TensorD loss = ops::reduce_sum(ops::multiply(x, x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: sum(matmul(A, B)) with 2x2 ones gives all-2 gradients") {
  TensorD a = TensorD::full({2, 2}, 1.0, true);
  TensorD b = TensorD::full({2, 2}, 1.0, true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  tape.backward(ops::reduce_sum(ops::matmul(a, b)));
  for (double g : a.grad()) CHECK(g == doctest::Approx(2.0));
  for (double g : b.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("constant leaves receive no gradient") {
  TensorD x = TensorD::from({2}, {1, 2}, true);
  TensorD c = TensorD::from({2}, {5, 5});  // requires_grad = false
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  tape.backward(ops::reduce_sum(ops::multiply(x, c)));
  CHECK(x.has_grad());
  CHECK_FALSE(c.has_grad());
}

TEST_CASE("backward twice without re-forward is an error") {
  TensorD x = TensorD::from({2}, {1, 2}, true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  TensorD loss = ops::reduce_sum(ops::multiply(x, x));
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), NumericError);
}

TEST_CASE("non-scalar loss is rejected") {
  TensorD x = TensorD::from({2}, {1, 2}, true);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  TensorD y = ops::multiply(x, x);
  CHECK_THROWS_AS(tape.backward(y), NumericError);
}

TEST_CASE("shape mismatch errors name the primitive and both shapes") {
  TensorD a = TensorD::zeros({2, 3});
  TensorD b = TensorD::zeros({4, 2});
  try {
    ops::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::softmax(a, 5), ShapeError);
}

TEST_CASE("tape records operations in topological order") {
  TensorD x = TensorD::from({2}, {1, 2}, true);
  TensorD w = TensorD::from({2}, {3, 4});
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  TensorD y = ops::multiply(x, w);
  TensorD z = ops::add(y, x);
  (void)ops::reduce_sum(z);
  REQUIRE(tape.num_ops() == 3);
  // Every op's inputs must be leaves or outputs of strictly earlier ops.
  for (std::size_t i = 0; i < tape.num_ops(); ++i) {
    for (const auto& input : tape.op(i).inputs) {
      for (std::size_t j = i; j < tape.num_ops(); ++j) {
        CHECK_FALSE(input.same_node(tape.op(j).output));
      }
    }
  }
}

TEST_CASE("grad_check: quadratic loss matches central differences tightly") {
  TensorD x = TensorD::from({3}, {1, 2, 3}, true);
  std::vector<TensorD> params{x};
  auto loss = [&]() { return ops::reduce_sum(ops::multiply(x, x)); };
  const double err = grad_check<double>(loss, params, 1e-4);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check: frozen parameters are skipped") {
  TensorD x = TensorD::from({2}, {1, 2}, true);
  TensorD frozen = TensorD::from({2}, {3, 4});
  std::vector<TensorD> params{x, frozen};
  auto loss = [&]() { return ops::reduce_sum(ops::multiply(x, frozen)); };
  GradCheckReport<double> report = grad_check_report<double>(loss, params, 1e-5);
  CHECK(report.checked_elements == 2);  // only x's elements
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("gradient accumulation: two uses sum their contributions") {
  Rng rng(7);
  TensorD c1 = random_tensor<double>({4}, rng);
  TensorD c2 = random_tensor<double>({4}, rng);

  auto grad_for = [&](bool use_both) {
    TensorD x = TensorD::from({4}, {0.5, -1.0, 2.0, 0.25}, true);
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    TensorD loss = ops::reduce_sum(ops::multiply(x, c1));
    if (use_both) {
      loss = ops::add(loss, ops::reduce_sum(ops::multiply(x, c2)));
    }
    tape.backward(loss);
    auto g = x.grad();
    return std::vector<double>(g.begin(), g.end());
  };

  auto both = grad_for(true);
  // Single-use gradients, computed separately.
  std::vector<double> expect(4);
  for (std::size_t i = 0; i < 4; ++i) expect[i] = c1.value()[i] + c2.value()[i];
  for (std::size_t i = 0; i < 4; ++i) CHECK(both[i] == doctest::Approx(expect[i]));
}

TEST_CASE("softmax rows are non-negative and sum to one") {
  Rng rng(11);
  for (int iter = 0; iter < 20; ++iter) {
    const std::size_t n = 2 + rng.uniform_int(6);
    const std::size_t m = 1 + rng.uniform_int(4);
    TensorF x = random_tensor<float>({m, n}, rng, false, -5.0, 5.0);
    TensorF y = ops::softmax(x, 1);
    for (std::size_t r = 0; r < m; ++r) {
      double sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const float v = y.value()[r * n + j];
        CHECK(v >= 0.0f);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("dropout: rate 0 is the identity; masked_fill blocks gradient") {
  Rng rng(3);
  TensorD x = random_tensor<double>({3, 4}, rng, true);
  TensorD same = ops::dropout(x, 0.0, rng);
  CHECK(same.same_node(x));

  Mask m = Mask::zeros({3, 4});
  m.data[1] = 1;
  m.data[7] = 1;
  TensorD w = random_tensor<double>({3, 4}, rng);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  TensorD y = ops::masked_fill(x, m, -1e9);
  tape.backward(weighted_sum(y, w));
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[7] == 0.0);
  CHECK(x.grad()[0] != 0.0);
}

TEST_CASE("dropout scales kept values by 1/(1-rate) and drops the rest") {
  Rng rng(5);
  TensorD x = TensorD::full({1000}, 1.0);
  TensorD y = ops::dropout(x, 0.25, rng);
  std::size_t kept = 0;
  for (double v : y.value()) {
    if (v != 0.0) {
      CHECK(v == doctest::Approx(1.0 / 0.75));
      ++kept;
    }
  }
  CHECK(kept > 600);
  CHECK(kept < 900);
}

// Every primitive's backward rule against central finite differences in
// double precision, over randomized shapes. Inputs are kept away from
// kink/tie points (relu at 0, equal softmax logits) by the random draw.
TEST_CASE("property: primitive gradients match finite differences") {
  Rng rng(12345);
  const double eps = 1e-5;
  const double tol = 1e-5;
  int cases = 0;

  auto run = [&](const std::string& name, std::vector<TensorD> params,
                 const std::function<TensorD()>& loss) {
    const double err = grad_check<double>(loss, params, eps);
    INFO("op " << name << " iteration " << cases << " rel error " << err);
    CHECK(err < tol);
    ++cases;
  };

  for (int iter = 0; iter < 10; ++iter) {
    const std::size_t m = 1 + rng.uniform_int(4);
    const std::size_t k = 1 + rng.uniform_int(4);
    const std::size_t n = 1 + rng.uniform_int(4);
    const std::size_t b = 1 + rng.uniform_int(3);

    {
      TensorD a = random_tensor<double>({m, k}, rng, true);
      TensorD bb = random_tensor<double>({k, n}, rng, true);
      TensorD w = random_tensor<double>({m, n}, rng);
      run("matmul", {a, bb}, [=]() { return weighted_sum(ops::matmul(a, bb), w); });
    }
    {
      TensorD a = random_tensor<double>({b, m, k}, rng, true);
      TensorD bb = random_tensor<double>({b, k, n}, rng, true);
      TensorD w = random_tensor<double>({b, m, n}, rng);
      run("matmul.batched", {a, bb}, [=]() { return weighted_sum(ops::matmul(a, bb), w); });
    }
    {
      TensorD a = random_tensor<double>({b, m, n}, rng, true);
      TensorD bias = random_tensor<double>({n}, rng, true);
      TensorD w = random_tensor<double>({b, m, n}, rng);
      run("add.broadcast", {a, bias}, [=]() { return weighted_sum(ops::add(a, bias), w); });
      run("multiply.broadcast", {a, bias},
          [=]() { return weighted_sum(ops::multiply(a, bias), w); });
    }
    {
      TensorD a = random_tensor<double>({m, n}, rng, true);
      TensorD w = random_tensor<double>({n, m}, rng);
      run("transpose", {a}, [=]() { return weighted_sum(ops::transpose(a, 0, 1), w); });
      TensorD w2 = random_tensor<double>({m * n}, rng);
      run("reshape", {a}, [=]() { return weighted_sum(ops::reshape(a, {m * n}), w2); });
      run("scale", {a}, [=]() {
        return weighted_sum(ops::scale(a, 0.37), ops::reshape(w, {m, n}));
      });
      run("relu", {a}, [=]() { return weighted_sum(ops::relu(a), ops::reshape(w, {m, n})); });
    }
    {
      const std::size_t axis = rng.uniform_int(2);
      TensorD a = random_tensor<double>({m, n + 1}, rng, true);
      TensorD w = random_tensor<double>({m, n + 1}, rng);
      run("softmax", {a}, [=]() { return weighted_sum(ops::softmax(a, axis), w); });
      run("log_softmax", {a}, [=]() { return weighted_sum(ops::log_softmax(a, axis), w); });
    }
    {
      // Width >= 4: the two-element row is a degenerate case whose input
      // gradient is ~0 everywhere (it normalizes to +-1 regardless), which
      // the relative-error metric cannot grade meaningfully.
      const std::size_t d = 4 + 2 * rng.uniform_int(3);
      TensorD a = random_tensor<double>({m, d}, rng, true);
      TensorD gain = random_tensor<double>({d}, rng, true, 0.5, 1.5);
      TensorD bias = random_tensor<double>({d}, rng, true);
      TensorD w = random_tensor<double>({m, d}, rng);
      run("layer_norm", {a, gain, bias},
          [=]() { return weighted_sum(ops::layer_norm(a, gain, bias, 1e-6), w); });
    }
    {
      TensorD a = random_tensor<double>({m, n}, rng, true);
      TensorD bb2 = random_tensor<double>({m, n}, rng, true);
      TensorD c = random_tensor<double>({m, n}, rng, true);
      TensorD w = random_tensor<double>({3 * m, n}, rng);
      std::vector<TensorD> parts{a, bb2, c};
      run("concat", parts, [=]() {
        std::vector<TensorD> ps{a, bb2, c};
        return weighted_sum(ops::concat<double>(ps, 0), w);
      });
      TensorD w3 = random_tensor<double>({m, n}, rng);
      run("ordered_sum", parts, [=]() {
        std::vector<TensorD> ps{a, bb2, c};
        return weighted_sum(ops::ordered_sum<double>(ps), w3);
      });
    }
    {
      TensorD a = random_tensor<double>({m, 2 * n}, rng, true);
      TensorD w = random_tensor<double>({m, n}, rng);
      run("split", {a}, [=]() {
        auto parts = ops::split(a, 2, 1);
        return ops::add(weighted_sum(parts[0], w), weighted_sum(parts[1], w));
      });
    }
    {
      const std::size_t vocab = 4 + rng.uniform_int(4);
      TensorD table = random_tensor<double>({vocab, k}, rng, true);
      std::vector<std::int32_t> ids(m * n);
      for (auto& id : ids) id = static_cast<std::int32_t>(rng.uniform_int(vocab));
      TensorD w = random_tensor<double>({m, n, k}, rng);
      run("embedding_lookup", {table}, [=]() {
        return weighted_sum(ops::embedding_lookup(table, ids, {m, n}), w);
      });

      TensorD logits = random_tensor<double>({m, vocab}, rng, true);
      std::vector<std::int32_t> picks(m);
      for (auto& p : picks) p = static_cast<std::int32_t>(rng.uniform_int(vocab));
      TensorD wp = random_tensor<double>({m}, rng);
      run("gather_last", {logits},
          [=]() { return weighted_sum(ops::gather_last(logits, picks), wp); });
    }
    {
      TensorD a = random_tensor<double>({m, n}, rng, true);
      Mask mask = Mask::zeros({m, n});
      for (auto& cell : mask.data) cell = rng.bernoulli(0.3) ? 1 : 0;
      TensorD w = random_tensor<double>({m, n}, rng);
      run("masked_fill", {a},
          [=]() { return weighted_sum(ops::masked_fill(a, mask, 2.5), w); });
      run("reduce_sum", {a}, [=]() { return ops::reduce_sum(a); });
      run("reduce_mean", {a}, [=]() { return ops::reduce_mean(a); });
    }
    {
      TensorD a = random_tensor<double>({m, n}, rng, true);
      TensorD w = random_tensor<double>({m, n}, rng);
      const std::uint64_t mask_seed = rng.next_u64();
      run("dropout", {a}, [=]() {
        Rng fixed(mask_seed);  // same mask on every closure call
        return weighted_sum(ops::dropout(a, 0.3, fixed), w);
      });
    }
  }
  CHECK(cases >= 100);
}
