#include <doctest.h>

#include <cmath>

#include "fedccrl/losses.hpp"
#include "oracles.hpp"

using namespace fedccrl;
using oracles::random_tensor;

namespace {

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  const std::size_t b = t.shape()[0], v = t.shape()[1];
  std::vector<std::vector<double>> out(b, std::vector<double>(v));
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t c = 0; c < v; ++c) out[r][c] = t.at(r * v + c);
  }
  return out;
}

Tensor random_probs(std::size_t b, std::size_t k, Rng& rng) {
  std::vector<double> data(b * k);
  for (std::size_t r = 0; r < b; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      data[r * k + c] = rng.uniform(0.01, 1.0);
      total += data[r * k + c];
    }
    for (std::size_t c = 0; c < k; ++c) data[r * k + c] /= total;
  }
  return Tensor::from_data({b, k}, std::move(data));
}

Tensor one_hot_rows(std::size_t b, std::size_t k, const std::vector<std::size_t>& classes) {
  std::vector<double> data(b * k, 0.0);
  for (std::size_t r = 0; r < b; ++r) data[r * k + classes[r]] = 1.0;
  return Tensor::from_data({b, k}, std::move(data));
}

}  // namespace

TEST_CASE("single pair with a shared label has zero contrastive loss") {
  Tensor z1 = Tensor::from_data({1, 3}, {1.0, 2.0, 3.0});
  Tensor z2 = Tensor::from_data({1, 3}, {-1.0, 0.5, 2.0});
  Tensor loss = sup_contrastive(z1, z2, {0}, {0}, 0.1);
  CHECK(std::fabs(loss.item()) < 1e-9);
}

TEST_CASE("orthonormal two-class case matches the brute-force oracle") {
  Tensor z = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  const std::vector<std::size_t> y = {0, 1};
  const double expected =
      oracles::sup_contrastive_bruteforce(rows_of(z), rows_of(z), y, y, 0.1);
  CHECK(std::fabs(sup_contrastive(z, z, y, y, 0.1).item() - expected) < 1e-9);
  CHECK(expected > 0.0);
}

TEST_CASE("contrastive loss matches the oracle on random batches") {
  Rng rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t b = 1 + rng.uniform_int(6);
    const std::size_t v = 1 + rng.uniform_int(8);
    Tensor z1 = random_tensor({b, v}, rng);
    Tensor z2 = random_tensor({b, v}, rng);
    std::vector<std::size_t> y1(b), y2(b);
    for (auto& y : y1) y = rng.uniform_int(3);
    for (auto& y : y2) y = rng.uniform_int(3);
    const double tau = rng.uniform(0.05, 1.0);
    const double expected =
        oracles::sup_contrastive_bruteforce(rows_of(z1), rows_of(z2), y1, y2, tau);
    const double actual = sup_contrastive(z1, z2, y1, y2, tau).item();
    CHECK(std::fabs(actual - expected) < 1e-9);
  }
}

TEST_CASE("contrastive loss is invariant to positive rescaling") {
  Rng rng(7);
  Tensor z1 = random_tensor({3, 4}, rng);
  Tensor z2 = random_tensor({3, 4}, rng);
  const std::vector<std::size_t> y = {0, 1, 0};
  const double base = sup_contrastive(z1, z2, y, y, 0.1).item();
  for (double scale : {0.25, 3.0, 40.0}) {
    Tensor s1 = mul(z1, scale);
    Tensor s2 = mul(z2, scale);
    CHECK(std::fabs(sup_contrastive(s1, s2, y, y, 0.1).item() - base) < 1e-9);
  }
}

TEST_CASE("contrastive loss is symmetric under permutations of the items") {
  Rng rng(13);
  Tensor z1 = random_tensor({3, 4}, rng);
  Tensor z2 = random_tensor({3, 4}, rng);
  const std::vector<std::size_t> y1 = {0, 1, 2}, y2 = {2, 1, 0};
  const double a = sup_contrastive(z1, z2, y1, y2, 0.2).item();
  const double b = sup_contrastive(z2, z1, y2, y1, 0.2).item();
  CHECK(a == doctest::Approx(b).epsilon(1e-12));

  // Permuting rows jointly with labels inside one half changes nothing.
  Tensor z1p = index_select(z1, 0, {2, 0, 1});
  const std::vector<std::size_t> y1p = {2, 0, 1};
  CHECK(sup_contrastive(z1p, z2, y1p, y2, 0.2).item() == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("items without positives contribute zero") {
  // Distinct labels everywhere: every P(i) is empty.
  Rng rng(3);
  Tensor z1 = random_tensor({2, 3}, rng);
  Tensor z2 = random_tensor({2, 3}, rng);
  CHECK(sup_contrastive(z1, z2, {0, 1}, {2, 3}, 0.1).item() == 0.0);
  CHECK_THROWS_AS(sup_contrastive(Tensor::zeros({0, 3}), Tensor::zeros({0, 3}), {}, {}, 0.1),
                  TensorError);
}

TEST_CASE("representation alignment averages the two contrastive terms") {
  Rng rng(29);
  Tensor z = random_tensor({3, 4}, rng);
  Tensor z1 = random_tensor({3, 4}, rng);
  Tensor z2 = random_tensor({3, 4}, rng);
  const std::vector<std::size_t> y = {0, 1, 1};

  const double expected = 0.5 * (oracles::sup_contrastive_bruteforce(rows_of(z1), rows_of(z), y, y, 0.1) +
                                 oracles::sup_contrastive_bruteforce(rows_of(z2), rows_of(z), y, y, 0.1));
  CHECK(std::fabs(representation_alignment(z, z1, z2, y, 0.1).item() - expected) < 1e-9);

  // Equal augmented batches collapse to a single term.
  const double collapsed = representation_alignment(z, z1, z1, y, 0.1).item();
  CHECK(collapsed == doctest::Approx(sup_contrastive(z1, z, y, y, 0.1).item()).epsilon(1e-12));
}

TEST_CASE("representation alignment gradient passes finite differences") {
  Rng rng(41);
  const std::vector<std::size_t> y = {0, 1};
  const double err = oracles::max_grad_rel_error(
      [&](const std::vector<Tensor>& in) {
        return representation_alignment(in[0], in[1], in[2], y, 0.1);
      },
      {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
  CHECK(err < 1e-5);
}

TEST_CASE("identical prediction triples have zero JS divergence") {
  Rng rng(5);
  Tensor p = random_probs(4, 5, rng);
  CHECK(std::fabs(js_alignment(p, p, p).item()) < 1e-10);
}

TEST_CASE("disjoint one-hot triples reach log 3") {
  Tensor a = one_hot_rows(2, 5, {0, 1});
  Tensor b = one_hot_rows(2, 5, {2, 3});
  Tensor c = one_hot_rows(2, 5, {4, 0});
  CHECK(js_alignment(a, b, c).item() == doctest::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("JS stays within [0, log 3] and detects bad rows") {
  Rng rng(83);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor a = random_probs(3, 4, rng);
    Tensor b = random_probs(3, 4, rng);
    Tensor c = random_probs(3, 4, rng);
    const double v = js_alignment(a, b, c).item();
    CHECK(v >= -1e-9);
    CHECK(v <= std::log(3.0) + 1e-9);
  }
  Tensor bad = Tensor::from_data({1, 3}, {0.5, 0.2, 0.2});
  Tensor ok = random_probs(1, 3, rng);
  CHECK_THROWS_AS(js_alignment(bad, ok, ok), TensorError);
}

TEST_CASE("JS gradient passes finite differences through softmax") {
  Rng rng(59);
  const double err = oracles::max_grad_rel_error(
      [](const std::vector<Tensor>& in) {
        return js_alignment(softmax(in[0]), softmax(in[1]), softmax(in[2]));
      },
      {random_tensor({2, 4}, rng), random_tensor({2, 4}, rng), random_tensor({2, 4}, rng)});
  CHECK(err < 1e-5);
}

TEST_CASE("classification loss on perfect and uniform predictions") {
  Tensor perfect = one_hot_rows(3, 4, {1, 0, 3});
  CHECK(std::fabs(classification_loss(perfect, perfect, perfect, {1, 0, 3}).item()) < 1e-9);

  Tensor uniform = Tensor::full({3, 4}, 0.25);
  CHECK(classification_loss(uniform, uniform, uniform, {0, 2, 3}).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("classification loss matches a direct -log p computation") {
  Rng rng(661);
  Tensor a = random_probs(4, 3, rng);
  Tensor b = random_probs(4, 3, rng);
  Tensor c = random_probs(4, 3, rng);
  const std::vector<std::size_t> y = {2, 0, 1, 2};
  double expected = 0.0;
  for (const Tensor* t : {&a, &b, &c}) {
    double batch = 0.0;
    for (std::size_t r = 0; r < 4; ++r) batch += -std::log(t->at(r * 3 + y[r]) + 1e-12);
    expected += batch / 4.0;
  }
  expected /= 3.0;
  CHECK(classification_loss(a, b, c, y).item() == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(classification_loss(a, b, c, {2, 0, 1, 3}), TensorError);
}

TEST_CASE("overall loss composes the weighted components") {
  Rng rng(77);
  BatchTriple t;
  t.labels = {0, 1, 2};
  t.z = random_tensor({3, 4}, rng);
  t.z1 = random_tensor({3, 4}, rng);
  t.z2 = random_tensor({3, 4}, rng);
  t.yhat = random_probs(3, 4, rng);
  t.yhat1 = random_probs(3, 4, rng);
  t.yhat2 = random_probs(3, 4, rng);

  LossWeights off{0.0, 0.0, 0.1};
  CHECK(overall_loss(t, off).item() ==
        classification_loss(t.yhat, t.yhat1, t.yhat2, t.labels).item());

  LossWeights paper{0.1, 1.0, 0.1};
  const double expected = classification_loss(t.yhat, t.yhat1, t.yhat2, t.labels).item() +
                          0.1 * representation_alignment(t.z, t.z1, t.z2, t.labels, 0.1).item() +
                          1.0 * js_alignment(t.yhat, t.yhat1, t.yhat2).item();
  CHECK(overall_loss(t, paper).item() == doctest::Approx(expected).epsilon(1e-12));

  // Disabling a term removes exactly that component.
  CHECK(overall_loss(t, paper, false, true).item() ==
        doctest::Approx(expected - 0.1 * representation_alignment(t.z, t.z1, t.z2, t.labels, 0.1).item())
            .epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    BatchTriple f;
    f.labels = {1, 0};
    f.z = random_tensor({2, 3}, rng);
    f.z1 = random_tensor({2, 3}, rng);
    f.z2 = random_tensor({2, 3}, rng);
    f.yhat = random_probs(2, 3, rng);
    f.yhat1 = random_probs(2, 3, rng);
    f.yhat2 = random_probs(2, 3, rng);
    CHECK(std::isfinite(overall_loss(f, paper).item()));
  }
}

TEST_CASE("loss weights validate their ranges") {
  LossWeights bad_tau{0.1, 1.0, 0.0};
  CHECK_THROWS_AS(bad_tau.validate(), TensorError);
  LossWeights bad_lambda{-0.1, 1.0, 0.1};
  CHECK_THROWS_AS(bad_lambda.validate(), TensorError);
}
