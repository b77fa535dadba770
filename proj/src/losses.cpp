#include "fedccrl/losses.hpp"

#include <cmath>
#include <string>

namespace fedccrl {

void LossWeights::validate() const {
  if (!(tau > 0.0)) throw TensorError("LossWeights: tau must be positive");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw TensorError("LossWeights: lambdas must be >= 0");
}

namespace {

void check_predictions(const Tensor& p, const char* what) {
  if (p.rank() != 2) throw TensorError(std::string(what) + ": expected [B,K]");
  const std::size_t b = p.shape()[0], k = p.shape()[1];
  const auto d = p.data();
  for (std::size_t r = 0; r < b; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += d[r * k + j];
    if (std::fabs(s - 1.0) > 1e-6) {
      throw TensorError(std::string(what) + ": row " + std::to_string(r) +
                        " is not a probability distribution (sum " + std::to_string(s) + ")");
    }
  }
}

// Mean over rows of KL(p || q), both [B,K]; log arguments carry the +1e-12 guard.
Tensor batch_kl(const Tensor& p, const Tensor& q) {
  const double inv_b = 1.0 / static_cast<double>(p.shape()[0]);
  return mul(sum(mul(p, sub(log(p), log(q)))), inv_b);
}

}  // namespace

Tensor sup_contrastive(const Tensor& z_prime, const Tensor& z_second,
                       const std::vector<std::size_t>& y_prime,
                       const std::vector<std::size_t>& y_second, double tau) {
  if (!(tau > 0.0)) throw TensorError("sup_contrastive: tau must be positive");
  if (z_prime.rank() != 2 || z_second.rank() != 2 || z_prime.shape() != z_second.shape()) {
    throw TensorError("sup_contrastive: representation batches must share shape [B,V], got " +
                      shape_to_string(z_prime.shape()) + " and " + shape_to_string(z_second.shape()));
  }
  const std::size_t b = z_prime.shape()[0];
  if (b == 0) throw TensorError("sup_contrastive: empty batch");
  if (y_prime.size() != b || y_second.size() != b) {
    throw TensorError("sup_contrastive: label count does not match batch size");
  }

  const std::size_t n = 2 * b;
  std::vector<std::size_t> labels(y_prime);
  labels.insert(labels.end(), y_second.begin(), y_second.end());

  Tensor z = concat({z_prime, z_second}, 0);  // [2B,V]
  Tensor norms = sqrt(add(sum_last_axis(mul(z, z)), 1e-12));
  Tensor zn = divide(z, norms);
  Tensor sims = mul(matmul(zn, transpose(zn)), 1.0 / tau);  // [2B,2B]

  // Constant masks over the concatenated index set.
  std::vector<double> off_diag(n * n, 1.0);
  std::vector<double> pos_weight(n * n, 0.0);
  std::vector<double> has_pos(n, 0.0);
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    off_diag[i * n + i] = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p != i && labels[p] == labels[i]) ++count;
    }
    if (count == 0) continue;  // contributes zero
    has_pos[i] = 1.0;
    ++anchors;
    const double w = 1.0 / static_cast<double>(count);
    for (std::size_t p = 0; p < n; ++p) {
      if (p != i && labels[p] == labels[i]) pos_weight[i * n + p] = w;
    }
  }
  if (anchors == 0) return Tensor::scalar(0.0);

  // Row-wise log-sum-exp over the off-diagonal entries, stabilized by the
  // detached off-diagonal row max (shifting by a constant is exact).
  std::vector<double> row_max(n, -1e300);
  const auto sd = sims.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p != i) row_max[i] = std::max(row_max[i], sd[i * n + p]);
    }
  }
  Tensor shift = Tensor::from_data({n, 1}, std::move(row_max));
  Tensor masked_exp = mul(exp(sub(sims, shift)), Tensor::from_data({n, n}, std::move(off_diag)));
  Tensor log_denom = add(log(sum_last_axis(masked_exp)), shift);  // [2B,1]

  Tensor positive_term = sum(mul(sims, Tensor::from_data({n, n}, std::move(pos_weight))));
  Tensor denom_term = sum(mul(log_denom, Tensor::from_data({n, 1}, std::move(has_pos))));
  // Mean over contributing anchors, the usual supervised-contrastive
  // reduction; keeps the term on the same scale as the other losses for any
  // batch size.
  return mul(sub(denom_term, positive_term), 1.0 / static_cast<double>(anchors));
}

Tensor representation_alignment(const Tensor& z, const Tensor& z1, const Tensor& z2,
                                const std::vector<std::size_t>& labels, double tau) {
  Tensor a = sup_contrastive(z1, z, labels, labels, tau);
  Tensor b = sup_contrastive(z2, z, labels, labels, tau);
  return mul(add(a, b), 0.5);
}

Tensor js_alignment(const Tensor& yhat, const Tensor& yhat1, const Tensor& yhat2) {
  check_predictions(yhat, "js_alignment");
  check_predictions(yhat1, "js_alignment");
  check_predictions(yhat2, "js_alignment");
  if (yhat.shape() != yhat1.shape() || yhat.shape() != yhat2.shape()) {
    throw TensorError("js_alignment: prediction batches must share shape");
  }
  Tensor mean_pred = mul(add(add(yhat, yhat1), yhat2), 1.0 / 3.0);
  Tensor total = add(add(batch_kl(yhat, mean_pred), batch_kl(yhat1, mean_pred)),
                     batch_kl(yhat2, mean_pred));
  return mul(total, 1.0 / 3.0);
}

Tensor cross_entropy(const Tensor& p, const std::vector<std::size_t>& labels) {
  if (p.rank() != 2) throw TensorError("cross_entropy: expected [B,K]");
  const std::size_t b = p.shape()[0], k = p.shape()[1];
  if (labels.size() != b) throw TensorError("cross_entropy: label count mismatch");
  std::vector<double> one_hot(b * k, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] >= k) {
      throw TensorError("cross_entropy: label " + std::to_string(labels[r]) +
                        " out of range for " + std::to_string(k) + " classes");
    }
    one_hot[r * k + labels[r]] = 1.0;
  }
  const double inv_b = -1.0 / static_cast<double>(b);
  return mul(sum(mul(log(p), Tensor::from_data({b, k}, std::move(one_hot)))), inv_b);
}

Tensor classification_loss(const Tensor& yhat, const Tensor& yhat1, const Tensor& yhat2,
                           const std::vector<std::size_t>& labels) {
  if (yhat.rank() != 2) throw TensorError("classification_loss: expected [B,K]");
  const std::size_t b = yhat.shape()[0], k = yhat.shape()[1];
  if (labels.size() != b) throw TensorError("classification_loss: label count mismatch");
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] >= k) {
      throw TensorError("classification_loss: label " + std::to_string(labels[r]) +
                        " out of range for " + std::to_string(k) + " classes");
    }
  }
  if (yhat.shape() != yhat1.shape() || yhat.shape() != yhat2.shape()) {
    throw TensorError("classification_loss: prediction batches must share shape");
  }
  Tensor total = add(add(cross_entropy(yhat, labels), cross_entropy(yhat1, labels)),
                     cross_entropy(yhat2, labels));
  return mul(total, 1.0 / 3.0);
}

Tensor overall_loss(const BatchTriple& triple, const LossWeights& weights, bool ra_enabled,
                    bool js_enabled) {
  weights.validate();
  Tensor loss = classification_loss(triple.yhat, triple.yhat1, triple.yhat2, triple.labels);
  if (ra_enabled) {
    Tensor ra = representation_alignment(triple.z, triple.z1, triple.z2, triple.labels, weights.tau);
    loss = add(loss, mul(ra, weights.lambda1));
  }
  if (js_enabled) {
    Tensor js = js_alignment(triple.yhat, triple.yhat1, triple.yhat2);
    loss = add(loss, mul(js, weights.lambda2));
  }
  return loss;
}

}  // namespace fedccrl
