#pragma once

#include <cstddef>
#include <vector>

#include "fedccrl/tensor.hpp"

namespace fedccrl {

struct LossWeights {
  double lambda1 = 0.1;  // weight of the representation alignment loss
  double lambda2 = 1.0;  // weight of the prediction alignment loss
  double tau = 0.1;      // contrastive temperature
  void validate() const;
};

/// Original batch plus its two augmented views after encode/classify.
struct BatchTriple {
  Tensor z, z1, z2;           // [B,V]
  Tensor yhat, yhat1, yhat2;  // [B,num_classes], rows sum to 1
  std::vector<std::size_t> labels;
};

/// Supervised contrastive loss over the concatenation of two representation
/// batches. Cosine similarities are scaled by 1/tau; the anchor itself is
/// excluded from the denominator; rows without any same-label positive
/// contribute zero. The outer sum over the 2B items is not normalized.
Tensor sup_contrastive(const Tensor& z_prime, const Tensor& z_second,
                       const std::vector<std::size_t>& y_prime,
                       const std::vector<std::size_t>& y_second, double tau);

/// 0.5 * (L_SC(z1, z) + L_SC(z2, z)); augmentation is label-preserving so the
/// same labels apply to all three batches.
Tensor representation_alignment(const Tensor& z, const Tensor& z1, const Tensor& z2,
                                const std::vector<std::size_t>& labels, double tau);

/// Jensen-Shannon alignment of three prediction batches: mean rowwise KL of
/// each prediction from their average, averaged over the three. In [0, log 3].
Tensor js_alignment(const Tensor& yhat, const Tensor& yhat1, const Tensor& yhat2);

/// Mean rowwise cross-entropy of one prediction batch.
Tensor cross_entropy(const Tensor& yhat, const std::vector<std::size_t>& labels);

/// Mean over the three prediction batches of mean rowwise cross-entropy.
Tensor classification_loss(const Tensor& yhat, const Tensor& yhat1, const Tensor& yhat2,
                           const std::vector<std::size_t>& labels);

/// L = L_CLS + lambda1 * L_RA + lambda2 * L_JS. Disabled terms are skipped
/// entirely rather than multiplied by zero.
Tensor overall_loss(const BatchTriple& triple, const LossWeights& weights, bool ra_enabled = true,
                    bool js_enabled = true);

}  // namespace fedccrl
