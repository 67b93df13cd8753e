#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "cag/autodiff/tensor.hpp"

namespace cag::obj {

struct LossConfig {
  double triplet_margin = 0.2;
  double circle_margin = 0.5;
  double circle_scale = 64.0;
  double lambda_triplet = 0.9;
  double lambda_circle = 0.1;
  double lambda_view = 0.1;

  void validate() const;
};

struct LossValue {
  ad::Tensor value;         // scalar [1]
  bool degenerate = false;  // no valid triplets / pairs in the batch
};

// Batch-all triplet loss per embedding row, averaged over rows.
// embeddings: [B, R, D]; labels: subject index per sequence.
LossValue triplet_loss(const ad::Tensor& embeddings, const std::vector<std::size_t>& labels, double margin);

// Pairwise circle loss on cosine similarities of flattened embeddings.
LossValue circle_loss(const ad::Tensor& embeddings, const std::vector<std::size_t>& labels, double margin,
                      double scale);

// Mean softmax cross-entropy. logits: [B, K].
ad::Tensor view_ce_loss(const ad::Tensor& logits, const std::vector<std::size_t>& labels);

struct LossParts {
  ad::Tensor triplet;
  ad::Tensor circle;
  ad::Tensor view;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// lambda_1 L_tri + lambda_2 L_circle + lambda_3 L_view.
ad::Tensor total_loss(const LossParts& parts, const LossConfig& config);

}  // namespace cag::obj
