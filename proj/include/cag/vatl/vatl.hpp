#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "cag/autodiff/ops.hpp"
#include "cag/graph/skeleton.hpp"
#include "cag/network/blocks.hpp"
#include "cag/network/config.hpp"
#include "cag/network/params.hpp"

namespace cag::vatl {

struct ViewPrediction {
  ad::Tensor logits;              // [B, K_V]
  ad::Tensor probs;               // softmax of logits
  std::vector<std::size_t> ids;   // argmax per row, ties to the lowest index
};

struct ComposedTopology {
  ad::Tensor g1;        // [B, K_S, N, N] selected member
  ad::Tensor g2;        // [B, K_S, N, N] probability-weighted mixture
  ad::Tensor g3;        // [K_S, N, N] fixed graph
  ad::Tensor composed;  // g_1 G_1 + g_2 G_2 + g_3 G_3
  std::array<double, 3> weights{};
};

std::vector<std::size_t> argmax_rows(const ad::Tensor& logits);
ViewPrediction make_prediction(const ad::Tensor& logits);

ComposedTopology compose_topology(const ViewPrediction& prediction, const std::vector<ad::Tensor>& topology_set,
                                  const ad::Tensor& fixed, const std::array<double, 3>& weights);

// Entry (i, j): mean squared difference between members i and j.
ad::Tensor topology_correlation_matrix(const std::vector<ad::Tensor>& topology_set);

// View classifier plus the learnable per-view topology set.
class ViewTopologyLearner {
 public:
  ViewTopologyLearner(const net::NetworkConfig& config, const graph::SkeletonSpec& spec, const ad::Tensor& fixed,
                      net::ParameterSet& params, net::Rng& rng);

  // Raw coordinates [B, T, N, C_in] -> logits over K_V views.
  ViewPrediction predict_view(const ad::Tensor& x, ad::Mode mode);
  ComposedTopology compose(const ViewPrediction& prediction) const;

  const std::vector<ad::Tensor>& topology_set() const { return topology_set_; }
  const ad::Tensor& fixed() const { return fixed_; }

 private:
  std::size_t joints_;
  std::size_t in_channels_;
  std::array<double, 3> weights_;
  ad::Tensor fixed_;
  ad::BatchNorm input_bn_;
  net::EmbeddingBlock embedding_;
  ad::Tensor fc_weight_;
  ad::Tensor fc_bias_;
  std::vector<ad::Tensor> topology_set_;
};

}  // namespace cag::vatl
