#include "cag/vatl/vatl.hpp"

#include <stdexcept>

namespace cag::vatl {

using ad::Tensor;

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ad::ShapeError("argmax_rows: expected [B, K], got " + ad::shape_str(logits.shape()));
  const std::size_t b = logits.dim(0);
  const std::size_t k = logits.dim(1);
  const auto v = logits.values();
  std::vector<std::size_t> ids(b, 0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 1; j < k; ++j)
      if (v[i * k + j] > v[i * k + ids[i]]) ids[i] = j;
  return ids;
}

ViewPrediction make_prediction(const Tensor& logits) {
  return {logits, ad::softmax(logits, 1), argmax_rows(logits)};
}

ComposedTopology compose_topology(const ViewPrediction& prediction, const std::vector<Tensor>& topology_set,
                                  const Tensor& fixed, const std::array<double, 3>& weights) {
  if (topology_set.empty()) throw std::invalid_argument("compose_topology: empty topology set");
  const std::size_t views = topology_set.size();
  const ad::Shape& member = topology_set.front().shape();
  if (member != fixed.shape()) {
    throw ad::ShapeError("compose_topology: member shape " + ad::shape_str(member) + " differs from fixed graph " +
                         ad::shape_str(fixed.shape()));
  }
  if (prediction.probs.rank() != 2 || prediction.probs.dim(1) != views) {
    throw ad::ShapeError("compose_topology: probabilities " + ad::shape_str(prediction.probs.shape()) + " for " +
                         std::to_string(views) + " views");
  }
  for (std::size_t id : prediction.ids) {
    if (id >= views) throw std::out_of_range("compose_topology: view id " + std::to_string(id) + " out of range");
  }
  const std::size_t b = prediction.probs.dim(0);
  const std::size_t elems = ad::shape_numel(member);
  ad::Shape batched = member;
  batched.insert(batched.begin(), b);

  const Tensor stacked = ad::stack(topology_set, 0);  // [K_V, K_S, N, N]
  ComposedTopology out;
  out.weights = weights;
  out.g1 = ad::index_select(stacked, 0, prediction.ids);
  // G_1 + sum_i p_i (G_V^i - G_1): equal to sum_i p_i G_V^i, and exact when
  // the members coincide or the prediction is one-hot.
  const Tensor selected = ad::reshape(out.g1, {b, 1, elems});
  const Tensor offsets = ad::sub(ad::broadcast_to(ad::reshape(stacked, {1, views, elems}), {b, views, elems}),
                                 ad::broadcast_to(selected, {b, views, elems}));
  const Tensor mixed = ad::matmul(ad::reshape(prediction.probs, {b, 1, views}), offsets);
  out.g2 = ad::reshape(ad::add(selected, mixed), batched);
  out.g3 = fixed;
  out.composed = ad::add(ad::add(ad::scale(out.g1, weights[0]), ad::scale(out.g2, weights[1])),
                         ad::scale(out.g3, weights[2]));
  return out;
}

Tensor topology_correlation_matrix(const std::vector<Tensor>& topology_set) {
  if (topology_set.empty()) throw std::invalid_argument("topology_correlation_matrix: empty topology set");
  const std::size_t views = topology_set.size();
  std::vector<double> m(views * views, 0.0);
  for (std::size_t i = 0; i < views; ++i)
    for (std::size_t j = i + 1; j < views; ++j) {
      const auto a = topology_set[i].values();
      const auto b = topology_set[j].values();
      if (a.size() != b.size()) throw ad::ShapeError("topology_correlation_matrix: members differ in shape");
      double acc = 0.0;
      for (std::size_t e = 0; e < a.size(); ++e) acc += (a[e] - b[e]) * (a[e] - b[e]);
      m[i * views + j] = m[j * views + i] = acc / static_cast<double>(a.size());
    }
  return Tensor::from({views, views}, std::move(m));
}

ViewTopologyLearner::ViewTopologyLearner(const net::NetworkConfig& config, const graph::SkeletonSpec& spec,
                                         const Tensor& fixed, net::ParameterSet& params, net::Rng& rng)
    : joints_(spec.joint_count),
      in_channels_(config.in_channels),
      weights_(config.topology_weights),
      fixed_(fixed),
      input_bn_(ad::BatchNorm::make(spec.joint_count * config.in_channels)),
      embedding_(spec.joint_count, fixed.dim(0), config.in_channels, config.vatl_width, config.embed_kernel, params,
                 "vatl.embed", net::ParamGroup::vatl, rng) {
  params.add_batch_norm("vatl.input_bn", input_bn_, net::ParamGroup::vatl);
  fc_weight_ = params.add("vatl.fc.weight", net::uniform_init({config.vatl_width, config.views}, config.vatl_width, rng),
                          net::ParamGroup::vatl);
  fc_bias_ = params.add("vatl.fc.bias", net::uniform_init({config.views}, config.vatl_width, rng), net::ParamGroup::vatl);
  for (std::size_t v = 0; v < config.views; ++v) {
    Tensor member = ad::add(fixed, net::uniform_range(fixed.shape(), -0.01, 0.01, rng));
    topology_set_.push_back(
        params.add("vatl.topology." + std::to_string(v), member.detach(), net::ParamGroup::vatl));
  }
}

ViewPrediction ViewTopologyLearner::predict_view(const Tensor& x, ad::Mode mode) {
  if (x.rank() != 4 || x.dim(2) != joints_ || x.dim(3) != in_channels_) {
    throw ad::ShapeError("view classifier: expected [B, T, " + std::to_string(joints_) + ", " +
                         std::to_string(in_channels_) + "], got " + ad::shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t t = x.dim(1);
  Tensor h = ad::reshape(x, {b, t, joints_ * in_channels_});
  h = ad::reshape(ad::batch_norm(h, 2, input_bn_, mode), x.shape());
  h = embedding_.forward(h, fixed_, mode);
  const Tensor logits = ad::fully_connected(ad::global_average_pool(h), fc_weight_, fc_bias_);
  return make_prediction(logits);
}

ComposedTopology ViewTopologyLearner::compose(const ViewPrediction& prediction) const {
  return compose_topology(prediction, topology_set_, fixed_, weights_);
}

}  // namespace cag::vatl
