#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "cag/autodiff/tape.hpp"
#include "cag/autodiff/tensor.hpp"

// Differentiable operators. Skeleton features use the layout
// [B?, T, N, C]: optional batch, frames, joints, channels.
namespace cag::ad {

enum class Mode { train, eval };

// ---- elementwise (numpy-style broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor broadcast_to(const Tensor& x, const Shape& shape);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
// Drops `axis`, keeping slice `index`.
Tensor select(const Tensor& x, int axis, std::size_t index);
Tensor stack(const std::vector<Tensor>& parts, int axis);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor index_select(const Tensor& x, int axis, const std::vector<std::size_t>& indices);

// ---- linear algebra ----
// a: [..., M, K], b: [..., K, P]; leading dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
// x: [..., C], w: [C, C'] -> [..., C']. Per-position channel mixing.
Tensor conv1x1(const Tensor& x, const Tensor& w);
// x: [..., D_in], w: [D_in, D_out], bias: [D_out] or undefined.
Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& bias);

// ---- depthwise / temporal convolution ----
// x: [B?, T, N, C]; f: [N, C] shared, or [B, N, C] per sequence.
Tensor depthwise_joint_scale(const Tensor& x, const Tensor& f);
// x: [B?, T, N, C]; f: [K, C] (shared over joints), [K, N, C], or
// [B, K, N, C]. K odd, symmetric zero padding; output length
// (T - 1) / stride + 1.
Tensor depthwise_temporal_conv(const Tensor& x, const Tensor& f, std::size_t stride = 1);
// Dense temporal convolution. x: [B?, T, N, C], w: [K, C, C'], bias [C'] or
// undefined.
Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride = 1);
// Keeps frames 0, stride, 2*stride, ...
Tensor temporal_subsample(const Tensor& x, std::size_t stride);

// ---- normalization ----
struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNorm make(std::size_t features);
  std::size_t features() const { return gamma.numel(); }
};

// Normalizes each index along `axis` using statistics over every other axis.
// Train mode uses batch statistics and updates the running estimates.
Tensor batch_norm(const Tensor& x, int axis, BatchNorm& bn, Mode mode);

// Population statistics for every batch norm run in train mode while the
// scope is alive. Batches are merged exactly instead of through the moving
// average; commit() overwrites the running estimates with the result.
class BatchNormCalibration {
 public:
  BatchNormCalibration();
  ~BatchNormCalibration();
  BatchNormCalibration(const BatchNormCalibration&) = delete;
  BatchNormCalibration& operator=(const BatchNormCalibration&) = delete;

  void observe(BatchNorm& bn, const std::vector<double>& mean, const std::vector<double>& sum_sq_dev,
               std::size_t count);
  // Returns the number of batch norms updated.
  std::size_t commit();

 private:
  struct Accumulator {
    Tensor running_mean;
    Tensor running_var;
    std::size_t count = 0;
    std::vector<double> mean;
    std::vector<double> m2;
  };
  std::map<const void*, Accumulator> stats_;
  BatchNormCalibration* previous_;
};

// ---- activations ----
enum class ActivationKind { relu, softmax };
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor activation(const Tensor& x, ActivationKind kind, int axis = -1);

// ---- pooling over [B?, T, N, C] ----
enum class PoolKind { temporal_mean, adaptive_temporal, global_average, temporal_max };
// Contiguous bins; the first T mod T_P bins hold one extra frame.
std::vector<std::pair<std::size_t, std::size_t>> adaptive_bins(std::size_t frames, std::size_t bins);
Tensor adaptive_temporal_pool(const Tensor& x, std::size_t pooled);  // -> [B?, T_P, N, C]
Tensor temporal_mean(const Tensor& x);                               // -> [B?, 1, N, C]
Tensor temporal_max(const Tensor& x);                                // -> [B?, 1, N, C]
Tensor global_average_pool(const Tensor& x);                         // -> [B?, C]
Tensor pool(const Tensor& x, PoolKind kind, std::size_t pooled = 1);

}  // namespace cag::ad
