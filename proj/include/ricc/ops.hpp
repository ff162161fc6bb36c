#pragma once

// Differentiable tensor operations. Spatial ops use NCHW layout.

#include <vector>

#include "ricc/tensor.hpp"

namespace ricc {

inline constexpr double kLeakySlope = 0.3;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;

// Cross-correlation. weight is [F, C, k, k] with odd k; bias is [F] or undefined.
template <typename Real>
BasicTensor<Real> conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                         const BasicTensor<Real>& bias, int stride, int pad);

// Linear adjoint of conv2d. weight is [C_in, C_out, k, k] (the conv2d weight of
// the forward map C_out -> C_in). Output side is stride * input side.
template <typename Real>
BasicTensor<Real> transpose_conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                                   const BasicTensor<Real>& bias, int stride, int pad);

// max(slope * x, x); the derivative at exactly 0 is taken as 1.
template <typename Real>
BasicTensor<Real> leaky_relu(const BasicTensor<Real>& x, double slope = kLeakySlope);

enum class BnMode { train, eval };

// Per-channel normalization. In train mode the batch statistics (biased
// variance) are used and the running buffers are updated in place:
// running = momentum * running + (1 - momentum) * batch.
template <typename Real>
BasicTensor<Real> batch_norm(const BasicTensor<Real>& x, const BasicTensor<Real>& gamma,
                             const BasicTensor<Real>& beta, BasicTensor<Real>& running_mean,
                             BasicTensor<Real>& running_var, BnMode mode,
                             double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

// 2x2 window, stride 2. Ties route the gradient to the first element in
// row-major order.
template <typename Real>
BasicTensor<Real> max_pool2(const BasicTensor<Real>& x);

// Non-overlapping k x k average (area downsampling).
template <typename Real>
BasicTensor<Real> avg_pool(const BasicTensor<Real>& x, int k);

// Repeats every pixel into a k x k block; adjoint of k*k * avg_pool.
template <typename Real>
BasicTensor<Real> upsample_nearest(const BasicTensor<Real>& x, int k);

// y + x where x contributes its first min(C_x, C_y) channels; the skip path.
template <typename Real>
BasicTensor<Real> add_skip(const BasicTensor<Real>& y, const BasicTensor<Real>& x);

// Bilinear rotation of every sample about the image center (counter-clockwise
// for positive angles in image coordinates with rows growing downward).
// Linear in x, so it is differentiable; out-of-support samples read `fill`.
template <typename Real>
BasicTensor<Real> rotate_batch(const BasicTensor<Real>& x, double angle_deg, double fill = 0.0);

// Elementwise.
template <typename Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
BasicTensor<Real> sub(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
BasicTensor<Real> div(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
BasicTensor<Real> scale(const BasicTensor<Real>& a, double s);
template <typename Real>
BasicTensor<Real> add_scalar(const BasicTensor<Real>& a, double s);
template <typename Real>
BasicTensor<Real> square(const BasicTensor<Real>& a);

// Reductions. sum returns shape {1}; the per-sample forms return {N}.
template <typename Real>
BasicTensor<Real> sum(const BasicTensor<Real>& a);
template <typename Real>
BasicTensor<Real> sum_per_sample(const BasicTensor<Real>& a);
template <typename Real>
BasicTensor<Real> mean_per_sample(const BasicTensor<Real>& a);
// {N} -> shape, repeating v[n] over sample n.
template <typename Real>
BasicTensor<Real> broadcast_per_sample(const BasicTensor<Real>& v, const Shape& shape);
// sum over all but dim 0 of (a - b)^2 and |a - b|.
template <typename Real>
BasicTensor<Real> sq_dist_per_sample(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
BasicTensor<Real> abs_dist_per_sample(const BasicTensor<Real>& a, const BasicTensor<Real>& b);

// For each sample n, the smallest candidates[r][n]; the gradient flows to the
// selected entry only (ties: lowest r). `chosen`, when given, receives r.
template <typename Real>
BasicTensor<Real> select_min(const std::vector<BasicTensor<Real>>& candidates,
                             std::vector<std::size_t>* chosen = nullptr);

// Batch-dimension plumbing.
template <typename Real>
BasicTensor<Real> concat_batch(const std::vector<BasicTensor<Real>>& parts);
template <typename Real>
BasicTensor<Real> slice_batch(const BasicTensor<Real>& x, std::size_t begin, std::size_t end);
template <typename Real>
BasicTensor<Real> gather_batch(const BasicTensor<Real>& x, const std::vector<std::size_t>& index);
template <typename Real>
BasicTensor<Real> reshape(const BasicTensor<Real>& x, Shape shape);

// Horizontal and vertical 3x3 Sobel responses of each channel, zero padded.
// Returns [N, 2C, H, W] with channel 2c = g_x, 2c + 1 = g_y.
template <typename Real>
BasicTensor<Real> sobel(const BasicTensor<Real>& x);

}  // namespace ricc
