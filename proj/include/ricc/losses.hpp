#pragma once

// Training objectives. All sums run over the minibatch and every pixel; the
// minimum over rotations is a per-sample index selection (constant under
// differentiation).

#include "ricc/models.hpp"
#include "ricc/transforms.hpp"

namespace ricc {

struct RiWeights {
    double lambda_inv = 10.0;
    double lambda_res = 10.0;

    void validate() const;
};

struct RaWeight {
    double lambda = 0.1;

    void validate() const;
};

// Rotated copy of every sample, masked to the inscribed circle. Angle 0 is
// the identity and returns x unchanged.
template <typename Real>
BasicTensor<Real> rotate_masked(const BasicTensor<Real>& x, double angle_deg);

// (1/|R|) sum_x sum_R ||D(E(x)) - D(E(R(x)))||^2
template <typename Real>
BasicTensor<Real> l_inv(BasicModel<Real>& model, const BasicTensor<Real>& x, const RotationSet& rotations,
                        BnMode mode);

// sum_x min_R ||R(x) - D(E(x))||^2
template <typename Real>
BasicTensor<Real> l_res(BasicModel<Real>& model, const BasicTensor<Real>& x, const RotationSet& rotations,
                        BnMode mode);

// The restoration term for a given reconstruction; `chosen` receives the
// selected rotation index per sample.
template <typename Real>
BasicTensor<Real> restoration_term(const BasicTensor<Real>& x, const BasicTensor<Real>& recon,
                                   const RotationSet& rotations, std::vector<std::size_t>* chosen = nullptr);

template <typename Real>
struct RiLossParts {
    BasicTensor<Real> inv;
    BasicTensor<Real> res;
    BasicTensor<Real> total;
};

// lambda_inv * l_inv + lambda_res * l_res from one batched forward pass.
// `inv_rotations` (defaults to `rotations`) is the set used for l_inv.
template <typename Real>
RiLossParts<Real> ri_loss_parts(BasicModel<Real>& model, const BasicTensor<Real>& x, const RotationSet& rotations,
                                const RiWeights& w, BnMode mode, const RotationSet* inv_rotations = nullptr);

template <typename Real>
BasicTensor<Real> ri_loss(BasicModel<Real>& model, const BasicTensor<Real>& x, const RotationSet& rotations,
                          const RiWeights& w, BnMode mode) {
    return ri_loss_parts(model, x, rotations, w, mode).total;
}

// Per-sample single-scale SSIM from patch mean, variance and covariance with
// C1 = (0.01 L)^2, C2 = (0.03 L)^2. Returns shape {N}.
template <typename Real>
BasicTensor<Real> ssim_per_sample(const BasicTensor<Real>& x, const BasicTensor<Real>& y, double dynamic_range);

// sum |g_X(x) - g_X(y)| + |g_Y(x) - g_Y(y)| with 3x3 Sobel responses.
template <typename Real>
BasicTensor<Real> high_pass_term(const BasicTensor<Real>& x, const BasicTensor<Real>& y);

template <typename Real>
struct NriLossParts {
    BasicTensor<Real> l1;
    BasicTensor<Real> l2;
    BasicTensor<Real> high_pass;
    BasicTensor<Real> structural;  // 1 - mean SSIM
    BasicTensor<Real> total;
};

// Throws std::domain_error when the batch has zero dynamic range.
template <typename Real>
NriLossParts<Real> nri_terms(const BasicTensor<Real>& x, const BasicTensor<Real>& recon);

template <typename Real>
BasicTensor<Real> nri_loss(BasicModel<Real>& model, const BasicTensor<Real>& x, BnMode mode);

template <typename Real>
struct RaLossParts {
    BasicTensor<Real> agnostic;
    BasicTensor<Real> bottleneck;
    BasicTensor<Real> total;
};

// Batch of G groups x M replicas, group g occupying samples [gM, (g+1)M).
// sum_x min_R ||x - R(D(E(x)))||^2 + lambda sum_g sum_i sum_{j != i} ||z_i - z_j||^2
template <typename Real>
RaLossParts<Real> ra_loss_parts(BasicModel<Real>& model, const BasicTensor<Real>& x, std::size_t group_size,
                                const RotationSet& rotations, const RaWeight& w, BnMode mode);

template <typename Real>
BasicTensor<Real> ra_loss(BasicModel<Real>& model, const BasicTensor<Real>& x, std::size_t group_size,
                          const RotationSet& rotations, const RaWeight& w, BnMode mode) {
    return ra_loss_parts(model, x, group_size, rotations, w, mode).total;
}

// The bottleneck term alone, for latents [N, ...].
template <typename Real>
BasicTensor<Real> bottleneck_term(const BasicTensor<Real>& z, std::size_t group_size);

}  // namespace ricc
