#include "ricc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ricc {

void RiWeights::validate() const {
    if (!(lambda_inv >= 0.0) || !(lambda_res >= 0.0))
        throw std::invalid_argument("RI weights must be non-negative");
    if (lambda_inv == 0.0 && lambda_res == 0.0) throw std::invalid_argument("RI weights cannot both be zero");
}

void RaWeight::validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("RA weight must be non-negative");
}

namespace {

template <typename Real>
BasicTensor<Real> mask_tensor(const Shape& shape) {
    auto m = circle_mask_weights(shape[2]);
    const std::size_t planes = shape[0] * shape[1];
    std::vector<Real> v(numel(shape));
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < m.size(); ++i) v[p * m.size() + i] = Real(m[i]);
    return BasicTensor<Real>(shape, std::move(v));
}

void require_rotations(const RotationSet& r) {
    if (r.angles.empty()) throw std::invalid_argument("loss needs a non-empty rotation set");
}

}  // namespace

template <typename Real>
BasicTensor<Real> rotate_masked(const BasicTensor<Real>& x, double angle_deg) {
    if (angle_deg == 0.0) return x;
    return mul(rotate_batch(x, angle_deg), mask_tensor<Real>(x.shape()));
}

template <typename Real>
BasicTensor<Real> restoration_term(const BasicTensor<Real>& x, const BasicTensor<Real>& recon,
                                   const RotationSet& rotations, std::vector<std::size_t>* chosen) {
    require_rotations(rotations);
    std::vector<BasicTensor<Real>> candidates;
    candidates.reserve(rotations.size());
    for (double a : rotations.angles) candidates.push_back(sq_dist_per_sample(rotate_masked(x, a), recon));
    return sum(select_min(candidates, chosen));
}

template <typename Real>
RiLossParts<Real> ri_loss_parts(BasicModel<Real>& model, const BasicTensor<Real>& x, const RotationSet& rotations,
                                const RiWeights& w, BnMode mode, const RotationSet* inv_rotations) {
    w.validate();
    require_rotations(rotations);
    const RotationSet& inv_set = inv_rotations ? *inv_rotations : rotations;
    require_rotations(inv_set);
    const std::size_t n = x.dim(0);

    // One forward pass over x and every non-identity rotation of it.
    std::vector<BasicTensor<Real>> inputs{x};
    for (double a : inv_set.angles)
        if (a != 0.0) inputs.push_back(rotate_masked(x, a));
    auto recon_all = reconstruct(model, inputs.size() == 1 ? x : concat_batch(inputs), mode);
    auto recon = inputs.size() == 1 ? recon_all : slice_batch(recon_all, 0, n);

    BasicTensor<Real> inv = BasicTensor<Real>::zeros({1});
    for (std::size_t r = 1; r < inputs.size(); ++r)
        inv = add(inv, sum(sq_dist_per_sample(recon, slice_batch(recon_all, r * n, (r + 1) * n))));
    inv = scale(inv, 1.0 / double(inv_set.size()));

    auto res = restoration_term(x, recon, rotations);
    auto total = add(scale(inv, w.lambda_inv), scale(res, w.lambda_res));
    return {inv, res, total};
}

template <typename Real>
BasicTensor<Real> l_inv(BasicModel<Real>& model, const BasicTensor<Real>& x, const RotationSet& rotations,
                        BnMode mode) {
    return ri_loss_parts(model, x, rotations, RiWeights{1.0, 0.0}, mode).inv;
}

template <typename Real>
BasicTensor<Real> l_res(BasicModel<Real>& model, const BasicTensor<Real>& x, const RotationSet& rotations,
                        BnMode mode) {
    require_rotations(rotations);
    return restoration_term(x, reconstruct(model, x, mode), rotations);
}

template <typename Real>
BasicTensor<Real> ssim_per_sample(const BasicTensor<Real>& x, const BasicTensor<Real>& y, double dynamic_range) {
    if (!(dynamic_range > 0.0)) throw std::domain_error("SSIM needs a positive dynamic range");
    const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    auto mx = mean_per_sample(x), my = mean_per_sample(y);
    auto dx = sub(x, broadcast_per_sample(mx, x.shape()));
    auto dy = sub(y, broadcast_per_sample(my, y.shape()));
    auto vx = mean_per_sample(square(dx)), vy = mean_per_sample(square(dy));
    auto cxy = mean_per_sample(mul(dx, dy));
    auto num = mul(add_scalar(scale(mul(mx, my), 2.0), c1), add_scalar(scale(cxy, 2.0), c2));
    auto den = mul(add_scalar(add(square(mx), square(my)), c1), add_scalar(add(vx, vy), c2));
    return div(num, den);
}

template <typename Real>
BasicTensor<Real> high_pass_term(const BasicTensor<Real>& x, const BasicTensor<Real>& y) {
    return sum(abs_dist_per_sample(sobel(x), sobel(y)));
}

template <typename Real>
NriLossParts<Real> nri_terms(const BasicTensor<Real>& x, const BasicTensor<Real>& recon) {
    if (x.shape() != recon.shape())
        throw ShapeError("nri loss: reconstruction " + shape_str(recon.shape()) + " vs input " + shape_str(x.shape()));
    auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
    const double range = double(*hi) - double(*lo);
    if (!(range > 0.0)) throw std::domain_error("nri loss: batch has zero dynamic range");

    NriLossParts<Real> p;
    p.l1 = sum(abs_dist_per_sample(x, recon));
    p.l2 = sum(sq_dist_per_sample(x, recon));
    p.high_pass = high_pass_term(x, recon);
    auto ssim = ssim_per_sample(x, recon, range);
    p.structural = add_scalar(scale(sum(ssim), -1.0 / double(x.dim(0))), 1.0);
    p.total = add(add(p.l1, p.l2), add(p.high_pass, p.structural));
    return p;
}

template <typename Real>
BasicTensor<Real> nri_loss(BasicModel<Real>& model, const BasicTensor<Real>& x, BnMode mode) {
    return nri_terms(x, reconstruct(model, x, mode)).total;
}

template <typename Real>
BasicTensor<Real> bottleneck_term(const BasicTensor<Real>& z, std::size_t group_size) {
    if (group_size < 2) throw std::invalid_argument("bottleneck term needs at least 2 replicas per group");
    const std::size_t n = z.dim(0);
    if (n % group_size != 0)
        throw std::invalid_argument("batch of " + std::to_string(n) + " is not a whole number of groups of " +
                                    std::to_string(group_size));
    std::vector<std::size_t> a, b;
    for (std::size_t g = 0; g < n / group_size; ++g)
        for (std::size_t i = 0; i < group_size; ++i)
            for (std::size_t j = 0; j < group_size; ++j)
                if (i != j) {
                    a.push_back(g * group_size + i);
                    b.push_back(g * group_size + j);
                }
    return sum(sq_dist_per_sample(gather_batch(z, a), gather_batch(z, b)));
}

template <typename Real>
RaLossParts<Real> ra_loss_parts(BasicModel<Real>& model, const BasicTensor<Real>& x, std::size_t group_size,
                                const RotationSet& rotations, const RaWeight& w, BnMode mode) {
    w.validate();
    require_rotations(rotations);
    if (group_size < 2) throw std::invalid_argument("RA loss needs at least 2 replicas per group");
    if (x.dim(0) % group_size != 0) throw std::invalid_argument("RA batch is not a whole number of groups");

    auto z = encode(model, x, mode);
    auto recon = decode(model, z, mode);
    std::vector<BasicTensor<Real>> candidates;
    for (double a : rotations.angles) candidates.push_back(sq_dist_per_sample(x, rotate_masked(recon, a)));
    RaLossParts<Real> p;
    p.agnostic = sum(select_min(candidates));
    p.bottleneck = bottleneck_term(z, group_size);
    p.total = add(p.agnostic, scale(p.bottleneck, w.lambda));
    return p;
}

#define RICC_INSTANTIATE_LOSSES(Real)                                                                        \
    template BasicTensor<Real> rotate_masked(const BasicTensor<Real>&, double);                              \
    template BasicTensor<Real> restoration_term(const BasicTensor<Real>&, const BasicTensor<Real>&,          \
                                                const RotationSet&, std::vector<std::size_t>*);              \
    template RiLossParts<Real> ri_loss_parts(BasicModel<Real>&, const BasicTensor<Real>&, const RotationSet&, \
                                             const RiWeights&, BnMode, const RotationSet*);                  \
    template BasicTensor<Real> l_inv(BasicModel<Real>&, const BasicTensor<Real>&, const RotationSet&, BnMode); \
    template BasicTensor<Real> l_res(BasicModel<Real>&, const BasicTensor<Real>&, const RotationSet&, BnMode); \
    template BasicTensor<Real> ssim_per_sample(const BasicTensor<Real>&, const BasicTensor<Real>&, double);    \
    template BasicTensor<Real> high_pass_term(const BasicTensor<Real>&, const BasicTensor<Real>&);             \
    template NriLossParts<Real> nri_terms(const BasicTensor<Real>&, const BasicTensor<Real>&);                 \
    template BasicTensor<Real> nri_loss(BasicModel<Real>&, const BasicTensor<Real>&, BnMode);                  \
    template BasicTensor<Real> bottleneck_term(const BasicTensor<Real>&, std::size_t);                         \
    template RaLossParts<Real> ra_loss_parts(BasicModel<Real>&, const BasicTensor<Real>&, std::size_t,         \
                                             const RotationSet&, const RaWeight&, BnMode);

RICC_INSTANTIATE_LOSSES(float)
RICC_INSTANTIATE_LOSSES(double)

}  // namespace ricc
