#pragma once

#include <random>

#include "ricc/models.hpp"

namespace ricc::testing {

// An 8x8 two-block network small enough for finite-difference checks.
inline ArchDescriptor tiny_arch(ArchId id, std::size_t channels = 1) {
    ArchDescriptor a;
    a.id = id;
    a.input_side = 8;
    a.model_side = 8;
    a.input_channels = channels;
    a.stem_filters = channels;
    a.blocks = {{4, 3, 2}, {2, 4, 2}};
    a.downsample = id == ArchId::nri ? Downsample::max_pool : Downsample::stride_conv;
    a.skip_connections = id == ArchId::nri;
    a.validate();
    return a;
}

template <typename Real>
BasicTensor<Real> random_images(Shape shape, std::uint64_t seed, bool requires_grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Real> v(numel(shape));
    for (auto& x : v) x = Real(u(rng));
    return BasicTensor<Real>(std::move(shape), std::move(v), requires_grad);
}

}  // namespace ricc::testing
