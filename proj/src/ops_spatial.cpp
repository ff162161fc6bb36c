#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <new>
#include <span>
#include <numbers>

#include "ricc/ops.hpp"

namespace ricc {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MapMat = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMapMat = Eigen::Map<const RowMat<Real>>;

struct ConvGeom {
    std::size_t n, c, h, w;   // the "large" side of the convolution
    std::size_t k, stride, pad;
    std::size_t ho, wo;       // the "small" side

    std::size_t rows() const { return c * k * k; }
    std::size_t cols() const { return n * ho * wo; }
};

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Uninitialized scratch storage on a 64-byte boundary. Eigen picks its
// vectorized traversal from operand addresses, so every matrix it sees lives
// in one of these to keep results independent of where the heap puts them.
constexpr std::align_val_t kAlign{64};

struct AlignedDelete {
    template <typename Real>
    void operator()(Real* p) const { ::operator delete[](p, kAlign); }
};

template <typename Real>
struct Buffer {
    std::unique_ptr<Real[], AlignedDelete> ptr;
    std::size_t size = 0;

    explicit Buffer(std::size_t n)
        : ptr(static_cast<Real*>(::operator new[](std::max<std::size_t>(n, 1) * sizeof(Real), kAlign))), size(n) {}
    Real* data() { return ptr.get(); }
    const Real* data() const { return ptr.get(); }
};

template <typename Real>
Buffer<Real> aligned_copy(std::span<const Real> v) {
    Buffer<Real> b(v.size());
    std::copy(v.begin(), v.end(), b.data());
    return b;
}

template <typename Real>
void accumulate(std::vector<Real>& dst, const Buffer<Real>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src.data()[i];
}

// Output positions o in [lo, hi) read input index o*stride + kk - pad inside [0, extent).
inline void valid_range(std::size_t kk, std::size_t extent, const ConvGeom& g, std::size_t out,
                        std::size_t& lo, std::size_t& hi) {
    const long s = long(g.stride), off = long(kk) - long(g.pad);
    long l = off >= 0 ? 0 : (-off + s - 1) / s;
    long h = (long(extent) - 1 - off) < 0 ? 0 : (long(extent) - 1 - off) / s + 1;
    l = std::min<long>(l, long(out));
    h = std::clamp<long>(h, l, long(out));
    lo = std::size_t(l);
    hi = std::size_t(h);
}

// cols[(c*k + ky)*k + kx, (n*ho + oy)*wo + ox] = x[n, c, oy*s - p + ky, ox*s - p + kx]
template <typename Real>
Buffer<Real> im2col(const Real* x, const ConvGeom& g) {
    Buffer<Real> cols(g.rows() * g.cols());
    std::fill(cols.data(), cols.data() + cols.size, Real(0));
    const std::size_t ncols = g.cols();
    for (std::size_t ky = 0; ky < g.k; ++ky) {
        std::size_t ylo, yhi;
        valid_range(ky, g.h, g, g.ho, ylo, yhi);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
            std::size_t xlo, xhi;
            valid_range(kx, g.w, g, g.wo, xlo, xhi);
            const long dx = long(kx) - long(g.pad);
            for (std::size_t c = 0; c < g.c; ++c) {
                Real* row = cols.data() + ((c * g.k + ky) * g.k + kx) * ncols;
                for (std::size_t n = 0; n < g.n; ++n) {
                    const Real* plane = x + (n * g.c + c) * g.h * g.w;
                    Real* dst = row + n * g.ho * g.wo;
                    for (std::size_t oy = ylo; oy < yhi; ++oy) {
                        const Real* src = plane + (oy * g.stride + ky - g.pad) * g.w;
                        Real* d = dst + oy * g.wo;
                        if (g.stride == 1) {
                            std::copy(src + long(xlo) + dx, src + long(xhi) + dx, d + xlo);
                        } else {
                            for (std::size_t ox = xlo; ox < xhi; ++ox) d[ox] = src[long(ox * g.stride) + dx];
                        }
                    }
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: scatter-adds columns back onto the image.
template <typename Real>
void col2im(const Real* cols, const ConvGeom& g, Real* x) {
    const std::size_t ncols = g.cols();
    for (std::size_t ky = 0; ky < g.k; ++ky) {
        std::size_t ylo, yhi;
        valid_range(ky, g.h, g, g.ho, ylo, yhi);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
            std::size_t xlo, xhi;
            valid_range(kx, g.w, g, g.wo, xlo, xhi);
            const long dx = long(kx) - long(g.pad);
            for (std::size_t c = 0; c < g.c; ++c) {
                const Real* row = cols + ((c * g.k + ky) * g.k + kx) * ncols;
                for (std::size_t n = 0; n < g.n; ++n) {
                    Real* plane = x + (n * g.c + c) * g.h * g.w;
                    const Real* src = row + n * g.ho * g.wo;
                    for (std::size_t oy = ylo; oy < yhi; ++oy) {
                        Real* d = plane + (oy * g.stride + ky - g.pad) * g.w;
                        const Real* sr = src + oy * g.wo;
                        if (g.stride == 1) {
                            for (std::size_t ox = xlo; ox < xhi; ++ox) d[long(ox) + dx] += sr[ox];
                        } else {
                            for (std::size_t ox = xlo; ox < xhi; ++ox) d[long(ox * g.stride) + dx] += sr[ox];
                        }
                    }
                }
            }
        }
    }
}

// [N, F, P] <-> [F, N*P]
template <typename Real>
Buffer<Real> nchw_to_fm(std::span<const Real> x, std::size_t n, std::size_t f, std::size_t p) {
    Buffer<Real> out(x.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j)
            std::copy_n(x.data() + (i * f + j) * p, p, out.data() + j * n * p + i * p);
    return out;
}

template <typename Real>
std::vector<Real> fm_to_nchw(std::span<const Real> m, std::size_t n, std::size_t f, std::size_t p) {
    std::vector<Real> out(m.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j)
            std::copy_n(m.data() + j * n * p + i * p, p, out.data() + (i * f + j) * p);
    return out;
}

template <typename Real>
void require_rank4(const BasicTensor<Real>& x, const char* op) {
    if (!x.defined() || x.rank() != 4) {
        throw ShapeError(std::string(op) + ": input must be [N,C,H,W], got " +
                         (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
    }
}

template <typename Real>
void check_conv_args(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                     const BasicTensor<Real>& bias, int stride, int pad, std::size_t in_channels,
                     std::size_t bias_len, const char* op) {
    require_rank4(input, op);
    if (!weight.defined() || weight.rank() != 4)
        throw ShapeError(std::string(op) + ": weight must be rank 4");
    if (weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0)
        throw ShapeError(std::string(op) + ": kernel must be square with odd side, got " +
                         shape_str(weight.shape()));
    if (input.dim(1) != in_channels)
        throw ShapeError(std::string(op) + ": input channel dimension (dim 1) is " +
                         std::to_string(input.dim(1)) + " but weight expects " +
                         std::to_string(in_channels));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != bias_len))
        throw ShapeError(std::string(op) + ": bias dimension 0 is " + shape_str(bias.shape()) +
                         " but expected [" + std::to_string(bias_len) + "]");
    if (stride < 1 || pad < 0) throw ShapeError(std::string(op) + ": invalid stride/pad");
}

}  // namespace

template <typename Real>
BasicTensor<Real> conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                         const BasicTensor<Real>& bias, int stride, int pad) {
    check_conv_args(input, weight, bias, stride, pad, weight.defined() ? weight.dim(1) : 0,
                    weight.defined() ? weight.dim(0) : 0, "conv2d");
    const std::size_t k = weight.dim(2);
    if (input.dim(2) + 2 * pad < k || input.dim(3) + 2 * pad < k)
        throw ShapeError("conv2d: spatial dims " + shape_str(input.shape()) + " smaller than kernel");
    ConvGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), k, std::size_t(stride),
               std::size_t(pad), 0, 0};
    g.ho = conv_out(g.h, k, g.stride, g.pad);
    g.wo = conv_out(g.w, k, g.stride, g.pad);
    const std::size_t f = weight.dim(0);
    const std::size_t p = g.ho * g.wo;

    auto cols = std::make_shared<Buffer<Real>>(im2col(input.data().data(), g));
    Buffer<Real> ym(f * g.cols());
    {
        auto wa = aligned_copy(weight.data());
        ConstMapMat<Real> w(wa.data(), f, g.rows());
        ConstMapMat<Real> c(cols->data(), g.rows(), g.cols());
        MapMat<Real> y(ym.data(), f, g.cols());
        y.noalias() = w * c;
        if (bias.defined()) {
            for (std::size_t j = 0; j < f; ++j) y.row(j).array() += bias[j];
        }
    }
    auto out = fm_to_nchw<Real>({ym.data(), ym.size}, g.n, f, p);

    auto xin = input.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    return detail::make_result<Real>(
        {g.n, f, g.ho, g.wo}, std::move(out), {&input, &weight, &bias},
        [xin, wn, bn, cols, g, f, p](Node<Real>& self) {
            auto dy = nchw_to_fm<Real>(self.grad, g.n, f, p);
            ConstMapMat<Real> dym(dy.data(), f, g.cols());
            if (wn->requires_grad) {
                ConstMapMat<Real> c(cols->data(), g.rows(), g.cols());
                Buffer<Real> dwa(f * g.rows());
                MapMat<Real> dw(dwa.data(), f, g.rows());
                dw.noalias() = dym * c.transpose();
                accumulate(wn->grad_buffer(), dwa);
            }
            if (bn && bn->requires_grad) {
                auto& db = bn->grad_buffer();
                for (std::size_t j = 0; j < f; ++j) {
                    const Real* row = dy.data() + j * g.cols();
                    Real s = 0;
                    for (std::size_t i = 0; i < g.cols(); ++i) s += row[i];
                    db[j] += s;
                }
            }
            if (xin->requires_grad) {
                Buffer<Real> dcols(g.rows() * g.cols());
                auto wa = aligned_copy<Real>(wn->value);
                ConstMapMat<Real> w(wa.data(), f, g.rows());
                MapMat<Real> dc(dcols.data(), g.rows(), g.cols());
                dc.noalias() = w.transpose() * dym;
                col2im<Real>(dcols.data(), g, xin->grad_buffer().data());
            }
        });
}

template <typename Real>
BasicTensor<Real> transpose_conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                                   const BasicTensor<Real>& bias, int stride, int pad) {
    check_conv_args(input, weight, bias, stride, pad, weight.defined() ? weight.dim(0) : 0,
                    weight.defined() ? weight.dim(1) : 0, "transpose_conv2d");
    if (stride != 1 && stride != 2)
        throw ShapeError("transpose_conv2d: stride must be 1 or 2, got " + std::to_string(stride));
    const std::size_t k = weight.dim(2);
    const std::size_t cin = weight.dim(0), cout = weight.dim(1);
    ConvGeom g{input.dim(0), cout, input.dim(2) * stride, input.dim(3) * stride, k,
               std::size_t(stride), std::size_t(pad), input.dim(2), input.dim(3)};
    if (conv_out(g.h, k, g.stride, g.pad) != g.ho || conv_out(g.w, k, g.stride, g.pad) != g.wo)
        throw ShapeError("transpose_conv2d: pad " + std::to_string(pad) + " with kernel " +
                         std::to_string(k) + " does not map " + shape_str(input.shape()) +
                         " to a stride multiple");
    const std::size_t p = g.ho * g.wo;

    auto xm = std::make_shared<Buffer<Real>>(nchw_to_fm<Real>(input.data(), g.n, cin, p));
    Buffer<Real> cols(g.rows() * g.cols());
    {
        auto wa = aligned_copy(weight.data());
        ConstMapMat<Real> w(wa.data(), cin, g.rows());
        ConstMapMat<Real> x(xm->data(), cin, g.cols());
        MapMat<Real> c(cols.data(), g.rows(), g.cols());
        c.noalias() = w.transpose() * x;
    }
    std::vector<Real> out(g.n * cout * g.h * g.w, Real(0));
    col2im<Real>(cols.data(), g, out.data());
    if (bias.defined()) {
        for (std::size_t n = 0; n < g.n; ++n)
            for (std::size_t c = 0; c < cout; ++c) {
                Real* plane = out.data() + (n * cout + c) * g.h * g.w;
                for (std::size_t i = 0; i < g.h * g.w; ++i) plane[i] += bias[c];
            }
    }

    auto xin = input.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    return detail::make_result<Real>(
        {g.n, cout, g.h, g.w}, std::move(out), {&input, &weight, &bias},
        [xin, wn, bn, xm, g, cin, cout](Node<Real>& self) {
            auto gcols = im2col<Real>(self.grad.data(), g);
            ConstMapMat<Real> gc(gcols.data(), g.rows(), g.cols());
            if (wn->requires_grad) {
                ConstMapMat<Real> x(xm->data(), cin, g.cols());
                Buffer<Real> dwa(cin * g.rows());
                MapMat<Real> dw(dwa.data(), cin, g.rows());
                dw.noalias() = x * gc.transpose();
                accumulate(wn->grad_buffer(), dwa);
            }
            if (bn && bn->requires_grad) {
                auto& db = bn->grad_buffer();
                const std::size_t hw = g.h * g.w;
                for (std::size_t n = 0; n < g.n; ++n)
                    for (std::size_t c = 0; c < cout; ++c) {
                        const Real* plane = self.grad.data() + (n * cout + c) * hw;
                        Real s = 0;
                        for (std::size_t i = 0; i < hw; ++i) s += plane[i];
                        db[c] += s;
                    }
            }
            if (xin->requires_grad) {
                Buffer<Real> dxm(cin * g.cols());
                auto wa = aligned_copy<Real>(wn->value);
                ConstMapMat<Real> w(wa.data(), cin, g.rows());
                MapMat<Real> dx(dxm.data(), cin, g.cols());
                dx.noalias() = w * gc;
                auto dxn = fm_to_nchw<Real>({dxm.data(), dxm.size}, g.n, cin, g.ho * g.wo);
                auto& gx = xin->grad_buffer();
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dxn[i];
            }
        });
}

template <typename Real>
BasicTensor<Real> leaky_relu(const BasicTensor<Real>& x, double slope) {
    const Real a = Real(slope);
    std::vector<Real> out(x.numel());
    auto v = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] >= 0 ? v[i] : a * v[i];
    if (auto* rec = BranchRecorder::active())
        for (std::size_t i = 0; i < out.size(); ++i) rec->record(v[i] >= 0);
    auto xn = x.node();
    return detail::make_result<Real>(x.shape(), std::move(out), {&x}, [xn, a](Node<Real>& self) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i)
            gx[i] += xn->value[i] >= 0 ? self.grad[i] : a * self.grad[i];
    });
}

template <typename Real>
BasicTensor<Real> batch_norm(const BasicTensor<Real>& x, const BasicTensor<Real>& gamma,
                             const BasicTensor<Real>& beta, BasicTensor<Real>& running_mean,
                             BasicTensor<Real>& running_var, BnMode mode, double eps,
                             double momentum) {
    require_rank4(x, "batch_norm");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    for (const BasicTensor<Real>* t : {&gamma, &beta, static_cast<const BasicTensor<Real>*>(&running_mean),
                                       static_cast<const BasicTensor<Real>*>(&running_var)}) {
        if (t->numel() != c)
            throw ShapeError("batch_norm: channel dimension (dim 1) is " + std::to_string(c) +
                             " but a parameter has shape " + shape_str(t->shape()));
    }
    if (mode == BnMode::train && n < 2)
        throw std::invalid_argument("batch_norm: train mode needs a batch of at least 2 samples");

    const auto xv = x.data();
    std::vector<Real> mean(c), inv_std(c);
    if (mode == BnMode::train) {
        const double m = double(n * hw);
        auto rm = running_mean.mutable_data();
        auto rv = running_var.mutable_data();
        for (std::size_t j = 0; j < c; ++j) {
            double s = 0, s2 = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const Real* p = xv.data() + (i * c + j) * hw;
                for (std::size_t q = 0; q < hw; ++q) s += p[q];
            }
            const double mu = s / m;
            for (std::size_t i = 0; i < n; ++i) {
                const Real* p = xv.data() + (i * c + j) * hw;
                for (std::size_t q = 0; q < hw; ++q) s2 += (p[q] - mu) * (p[q] - mu);
            }
            const double var = s2 / m;
            mean[j] = Real(mu);
            inv_std[j] = Real(1.0 / std::sqrt(var + eps));
            rm[j] = Real(momentum * rm[j] + (1.0 - momentum) * mu);
            rv[j] = Real(momentum * rv[j] + (1.0 - momentum) * var);
        }
    } else {
        for (std::size_t j = 0; j < c; ++j) {
            mean[j] = running_mean[j];
            inv_std[j] = Real(1.0 / std::sqrt(double(running_var[j]) + eps));
        }
    }

    auto xhat = std::make_shared<std::vector<Real>>(x.numel());
    std::vector<Real> out(x.numel());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const std::size_t off = (i * c + j) * hw;
            for (std::size_t q = 0; q < hw; ++q) {
                const Real h = (xv[off + q] - mean[j]) * inv_std[j];
                (*xhat)[off + q] = h;
                out[off + q] = gamma[j] * h + beta[j];
            }
        }

    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    const bool train = mode == BnMode::train;
    return detail::make_result<Real>(
        x.shape(), std::move(out), {&x, &gamma, &beta},
        [xn, gn, bn, xhat, inv_std, n, c, hw, train](Node<Real>& self) {
            const auto& g = self.grad;
            std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const std::size_t off = (i * c + j) * hw;
                    for (std::size_t q = 0; q < hw; ++q) {
                        sum_g[j] += g[off + q];
                        sum_gx[j] += g[off + q] * (*xhat)[off + q];
                    }
                }
            if (gn->requires_grad) {
                auto& dg = gn->grad_buffer();
                for (std::size_t j = 0; j < c; ++j) dg[j] += Real(sum_gx[j]);
            }
            if (bn->requires_grad) {
                auto& db = bn->grad_buffer();
                for (std::size_t j = 0; j < c; ++j) db[j] += Real(sum_g[j]);
            }
            if (!xn->requires_grad) return;
            auto& dx = xn->grad_buffer();
            const double m = double(n * hw);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const std::size_t off = (i * c + j) * hw;
                    const double gam = gn->value[j];
                    for (std::size_t q = 0; q < hw; ++q) {
                        double d;
                        if (train) {
                            d = gam * inv_std[j] *
                                (g[off + q] - sum_g[j] / m - (*xhat)[off + q] * sum_gx[j] / m);
                        } else {
                            d = gam * inv_std[j] * g[off + q];
                        }
                        dx[off + q] += Real(d);
                    }
                }
        });
}

template <typename Real>
BasicTensor<Real> max_pool2(const BasicTensor<Real>& x) {
    require_rank4(x, "max_pool2");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 || w % 2)
        throw ShapeError("max_pool2: spatial dims must be even, got " + shape_str(x.shape()));
    const std::size_t ho = h / 2, wo = w / 2;
    std::vector<Real> out(n * c * ho * wo);
    auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
    auto v = x.data();
    for (std::size_t pl = 0; pl < n * c; ++pl)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                std::size_t best = pl * h * w + (2 * oy) * w + 2 * ox;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = pl * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                        if (v[idx] > v[best]) best = idx;
                    }
                const std::size_t o = (pl * ho + oy) * wo + ox;
                out[o] = v[best];
                (*arg)[o] = best;
            }
    if (auto* rec = BranchRecorder::active())
        for (auto i : *arg) rec->record(i);
    auto xn = x.node();
    return detail::make_result<Real>({n, c, ho, wo}, std::move(out), {&x}, [xn, arg](Node<Real>& self) {
        auto& gx = xn->grad_buffer();
        for (std::size_t o = 0; o < arg->size(); ++o) gx[(*arg)[o]] += self.grad[o];
    });
}

template <typename Real>
BasicTensor<Real> avg_pool(const BasicTensor<Real>& x, int k) {
    require_rank4(x, "avg_pool");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (k < 1 || h % k || w % k)
        throw ShapeError("avg_pool: window " + std::to_string(k) + " does not tile " +
                         shape_str(x.shape()));
    const std::size_t kk = std::size_t(k), ho = h / kk, wo = w / kk;
    const Real inv = Real(1.0 / double(kk * kk));
    std::vector<Real> out(n * c * ho * wo, Real(0));
    auto v = x.data();
    for (std::size_t pl = 0; pl < n * c; ++pl)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                out[(pl * ho + y / kk) * wo + xx / kk] += v[(pl * h + y) * w + xx] * inv;
    auto xn = x.node();
    return detail::make_result<Real>(
        {n, c, ho, wo}, std::move(out), {&x}, [xn, n, c, h, w, kk, ho, wo, inv](Node<Real>& self) {
            auto& gx = xn->grad_buffer();
            for (std::size_t pl = 0; pl < n * c; ++pl)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t xx = 0; xx < w; ++xx)
                        gx[(pl * h + y) * w + xx] += self.grad[(pl * ho + y / kk) * wo + xx / kk] * inv;
        });
}

template <typename Real>
BasicTensor<Real> upsample_nearest(const BasicTensor<Real>& x, int k) {
    require_rank4(x, "upsample_nearest");
    if (k < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), kk = std::size_t(k);
    const std::size_t ho = h * kk, wo = w * kk;
    std::vector<Real> out(n * c * ho * wo);
    auto v = x.data();
    for (std::size_t pl = 0; pl < n * c; ++pl)
        for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t xx = 0; xx < wo; ++xx)
                out[(pl * ho + y) * wo + xx] = v[(pl * h + y / kk) * w + xx / kk];
    auto xn = x.node();
    return detail::make_result<Real>(
        {n, c, ho, wo}, std::move(out), {&x}, [xn, n, c, h, w, kk, ho, wo](Node<Real>& self) {
            auto& gx = xn->grad_buffer();
            for (std::size_t pl = 0; pl < n * c; ++pl)
                for (std::size_t y = 0; y < ho; ++y)
                    for (std::size_t xx = 0; xx < wo; ++xx)
                        gx[(pl * h + y / kk) * w + xx / kk] += self.grad[(pl * ho + y) * wo + xx];
        });
}

template <typename Real>
BasicTensor<Real> add_skip(const BasicTensor<Real>& y, const BasicTensor<Real>& x) {
    require_rank4(y, "add_skip");
    require_rank4(x, "add_skip");
    if (x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2) || x.dim(3) != y.dim(3))
        throw ShapeError("add_skip: skip source " + shape_str(x.shape()) + " and target " +
                         shape_str(y.shape()) + " differ outside the channel dimension");
    const std::size_t n = y.dim(0), cy = y.dim(1), cx = x.dim(1), hw = y.dim(2) * y.dim(3);
    const std::size_t cm = std::min(cx, cy);
    std::vector<Real> out(y.data().begin(), y.data().end());
    auto xv = x.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cm; ++j)
            for (std::size_t q = 0; q < hw; ++q) out[(i * cy + j) * hw + q] += xv[(i * cx + j) * hw + q];
    auto yn = y.node(), xn = x.node();
    return detail::make_result<Real>(y.shape(), std::move(out), {&y, &x},
                                     [yn, xn, n, cy, cx, cm, hw](Node<Real>& self) {
        if (yn->requires_grad) {
            auto& gy = yn->grad_buffer();
            for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += self.grad[i];
        }
        if (xn->requires_grad) {
            auto& gx = xn->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < cm; ++j)
                    for (std::size_t q = 0; q < hw; ++q)
                        gx[(i * cx + j) * hw + q] += self.grad[(i * cy + j) * hw + q];
        }
    });
}

namespace {

struct BilinearTap {
    std::array<long, 4> src;   // -1 marks out of support
    std::array<double, 4> weight;
};

std::vector<BilinearTap> rotation_taps(std::size_t h, std::size_t w, double angle_deg) {
    const double th = angle_deg * std::numbers::pi / 180.0;
    double cs = std::cos(th), sn = std::sin(th);
    // Exact values at multiples of 90 degrees keep those rotations permutations.
    auto snap = [](double v) { return std::abs(v - std::round(v)) < 1e-12 ? std::round(v) : v; };
    cs = snap(cs);
    sn = snap(sn);
    const double cy = (double(h) - 1.0) / 2.0, cx = (double(w) - 1.0) / 2.0;
    std::vector<BilinearTap> taps(h * w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double xo = double(j) - cx, yo = double(i) - cy;
            double xs = snap(cx + xo * cs - yo * sn);
            double ys = snap(cy + xo * sn + yo * cs);
            const double x0 = std::floor(xs), y0 = std::floor(ys);
            const double fx = xs - x0, fy = ys - y0;
            BilinearTap t;
            const long xi[2] = {long(x0), long(x0) + 1};
            const long yi[2] = {long(y0), long(y0) + 1};
            const double wx[2] = {1.0 - fx, fx};
            const double wy[2] = {1.0 - fy, fy};
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    const int q = a * 2 + b;
                    const bool inside = yi[a] >= 0 && yi[a] < long(h) && xi[b] >= 0 && xi[b] < long(w);
                    t.src[q] = inside ? yi[a] * long(w) + xi[b] : -1;
                    t.weight[q] = wy[a] * wx[b];
                }
            taps[i * w + j] = t;
        }
    return taps;
}

}  // namespace

template <typename Real>
BasicTensor<Real> rotate_batch(const BasicTensor<Real>& x, double angle_deg, double fill) {
    require_rank4(x, "rotate");
    const std::size_t h = x.dim(2), w = x.dim(3);
    if (h != w) throw ShapeError("rotate: image must be square, got " + shape_str(x.shape()));
    auto taps = std::make_shared<std::vector<BilinearTap>>(rotation_taps(h, w, angle_deg));
    const std::size_t planes = x.dim(0) * x.dim(1), hw = h * w;
    std::vector<Real> out(x.numel());
    auto v = x.data();
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const Real* src = v.data() + pl * hw;
        for (std::size_t q = 0; q < hw; ++q) {
            const auto& t = (*taps)[q];
            double acc = 0;
            for (int k = 0; k < 4; ++k) {
                if (t.weight[k] == 0.0) continue;
                acc += t.weight[k] * (t.src[k] >= 0 ? double(src[t.src[k]]) : fill);
            }
            out[pl * hw + q] = Real(acc);
        }
    }
    auto xn = x.node();
    return detail::make_result<Real>(x.shape(), std::move(out), {&x}, [xn, taps, planes, hw](Node<Real>& self) {
        auto& gx = xn->grad_buffer();
        for (std::size_t pl = 0; pl < planes; ++pl)
            for (std::size_t q = 0; q < hw; ++q) {
                const auto& t = (*taps)[q];
                const Real g = self.grad[pl * hw + q];
                for (int k = 0; k < 4; ++k)
                    if (t.src[k] >= 0) gx[pl * hw + std::size_t(t.src[k])] += Real(t.weight[k]) * g;
            }
    });
}

template <typename Real>
BasicTensor<Real> sobel(const BasicTensor<Real>& x) {
    require_rank4(x, "sobel");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    static const double kx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
    static const double ky[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
    std::vector<Real> wdata(18);
    for (int i = 0; i < 9; ++i) {
        wdata[i] = Real(kx[i]);
        wdata[9 + i] = Real(ky[i]);
    }
    BasicTensor<Real> weight({2, 1, 3, 3}, std::move(wdata));
    auto flat = reshape(x, {n * c, 1, h, w});
    auto g = conv2d(flat, weight, BasicTensor<Real>(), 1, 1);
    return reshape(g, {n, 2 * c, h, w});
}

#define RICC_INSTANTIATE_SPATIAL(Real)                                                              \
    template BasicTensor<Real> conv2d(const BasicTensor<Real>&, const BasicTensor<Real>&,           \
                                      const BasicTensor<Real>&, int, int);                          \
    template BasicTensor<Real> transpose_conv2d(const BasicTensor<Real>&, const BasicTensor<Real>&, \
                                                const BasicTensor<Real>&, int, int);                \
    template BasicTensor<Real> leaky_relu(const BasicTensor<Real>&, double);                        \
    template BasicTensor<Real> batch_norm(const BasicTensor<Real>&, const BasicTensor<Real>&,       \
                                          const BasicTensor<Real>&, BasicTensor<Real>&,             \
                                          BasicTensor<Real>&, BnMode, double, double);              \
    template BasicTensor<Real> max_pool2(const BasicTensor<Real>&);                                 \
    template BasicTensor<Real> avg_pool(const BasicTensor<Real>&, int);                             \
    template BasicTensor<Real> upsample_nearest(const BasicTensor<Real>&, int);                     \
    template BasicTensor<Real> add_skip(const BasicTensor<Real>&, const BasicTensor<Real>&);        \
    template BasicTensor<Real> rotate_batch(const BasicTensor<Real>&, double, double);              \
    template BasicTensor<Real> sobel(const BasicTensor<Real>&);

RICC_INSTANTIATE_SPATIAL(float)
RICC_INSTANTIATE_SPATIAL(double)

}  // namespace ricc
