#include <algorithm>
#include <cmath>

#include "ricc/ops.hpp"

namespace ricc {

namespace {

template <typename Real>
void require_same_shape(const BasicTensor<Real>& a, const BasicTensor<Real>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <typename Real>
std::size_t per_sample(const BasicTensor<Real>& a, const char* op) {
    if (a.rank() < 1) throw ShapeError(std::string(op) + ": needs a batch dimension");
    return a.numel() / a.dim(0);
}

template <typename Real>
void accumulate(const std::shared_ptr<Node<Real>>& n, std::size_t i, Real g) {
    n->grad_buffer()[i] += g;
}

}  // namespace

template <typename Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
    require_same_shape(a, b, "add");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result<Real>(a.shape(), std::move(out), {&a, &b}, [an, bn](Node<Real>& self) {
        for (auto* p : {&an, &bn})
            if ((*p)->requires_grad) {
                auto& g = (*p)->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
    });
}

template <typename Real>
BasicTensor<Real> sub(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
    require_same_shape(a, b, "sub");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result<Real>(a.shape(), std::move(out), {&a, &b}, [an, bn](Node<Real>& self) {
        if (an->requires_grad) {
            auto& g = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <typename Real>
BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
    require_same_shape(a, b, "mul");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result<Real>(a.shape(), std::move(out), {&a, &b}, [an, bn](Node<Real>& self) {
        if (an->requires_grad) {
            auto& g = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
        }
    });
}

template <typename Real>
BasicTensor<Real> div(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
    require_same_shape(a, b, "div");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (b[i] == Real(0)) throw std::domain_error("div: division by zero");
        out[i] = a[i] / b[i];
    }
    auto an = a.node(), bn = b.node();
    return detail::make_result<Real>(a.shape(), std::move(out), {&a, &b}, [an, bn](Node<Real>& self) {
        if (an->requires_grad) {
            auto& g = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / bn->value[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const Real d = bn->value[i];
                g[i] -= self.grad[i] * an->value[i] / (d * d);
            }
        }
    });
}

template <typename Real>
BasicTensor<Real> scale(const BasicTensor<Real>& a, double s) {
    const Real k = Real(s);
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * k;
    auto an = a.node();
    return detail::make_result<Real>(a.shape(), std::move(out), {&a}, [an, k](Node<Real>& self) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * k;
    });
}

template <typename Real>
BasicTensor<Real> add_scalar(const BasicTensor<Real>& a, double s) {
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + Real(s);
    auto an = a.node();
    return detail::make_result<Real>(a.shape(), std::move(out), {&a}, [an](Node<Real>& self) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

template <typename Real>
BasicTensor<Real> square(const BasicTensor<Real>& a) {
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * a[i];
    auto an = a.node();
    return detail::make_result<Real>(a.shape(), std::move(out), {&a}, [an](Node<Real>& self) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += Real(2) * an->value[i] * self.grad[i];
    });
}

template <typename Real>
BasicTensor<Real> sum(const BasicTensor<Real>& a) {
    double s = 0;
    for (auto v : a.data()) s += v;
    auto an = a.node();
    return detail::make_result<Real>({1}, {Real(s)}, {&a}, [an](Node<Real>& self) {
        auto& g = an->grad_buffer();
        for (auto& v : g) v += self.grad[0];
    });
}

template <typename Real>
BasicTensor<Real> sum_per_sample(const BasicTensor<Real>& a) {
    const std::size_t n = a.dim(0), m = per_sample(a, "sum_per_sample");
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < m; ++j) s += a[i * m + j];
        out[i] = Real(s);
    }
    auto an = a.node();
    return detail::make_result<Real>({n}, std::move(out), {&a}, [an, n, m](Node<Real>& self) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[i];
    });
}

template <typename Real>
BasicTensor<Real> mean_per_sample(const BasicTensor<Real>& a) {
    return scale(sum_per_sample(a), 1.0 / double(per_sample(a, "mean_per_sample")));
}

template <typename Real>
BasicTensor<Real> broadcast_per_sample(const BasicTensor<Real>& v, const Shape& shape) {
    if (v.rank() != 1 || shape.empty() || shape[0] != v.dim(0))
        throw ShapeError("broadcast_per_sample: " + shape_str(v.shape()) + " cannot expand to " +
                         shape_str(shape));
    const std::size_t n = shape[0], m = numel(shape) / n;
    std::vector<Real> out(n * m);
    for (std::size_t i = 0; i < n; ++i) std::fill_n(out.data() + i * m, m, v[i]);
    auto vn = v.node();
    return detail::make_result<Real>(shape, std::move(out), {&v}, [vn, n, m](Node<Real>& self) {
        auto& g = vn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < m; ++j) s += self.grad[i * m + j];
            g[i] += Real(s);
        }
    });
}

template <typename Real>
BasicTensor<Real> sq_dist_per_sample(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
    require_same_shape(a, b, "sq_dist_per_sample");
    const std::size_t n = a.dim(0), m = per_sample(a, "sq_dist_per_sample");
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < m; ++j) {
            const double d = double(a[i * m + j]) - double(b[i * m + j]);
            s += d * d;
        }
        out[i] = Real(s);
    }
    auto an = a.node(), bn = b.node();
    return detail::make_result<Real>({n}, std::move(out), {&a, &b}, [an, bn, n, m](Node<Real>& self) {
        for (int side = 0; side < 2; ++side) {
            auto& node = side == 0 ? an : bn;
            if (!node->requires_grad) continue;
            auto& g = node->grad_buffer();
            const Real sign = side == 0 ? Real(2) : Real(-2);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    g[i * m + j] += sign * (an->value[i * m + j] - bn->value[i * m + j]) * self.grad[i];
        }
    });
}

template <typename Real>
BasicTensor<Real> abs_dist_per_sample(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
    require_same_shape(a, b, "abs_dist_per_sample");
    const std::size_t n = a.dim(0), m = per_sample(a, "abs_dist_per_sample");
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < m; ++j) s += std::abs(double(a[i * m + j]) - double(b[i * m + j]));
        out[i] = Real(s);
    }
    if (auto* rec = BranchRecorder::active())
        for (std::size_t i = 0; i < n * m; ++i) rec->record(a[i] > b[i] ? 2 : (a[i] < b[i] ? 1 : 0));
    auto an = a.node(), bn = b.node();
    return detail::make_result<Real>({n}, std::move(out), {&a, &b}, [an, bn, n, m](Node<Real>& self) {
        for (int side = 0; side < 2; ++side) {
            auto& node = side == 0 ? an : bn;
            if (!node->requires_grad) continue;
            auto& g = node->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    const Real d = an->value[i * m + j] - bn->value[i * m + j];
                    const Real s = d > 0 ? Real(1) : (d < 0 ? Real(-1) : Real(0));
                    g[i * m + j] += (side == 0 ? s : -s) * self.grad[i];
                }
        }
    });
}

template <typename Real>
BasicTensor<Real> select_min(const std::vector<BasicTensor<Real>>& candidates,
                             std::vector<std::size_t>* chosen) {
    if (candidates.empty()) throw std::invalid_argument("select_min: no candidates");
    const std::size_t n = candidates[0].numel();
    for (const auto& c : candidates)
        if (c.rank() != 1 || c.numel() != n)
            throw ShapeError("select_min: candidates must all be [" + std::to_string(n) + "]");
    auto idx = std::make_shared<std::vector<std::size_t>>(n, 0);
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < candidates.size(); ++r)
            if (candidates[r][i] < candidates[best][i]) best = r;
        (*idx)[i] = best;
        out[i] = candidates[best][i];
    }
    if (chosen) *chosen = *idx;
    if (auto* rec = BranchRecorder::active())
        for (auto i : *idx) rec->record(i);
    std::vector<std::shared_ptr<Node<Real>>> nodes;
    for (const auto& c : candidates) nodes.push_back(c.node());
    return detail::make_result<Real>({n}, std::move(out), candidates, [nodes, idx](Node<Real>& self) {
        for (std::size_t i = 0; i < idx->size(); ++i) {
            auto& node = nodes[(*idx)[i]];
            if (node->requires_grad) accumulate(node, i, self.grad[i]);
        }
    });
}

template <typename Real>
BasicTensor<Real> concat_batch(const std::vector<BasicTensor<Real>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_batch: nothing to concatenate");
    Shape shape = parts[0].shape();
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape tail(p.shape().begin() + 1, p.shape().end());
        Shape tail0(shape.begin() + 1, shape.end());
        if (tail != tail0)
            throw ShapeError("concat_batch: part shape " + shape_str(p.shape()) +
                             " differs from " + shape_str(shape) + " past dimension 0");
        total += p.dim(0);
    }
    shape[0] = total;
    std::vector<Real> out;
    out.reserve(numel(shape));
    std::vector<std::shared_ptr<Node<Real>>> nodes;
    for (const auto& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        nodes.push_back(p.node());
    }
    return detail::make_result<Real>(shape, std::move(out), parts, [nodes](Node<Real>& self) {
        std::size_t off = 0;
        for (auto& node : nodes) {
            const std::size_t m = node->value.size();
            if (node->requires_grad) {
                auto& g = node->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) g[i] += self.grad[off + i];
            }
            off += m;
        }
    });
}

template <typename Real>
BasicTensor<Real> slice_batch(const BasicTensor<Real>& x, std::size_t begin, std::size_t end) {
    if (begin >= end || end > x.dim(0))
        throw ShapeError("slice_batch: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for dimension 0 of " + shape_str(x.shape()));
    const std::size_t m = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = end - begin;
    std::vector<Real> out(x.data().begin() + begin * m, x.data().begin() + end * m);
    auto xn = x.node();
    return detail::make_result<Real>(shape, std::move(out), {&x}, [xn, begin, m](Node<Real>& self) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * m + i] += self.grad[i];
    });
}

template <typename Real>
BasicTensor<Real> gather_batch(const BasicTensor<Real>& x, const std::vector<std::size_t>& index) {
    if (index.empty()) throw ShapeError("gather_batch: empty index");
    const std::size_t m = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = index.size();
    std::vector<Real> out(index.size() * m);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= x.dim(0))
            throw ShapeError("gather_batch: index " + std::to_string(index[i]) +
                             " out of range for dimension 0 of " + shape_str(x.shape()));
        std::copy_n(x.data().begin() + index[i] * m, m, out.begin() + i * m);
    }
    auto xn = x.node();
    return detail::make_result<Real>(shape, std::move(out), {&x}, [xn, index, m](Node<Real>& self) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < index.size(); ++i)
            for (std::size_t j = 0; j < m; ++j) g[index[i] * m + j] += self.grad[i * m + j];
    });
}

template <typename Real>
BasicTensor<Real> reshape(const BasicTensor<Real>& x, Shape shape) {
    if (numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
    std::vector<Real> out(x.data().begin(), x.data().end());
    auto xn = x.node();
    return detail::make_result<Real>(std::move(shape), std::move(out), {&x}, [xn](Node<Real>& self) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

#define RICC_INSTANTIATE_BASIC(Real)                                                                    \
    template BasicTensor<Real> add(const BasicTensor<Real>&, const BasicTensor<Real>&);                 \
    template BasicTensor<Real> sub(const BasicTensor<Real>&, const BasicTensor<Real>&);                 \
    template BasicTensor<Real> mul(const BasicTensor<Real>&, const BasicTensor<Real>&);                 \
    template BasicTensor<Real> div(const BasicTensor<Real>&, const BasicTensor<Real>&);                 \
    template BasicTensor<Real> scale(const BasicTensor<Real>&, double);                                 \
    template BasicTensor<Real> add_scalar(const BasicTensor<Real>&, double);                            \
    template BasicTensor<Real> square(const BasicTensor<Real>&);                                        \
    template BasicTensor<Real> sum(const BasicTensor<Real>&);                                           \
    template BasicTensor<Real> sum_per_sample(const BasicTensor<Real>&);                                \
    template BasicTensor<Real> mean_per_sample(const BasicTensor<Real>&);                               \
    template BasicTensor<Real> broadcast_per_sample(const BasicTensor<Real>&, const Shape&);             \
    template BasicTensor<Real> sq_dist_per_sample(const BasicTensor<Real>&, const BasicTensor<Real>&);  \
    template BasicTensor<Real> abs_dist_per_sample(const BasicTensor<Real>&, const BasicTensor<Real>&); \
    template BasicTensor<Real> select_min(const std::vector<BasicTensor<Real>>&,                        \
                                          std::vector<std::size_t>*);                                   \
    template BasicTensor<Real> concat_batch(const std::vector<BasicTensor<Real>>&);                     \
    template BasicTensor<Real> slice_batch(const BasicTensor<Real>&, std::size_t, std::size_t);         \
    template BasicTensor<Real> gather_batch(const BasicTensor<Real>&, const std::vector<std::size_t>&); \
    template BasicTensor<Real> reshape(const BasicTensor<Real>&, Shape);

RICC_INSTANTIATE_BASIC(float)
RICC_INSTANTIATE_BASIC(double)

}  // namespace ricc
