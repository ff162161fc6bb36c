#include "ricc/params.hpp"

#include <algorithm>
#include <stdexcept>

namespace ricc {

std::string_view to_string(ArchId id) {
    switch (id) {
        case ArchId::ri_ra: return "RI_RA_ARCH";
        case ArchId::nri: return "NRI_ARCH";
    }
    return "?";
}

ArchId arch_id_from_string(std::string_view s) {
    if (s == "RI_RA_ARCH" || s == "ri_ra" || s == "ri" || s == "ra") return ArchId::ri_ra;
    if (s == "NRI_ARCH" || s == "nri") return ArchId::nri;
    throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

template <typename Real>
BasicTensor<Real>& BasicParamSet<Real>::add(std::string name, BasicTensor<Real> tensor, bool learnable) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    tensor.node()->requires_grad = learnable;
    entries_.push_back({std::move(name), std::move(tensor), learnable});
    return entries_.back().tensor;
}

template <typename Real>
BasicTensor<Real>& BasicParamSet<Real>::at(std::string_view name) {
    for (auto& e : entries_)
        if (e.name == name) return e.tensor;
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename Real>
const BasicTensor<Real>& BasicParamSet<Real>::at(std::string_view name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e.tensor;
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename Real>
bool BasicParamSet<Real>::contains(std::string_view name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

template <typename Real>
std::size_t BasicParamSet<Real>::learnable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
        if (e.learnable) n += e.tensor.numel();
    return n;
}

template <typename Real>
void BasicParamSet<Real>::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename Real>
template <typename Other>
BasicParamSet<Other> BasicParamSet<Real>::cast() const {
    BasicParamSet<Other> out(arch_);
    for (const auto& e : entries_) {
        std::vector<Other> v(e.tensor.data().begin(), e.tensor.data().end());
        out.add(e.name, BasicTensor<Other>(e.tensor.shape(), std::move(v)), e.learnable);
    }
    return out;
}

template <typename Real>
GradSet<Real> collect_grads(const BasicParamSet<Real>& params) {
    GradSet<Real> out;
    for (const auto& e : params.entries())
        if (e.learnable) out.push_back({e.name, e.tensor.shape(), e.tensor.grad()});
    return out;
}

template <typename Real>
void sgd_step(BasicParamSet<Real>& params, const GradSet<Real>& grads, double lr) {
    if (!(lr >= 0.0)) throw std::invalid_argument("sgd_step: learning rate must be >= 0");
    for (const auto& g : grads) {
        auto& t = params.at(g.name);
        if (t.shape() != g.shape || g.values.size() != t.numel())
            throw ShapeError("sgd_step: gradient for '" + g.name + "' has shape " +
                             shape_str(g.shape) + ", parameter has " + shape_str(t.shape()));
    }
    for (const auto& g : grads) {
        bool learnable = false;
        for (const auto& e : params.entries())
            if (e.name == g.name) learnable = e.learnable;
        if (!learnable) continue;
        auto v = params.at(g.name).mutable_data();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= Real(lr * double(g.values[i]));
    }
}

template <typename Real>
void sgd_step(BasicParamSet<Real>& params, double lr) {
    if (!(lr >= 0.0)) throw std::invalid_argument("sgd_step: learning rate must be >= 0");
    for (auto& e : params.entries()) {
        if (!e.learnable || !e.tensor.has_grad()) continue;
        auto g = e.tensor.grad();
        auto v = e.tensor.mutable_data();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= Real(lr * double(g[i]));
    }
}

template class BasicParamSet<float>;
template class BasicParamSet<double>;
template BasicParamSet<double> BasicParamSet<float>::cast<double>() const;
template BasicParamSet<float> BasicParamSet<double>::cast<float>() const;
template BasicParamSet<float> BasicParamSet<float>::cast<float>() const;
template BasicParamSet<double> BasicParamSet<double>::cast<double>() const;
template GradSet<float> collect_grads(const BasicParamSet<float>&);
template GradSet<double> collect_grads(const BasicParamSet<double>&);
template void sgd_step(BasicParamSet<float>&, const GradSet<float>&, double);
template void sgd_step(BasicParamSet<double>&, const GradSet<double>&, double);
template void sgd_step(BasicParamSet<float>&, double);
template void sgd_step(BasicParamSet<double>&, double);

}  // namespace ricc
