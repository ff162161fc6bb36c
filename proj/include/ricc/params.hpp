#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ricc/tensor.hpp"

namespace ricc {

enum class ArchId : std::uint8_t { ri_ra, nri };

std::string_view to_string(ArchId id);
ArchId arch_id_from_string(std::string_view s);

template <typename Real>
struct ParamEntry {
    std::string name;
    BasicTensor<Real> tensor;
    bool learnable = true;  // false for batch-norm running statistics
};

// Ordered, named parameter collection. Order is insertion order and is part
// of the checkpoint format.
template <typename Real>
class BasicParamSet {
public:
    explicit BasicParamSet(ArchId arch = ArchId::ri_ra) : arch_(arch) {}

    ArchId arch() const { return arch_; }

    BasicTensor<Real>& add(std::string name, BasicTensor<Real> tensor, bool learnable);
    BasicTensor<Real>& at(std::string_view name);
    const BasicTensor<Real>& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::vector<ParamEntry<Real>>& entries() { return entries_; }
    const std::vector<ParamEntry<Real>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t learnable_count() const;

    void zero_grad();
    // Deep copy, converting the scalar type; learnable tensors require grad.
    template <typename Other>
    BasicParamSet<Other> cast() const;
    BasicParamSet clone() const { return cast<Real>(); }

private:
    ArchId arch_;
    std::vector<ParamEntry<Real>> entries_;
};

using ParamSet = BasicParamSet<float>;

template <typename Real>
struct GradEntry {
    std::string name;
    Shape shape;
    std::vector<Real> values;
};

template <typename Real>
using GradSet = std::vector<GradEntry<Real>>;

// Snapshot of the accumulated gradients of every learnable tensor.
template <typename Real>
GradSet<Real> collect_grads(const BasicParamSet<Real>& params);

// p <- p - lr * g for every learnable tensor named in `grads`; buffers untouched.
template <typename Real>
void sgd_step(BasicParamSet<Real>& params, const GradSet<Real>& grads, double lr);

// Same, using the gradients accumulated on the parameters themselves.
template <typename Real>
void sgd_step(BasicParamSet<Real>& params, double lr);

}  // namespace ricc
