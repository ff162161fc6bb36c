#pragma once

// Dense NCHW tensors with a reverse-mode gradient tape.
//
// A tensor is a cheap handle onto an immutable node (shape + row-major data).
// Ops that receive at least one input requiring a gradient record a backward
// closure and their parents; GradTape walks that graph in reverse
// topological order. Everything is templated on the scalar type so that the
// same op code runs in 32-bit for training and in 64-bit for gradient checks.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ricc {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename Real>
struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    std::vector<Real>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), Real(0));
        return grad;
    }
};

template <typename Real>
class BasicTensor {
public:
    using value_type = Real;

    BasicTensor() = default;
    BasicTensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

    static BasicTensor zeros(Shape shape, bool requires_grad = false);
    static BasicTensor full(Shape shape, Real v, bool requires_grad = false);
    static BasicTensor scalar(Real v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const;
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<const Real> data() const { return node_->value; }
    // Direct write access; only meant for leaf tensors (parameters, buffers).
    std::span<Real> mutable_data() { return node_->value; }
    Real item() const;
    Real operator[](std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    // Zero-filled view when no gradient has reached this tensor.
    std::vector<Real> grad() const;
    void zero_grad() { node_->grad.clear(); }

    // Same storage semantics as a copy of the values, detached from the tape.
    BasicTensor detach() const;
    template <typename Other>
    BasicTensor<Other> cast() const;

    const std::shared_ptr<Node<Real>>& node() const { return node_; }
    explicit BasicTensor(std::shared_ptr<Node<Real>> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node<Real>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool enabled();

private:
    bool previous_;
};

// While alive, piecewise ops (leaky ReLU, max-pool, min selection, |.|)
// fold the branch they take for every element into a running hash. Two
// evaluations with equal hashes lie on the same smooth piece.
class BranchRecorder {
public:
    BranchRecorder();
    ~BranchRecorder();
    BranchRecorder(const BranchRecorder&) = delete;
    BranchRecorder& operator=(const BranchRecorder&) = delete;

    std::uint64_t hash() const { return hash_; }

    // Null when no recorder is active on this thread.
    static BranchRecorder* active();
    void record(std::uint64_t branch) { hash_ = (hash_ ^ branch) * 0x100000001b3ull; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ull;
    BranchRecorder* previous_;
};

// Reverse pass over the recorded graph below `root` (a one-element tensor).
// Each node's backward closure runs exactly once, children before parents.
template <typename Real>
class GradTape {
public:
    explicit GradTape(const BasicTensor<Real>& root);

    std::size_t node_count() const { return order_.size(); }
    // Seeds d(root)/d(root) = 1 and propagates; leaf gradients accumulate.
    void backward();

private:
    std::vector<std::shared_ptr<Node<Real>>> order_;  // topological, root last
};

template <typename Real>
void backward(const BasicTensor<Real>& root) {
    GradTape<Real>(root).backward();
}

namespace detail {
// Builds an op result; the backward closure is recorded only when some input
// requires a gradient and recording is enabled.
template <typename Real>
BasicTensor<Real> make_result(Shape shape, std::vector<Real> value,
                              std::initializer_list<const BasicTensor<Real>*> inputs,
                              std::function<void(Node<Real>&)> backward);
template <typename Real>
BasicTensor<Real> make_result(Shape shape, std::vector<Real> value,
                              const std::vector<BasicTensor<Real>>& inputs,
                              std::function<void(Node<Real>&)> backward);
}  // namespace detail

}  // namespace ricc
