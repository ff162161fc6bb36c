#include "ricc/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace ricc {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {
thread_local bool g_no_grad = false;
}

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::enabled() { return g_no_grad; }

namespace {
thread_local BranchRecorder* g_recorder = nullptr;
}

BranchRecorder::BranchRecorder() : previous_(g_recorder) { g_recorder = this; }
BranchRecorder::~BranchRecorder() { g_recorder = previous_; }
BranchRecorder* BranchRecorder::active() { return g_recorder; }

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, std::vector<Real> data, bool requires_grad)
    : node_(std::make_shared<Node<Real>>()) {
    if (ricc::numel(shape) != data.size()) {
        throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    }
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor shape " + shape_str(shape) + " has a zero dimension");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::full(Shape shape, Real v, bool requires_grad) {
    auto n = ricc::numel(shape);
    return BasicTensor(std::move(shape), std::vector<Real>(n, v), requires_grad);
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::scalar(Real v) {
    return BasicTensor(Shape{1}, std::vector<Real>{v});
}

template <typename Real>
std::size_t BasicTensor<Real>::dim(std::size_t i) const {
    if (i >= node_->shape.size()) {
        throw ShapeError("dimension " + std::to_string(i) + " out of range for shape " +
                         shape_str(node_->shape));
    }
    return node_->shape[i];
}

template <typename Real>
Real BasicTensor<Real>::item() const {
    if (node_->value.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_str(node_->shape));
    }
    return node_->value[0];
}

template <typename Real>
std::vector<Real> BasicTensor<Real>::grad() const {
    if (node_->grad.empty()) return std::vector<Real>(node_->value.size(), Real(0));
    return node_->grad;
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::detach() const {
    return BasicTensor(node_->shape, node_->value, false);
}

template <typename Real>
template <typename Other>
BasicTensor<Other> BasicTensor<Real>::cast() const {
    std::vector<Other> v(node_->value.begin(), node_->value.end());
    return BasicTensor<Other>(node_->shape, std::move(v), node_->requires_grad);
}

template <typename Real>
GradTape<Real>::GradTape(const BasicTensor<Real>& root) {
    if (!root.defined() || root.numel() != 1) {
        throw ShapeError("backward() needs a one-element root tensor");
    }
    // Iterative post-order DFS gives a topological order with the root last.
    std::unordered_set<const Node<Real>*> seen;
    std::vector<std::pair<std::shared_ptr<Node<Real>>, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            auto parent = node->parents[next++];
            if (parent->requires_grad && seen.insert(parent.get()).second) {
                stack.emplace_back(std::move(parent), 0);
            }
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
}

template <typename Real>
void GradTape<Real>::backward() {
    auto& root = order_.back();
    root->grad_buffer()[0] += Real(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node<Real>& node = **it;
        if (node.backward && !node.grad.empty()) {
            node.backward(node);
            // Interior gradients are not needed once propagated.
            node.grad.clear();
            node.grad.shrink_to_fit();
        }
    }
}

namespace detail {

template <typename Real>
static BasicTensor<Real> finish(Shape shape, std::vector<Real> value, bool track,
                                std::vector<std::shared_ptr<Node<Real>>> parents,
                                std::function<void(Node<Real>&)> backward) {
    BasicTensor<Real> out(std::move(shape), std::move(value));
    if (track) {
        auto& node = *out.node();
        node.requires_grad = true;
        node.parents = std::move(parents);
        node.backward = std::move(backward);
    }
    return out;
}

template <typename Real>
BasicTensor<Real> make_result(Shape shape, std::vector<Real> value,
                              std::initializer_list<const BasicTensor<Real>*> inputs,
                              std::function<void(Node<Real>&)> backward) {
    bool track = false;
    std::vector<std::shared_ptr<Node<Real>>> parents;
    if (!NoGradGuard::enabled()) {
        for (const auto* t : inputs) {
            if (t && t->defined()) {
                parents.push_back(t->node());
                track = track || t->requires_grad();
            }
        }
    }
    if (!track) parents.clear();
    return finish(std::move(shape), std::move(value), track, std::move(parents),
                  track ? std::move(backward) : nullptr);
}

template <typename Real>
BasicTensor<Real> make_result(Shape shape, std::vector<Real> value,
                              const std::vector<BasicTensor<Real>>& inputs,
                              std::function<void(Node<Real>&)> backward) {
    bool track = false;
    std::vector<std::shared_ptr<Node<Real>>> parents;
    if (!NoGradGuard::enabled()) {
        for (const auto& t : inputs) {
            parents.push_back(t.node());
            track = track || t.requires_grad();
        }
    }
    if (!track) parents.clear();
    return finish(std::move(shape), std::move(value), track, std::move(parents),
                  track ? std::move(backward) : nullptr);
}

template BasicTensor<float> make_result(Shape, std::vector<float>,
                                        std::initializer_list<const BasicTensor<float>*>,
                                        std::function<void(Node<float>&)>);
template BasicTensor<double> make_result(Shape, std::vector<double>,
                                         std::initializer_list<const BasicTensor<double>*>,
                                         std::function<void(Node<double>&)>);
template BasicTensor<float> make_result(Shape, std::vector<float>,
                                        const std::vector<BasicTensor<float>>&,
                                        std::function<void(Node<float>&)>);
template BasicTensor<double> make_result(Shape, std::vector<double>,
                                         const std::vector<BasicTensor<double>>&,
                                         std::function<void(Node<double>&)>);

}  // namespace detail

template class BasicTensor<float>;
template class BasicTensor<double>;
template class GradTape<float>;
template class GradTape<double>;
template BasicTensor<double> BasicTensor<float>::cast<double>() const;
template BasicTensor<float> BasicTensor<double>::cast<float>() const;
template BasicTensor<float> BasicTensor<float>::cast<float>() const;
template BasicTensor<double> BasicTensor<double>::cast<double>() const;

}  // namespace ricc
