#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "msnn/rng.hpp"
#include "msnn/tensor.hpp"

namespace msnn {

// One logical parameter: value plus accumulated gradient. Siamese weight
// tying is a property of storage, not of the graph: both branches hold the
// same ParamStore pointer, so reads, gradient accumulation and optimizer
// updates all observe a single array.
template <typename T>
struct ParamStore {
    std::string name;
    std::string shared_group;  // empty when not tied
    Tensor<T> value;
    Tensor<T> grad;
    bool grad_touched = false;

    ParamStore(std::string n, Tensor<T> v, std::string group = "")
        : name(std::move(n)), shared_group(std::move(group)),
          value(std::move(v)), grad(value.shape) {
        value.validate_finite("parameter " + name);
    }

    void zero_grad() {
        std::fill(grad.values.begin(), grad.values.end(), T(0));
        grad_touched = false;
    }
};

template <typename T>
using ParamPtr = std::shared_ptr<ParamStore<T>>;

// Parameters in declaration order, each logical storage held exactly once.
// Tied branches reuse the pointer they were registered with, so counts and
// optimizer walks never double-visit a shared group.
template <typename T>
class ParamRegistry {
  public:
    ParamPtr<T> create(const std::string& name, Tensor<T> init, const std::string& group = "") {
        for (const auto& p : stores_)
            if (p->name == name)
                throw config_error("duplicate parameter name: " + name);
        auto p = std::make_shared<ParamStore<T>>(name, std::move(init), group);
        stores_.push_back(p);
        return p;
    }

    const std::vector<ParamPtr<T>>& stores() const { return stores_; }

    ParamPtr<T> find(const std::string& name) const {
        for (const auto& p : stores_)
            if (p->name == name) return p;
        return nullptr;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : stores_) n += p->value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : stores_) p->zero_grad();
    }

  private:
    std::vector<ParamPtr<T>> stores_;
};

enum class Mode { train, eval };
enum class Activation { relu, sigmoid };

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction (an op can only consume existing
// nodes); backward() walks them in exact reverse and *accumulates* into
// input gradients, so a value consumed k times receives k contributions.
template <typename T>
class Graph {
  public:
    using NodeId = std::size_t;

    // Leaf holding externally supplied data. Validates finiteness: this is
    // the boundary where data enters the engine.
    NodeId input(Tensor<T> value);

    // Leaf bound to a parameter store; backward() adds its gradient
    // contribution into the store.
    NodeId param(const ParamPtr<T>& p);

    // Valid (unpadded) cross-correlation.
    // input [C_in,D,H,W], weight [C_out,C_in,kD,kH,kW], bias [C_out]
    // -> [C_out,D',H',W'] with D' = (D-kD)/stride + 1 (floor), etc.
    NodeId conv3d(NodeId input, NodeId weight, NodeId bias, std::size_t stride);

    // Non-overlapping mean pooling, trailing voxels that do not fill a
    // window are dropped. input [C,D,H,W] -> [C,D/w,H/w,W/w].
    NodeId avgpool3d(NodeId input, std::size_t window);

    // out = W x + b. input [n], weight [m,n], bias [m] -> [m]
    NodeId dense(NodeId input, NodeId weight, NodeId bias);

    // Elementwise a - b; shapes must match.
    NodeId subtract(NodeId a, NodeId b);

    // Order-preserving concatenation of rank-1 tensors.
    NodeId concat(const std::vector<NodeId>& parts);

    NodeId activation(NodeId input, Activation kind);
    NodeId relu(NodeId input) { return activation(input, Activation::relu); }
    NodeId sigmoid(NodeId input) { return activation(input, Activation::sigmoid); }

    // Inverted dropout: train mode zeroes entries with probability `rate`
    // and scales survivors by 1/(1-rate); eval mode is the identity. The
    // mask is saved for backward. rate == 1 gives an all-zero output.
    NodeId dropout(NodeId input, double rate, Mode mode, Rng& rng);

    // Binary cross-entropy on a single probability, prediction clamped to
    // [eps, 1-eps] with eps = 1e-7; the gradient is that of the clamped
    // composition (zero where the clamp is active).
    NodeId bce_loss(NodeId prediction, int target);

    // Scalar sum of all entries.
    NodeId sum(NodeId input);

    // Rank-1 view of the same values (gradient passes through unchanged).
    NodeId flatten(NodeId input);

    const Tensor<T>& value(NodeId id) const { return nodes_[id].value; }
    const std::vector<T>& grad(NodeId id) const { return nodes_[id].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = seed and sweeps the tape in reverse
    // topological order. Every parameter leaf adds its accumulated
    // contribution into its store (tied branches therefore sum).
    void backward(NodeId loss, T seed = T(1));

  private:
    struct Node {
        Tensor<T> value;
        std::vector<T> grad;
        std::function<void(Graph&, NodeId)> backprop;  // null for leaves
        ParamPtr<T> bound_param;
    };

    NodeId push(Tensor<T> value, std::function<void(Graph&, NodeId)> backprop);
    std::vector<T>& grad_buf(NodeId id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
};

using Graphf = Graph<float>;
using Graphd = Graph<double>;

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace msnn
