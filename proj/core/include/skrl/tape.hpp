#pragma once

#include "skrl/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace skrl {

// Reverse-mode autodiff over a linear tape of recorded operations.
// Node ids are creation-ordered, which is also a topological order, so
// backward() is a single reverse sweep visiting each node exactly once.
class Tape {
  public:
    using NodeId = int;

    NodeId leaf(Tensor value, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return (NodeId) nodes_.size() - 1;
    }

    NodeId record(Tensor value, std::vector<NodeId> inputs, std::function<void(Tape &, NodeId)> backprop) {
        Node n;
        n.value = std::move(value);
        n.inputs = std::move(inputs);
        bool rg = false;
        for (NodeId id : n.inputs) {
            rg = rg || nodes_[id].requires_grad;
        }
        n.requires_grad = rg;
        if (rg) {
            n.backprop = std::move(backprop);
        }
        nodes_.push_back(std::move(n));
        return (NodeId) nodes_.size() - 1;
    }

    const Tensor & value(NodeId id) const { return nodes_[id].value; }

    Tensor & grad(NodeId id) {
        Node & n = nodes_[id];
        if (n.grad.data.empty()) {
            n.grad = Tensor::zeros(n.value.shape);
        }
        return n.grad;
    }

    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

    size_t size() const { return nodes_.size(); }

    // seed d(loss)/d(loss) = 1 and sweep the tape in reverse
    void backward(NodeId loss) {
        if (value(loss).size() != 1) {
            throw contract_error("backward: loss must be scalar, got shape " + value(loss).shape_str());
        }
        grad(loss).data[0] = 1.0f;
        for (NodeId id = loss; id >= 0; --id) {
            Node & n = nodes_[id];
            if (n.requires_grad && n.backprop && !n.grad.data.empty()) {
                n.backprop(*this, id);
            }
        }
    }

  private:
    struct Node {
        Tensor value;
        Tensor grad; // allocated lazily
        std::vector<NodeId> inputs;
        std::function<void(Tape &, NodeId)> backprop;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
};

namespace ops {

using NodeId = Tape::NodeId;

NodeId matmul(Tape & t, NodeId a, NodeId b);
NodeId transpose(Tape & t, NodeId a);
NodeId add(Tape & t, NodeId a, NodeId b);
NodeId sub(Tape & t, NodeId a, NodeId b);
NodeId mul(Tape & t, NodeId a, NodeId b);
NodeId scale(Tape & t, NodeId a, float c);
// broadcast a length-n vector across every row of an [m,n] tensor
NodeId add_row_vector(Tape & t, NodeId a, NodeId v);
NodeId mul_row_vector(Tape & t, NodeId a, NodeId v);
NodeId relu(Tape & t, NodeId a);
NodeId exp_op(Tape & t, NodeId a);
NodeId tanh_op(Tape & t, NodeId a);
NodeId softmax_rows(Tape & t, NodeId a);
NodeId log_softmax_rows(Tape & t, NodeId a);
NodeId layer_norm_rows(Tape & t, NodeId a, NodeId gain, NodeId bias, float eps = 1e-5f);
// rows of a lookup table selected by constant indices
NodeId gather_rows(Tape & t, NodeId table, const std::vector<int> & ids);
NodeId concat_rows(Tape & t, NodeId a, NodeId b);
NodeId slice_rows(Tape & t, NodeId a, int start, int len);
NodeId sum(Tape & t, NodeId a);
// one scalar weight per element, weights are constants
NodeId weighted_sum(Tape & t, NodeId a, Tensor weights);
// add a constant tensor (no gradient through it), e.g. a causal mask
NodeId add_const(Tape & t, NodeId a, Tensor c);
// out[r] = a[r, cols[r]]
NodeId pick(Tape & t, NodeId a, const std::vector<int> & cols);

// plain (non-recorded) helpers shared with inference paths
void softmax_inplace(std::vector<float> & v);
float entropy_nats(const std::vector<float> & probs);

} // namespace ops

} // namespace skrl
