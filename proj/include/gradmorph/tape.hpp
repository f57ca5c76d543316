#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gradmorph/tensor.hpp"

namespace gradmorph {

class TapeGraph;

enum class Padding { Same, Valid };

// Handle to a node in a TapeGraph. Cheap to copy; only valid for the
// lifetime of the graph that produced it.
struct Value {
    TapeGraph* tape = nullptr;
    int node = -1;

    const Tensor& tensor() const;
    const std::vector<int>& shape() const;
};

// Recorded computation DAG for reverse-mode differentiation. Nodes are
// appended in execution order, so parents always precede children and the
// reverse sweep visits each node reachable from the root exactly once.
// One graph serves one forward/backward pass on one logical thread.
class TapeGraph {
public:
    TapeGraph() = default;
    TapeGraph(const TapeGraph&) = delete;
    TapeGraph& operator=(const TapeGraph&) = delete;

    // Differentiable input; appears in the map returned by backward().
    Value leaf(Tensor t);
    // Non-differentiable input.
    Value constant(Tensor t);

    // --- network building blocks ---------------------------------------
    // Cross-correlation (no kernel flip). input [Ci,H,W], kernel [Co,Ci,kH,kW],
    // bias [Co]. Same padding requires odd kernel dims.
    Value conv2d(Value input, Value kernel, Value bias, Padding pad);
    // Window 2, stride 2; gradient goes to the argmax, ties to the lowest
    // flat index.
    Value maxpool2d(Value input);
    // Factor 2, each pixel replicated into a 2x2 block.
    Value upsample_nearest(Value input);
    Value concat_channels(Value a, Value b);

    Value relu(Value x);
    Value sigmoid(Value x);
    Value linear(Value x);  // identity; keeps an unbounded output head explicit
    // Per-pixel softmax over the channel axis of [L,H,W], max-stabilized.
    Value softmax_channels(Value logits);

    // --- elementwise / reductions ---------------------------------------
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value div(Value a, Value b);
    Value add_scalar(Value a, double c);
    Value mul_scalar(Value a, double c);
    Value abs(Value a);
    Value sum(Value a);   // -> shape {1}
    Value mean(Value a);  // -> shape {1}
    // Per-channel sliding-window mean (window w, stride 1, valid):
    // [C,H,W] -> [C,H-w+1,W-w+1]. Computed with summed-area tables.
    Value window_mean(Value a, int w);

    // --- task-specific scalar heads --------------------------------------
    // Sum over pixels of (logit at pred label - logit at gt label).
    Value label_gap_sum(Value logits, const LabelMap& pred, const LabelMap& gt);
    // Mean over pixels of -log softmax(logits)[label].
    Value softmax_cross_entropy(Value logits, const LabelMap& labels);

    // Reverse pass from a scalar root. Returns the gradient for every
    // registered leaf keyed by node index (zeros if unreachable).
    // Clears any gradients from a previous call.
    std::map<int, Tensor> backward(Value root);

    // Gradient of any node after backward(); zeros if unreachable.
    Tensor gradient(Value v) const;

    const Tensor& value(Value v) const;
    int node_count() const { return static_cast<int>(nodes_.size()); }
    const std::vector<int>& leaves() const { return leaves_; }

private:
    struct Node {
        std::string op;
        std::vector<int> parents;
        Tensor value;
        Tensor grad;  // empty until touched by backward
        bool needs_grad = false;
        // Accumulates this node's grad into its parents' grads.
        std::function<void(TapeGraph&, const Node&)> backprop;
    };

    int push(Node n);
    Node& at(int i) { return nodes_[static_cast<std::size_t>(i)]; }
    const Node& at(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    Tensor& grad_buf(int i);
    void check_mine(Value v, const char* op) const;
    bool parent_wants_grad(int i) const { return at(i).needs_grad; }

    std::vector<Node> nodes_;
    std::vector<int> leaves_;

    friend struct Value;
};

}  // namespace gradmorph
