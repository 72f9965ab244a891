#pragma once

#include <vector>

#include "kdaudit/tensor.hpp"

namespace kdaudit {

/// Reverse-mode autodiff over dense tensors. A Graph is a tape of op
/// records; creation order is a topological order, so backward() is a
/// single reverse sweep that visits each node reachable from the loss
/// exactly once. Construction and backward are single-threaded per graph;
/// independent graphs may be evaluated concurrently.
class Graph {
public:
    enum class Op {
        Leaf,
        GatherRows,
        MatMul,
        MatMulNT,
        Add,
        AddRow,
        Sub,
        Mul,
        Scale,
        Exp,
        Log,
        ReluSquared,
        LayerNorm,
        CausalAttention,
        SoftmaxRows,
        LogSoftmaxRows,
        PickPositions,
        Sum,
        WeightedSum,
    };

    // Constant leaf owning a copy of `t`.
    int leaf(Tensor t, bool requires_grad = false);
    // Trainable leaf referencing external storage (must outlive the graph).
    int param(const Tensor* t);

    int gather_rows(int table, std::vector<int> row_ids);
    int matmul(int a, int b);
    int matmul_nt(int a, int b);
    int add(int a, int b);
    int add_row(int a, int row);  // broadcast a 1-D bias over rows
    int sub(int a, int b);
    int mul(int a, int b);
    int scale(int a, double s);
    int exp_op(int a);
    int log_op(int a);
    int relu_sq(int a);
    int layer_norm(int x, int gain, int bias);
    int causal_attention(int qkv, int n_heads);
    int softmax_rows(int x);
    int log_softmax_rows(int x);
    int pick_positions(int mat, std::vector<int> cols);
    int sum(int a);
    int weighted_sum(int a, std::vector<double> weights);

    /// Seeds d(loss)/d(loss)=1 and sweeps the tape in reverse. Throws
    /// InputError when the loss node is not scalar.
    void backward(int loss);

    const Tensor& value(int node) const;
    /// Gradient of the loss w.r.t. `node`; zeros when the node was not
    /// reached (only valid after backward()).
    const Tensor& grad(int node);

    std::size_t node_count() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        Op op;
        int a = -1, b = -1, c = -1;
        Tensor value;
        const Tensor* external = nullptr;
        Tensor grad;
        Tensor aux;
        std::vector<int> indices;
        std::vector<double> weights;
        int heads = 0;
        double scalar = 0.0;
        bool requires_grad = false;
    };

    int push(Node n);
    Node& at(int i) { return nodes_[static_cast<std::size_t>(i)]; }
    const Node& at(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    bool needs_grad(int i) const { return i >= 0 && at(i).requires_grad; }
    Tensor& grad_slot(int i);
    void accumulate(int target, const Tensor& g);
    void backward_node(int i);

    std::vector<Node> nodes_;
};

}  // namespace kdaudit
