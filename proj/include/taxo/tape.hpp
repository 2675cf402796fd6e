#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "taxo/tensor.hpp"

namespace taxo::nn {

// Reverse-mode autodiff tape. Values are computed eagerly as nodes are
// recorded; backward() replays the tape in reverse and accumulates
// gradients. Every forward result is checked for NaN/Inf and a failure
// throws NumericError naming the op.
//
// Gradients flow only through nodes actually reached from the seeds, so a
// backward pass over a large tape with a small active subgraph stays cheap.
class Tape {
public:
    using Var = int;
    // Custom nodes compute their value up front and supply the backward
    // rule; the closure accumulates into input grads via grad_mut().
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Var leaf(Tensor value);

    // Elementwise; shapes must match exactly.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);

    // (m,k)x(k,n) -> (m,n), or (m,k)x(k) -> (m).
    Var matmul(Var a, Var b);

    // 1-d inputs joined in order.
    Var concat(const std::vector<Var>& parts);

    // Row r of a 2-d tensor as a 1-d tensor.
    Var row(Var a, int r);

    Var relu(Var a);
    Var sigmoid(Var a);
    Var tanh(Var a);

    // Reductions to a scalar (shape {1}).
    Var sum(Var a);
    Var logsumexp(Var a);  // 1-d input, numerically stable
    Var l1_norm(Var a);
    Var l2_norm(Var a);

    // Cosine similarity of two 1-d tensors. Defined as 0 (with zero
    // gradient) when either vector has zero norm.
    Var cosine(Var a, Var b);

    // Binary cross-entropy of a scalar prediction against a fixed 0/1
    // target; the prediction is clamped to [1e-12, 1-1e-12].
    Var bce_loss(Var p, double target);

    Var custom(std::vector<Var> inputs, Tensor value, BackwardFn back);

    const Tensor& value(Var v) const { return nodes_[v].val; }
    double scalar_value(Var v) const;
    const Tensor& grad(Var v) const { return nodes_[v].grd; }
    Tensor& grad_mut(Var v);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape. loss must be scalar.
    void backward(Var loss);
    // Seeds several nodes at once (used to continue a backward pass that
    // started on another tape).
    void backward_from(const std::vector<std::pair<Var, Tensor>>& seeds);

    void zero_grads();
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    enum class Op {
        Leaf, Add, Sub, Mul, Scale, Matmul, Concat, Row,
        Relu, Sigmoid, Tanh, Sum, LogSumExp, L1, L2, Cosine, Bce, Custom,
    };

    struct Node {
        Op op;
        std::vector<Var> in;
        Tensor val;
        Tensor grd;
        bool touched = false;  // grad has been written to
        double c = 0.0;        // scale factor / bce target
        int idx = 0;           // row index
        BackwardFn back;
    };

    Var push(Node n, const char* opname);
    void accumulate(Var v, const double* g, long long n);
    void backward_node(int i);
    void sweep(int from);

    std::vector<Node> nodes_;
};

}  // namespace taxo::nn
