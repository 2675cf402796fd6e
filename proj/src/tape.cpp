#include "taxo/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "taxo/common.hpp"

namespace taxo::nn {

namespace {

constexpr double kBceEps = 1e-12;

double clamp_prob(double p) {
    return std::min(1.0 - kBceEps, std::max(kBceEps, p));
}

}  // namespace

Tape::Var Tape::push(Node n, const char* opname) {
    if (!n.val.all_finite())
        throw NumericError(std::string("non-finite value produced by op '") + opname + "'");
    n.grd = Tensor(n.val.shape());
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size()) - 1;
}

Tape::Var Tape::leaf(Tensor value) {
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(value);
    return push(std::move(n), "leaf");
}

Tape::Var Tape::add(Var a, Var b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (!ta.same_shape(tb))
        throw ValidationError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Node n;
    n.op = Op::Add;
    n.in = {a, b};
    n.val = Tensor(ta.shape());
    for (long long i = 0; i < ta.size(); ++i) n.val[i] = ta[i] + tb[i];
    return push(std::move(n), "add");
}

Tape::Var Tape::sub(Var a, Var b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (!ta.same_shape(tb))
        throw ValidationError("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Node n;
    n.op = Op::Sub;
    n.in = {a, b};
    n.val = Tensor(ta.shape());
    for (long long i = 0; i < ta.size(); ++i) n.val[i] = ta[i] - tb[i];
    return push(std::move(n), "sub");
}

Tape::Var Tape::mul(Var a, Var b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (!ta.same_shape(tb))
        throw ValidationError("mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Node n;
    n.op = Op::Mul;
    n.in = {a, b};
    n.val = Tensor(ta.shape());
    for (long long i = 0; i < ta.size(); ++i) n.val[i] = ta[i] * tb[i];
    return push(std::move(n), "mul");
}

Tape::Var Tape::scale(Var a, double c) {
    const Tensor& ta = nodes_[a].val;
    Node n;
    n.op = Op::Scale;
    n.in = {a};
    n.c = c;
    n.val = Tensor(ta.shape());
    for (long long i = 0; i < ta.size(); ++i) n.val[i] = c * ta[i];
    return push(std::move(n), "scale");
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (ta.ndim() != 2)
        throw ValidationError("matmul: left operand must be 2-d, got " + ta.shape_str());
    int m = ta.rows(), k = ta.cols();
    Node n;
    n.op = Op::Matmul;
    n.in = {a, b};
    if (tb.ndim() == 2) {
        if (tb.rows() != k)
            throw ValidationError("matmul: inner dims differ " + ta.shape_str() + " x " + tb.shape_str());
        int p = tb.cols();
        n.val = Tensor({m, p});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) {
                double aij = ta.at(i, j);
                if (aij == 0.0) continue;
                for (int q = 0; q < p; ++q) n.val.at(i, q) += aij * tb.at(j, q);
            }
    } else if (tb.ndim() == 1) {
        if (tb.shape()[0] != k)
            throw ValidationError("matmul: inner dims differ " + ta.shape_str() + " x " + tb.shape_str());
        n.val = Tensor({m});
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int j = 0; j < k; ++j) acc += ta.at(i, j) * tb[j];
            n.val[i] = acc;
        }
    } else {
        throw ValidationError("matmul: right operand must be 1-d or 2-d, got " + tb.shape_str());
    }
    return push(std::move(n), "matmul");
}

Tape::Var Tape::concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ValidationError("concat: no inputs");
    long long total = 0;
    for (Var p : parts) {
        const Tensor& t = nodes_[p].val;
        if (t.ndim() != 1)
            throw ValidationError("concat: inputs must be 1-d, got " + t.shape_str());
        total += t.size();
    }
    Node n;
    n.op = Op::Concat;
    n.in = parts;
    n.val = Tensor({static_cast<int>(total)});
    long long off = 0;
    for (Var p : parts) {
        const Tensor& t = nodes_[p].val;
        std::copy(t.data(), t.data() + t.size(), n.val.data() + off);
        off += t.size();
    }
    return push(std::move(n), "concat");
}

Tape::Var Tape::row(Var a, int r) {
    const Tensor& ta = nodes_[a].val;
    if (ta.ndim() != 2)
        throw ValidationError("row: input must be 2-d, got " + ta.shape_str());
    if (r < 0 || r >= ta.rows())
        throw ValidationError("row: index out of range");
    Node n;
    n.op = Op::Row;
    n.in = {a};
    n.idx = r;
    n.val = Tensor({ta.cols()});
    for (int j = 0; j < ta.cols(); ++j) n.val[j] = ta.at(r, j);
    return push(std::move(n), "row");
}

Tape::Var Tape::relu(Var a) {
    const Tensor& ta = nodes_[a].val;
    Node n;
    n.op = Op::Relu;
    n.in = {a};
    n.val = Tensor(ta.shape());
    for (long long i = 0; i < ta.size(); ++i) n.val[i] = ta[i] > 0.0 ? ta[i] : 0.0;
    return push(std::move(n), "relu");
}

Tape::Var Tape::sigmoid(Var a) {
    const Tensor& ta = nodes_[a].val;
    Node n;
    n.op = Op::Sigmoid;
    n.in = {a};
    n.val = Tensor(ta.shape());
    for (long long i = 0; i < ta.size(); ++i) {
        double x = ta[i];
        n.val[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
    }
    return push(std::move(n), "sigmoid");
}

Tape::Var Tape::tanh(Var a) {
    const Tensor& ta = nodes_[a].val;
    Node n;
    n.op = Op::Tanh;
    n.in = {a};
    n.val = Tensor(ta.shape());
    for (long long i = 0; i < ta.size(); ++i) n.val[i] = std::tanh(ta[i]);
    return push(std::move(n), "tanh");
}

Tape::Var Tape::sum(Var a) {
    const Tensor& ta = nodes_[a].val;
    double acc = 0.0;
    for (long long i = 0; i < ta.size(); ++i) acc += ta[i];
    Node n;
    n.op = Op::Sum;
    n.in = {a};
    n.val = Tensor::scalar(acc);
    return push(std::move(n), "sum");
}

Tape::Var Tape::logsumexp(Var a) {
    const Tensor& ta = nodes_[a].val;
    if (ta.ndim() != 1)
        throw ValidationError("logsumexp: input must be 1-d, got " + ta.shape_str());
    double mx = ta[0];
    for (long long i = 1; i < ta.size(); ++i) mx = std::max(mx, ta[i]);
    double acc = 0.0;
    for (long long i = 0; i < ta.size(); ++i) acc += std::exp(ta[i] - mx);
    Node n;
    n.op = Op::LogSumExp;
    n.in = {a};
    n.val = Tensor::scalar(mx + std::log(acc));
    return push(std::move(n), "logsumexp");
}

Tape::Var Tape::l1_norm(Var a) {
    const Tensor& ta = nodes_[a].val;
    double acc = 0.0;
    for (long long i = 0; i < ta.size(); ++i) acc += std::abs(ta[i]);
    Node n;
    n.op = Op::L1;
    n.in = {a};
    n.val = Tensor::scalar(acc);
    return push(std::move(n), "l1_norm");
}

Tape::Var Tape::l2_norm(Var a) {
    const Tensor& ta = nodes_[a].val;
    double acc = 0.0;
    for (long long i = 0; i < ta.size(); ++i) acc += ta[i] * ta[i];
    Node n;
    n.op = Op::L2;
    n.in = {a};
    n.val = Tensor::scalar(std::sqrt(acc));
    return push(std::move(n), "l2_norm");
}

Tape::Var Tape::cosine(Var a, Var b) {
    const Tensor& ta = nodes_[a].val;
    const Tensor& tb = nodes_[b].val;
    if (ta.ndim() != 1 || !ta.same_shape(tb))
        throw ValidationError("cosine: inputs must be 1-d of equal length");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (long long i = 0; i < ta.size(); ++i) {
        dot += ta[i] * tb[i];
        na += ta[i] * ta[i];
        nb += tb[i] * tb[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    Node n;
    n.op = Op::Cosine;
    n.in = {a, b};
    n.val = Tensor::scalar(na == 0.0 || nb == 0.0 ? 0.0 : dot / (na * nb));
    return push(std::move(n), "cosine");
}

Tape::Var Tape::bce_loss(Var p, double target) {
    const Tensor& tp = nodes_[p].val;
    if (tp.size() != 1)
        throw ValidationError("bce_loss: prediction must be scalar");
    if (target != 0.0 && target != 1.0)
        throw ValidationError("bce_loss: target must be 0 or 1");
    double q = clamp_prob(tp[0]);
    Node n;
    n.op = Op::Bce;
    n.in = {p};
    n.c = target;
    n.val = Tensor::scalar(-(target * std::log(q) + (1.0 - target) * std::log(1.0 - q)));
    return push(std::move(n), "bce_loss");
}

Tape::Var Tape::custom(std::vector<Var> inputs, Tensor value, BackwardFn back) {
    Node n;
    n.op = Op::Custom;
    n.in = std::move(inputs);
    n.val = std::move(value);
    n.back = std::move(back);
    return push(std::move(n), "custom");
}

double Tape::scalar_value(Var v) const {
    const Tensor& t = nodes_[v].val;
    if (t.size() != 1)
        throw ValidationError("scalar_value: node is not scalar, shape " + t.shape_str());
    return t[0];
}

Tensor& Tape::grad_mut(Var v) {
    nodes_[v].touched = true;
    return nodes_[v].grd;
}

void Tape::accumulate(Var v, const double* g, long long n) {
    Node& node = nodes_[v];
    node.touched = true;
    double* dst = node.grd.data();
    for (long long i = 0; i < n; ++i) dst[i] += g[i];
}

void Tape::backward(Var loss) {
    if (nodes_[loss].val.size() != 1)
        throw ValidationError("backward: loss must be scalar");
    backward_from({{loss, Tensor::scalar(1.0)}});
}

void Tape::backward_from(const std::vector<std::pair<Var, Tensor>>& seeds) {
    int from = -1;
    for (const auto& [v, g] : seeds) {
        if (v < 0 || v >= size()) throw ValidationError("backward_from: bad var");
        if (!g.same_shape(nodes_[v].val))
            throw ValidationError("backward_from: seed shape mismatch at var " + std::to_string(v));
        accumulate(v, g.data(), g.size());
        from = std::max(from, v);
    }
    sweep(from);
}

void Tape::sweep(int from) {
    for (int i = from; i >= 0; --i) {
        if (!nodes_[i].touched) continue;
        backward_node(i);
        if (!nodes_[i].grd.all_finite())
            throw NumericError("non-finite gradient at tape node " + std::to_string(i));
    }
}

void Tape::backward_node(int i) {
    Node& n = nodes_[i];
    const Tensor& g = n.grd;
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add:
            accumulate(n.in[0], g.data(), g.size());
            accumulate(n.in[1], g.data(), g.size());
            break;
        case Op::Sub: {
            accumulate(n.in[0], g.data(), g.size());
            Node& b = nodes_[n.in[1]];
            b.touched = true;
            for (long long j = 0; j < g.size(); ++j) b.grd[j] -= g[j];
            break;
        }
        case Op::Mul: {
            Node& a = nodes_[n.in[0]];
            Node& b = nodes_[n.in[1]];
            a.touched = b.touched = true;
            for (long long j = 0; j < g.size(); ++j) {
                a.grd[j] += g[j] * b.val[j];
                b.grd[j] += g[j] * a.val[j];
            }
            break;
        }
        case Op::Scale: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            for (long long j = 0; j < g.size(); ++j) a.grd[j] += n.c * g[j];
            break;
        }
        case Op::Matmul: {
            Node& a = nodes_[n.in[0]];
            Node& b = nodes_[n.in[1]];
            a.touched = b.touched = true;
            int m = a.val.rows(), k = a.val.cols();
            if (b.val.ndim() == 2) {
                int p = b.val.cols();
                // dA += G B^T ; dB += A^T G
                for (int r = 0; r < m; ++r)
                    for (int q = 0; q < p; ++q) {
                        double grq = g.at(r, q);
                        if (grq == 0.0) continue;
                        for (int j = 0; j < k; ++j) {
                            a.grd.at(r, j) += grq * b.val.at(j, q);
                            b.grd.at(j, q) += a.val.at(r, j) * grq;
                        }
                    }
            } else {
                // y = A x : dA += g x^T ; dx += A^T g
                for (int r = 0; r < m; ++r) {
                    double gr = g[r];
                    if (gr == 0.0) continue;
                    for (int j = 0; j < k; ++j) {
                        a.grd.at(r, j) += gr * b.val[j];
                        b.grd[j] += a.val.at(r, j) * gr;
                    }
                }
            }
            break;
        }
        case Op::Concat: {
            long long off = 0;
            for (Var p : n.in) {
                Node& part = nodes_[p];
                part.touched = true;
                for (long long j = 0; j < part.val.size(); ++j) part.grd[j] += g[off + j];
                off += part.val.size();
            }
            break;
        }
        case Op::Row: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            int cols = a.val.cols();
            for (int j = 0; j < cols; ++j) a.grd.at(n.idx, j) += g[j];
            break;
        }
        case Op::Relu: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            for (long long j = 0; j < g.size(); ++j)
                if (a.val[j] > 0.0) a.grd[j] += g[j];
            break;
        }
        case Op::Sigmoid: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            for (long long j = 0; j < g.size(); ++j) {
                double s = n.val[j];
                a.grd[j] += g[j] * s * (1.0 - s);
            }
            break;
        }
        case Op::Tanh: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            for (long long j = 0; j < g.size(); ++j) {
                double t = n.val[j];
                a.grd[j] += g[j] * (1.0 - t * t);
            }
            break;
        }
        case Op::Sum: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            for (long long j = 0; j < a.val.size(); ++j) a.grd[j] += g[0];
            break;
        }
        case Op::LogSumExp: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            double lse = n.val[0];
            for (long long j = 0; j < a.val.size(); ++j)
                a.grd[j] += g[0] * std::exp(a.val[j] - lse);
            break;
        }
        case Op::L1: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            for (long long j = 0; j < a.val.size(); ++j) {
                double x = a.val[j];
                if (x > 0.0) a.grd[j] += g[0];
                else if (x < 0.0) a.grd[j] -= g[0];
            }
            break;
        }
        case Op::L2: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            double norm = n.val[0];
            if (norm > 0.0)
                for (long long j = 0; j < a.val.size(); ++j)
                    a.grd[j] += g[0] * a.val[j] / norm;
            break;
        }
        case Op::Cosine: {
            Node& a = nodes_[n.in[0]];
            Node& b = nodes_[n.in[1]];
            a.touched = b.touched = true;
            double dot = 0.0, na2 = 0.0, nb2 = 0.0;
            for (long long j = 0; j < a.val.size(); ++j) {
                dot += a.val[j] * b.val[j];
                na2 += a.val[j] * a.val[j];
                nb2 += b.val[j] * b.val[j];
            }
            double na = std::sqrt(na2), nb = std::sqrt(nb2);
            if (na > 0.0 && nb > 0.0) {
                double inv = 1.0 / (na * nb);
                double cos = dot * inv;
                for (long long j = 0; j < a.val.size(); ++j) {
                    a.grd[j] += g[0] * (b.val[j] * inv - cos * a.val[j] / na2);
                    b.grd[j] += g[0] * (a.val[j] * inv - cos * b.val[j] / nb2);
                }
            }
            break;
        }
        case Op::Bce: {
            Node& a = nodes_[n.in[0]];
            a.touched = true;
            double q = clamp_prob(a.val[0]);
            a.grd[0] += g[0] * (-(n.c / q) + (1.0 - n.c) / (1.0 - q));
            break;
        }
        case Op::Custom:
            n.back(*this, g);
            break;
    }
}

void Tape::zero_grads() {
    for (Node& n : nodes_) {
        n.grd.fill(0.0);
        n.touched = false;
    }
}

}  // namespace taxo::nn
