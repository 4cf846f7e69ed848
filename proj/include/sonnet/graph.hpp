#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A graph is a tape: every operation appends a node holding its forward value
// and, when any input requires a gradient, a closure that pushes the node's
// gradient into its parents. backward() walks the tape once in reverse.
// Parameter leaves reference the registry's storage directly, so gradients
// accumulate additively into BasicParameter::grad across every use.

#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sonnet/params.hpp"
#include "sonnet/rng.hpp"

namespace sonnet {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <class Scalar>
class BasicGraph;

// Handle to a node of a graph. Cheap to copy; valid while the graph lives.
template <class Scalar>
struct BasicVar {
    BasicGraph<Scalar>* graph = nullptr;
    int id = -1;

    const MatrixX<Scalar>& value() const { return graph->value(id); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Eigen::Index size() const { return value().size(); }
    Scalar scalar() const { return value()(0, 0); }
    bool valid() const { return graph != nullptr && id >= 0; }
};

namespace detail {

template <class M>
std::string shape_str(const M& m) {
    std::ostringstream os;
    os << '[' << m.rows() << 'x' << m.cols() << ']';
    return os.str();
}

template <class A, class B>
[[noreturn]] void shape_mismatch(const char* op, const A& a, const B& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

template <class Scalar>
class BasicGraph {
public:
    using Mat = MatrixX<Scalar>;
    using Var = BasicVar<Scalar>;
    using Parameter = BasicParameter<Scalar>;
    using Backward = std::function<void(BasicGraph&, int)>;

    // With record = false no backward closures are kept (inference only).
    explicit BasicGraph(bool record = true) : record_(record) { nodes_.reserve(1024); }

    BasicGraph(const BasicGraph&) = delete;
    BasicGraph& operator=(const BasicGraph&) = delete;

    bool recording() const { return record_; }
    std::size_t size() const { return nodes_.size(); }

    Var parameter(Parameter& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return Var{this, it->second};
        Node n;
        n.param = &p;
        n.requires_grad = record_;
        nodes_.push_back(std::move(n));
        const int id = static_cast<int>(nodes_.size()) - 1;
        param_nodes_.emplace(&p, id);
        return Var{this, id};
    }

    Var constant(Mat v) {
        Node n;
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    // Leaf that collects a gradient readable through grad().
    Var variable(Mat v) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = record_;
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    const Mat& value(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.param ? n.param->value : n.value;
    }

    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Gradient of a node after backward(); zeros when nothing reached it.
    Mat grad(Var v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.param) return n.param->grad;
        if (n.grad.size() == 0) return Mat::Zero(value(v.id).rows(), value(v.id).cols());
        return n.grad;
    }

    // Appends an operation node. The closure runs only if some parent needs
    // a gradient and the graph is recording.
    Var push(Mat value, std::initializer_list<int> parents, Backward backward) {
        return push(std::move(value), std::vector<int>(parents), std::move(backward));
    }
    Var push(Mat value, const std::vector<int>& parents, Backward backward) {
        Node n;
        n.value = std::move(value);
        if (record_) {
            for (int p : parents) {
                if (nodes_[static_cast<std::size_t>(p)].requires_grad) {
                    n.requires_grad = true;
                    break;
                }
            }
            if (n.requires_grad) n.backward = std::move(backward);
        }
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    // Gradient buffer of a node, allocated and zeroed on first use.
    Mat& grad_buffer(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.param) return n.param->grad;
        if (n.grad.size() == 0) n.grad.setZero(value(id).rows(), value(id).cols());
        return n.grad;
    }
    const Mat& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    void backward(Var loss) {
        if (loss.graph != this) throw std::invalid_argument("backward: loss belongs to another graph");
        if (backward_done_) throw std::logic_error("backward: graph already differentiated");
        if (value(loss.id).size() != 1)
            throw ShapeError("backward: loss must be scalar, got " + detail::shape_str(value(loss.id)));
        backward_done_ = true;
        if (!record_) return;
        grad_buffer(loss.id).setConstant(Scalar(1));
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
            n.backward(*this, i);
        }
    }

private:
    struct Node {
        Mat value;
        Mat grad;
        Parameter* param = nullptr;
        bool requires_grad = false;
        Backward backward;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_nodes_;
    bool record_ = true;
    bool backward_done_ = false;
};

using Graph = BasicGraph<Real>;
using Var = BasicVar<Real>;

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {

enum class Broadcast { Same, Column, Row, Scalar };

// How `small` is broadcast against a `rows` x `cols` operand.
template <class M>
Broadcast broadcast_kind(const char* op, const M& big, const M& small) {
    if (small.rows() == big.rows() && small.cols() == big.cols()) return Broadcast::Same;
    if (small.rows() == 1 && small.cols() == 1) return Broadcast::Scalar;
    if (small.cols() == 1 && small.rows() == big.rows()) return Broadcast::Column;
    if (small.rows() == 1 && small.cols() == big.cols()) return Broadcast::Row;
    shape_mismatch(op, big, small);
}

template <class Scalar>
MatrixX<Scalar> expand(const MatrixX<Scalar>& m, Broadcast kind, Eigen::Index rows, Eigen::Index cols) {
    switch (kind) {
        case Broadcast::Same: return m;
        case Broadcast::Scalar: return MatrixX<Scalar>::Constant(rows, cols, m(0, 0));
        case Broadcast::Column: return m.replicate(1, cols);
        case Broadcast::Row: return m.replicate(rows, 1);
    }
    return m;
}

template <class Scalar>
MatrixX<Scalar> reduce(const MatrixX<Scalar>& g, Broadcast kind) {
    switch (kind) {
        case Broadcast::Same: return g;
        case Broadcast::Scalar: return MatrixX<Scalar>::Constant(1, 1, g.sum());
        case Broadcast::Column: return g.rowwise().sum();
        case Broadcast::Row: return g.colwise().sum();
    }
    return g;
}

template <class Scalar>
bool is_larger(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
    return a.size() >= b.size();
}

template <class Scalar>
void check_same_graph(const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
    if (a.graph != b.graph) throw std::invalid_argument("operands belong to different graphs");
}

}  // namespace detail

template <class Scalar>
BasicVar<Scalar> matmul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    detail::check_same_graph(a, b);
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.cols() != B.rows()) detail::shape_mismatch("matmul", A, B);
    MatrixX<Scalar> out = A * B;
    return a.graph->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](BasicGraph<Scalar>& g, int self) {
        const auto& G = g.upstream(self);
        if (g.requires_grad(ia)) g.grad_buffer(ia).noalias() += G * g.value(ib).transpose();
        if (g.requires_grad(ib)) g.grad_buffer(ib).noalias() += g.value(ia).transpose() * G;
    });
}

template <class Scalar>
BasicVar<Scalar> transpose(BasicVar<Scalar> a) {
    MatrixX<Scalar> out = a.value().transpose();
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(ia) += g.upstream(self).transpose();
    });
}

// Elementwise a + b with b (or a) broadcast as a column, row or scalar.
template <class Scalar>
BasicVar<Scalar> add(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    detail::check_same_graph(a, b);
    if (!detail::is_larger(a.value(), b.value())) std::swap(a, b);
    const auto& A = a.value();
    const auto kind = detail::broadcast_kind("add", A, b.value());
    MatrixX<Scalar> out = A + detail::expand(b.value(), kind, A.rows(), A.cols());
    return a.graph->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, kind](BasicGraph<Scalar>& g, int self) {
        const auto& G = g.upstream(self);
        if (g.requires_grad(ia)) g.grad_buffer(ia) += G;
        if (g.requires_grad(ib)) g.grad_buffer(ib) += detail::reduce(G, kind);
    });
}

template <class Scalar>
BasicVar<Scalar> sub(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    detail::check_same_graph(a, b);
    const bool a_big = detail::is_larger(a.value(), b.value());
    const auto& big = a_big ? a.value() : b.value();
    const auto& small = a_big ? b.value() : a.value();
    const auto kind = detail::broadcast_kind("sub", big, small);
    MatrixX<Scalar> out = a_big ? MatrixX<Scalar>(big - detail::expand(small, kind, big.rows(), big.cols()))
                                : MatrixX<Scalar>(detail::expand(small, kind, big.rows(), big.cols()) - big);
    return a.graph->push(std::move(out), {a.id, b.id},
                         [ia = a.id, ib = b.id, kind, a_big](BasicGraph<Scalar>& g, int self) {
                             const auto& G = g.upstream(self);
                             if (g.requires_grad(ia))
                                 g.grad_buffer(ia) += a_big ? MatrixX<Scalar>(G) : detail::reduce<Scalar>(G, kind);
                             if (g.requires_grad(ib))
                                 g.grad_buffer(ib) -= a_big ? detail::reduce<Scalar>(G, kind) : MatrixX<Scalar>(G);
                         });
}

// Elementwise product with the same broadcasting rules as add().
template <class Scalar>
BasicVar<Scalar> cmul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    detail::check_same_graph(a, b);
    if (!detail::is_larger(a.value(), b.value())) std::swap(a, b);
    const auto& A = a.value();
    const auto kind = detail::broadcast_kind("cmul", A, b.value());
    MatrixX<Scalar> out = A.cwiseProduct(detail::expand(b.value(), kind, A.rows(), A.cols()));
    return a.graph->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, kind](BasicGraph<Scalar>& g, int self) {
        const auto& G = g.upstream(self);
        const auto& A = g.value(ia);
        if (g.requires_grad(ia))
            g.grad_buffer(ia) += G.cwiseProduct(detail::expand(g.value(ib), kind, A.rows(), A.cols()));
        if (g.requires_grad(ib)) g.grad_buffer(ib) += detail::reduce<Scalar>(G.cwiseProduct(A), kind);
    });
}

template <class Scalar>
BasicVar<Scalar> operator+(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    return add(a, b);
}
template <class Scalar>
BasicVar<Scalar> operator-(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    return sub(a, b);
}

template <class Scalar>
BasicVar<Scalar> scale(BasicVar<Scalar> a, Scalar s) {
    MatrixX<Scalar> out = a.value() * s;
    return a.graph->push(std::move(out), {a.id},
                         [ia = a.id, s](BasicGraph<Scalar>& g, int self) { g.grad_buffer(ia) += g.upstream(self) * s; });
}

// a + s elementwise.
template <class Scalar>
BasicVar<Scalar> shift(BasicVar<Scalar> a, Scalar s) {
    MatrixX<Scalar> out = a.value().array() + s;
    return a.graph->push(std::move(out), {a.id},
                         [ia = a.id](BasicGraph<Scalar>& g, int self) { g.grad_buffer(ia) += g.upstream(self); });
}

// 1 - a, the complement used by gates.
template <class Scalar>
BasicVar<Scalar> one_minus(BasicVar<Scalar> a) {
    return shift(scale(a, Scalar(-1)), Scalar(1));
}

template <class Scalar>
BasicVar<Scalar> concat(const std::vector<BasicVar<Scalar>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    std::vector<int> ids;
    for (const auto& p : parts) {
        if (p.cols() != cols) detail::shape_mismatch("concat", parts.front().value(), p.value());
        rows += p.rows();
        ids.push_back(p.id);
    }
    MatrixX<Scalar> out(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return parts.front().graph->push(std::move(out), ids, [ids](BasicGraph<Scalar>& g, int self) {
        const auto& G = g.upstream(self);
        Eigen::Index r = 0;
        for (int id : ids) {
            const Eigen::Index n = g.value(id).rows();
            if (g.requires_grad(id)) g.grad_buffer(id) += G.middleRows(r, n);
            r += n;
        }
    });
}

template <class Scalar>
BasicVar<Scalar> concat(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    return concat(std::vector<BasicVar<Scalar>>{a, b});
}

// Horizontal stacking, typically of column vectors into a matrix.
template <class Scalar>
BasicVar<Scalar> hconcat(const std::vector<BasicVar<Scalar>>& parts) {
    if (parts.empty()) throw std::invalid_argument("hconcat: no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    std::vector<int> ids;
    for (const auto& p : parts) {
        if (p.rows() != rows) detail::shape_mismatch("hconcat", parts.front().value(), p.value());
        cols += p.cols();
        ids.push_back(p.id);
    }
    MatrixX<Scalar> out(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return parts.front().graph->push(std::move(out), ids, [ids](BasicGraph<Scalar>& g, int self) {
        const auto& G = g.upstream(self);
        Eigen::Index c = 0;
        for (int id : ids) {
            const Eigen::Index n = g.value(id).cols();
            if (g.requires_grad(id)) g.grad_buffer(id) += G.middleCols(c, n);
            c += n;
        }
    });
}

template <class Scalar>
BasicVar<Scalar> slice_rows(BasicVar<Scalar> a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows())
        throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of " +
                         detail::shape_str(a.value()));
    MatrixX<Scalar> out = a.value().middleRows(start, count);
    return a.graph->push(std::move(out), {a.id}, [ia = a.id, start, count](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(ia).middleRows(start, count) += g.upstream(self);
    });
}

template <class Scalar>
BasicVar<Scalar> column(BasicVar<Scalar> a, Eigen::Index j) {
    if (j < 0 || j >= a.cols()) throw ShapeError("column: index out of " + detail::shape_str(a.value()));
    MatrixX<Scalar> out = a.value().col(j);
    return a.graph->push(std::move(out), {a.id}, [ia = a.id, j](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(ia).col(j) += g.upstream(self);
    });
}

template <class Scalar>
BasicVar<Scalar> pick(BasicVar<Scalar> a, Eigen::Index i, Eigen::Index j = 0) {
    if (i < 0 || j < 0 || i >= a.rows() || j >= a.cols())
        throw ShapeError("pick: index out of " + detail::shape_str(a.value()));
    MatrixX<Scalar> out = MatrixX<Scalar>::Constant(1, 1, a.value()(i, j));
    return a.graph->push(std::move(out), {a.id}, [ia = a.id, i, j](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(ia)(i, j) += g.upstream(self)(0, 0);
    });
}

// Row `id` of an embedding matrix, returned as a column vector.
template <class Scalar>
BasicVar<Scalar> lookup(BasicVar<Scalar> table, Eigen::Index id) {
    if (id < 0 || id >= table.rows())
        throw std::out_of_range("lookup: id " + std::to_string(id) + " outside table " +
                                detail::shape_str(table.value()));
    MatrixX<Scalar> out = table.value().row(id).transpose();
    return table.graph->push(std::move(out), {table.id}, [it = table.id, id](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(it).row(id) += g.upstream(self).transpose();
    });
}

template <class Scalar>
BasicVar<Scalar> sigmoid(BasicVar<Scalar> a) {
    MatrixX<Scalar> out = a.value().unaryExpr([](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        const auto& y = g.value(self);
        g.grad_buffer(ia).array() += g.upstream(self).array() * y.array() * (Scalar(1) - y.array());
    });
}

template <class Scalar>
BasicVar<Scalar> tanh(BasicVar<Scalar> a) {
    MatrixX<Scalar> out = a.value().array().tanh();
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        const auto& y = g.value(self);
        g.grad_buffer(ia).array() += g.upstream(self).array() * (Scalar(1) - y.array().square());
    });
}

template <class Scalar>
BasicVar<Scalar> relu(BasicVar<Scalar> a) {
    MatrixX<Scalar> out = a.value().cwiseMax(Scalar(0));
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        const auto& x = g.value(ia);
        g.grad_buffer(ia).array() += (x.array() > Scalar(0)).select(g.upstream(self).array(), Scalar(0));
    });
}

template <class Scalar>
BasicVar<Scalar> exp(BasicVar<Scalar> a) {
    MatrixX<Scalar> out = a.value().array().exp();
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(ia).array() += g.upstream(self).array() * g.value(self).array();
    });
}

template <class Scalar>
BasicVar<Scalar> log(BasicVar<Scalar> a) {
    MatrixX<Scalar> out = a.value().array().log();
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(ia).array() += g.upstream(self).array() / g.value(ia).array();
    });
}

// log(sigmoid(a)), evaluated without overflow for large |a|.
template <class Scalar>
BasicVar<Scalar> log_sigmoid(BasicVar<Scalar> a) {
    MatrixX<Scalar> out = a.value().unaryExpr([](Scalar x) {
        return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
    });
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        const auto& x = g.value(ia);
        g.grad_buffer(ia).array() +=
            g.upstream(self).array() * x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(v)); }).array();
    });
}

namespace detail {

template <class Scalar>
MatrixX<Scalar> softmax_value(const MatrixX<Scalar>& x, const std::vector<bool>* mask) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index k = 0; k < x.size(); ++k)
        if (!mask || (*mask)[static_cast<std::size_t>(k)]) mx = std::max(mx, x(k));
    if (!std::isfinite(mx)) throw std::invalid_argument("softmax: no unmasked finite entry");
    MatrixX<Scalar> y(x.rows(), x.cols());
    Scalar z = 0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const bool keep = !mask || (*mask)[static_cast<std::size_t>(k)];
        y(k) = keep ? std::exp(x(k) - mx) : Scalar(0);
        z += y(k);
    }
    return y / z;
}

}  // namespace detail

// Softmax over all entries of a vector.
template <class Scalar>
BasicVar<Scalar> softmax(BasicVar<Scalar> a) {
    if (a.rows() != 1 && a.cols() != 1) throw ShapeError("softmax: expects a vector, got " + detail::shape_str(a.value()));
    MatrixX<Scalar> out = detail::softmax_value<Scalar>(a.value(), nullptr);
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        const auto& y = g.value(self);
        const auto& G = g.upstream(self);
        const Scalar inner = G.cwiseProduct(y).sum();
        g.grad_buffer(ia).array() += y.array() * (G.array() - inner);
    });
}

// Softmax restricted to entries whose mask bit is set; the rest get exactly 0.
template <class Scalar>
BasicVar<Scalar> masked_softmax(BasicVar<Scalar> a, const std::vector<bool>& mask) {
    if (a.rows() != 1 && a.cols() != 1)
        throw ShapeError("masked_softmax: expects a vector, got " + detail::shape_str(a.value()));
    if (static_cast<Eigen::Index>(mask.size()) != a.size())
        throw ShapeError("masked_softmax: mask length " + std::to_string(mask.size()) + " vs " +
                         detail::shape_str(a.value()));
    MatrixX<Scalar> out = detail::softmax_value<Scalar>(a.value(), &mask);
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        const auto& y = g.value(self);
        const auto& G = g.upstream(self);
        const Scalar inner = G.cwiseProduct(y).sum();
        g.grad_buffer(ia).array() += y.array() * (G.array() - inner);
    });
}

// Sum over columns of -log softmax(logits.col(k))[targets[k]].
template <class Scalar>
BasicVar<Scalar> cross_entropy(BasicVar<Scalar> logits, const std::vector<int>& targets) {
    const auto& L = logits.value();
    if (static_cast<Eigen::Index>(targets.size()) != L.cols())
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + detail::shape_str(L));
    MatrixX<Scalar> probs(L.rows(), L.cols());
    Scalar total = 0;
    for (Eigen::Index k = 0; k < L.cols(); ++k) {
        const int t = targets[static_cast<std::size_t>(k)];
        if (t < 0 || t >= L.rows()) throw std::out_of_range("cross_entropy: target out of range");
        const Scalar mx = L.col(k).maxCoeff();
        probs.col(k) = (L.col(k).array() - mx).exp();
        const Scalar z = probs.col(k).sum();
        probs.col(k) /= z;
        total += -(L(t, k) - mx - std::log(z));
    }
    MatrixX<Scalar> out = MatrixX<Scalar>::Constant(1, 1, total);
    return logits.graph->push(std::move(out), {logits.id},
                              [il = logits.id, probs = std::move(probs), targets](BasicGraph<Scalar>& g, int self) {
                                  const Scalar up = g.upstream(self)(0, 0);
                                  auto& G = g.grad_buffer(il);
                                  G += probs * up;
                                  for (std::size_t k = 0; k < targets.size(); ++k)
                                      G(targets[k], static_cast<Eigen::Index>(k)) -= up;
                              });
}

template <class Scalar>
BasicVar<Scalar> minimum(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    detail::check_same_graph(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_mismatch("minimum", a.value(), b.value());
    MatrixX<Scalar> out = a.value().cwiseMin(b.value());
    return a.graph->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](BasicGraph<Scalar>& g, int self) {
        const auto& G = g.upstream(self);
        const auto take_a = (g.value(ia).array() <= g.value(ib).array());
        if (g.requires_grad(ia)) g.grad_buffer(ia).array() += take_a.select(G.array(), Scalar(0));
        if (g.requires_grad(ib)) g.grad_buffer(ib).array() += take_a.select(Scalar(0), G.array());
    });
}

template <class Scalar>
BasicVar<Scalar> maximum(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    detail::check_same_graph(a, b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_mismatch("maximum", a.value(), b.value());
    MatrixX<Scalar> out = a.value().cwiseMax(b.value());
    return a.graph->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](BasicGraph<Scalar>& g, int self) {
        const auto& G = g.upstream(self);
        const auto take_a = (g.value(ia).array() >= g.value(ib).array());
        if (g.requires_grad(ia)) g.grad_buffer(ia).array() += take_a.select(G.array(), Scalar(0));
        if (g.requires_grad(ib)) g.grad_buffer(ib).array() += take_a.select(Scalar(0), G.array());
    });
}

// min(a, c) against a constant; entries at the cap receive no gradient.
template <class Scalar>
BasicVar<Scalar> min_const(BasicVar<Scalar> a, Scalar c) {
    MatrixX<Scalar> out = a.value().cwiseMin(c);
    return a.graph->push(std::move(out), {a.id}, [ia = a.id, c](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(ia).array() += (g.value(ia).array() < c).select(g.upstream(self).array(), Scalar(0));
    });
}

template <class Scalar>
BasicVar<Scalar> sum(BasicVar<Scalar> a) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Constant(1, 1, a.value().sum());
    return a.graph->push(std::move(out), {a.id}, [ia = a.id](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(ia).array() += g.upstream(self)(0, 0);
    });
}

template <class Scalar>
BasicVar<Scalar> mean(BasicVar<Scalar> a) {
    const Scalar n = static_cast<Scalar>(a.size());
    return scale(sum(a), Scalar(1) / n);
}

// Sum of same-shaped operands.
template <class Scalar>
BasicVar<Scalar> add_n(const std::vector<BasicVar<Scalar>>& parts) {
    if (parts.empty()) throw std::invalid_argument("add_n: no inputs");
    MatrixX<Scalar> out = parts.front().value();
    std::vector<int> ids{parts.front().id};
    for (std::size_t k = 1; k < parts.size(); ++k) {
        if (parts[k].rows() != out.rows() || parts[k].cols() != out.cols())
            detail::shape_mismatch("add_n", out, parts[k].value());
        out += parts[k].value();
        ids.push_back(parts[k].id);
    }
    return parts.front().graph->push(std::move(out), ids, [ids](BasicGraph<Scalar>& g, int self) {
        for (int id : ids)
            if (g.requires_grad(id)) g.grad_buffer(id) += g.upstream(self);
    });
}

template <class Scalar>
BasicVar<Scalar> dot(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    detail::check_same_graph(a, b);
    if (a.size() != b.size() || (a.cols() != 1 && a.rows() != 1)) detail::shape_mismatch("dot", a.value(), b.value());
    MatrixX<Scalar> out = MatrixX<Scalar>::Constant(1, 1, a.value().reshaped().dot(b.value().reshaped()));
    return a.graph->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](BasicGraph<Scalar>& g, int self) {
        const Scalar up = g.upstream(self)(0, 0);
        if (g.requires_grad(ia)) g.grad_buffer(ia) += up * g.value(ib).reshaped(g.value(ia).rows(), g.value(ia).cols());
        if (g.requires_grad(ib)) g.grad_buffer(ib) += up * g.value(ia).reshaped(g.value(ib).rows(), g.value(ib).cols());
    });
}

// Cosine similarity of two vectors; zero vectors are rejected.
template <class Scalar>
BasicVar<Scalar> cosine(BasicVar<Scalar> a, BasicVar<Scalar> b) {
    detail::check_same_graph(a, b);
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.size() != B.size() || (A.cols() != 1 && A.rows() != 1)) detail::shape_mismatch("cosine", A, B);
    const Scalar na = A.norm();
    const Scalar nb = B.norm();
    if (na == Scalar(0) || nb == Scalar(0)) throw std::invalid_argument("cosine: zero vector");
    const Scalar c = A.reshaped().dot(B.reshaped()) / (na * nb);
    MatrixX<Scalar> out = MatrixX<Scalar>::Constant(1, 1, c);
    return a.graph->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, na, nb, c](BasicGraph<Scalar>& g, int self) {
        const Scalar up = g.upstream(self)(0, 0);
        const auto& A = g.value(ia);
        const auto& B = g.value(ib);
        if (g.requires_grad(ia))
            g.grad_buffer(ia) += up * (B.reshaped(A.rows(), A.cols()) / (na * nb) - A * (c / (na * na)));
        if (g.requires_grad(ib))
            g.grad_buffer(ib) += up * (A.reshaped(B.rows(), B.cols()) / (na * nb) - B * (c / (nb * nb)));
    });
}

// Inverted dropout: identity in eval mode, mask-and-rescale in train mode.
template <class Scalar>
BasicVar<Scalar> dropout(BasicVar<Scalar> a, double rate, bool train, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (!train || rate == 0.0) return a;
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
    MatrixX<Scalar> mask(a.rows(), a.cols());
    for (Eigen::Index k = 0; k < mask.size(); ++k) mask(k) = rng.uniform() >= rate ? keep_scale : Scalar(0);
    MatrixX<Scalar> out = a.value().cwiseProduct(mask);
    return a.graph->push(std::move(out), {a.id}, [ia = a.id, mask = std::move(mask)](BasicGraph<Scalar>& g, int self) {
        g.grad_buffer(ia) += g.upstream(self).cwiseProduct(mask);
    });
}

// Same value, no gradient path.
template <class Scalar>
BasicVar<Scalar> detach(BasicVar<Scalar> a) {
    return a.graph->constant(a.value());
}

// Pointwise half of an LSTM step. `gates` holds the stacked preactivations
// [input; forget; output; candidate] (4H x 1); returns [hidden; cell] (2H x 1).
template <class Scalar>
BasicVar<Scalar> lstm_pointwise(BasicVar<Scalar> gates, BasicVar<Scalar> prev_cell) {
    detail::check_same_graph(gates, prev_cell);
    const Eigen::Index H = prev_cell.rows();
    if (gates.rows() != 4 * H || gates.cols() != 1 || prev_cell.cols() != 1)
        detail::shape_mismatch("lstm_pointwise", gates.value(), prev_cell.value());
    const auto& z = gates.value();
    const auto sig = [](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); };
    // Activated gates are cached for the backward pass.
    MatrixX<Scalar> act(4 * H, 1);
    act.middleRows(0, 3 * H) = z.middleRows(0, 3 * H).unaryExpr(sig);
    act.middleRows(3 * H, H) = z.middleRows(3 * H, H).array().tanh();
    MatrixX<Scalar> out(2 * H, 1);
    const auto& cp = prev_cell.value();
    out.middleRows(H, H) = act.middleRows(H, H).cwiseProduct(cp) + act.middleRows(0, H).cwiseProduct(act.middleRows(3 * H, H));
    out.middleRows(0, H) = act.middleRows(2 * H, H).cwiseProduct(out.middleRows(H, H).array().tanh().matrix());
    return gates.graph->push(
        std::move(out), {gates.id, prev_cell.id},
        [ig = gates.id, ic = prev_cell.id, H, act = std::move(act)](BasicGraph<Scalar>& g, int self) {
            const auto& G = g.upstream(self);
            const auto& y = g.value(self);
            const auto i = act.middleRows(0, H).array();
            const auto f = act.middleRows(H, H).array();
            const auto o = act.middleRows(2 * H, H).array();
            const auto cand = act.middleRows(3 * H, H).array();
            const auto tc = y.middleRows(H, H).array().tanh().eval();
            const auto dh = G.middleRows(0, H).array();
            const auto dc = (G.middleRows(H, H).array() + dh * o * (Scalar(1) - tc.square())).eval();
            if (g.requires_grad(ig)) {
                auto& dz = g.grad_buffer(ig);
                dz.middleRows(0, H).array() += dc * cand * i * (Scalar(1) - i);
                dz.middleRows(H, H).array() += dc * g.value(ic).array() * f * (Scalar(1) - f);
                dz.middleRows(2 * H, H).array() += dh * tc * o * (Scalar(1) - o);
                dz.middleRows(3 * H, H).array() += dc * i * (Scalar(1) - cand.square());
            }
            if (g.requires_grad(ic)) g.grad_buffer(ic).array() += dc * f;
        });
}

}  // namespace sonnet
