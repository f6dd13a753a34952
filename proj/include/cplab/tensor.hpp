#pragma once

// Dense-tensor engine with reverse-mode automatic differentiation.
//
// Values are nodes in an eagerly evaluated acyclic graph. Operations are free
// functions templated on the scalar type: training runs in float, gradient
// verification in double. Eigen supplies the dense kernels; reductions are
// serial so forward values are bit-deterministic for a given seed.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "cplab/common.hpp"
#include "cplab/rng.hpp"

namespace cplab {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<Eigen::Index>;

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
    std::ostringstream os;
    os << "[" << r << " x " << c << "]";
    return os.str();
}

// Toggle for forward-pass finiteness validation.
inline std::atomic<bool>& finite_checks() {
    static std::atomic<bool> on{true};
    return on;
}

template <typename S>
struct Node {
    Mat<S> value;
    Mat<S> grad;  // allocated on first backward touch
    std::vector<std::shared_ptr<Node<S>>> parents;
    std::function<void(Node<S>&)> backprop;  // scatters node.grad into parents
    const char* op = "leaf";
    bool needs_grad = false;
    bool is_leaf = true;

    Mat<S>& ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
            grad = Mat<S>::Zero(value.rows(), value.cols());
        }
        return grad;
    }
};

// Shared handle to a graph node.
template <typename S>
class Value {
public:
    Value() = default;
    explicit Value(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

    static Value leaf(Mat<S> m, bool needs_grad) {
        auto n = std::make_shared<Node<S>>();
        n->value = std::move(m);
        n->needs_grad = needs_grad;
        return Value(std::move(n));
    }

    const Mat<S>& val() const { return n_->value; }
    Mat<S>& mutable_val() { return n_->value; }
    Mat<S>& grad() { return n_->ensure_grad(); }
    const Mat<S>& grad() const { return n_->grad; }
    bool has_grad() const { return n_->grad.size() == n_->value.size() && n_->grad.size() > 0; }
    Eigen::Index rows() const { return n_->value.rows(); }
    Eigen::Index cols() const { return n_->value.cols(); }
    Eigen::Index size() const { return n_->value.size(); }
    const char* op() const { return n_->op; }
    bool needs_grad() const { return n_->needs_grad; }
    std::shared_ptr<Node<S>> node() const { return n_; }
    bool valid() const { return n_ != nullptr; }

    void zero_grad() {
        if (n_) n_->grad = Mat<S>::Zero(n_->value.rows(), n_->value.cols());
    }

private:
    std::shared_ptr<Node<S>> n_;
};

template <typename S>
Value<S> constant(Mat<S> m) {
    return Value<S>::leaf(std::move(m), false);
}

template <typename S>
Value<S> parameter(Mat<S> m) {
    return Value<S>::leaf(std::move(m), true);
}

namespace detail {

template <typename S>
void check_finite(const Mat<S>& m, const char* op) {
    if (finite_checks().load(std::memory_order_relaxed) && !m.allFinite()) {
        throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
}

template <typename S>
Value<S> make_node(Mat<S> value, const char* op, std::vector<std::shared_ptr<Node<S>>> parents,
                   std::function<void(Node<S>&)> backprop) {
    check_finite(value, op);
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->op = op;
    n->is_leaf = false;
    bool ng = false;
    for (const auto& p : parents) ng = ng || p->needs_grad;
    n->needs_grad = ng;
    n->parents = std::move(parents);
    if (ng) n->backprop = std::move(backprop);
    return Value<S>(std::move(n));
}

template <typename S>
void require_same_shape(const Value<S>& a, const Value<S>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra primitives
// ---------------------------------------------------------------------------

template <typename S>
Value<S> add(const Value<S>& a, const Value<S>& b) {
    detail::require_same_shape(a, b, "add");
    auto pa = a.node(), pb = b.node();
    return detail::make_node<S>(pa->value + pb->value, "add", {pa, pb}, [pa, pb](Node<S>& n) {
        if (pa->needs_grad) pa->ensure_grad() += n.grad;
        if (pb->needs_grad) pb->ensure_grad() += n.grad;
    });
}

template <typename S>
Value<S> sub(const Value<S>& a, const Value<S>& b) {
    detail::require_same_shape(a, b, "sub");
    auto pa = a.node(), pb = b.node();
    return detail::make_node<S>(pa->value - pb->value, "sub", {pa, pb}, [pa, pb](Node<S>& n) {
        if (pa->needs_grad) pa->ensure_grad() += n.grad;
        if (pb->needs_grad) pb->ensure_grad() -= n.grad;
    });
}

template <typename S>
Value<S> mul(const Value<S>& a, const Value<S>& b) {
    detail::require_same_shape(a, b, "mul");
    auto pa = a.node(), pb = b.node();
    return detail::make_node<S>(pa->value.cwiseProduct(pb->value), "mul", {pa, pb},
                                [pa, pb](Node<S>& n) {
                                    if (pa->needs_grad) pa->ensure_grad() += n.grad.cwiseProduct(pb->value);
                                    if (pb->needs_grad) pb->ensure_grad() += n.grad.cwiseProduct(pa->value);
                                });
}

template <typename S>
Value<S> square(const Value<S>& a) {
    auto pa = a.node();
    return detail::make_node<S>(pa->value.array().square().matrix(), "square", {pa},
                                [pa](Node<S>& n) {
                                    if (pa->needs_grad)
                                        pa->ensure_grad() += S(2) * n.grad.cwiseProduct(pa->value);
                                });
}

template <typename S>
Value<S> scale(const Value<S>& a, S k) {
    auto pa = a.node();
    return detail::make_node<S>(pa->value * k, "scale", {pa}, [pa, k](Node<S>& n) {
        if (pa->needs_grad) pa->ensure_grad() += n.grad * k;
    });
}

template <typename S>
Value<S> add_const(const Value<S>& a, S k) {
    auto pa = a.node();
    return detail::make_node<S>((pa->value.array() + k).matrix(), "add_const", {pa},
                                [pa](Node<S>& n) {
                                    if (pa->needs_grad) pa->ensure_grad() += n.grad;
                                });
}

// C = A * B
template <typename S>
Value<S> matmul(const Value<S>& a, const Value<S>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
    }
    auto pa = a.node(), pb = b.node();
    return detail::make_node<S>(pa->value * pb->value, "matmul", {pa, pb}, [pa, pb](Node<S>& n) {
        if (pa->needs_grad) pa->ensure_grad().noalias() += n.grad * pb->value.transpose();
        if (pb->needs_grad) pb->ensure_grad().noalias() += pa->value.transpose() * n.grad;
    });
}

// C = A * B^T (used for the tied output projection)
template <typename S>
Value<S> matmul_nt(const Value<S>& a, const Value<S>& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
    }
    auto pa = a.node(), pb = b.node();
    return detail::make_node<S>(pa->value * pb->value.transpose(), "matmul_nt", {pa, pb},
                                [pa, pb](Node<S>& n) {
                                    if (pa->needs_grad) pa->ensure_grad().noalias() += n.grad * pb->value;
                                    if (pb->needs_grad) pb->ensure_grad().noalias() += n.grad.transpose() * pa->value;
                                });
}

// Broadcast a 1 x C row vector over every row of x.
template <typename S>
Value<S> add_bias(const Value<S>& x, const Value<S>& b) {
    if (b.rows() != 1 || b.cols() != x.cols()) {
        throw ShapeError("add_bias: shape mismatch " + shape_str(x.rows(), x.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
    }
    auto px = x.node(), pb = b.node();
    return detail::make_node<S>(px->value.rowwise() + pb->value.row(0), "add_bias", {px, pb},
                                [px, pb](Node<S>& n) {
                                    if (px->needs_grad) px->ensure_grad() += n.grad;
                                    if (pb->needs_grad) pb->ensure_grad().row(0) += n.grad.colwise().sum();
                                });
}

template <typename S>
Value<S> slice_cols(const Value<S>& x, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count <= 0 || start + count > x.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + shape_str(x.rows(), x.cols()));
    }
    auto px = x.node();
    return detail::make_node<S>(px->value.middleCols(start, count), "slice_cols", {px},
                                [px, start, count](Node<S>& n) {
                                    if (px->needs_grad) px->ensure_grad().middleCols(start, count) += n.grad;
                                });
}

// Gather rows of x by index; backward scatter-adds.
template <typename S>
Value<S> take_rows(const Value<S>& x, std::vector<std::int64_t> idx) {
    for (auto i : idx) {
        if (i < 0 || i >= x.rows()) {
            throw ShapeError("take_rows: index " + std::to_string(i) + " out of " +
                             shape_str(x.rows(), x.cols()));
        }
    }
    auto px = x.node();
    Mat<S> out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = px->value.row(idx[static_cast<std::size_t>(r)]);
    return detail::make_node<S>(std::move(out), "take_rows", {px},
                                [px, idx = std::move(idx)](Node<S>& n) {
                                    if (!px->needs_grad) return;
                                    auto& g = px->ensure_grad();
                                    for (Eigen::Index r = 0; r < n.grad.rows(); ++r)
                                        g.row(idx[static_cast<std::size_t>(r)]) += n.grad.row(r);
                                });
}

// Embedding lookup: rows of a (V x d) table selected by token id.
template <typename S>
Value<S> embedding(const Value<S>& table, const std::vector<std::int32_t>& ids) {
    std::vector<std::int64_t> idx(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.rows()) {
            throw UsageError("embedding: id " + std::to_string(ids[i]) + " out of vocab " +
                             std::to_string(table.rows()));
        }
        idx[i] = ids[i];
    }
    auto v = take_rows(table, std::move(idx));
    v.node()->op = "embedding";
    return v;
}

template <typename S>
Value<S> sum_all(const Value<S>& a) {
    auto pa = a.node();
    Mat<S> out(1, 1);
    out(0, 0) = pa->value.sum();
    return detail::make_node<S>(std::move(out), "sum", {pa}, [pa](Node<S>& n) {
        if (pa->needs_grad) pa->ensure_grad().array() += n.grad(0, 0);
    });
}

// Column means: N x C -> 1 x C.
template <typename S>
Value<S> mean_rows(const Value<S>& a) {
    auto pa = a.node();
    const S inv = S(1) / static_cast<S>(pa->value.rows());
    Mat<S> out = pa->value.colwise().sum() * inv;
    return detail::make_node<S>(std::move(out), "mean_rows", {pa}, [pa, inv](Node<S>& n) {
        if (pa->needs_grad) pa->ensure_grad().rowwise() += (n.grad.row(0) * inv).eval();
    });
}

template <typename S>
Value<S> mean_all(const Value<S>& a) {
    auto pa = a.node();
    const S inv = S(1) / static_cast<S>(pa->value.size());
    Mat<S> out(1, 1);
    out(0, 0) = pa->value.sum() * inv;
    return detail::make_node<S>(std::move(out), "mean", {pa}, [pa, inv](Node<S>& n) {
        if (pa->needs_grad) pa->ensure_grad().array() += n.grad(0, 0) * inv;
    });
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization
// ---------------------------------------------------------------------------

enum class GeluKind { Erf, Tanh };

template <typename S>
Value<S> gelu(const Value<S>& x, GeluKind kind = GeluKind::Tanh) {
    auto px = x.node();
    if (kind == GeluKind::Erf) {
        Mat<S> out = px->value.unaryExpr([](S v) {
            return S(0.5) * v * (S(1) + std::erf(v * S(0.70710678118654752440)));
        });
        return detail::make_node<S>(std::move(out), "gelu", {px}, [px](Node<S>& n) {
            if (!px->needs_grad) return;
            Mat<S> d = px->value.unaryExpr([](S v) {
                const S cdf = S(0.5) * (S(1) + std::erf(v * S(0.70710678118654752440)));
                const S pdf = std::exp(S(-0.5) * v * v) * S(0.39894228040143267794);
                return cdf + v * pdf;
            });
            px->ensure_grad() += n.grad.cwiseProduct(d);
        });
    }
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    Mat<S> out = px->value.unaryExpr([](S v) {
        const S t = std::tanh(S(kC) * (v + S(kA) * v * v * v));
        return S(0.5) * v * (S(1) + t);
    });
    return detail::make_node<S>(std::move(out), "gelu_new", {px}, [px](Node<S>& n) {
        if (!px->needs_grad) return;
        Mat<S> d = px->value.unaryExpr([](S v) {
            const S u = S(kC) * (v + S(kA) * v * v * v);
            const S t = std::tanh(u);
            const S du = S(kC) * (S(1) + S(3) * S(kA) * v * v);
            return S(0.5) * (S(1) + t) + S(0.5) * v * (S(1) - t * t) * du;
        });
        px->ensure_grad() += n.grad.cwiseProduct(d);
    });
}

// Row-wise layer normalization with learned gain and bias (each 1 x C).
template <typename S>
Value<S> layer_norm(const Value<S>& x, const Value<S>& gain, const Value<S>& bias, S eps) {
    if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols()) {
        throw ShapeError("layer_norm: params " + shape_str(gain.rows(), gain.cols()) + "/" +
                         shape_str(bias.rows(), bias.cols()) + " do not match " +
                         shape_str(x.rows(), x.cols()));
    }
    auto px = x.node(), pg = gain.node(), pb = bias.node();
    const Eigen::Index n_rows = x.rows(), n_cols = x.cols();
    auto xhat = std::make_shared<Mat<S>>(n_rows, n_cols);
    auto inv_std = std::make_shared<Eigen::Matrix<S, Eigen::Dynamic, 1>>(n_rows);
    Mat<S> out(n_rows, n_cols);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        const S mean = px->value.row(r).mean();
        const S var = (px->value.row(r).array() - mean).square().sum() / static_cast<S>(n_cols);
        const S istd = S(1) / std::sqrt(var + eps);
        (*inv_std)(r) = istd;
        xhat->row(r) = (px->value.row(r).array() - mean).matrix() * istd;
        out.row(r) = xhat->row(r).cwiseProduct(pg->value.row(0)) + pb->value.row(0);
    }
    return detail::make_node<S>(std::move(out), "layer_norm", {px, pg, pb},
                                [px, pg, pb, xhat, inv_std, n_cols](Node<S>& n) {
                                    if (pg->needs_grad)
                                        pg->ensure_grad().row(0) += n.grad.cwiseProduct(*xhat).colwise().sum();
                                    if (pb->needs_grad) pb->ensure_grad().row(0) += n.grad.colwise().sum();
                                    if (!px->needs_grad) return;
                                    auto& gx = px->ensure_grad();
                                    const S invc = S(1) / static_cast<S>(n_cols);
                                    for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
                                        // dL/dxhat for this row
                                        Eigen::Matrix<S, 1, Eigen::Dynamic> dxh =
                                            n.grad.row(r).cwiseProduct(pg->value.row(0));
                                        const S m1 = dxh.sum() * invc;
                                        const S m2 = dxh.cwiseProduct(xhat->row(r)).sum() * invc;
                                        gx.row(r) += ((dxh.array() - m1 - xhat->row(r).array() * m2) *
                                                      (*inv_std)(r))
                                                         .matrix();
                                    }
                                });
}

// Numerically stable row-wise softmax.
template <typename S>
Value<S> softmax_rows(const Value<S>& x) {
    auto px = x.node();
    Mat<S> out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const S mx = px->value.row(r).maxCoeff();
        out.row(r) = (px->value.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
    }
    auto saved = std::make_shared<Mat<S>>(out);
    return detail::make_node<S>(std::move(out), "softmax", {px}, [px, saved](Node<S>& n) {
        if (!px->needs_grad) return;
        auto& gx = px->ensure_grad();
        for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
            const S dot = n.grad.row(r).cwiseProduct(saved->row(r)).sum();
            gx.row(r) += saved->row(r).cwiseProduct((n.grad.row(r).array() - dot).matrix());
        }
    });
}

// Row-wise log-softmax (max-subtracted).
template <typename S>
Value<S> log_softmax_rows(const Value<S>& x) {
    auto px = x.node();
    Mat<S> out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const S mx = px->value.row(r).maxCoeff();
        const S lse = std::log((px->value.row(r).array() - mx).exp().sum()) + mx;
        out.row(r) = px->value.row(r).array() - lse;
    }
    auto saved = std::make_shared<Mat<S>>(out);
    return detail::make_node<S>(std::move(out), "log_softmax", {px}, [px, saved](Node<S>& n) {
        if (!px->needs_grad) return;
        auto& gx = px->ensure_grad();
        for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
            const S gsum = n.grad.row(r).sum();
            gx.row(r) += n.grad.row(r) - (saved->row(r).array().exp() * gsum).matrix();
        }
    });
}

// Per-row negative log-likelihood of the target class, N x 1.
// Cross-entropy = mean_all(cross_entropy_rows(logits, targets)).
template <typename S>
Value<S> cross_entropy_rows(const Value<S>& logits, const std::vector<std::int32_t>& targets) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
        throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) +
                         " targets vs logits " + shape_str(logits.rows(), logits.cols()));
    }
    for (auto t : targets) {
        if (t < 0 || t >= logits.cols()) {
            throw UsageError("cross_entropy_rows: target " + std::to_string(t) + " out of " +
                             std::to_string(logits.cols()) + " classes");
        }
    }
    auto pl = logits.node();
    const Eigen::Index n_rows = logits.rows();
    auto probs = std::make_shared<Mat<S>>(n_rows, logits.cols());
    Mat<S> out(n_rows, 1);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        const S mx = pl->value.row(r).maxCoeff();
        probs->row(r) = (pl->value.row(r).array() - mx).exp();
        const S z = probs->row(r).sum();
        probs->row(r) /= z;
        out(r, 0) = std::log(z) + mx - pl->value(r, targets[static_cast<std::size_t>(r)]);
    }
    auto tgt = std::make_shared<std::vector<std::int32_t>>(targets);
    return detail::make_node<S>(std::move(out), "cross_entropy", {pl}, [pl, probs, tgt](Node<S>& n) {
        if (!pl->needs_grad) return;
        auto& gx = pl->ensure_grad();
        for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
            const S g = n.grad(r, 0);
            gx.row(r) += probs->row(r) * g;
            gx(r, (*tgt)[static_cast<std::size_t>(r)]) -= g;
        }
    });
}

// Inverted dropout; identity when rate == 0.
template <typename S>
Value<S> dropout(const Value<S>& x, S rate, Rng& rng) {
    if (rate <= S(0)) return x;
    if (rate >= S(1)) throw UsageError("dropout: rate must be < 1");
    auto px = x.node();
    const S keep = S(1) - rate;
    const S inv_keep = S(1) / keep;
    auto mask = std::make_shared<Mat<S>>(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            (*mask)(r, c) = (rng.uniform() < static_cast<double>(keep)) ? inv_keep : S(0);
    return detail::make_node<S>(px->value.cwiseProduct(*mask), "dropout", {px},
                                [px, mask](Node<S>& n) {
                                    if (px->needs_grad) px->ensure_grad() += n.grad.cwiseProduct(*mask);
                                });
}

// ---------------------------------------------------------------------------
// Fused multi-head attention
// ---------------------------------------------------------------------------

// q, k, v: (B*T) x d. Causal masking adds -1e9 above the diagonal, so row 0
// always attends to itself and no row is ever fully masked.
template <typename S>
Value<S> multi_head_attention(const Value<S>& q, const Value<S>& k, const Value<S>& v, int n_head,
                              Eigen::Index seq_len, bool causal, S drop_rate, Rng* rng) {
    detail::require_same_shape(q, k, "attention");
    detail::require_same_shape(q, v, "attention");
    const Eigen::Index d = q.cols();
    if (n_head <= 0 || d % n_head != 0) {
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(n_head) + " heads");
    }
    if (seq_len <= 0 || q.rows() % seq_len != 0) {
        throw ShapeError("attention: rows " + std::to_string(q.rows()) + " not a multiple of seq_len " +
                         std::to_string(seq_len));
    }
    if (drop_rate > S(0) && rng == nullptr) throw UsageError("attention: dropout requires an rng");

    const Eigen::Index batch = q.rows() / seq_len;
    const Eigen::Index dh = d / n_head;
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
    auto pq = q.node(), pk = k.node(), pv = v.node();

    // One T x T probability matrix (and dropout mask) per (batch, head).
    auto probs = std::make_shared<std::vector<Mat<S>>>();
    auto masks = std::make_shared<std::vector<Mat<S>>>();
    probs->reserve(static_cast<std::size_t>(batch * n_head));
    const bool use_drop = drop_rate > S(0);
    if (use_drop) masks->reserve(static_cast<std::size_t>(batch * n_head));
    const S keep = S(1) - drop_rate;
    const S inv_keep = use_drop ? S(1) / keep : S(1);

    Mat<S> out(q.rows(), d);
    Mat<S> scores(seq_len, seq_len);
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (int h = 0; h < n_head; ++h) {
            auto qb = pq->value.block(b * seq_len, h * dh, seq_len, dh);
            auto kb = pk->value.block(b * seq_len, h * dh, seq_len, dh);
            auto vb = pv->value.block(b * seq_len, h * dh, seq_len, dh);
            scores.noalias() = qb * kb.transpose();
            scores *= inv_sqrt;
            if (causal) {
                for (Eigen::Index r = 0; r < seq_len; ++r)
                    for (Eigen::Index c = r + 1; c < seq_len; ++c) scores(r, c) += S(-1e9);
            }
            Mat<S> p(seq_len, seq_len);
            for (Eigen::Index r = 0; r < seq_len; ++r) {
                const S mx = scores.row(r).maxCoeff();
                p.row(r) = (scores.row(r).array() - mx).exp();
                p.row(r) /= p.row(r).sum();
            }
            probs->push_back(p);
            if (use_drop) {
                Mat<S> m(seq_len, seq_len);
                for (Eigen::Index r = 0; r < seq_len; ++r)
                    for (Eigen::Index c = 0; c < seq_len; ++c)
                        m(r, c) = (rng->uniform() < static_cast<double>(keep)) ? inv_keep : S(0);
                masks->push_back(m);
                p = p.cwiseProduct(m);
            }
            out.block(b * seq_len, h * dh, seq_len, dh).noalias() = p * vb;
        }
    }

    return detail::make_node<S>(
        std::move(out), "attention", {pq, pk, pv},
        [pq, pk, pv, probs, masks, batch, n_head, seq_len, dh, inv_sqrt, use_drop](Node<S>& n) {
            Mat<S> dp(seq_len, seq_len), ds(seq_len, seq_len);
            for (Eigen::Index b = 0; b < batch; ++b) {
                for (int h = 0; h < n_head; ++h) {
                    const auto& p = (*probs)[static_cast<std::size_t>(b * n_head + h)];
                    auto go = n.grad.block(b * seq_len, h * dh, seq_len, dh);
                    auto qb = pq->value.block(b * seq_len, h * dh, seq_len, dh);
                    auto kb = pk->value.block(b * seq_len, h * dh, seq_len, dh);
                    auto vb = pv->value.block(b * seq_len, h * dh, seq_len, dh);
                    Mat<S> p_used = p;
                    if (use_drop) p_used = p.cwiseProduct((*masks)[static_cast<std::size_t>(b * n_head + h)]);
                    if (pv->needs_grad)
                        pv->ensure_grad().block(b * seq_len, h * dh, seq_len, dh).noalias() +=
                            p_used.transpose() * go;
                    dp.noalias() = go * vb.transpose();
                    if (use_drop) dp = dp.cwiseProduct((*masks)[static_cast<std::size_t>(b * n_head + h)]);
                    // softmax backward per row
                    for (Eigen::Index r = 0; r < seq_len; ++r) {
                        const S dot = dp.row(r).cwiseProduct(p.row(r)).sum();
                        ds.row(r) = p.row(r).cwiseProduct((dp.row(r).array() - dot).matrix());
                    }
                    ds *= inv_sqrt;
                    if (pq->needs_grad)
                        pq->ensure_grad().block(b * seq_len, h * dh, seq_len, dh).noalias() += ds * kb;
                    if (pk->needs_grad)
                        pk->ensure_grad().block(b * seq_len, h * dh, seq_len, dh).noalias() +=
                            ds.transpose() * qb;
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
std::vector<Node<S>*> topo_order(Node<S>* root) {
    std::vector<Node<S>*> order;
    std::vector<std::pair<Node<S>*, std::size_t>> stack;
    std::unordered_set<Node<S>*> visited;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<S>* p = node->parents[idx].get();
            ++idx;
            if (p->needs_grad && !p->is_leaf && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children
}

// Zero the grads of interior nodes so repeated backward calls accumulate
// exactly once into the leaves.
template <typename S>
void run_backward(Node<S>* root, const Mat<S>& seed) {
    auto order = topo_order(root);
    for (Node<S>* n : order) {
        if (!n->is_leaf) n->grad = Mat<S>::Zero(n->value.rows(), n->value.cols());
    }
    root->ensure_grad() += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<S>* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

}  // namespace detail

// Reverse-mode sweep from a scalar root. Leaf grads accumulate additively
// across calls; call zero_grad on parameters between steps.
template <typename S>
void backward(const Value<S>& root) {
    if (root.rows() != 1 || root.cols() != 1) {
        throw UsageError("backward: root must be scalar, got " + shape_str(root.rows(), root.cols()));
    }
    Mat<S> seed(1, 1);
    seed(0, 0) = S(1);
    detail::run_backward(root.node().get(), seed);
}

// Backward from an arbitrary node with an explicit output gradient.
template <typename S>
void backward_seeded(const Value<S>& node, const Mat<S>& seed) {
    if (seed.rows() != node.rows() || seed.cols() != node.cols()) {
        throw ShapeError("backward_seeded: seed " + shape_str(seed.rows(), seed.cols()) +
                         " vs node " + shape_str(node.rows(), node.cols()));
    }
    detail::run_backward(node.node().get(), seed);
}

// Forward value of an (already evaluated) graph root. Construction is eager;
// this accessor exists so call sites read naturally.
template <typename S>
const Mat<S>& forward(const Value<S>& root) {
    return root.val();
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

// Central-difference check of every element of every listed leaf against the
// analytic gradients. Returns the max relative error. The rebuild functor must
// reconstruct the full graph from the leaves' current values.
template <typename S, typename BuildFn>
double check_gradient(BuildFn&& build, const std::vector<Value<S>>& leaves, double eps = 1e-5) {
    if (!(eps > 0.0 && eps <= 1e-2)) throw UsageError("check_gradient: eps must be in (0, 1e-2]");
    Value<S> root = build();
    if (root.rows() != 1 || root.cols() != 1) throw UsageError("check_gradient: root must be scalar");
    for (const auto& l : leaves) const_cast<Value<S>&>(l).zero_grad();
    backward(root);
    std::vector<Mat<S>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& l : leaves) analytic.push_back(l.grad());

    double max_rel = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = const_cast<Value<S>&>(leaves[li]);
        Mat<S>& x = leaf.mutable_val();
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                const S orig = x(r, c);
                x(r, c) = orig + static_cast<S>(eps);
                const double fp = static_cast<double>(build().val()(0, 0));
                x(r, c) = orig - static_cast<S>(eps);
                const double fm = static_cast<double>(build().val()(0, 0));
                x(r, c) = orig;
                const double fd = (fp - fm) / (2.0 * eps);
                const double an = static_cast<double>(analytic[li](r, c));
                const double denom = std::max({std::abs(an), std::abs(fd), 1e-12});
                max_rel = std::max(max_rel, std::abs(an - fd) / denom);
            }
        }
    }
    return max_rel;
}

template <typename S, typename BuildFn>
double check_gradient(BuildFn&& build, std::initializer_list<Value<S>> leaves, double eps = 1e-5) {
    return check_gradient(std::forward<BuildFn>(build), std::vector<Value<S>>(leaves), eps);
}

}  // namespace cplab
