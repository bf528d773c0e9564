#include "mre/nn/graph.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mre/error.hpp"

namespace mre::nn {

namespace {

std::string shape_of(const Mat& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const std::string& what) {
    if (!ok) throw DimensionMismatch(what);
}

}  // namespace

const Mat& Var::value() const { return g_->value(*this); }

Var Graph::make(Mat value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Graph::Node& Graph::node(Var v) { return nodes_[static_cast<std::size_t>(v.idx_)]; }
const Graph::Node& Graph::node(Var v) const { return nodes_[static_cast<std::size_t>(v.idx_)]; }

void Graph::check_same_graph(Var v) const {
    if (v.g_ != this) throw Error("Var belongs to a different Graph");
}

const Mat& Graph::value(Var v) const {
    check_same_graph(v);
    return node(v).value;
}

const Mat& Graph::grad(Var v) const {
    check_same_graph(v);
    if (!node(v).needs_grad) throw Error("grad() on a non-differentiable node");
    return node(v).grad;
}

void Graph::clear() { nodes_.clear(); }

Var Graph::constant(Mat v) { return make(std::move(v), false); }

Var Graph::input(Mat v) { return make(std::move(v), true); }

Var Graph::param(Parameter& p) {
    Var out = make(p.value, true);
    node(out).bound = &p;
    return out;
}

Var Graph::add(Var a, Var b) {
    check_same_graph(a);
    check_same_graph(b);
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            "add: " + shape_of(node(a).value) + " vs " + shape_of(node(b).value));
    Var out = make(node(a).value + node(b).value, node(a).needs_grad || node(b).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, bi = b.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, bi, oi] {
            if (nodes_[ai].needs_grad) nodes_[ai].grad += nodes_[oi].grad;
            if (nodes_[bi].needs_grad) nodes_[bi].grad += nodes_[oi].grad;
        };
    }
    return out;
}

Var Graph::sub(Var a, Var b) {
    check_same_graph(a);
    check_same_graph(b);
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            "sub: " + shape_of(node(a).value) + " vs " + shape_of(node(b).value));
    Var out = make(node(a).value - node(b).value, node(a).needs_grad || node(b).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, bi = b.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, bi, oi] {
            if (nodes_[ai].needs_grad) nodes_[ai].grad += nodes_[oi].grad;
            if (nodes_[bi].needs_grad) nodes_[bi].grad -= nodes_[oi].grad;
        };
    }
    return out;
}

Var Graph::mul(Var a, Var b) {
    check_same_graph(a);
    check_same_graph(b);
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            "mul: " + shape_of(node(a).value) + " vs " + shape_of(node(b).value));
    Var out = make(node(a).value.cwiseProduct(node(b).value),
                   node(a).needs_grad || node(b).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, bi = b.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, bi, oi] {
            if (nodes_[ai].needs_grad)
                nodes_[ai].grad += nodes_[oi].grad.cwiseProduct(nodes_[bi].value);
            if (nodes_[bi].needs_grad)
                nodes_[bi].grad += nodes_[oi].grad.cwiseProduct(nodes_[ai].value);
        };
    }
    return out;
}

Var Graph::scale(Var a, double c) {
    check_same_graph(a);
    Var out = make(node(a).value * c, node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi, c] { nodes_[ai].grad += c * nodes_[oi].grad; };
    }
    return out;
}

Var Graph::add_scalar(Var a, double c) {
    check_same_graph(a);
    Var out = make(node(a).value.array() + c, node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi] { nodes_[ai].grad += nodes_[oi].grad; };
    }
    return out;
}

Var Graph::matmul(Var a, Var b) {
    check_same_graph(a);
    check_same_graph(b);
    require(a.cols() == b.rows(),
            "matmul: " + shape_of(node(a).value) + " * " + shape_of(node(b).value));
    Var out = make(node(a).value * node(b).value, node(a).needs_grad || node(b).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, bi = b.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, bi, oi] {
            if (nodes_[ai].needs_grad)
                nodes_[ai].grad += nodes_[oi].grad * nodes_[bi].value.transpose();
            if (nodes_[bi].needs_grad)
                nodes_[bi].grad += nodes_[ai].value.transpose() * nodes_[oi].grad;
        };
    }
    return out;
}

Var Graph::transpose(Var a) {
    check_same_graph(a);
    Var out = make(node(a).value.transpose(), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi] { nodes_[ai].grad += nodes_[oi].grad.transpose(); };
    }
    return out;
}

Var Graph::add_rowvec(Var a, Var row) {
    check_same_graph(a);
    check_same_graph(row);
    require(row.rows() == 1 && row.cols() == a.cols(),
            "add_rowvec: " + shape_of(node(a).value) + " + " + shape_of(node(row).value));
    Mat v = node(a).value;
    v.rowwise() += node(row).value.row(0);
    Var out = make(std::move(v), node(a).needs_grad || node(row).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, ri = row.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, ri, oi] {
            if (nodes_[ai].needs_grad) nodes_[ai].grad += nodes_[oi].grad;
            if (nodes_[ri].needs_grad) nodes_[ri].grad += nodes_[oi].grad.colwise().sum();
        };
    }
    return out;
}

Var Graph::div_by(Var a, Var denom) {
    check_same_graph(a);
    check_same_graph(denom);
    require(denom.rows() == 1 && denom.cols() == 1, "div_by: denominator must be 1x1");
    const double s = node(denom).value(0, 0);
    Var out = make(node(a).value / s, node(a).needs_grad || node(denom).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, di = denom.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, di, oi, s] {
            if (nodes_[ai].needs_grad) nodes_[ai].grad += nodes_[oi].grad / s;
            if (nodes_[di].needs_grad)
                nodes_[di].grad(0, 0) -=
                    nodes_[oi].grad.cwiseProduct(nodes_[oi].value).sum() / s;
        };
    }
    return out;
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: empty");
    Eigen::Index total = 0;
    bool needs = false;
    const Eigen::Index cols = parts.front().cols();
    for (Var p : parts) {
        check_same_graph(p);
        require(p.cols() == cols, "concat_rows: column mismatch");
        total += p.rows();
        needs = needs || node(p).needs_grad;
    }
    Mat v(total, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
        v.middleRows(r, p.rows()) = node(p).value;
        r += p.rows();
    }
    Var out = make(std::move(v), needs);
    if (needs) {
        std::vector<int> idx;
        std::vector<Eigen::Index> sizes;
        for (Var p : parts) {
            idx.push_back(p.idx_);
            sizes.push_back(p.rows());
        }
        const int oi = out.idx_;
        node(out).backprop = [this, idx, sizes, oi] {
            Eigen::Index r0 = 0;
            for (std::size_t k = 0; k < idx.size(); ++k) {
                if (nodes_[idx[k]].needs_grad)
                    nodes_[idx[k]].grad += nodes_[oi].grad.middleRows(r0, sizes[k]);
                r0 += sizes[k];
            }
        };
    }
    return out;
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    Eigen::Index total = 0;
    bool needs = false;
    const Eigen::Index rows = parts.front().rows();
    for (Var p : parts) {
        check_same_graph(p);
        require(p.rows() == rows, "concat_cols: row mismatch");
        total += p.cols();
        needs = needs || node(p).needs_grad;
    }
    Mat v(rows, total);
    Eigen::Index c = 0;
    for (Var p : parts) {
        v.middleCols(c, p.cols()) = node(p).value;
        c += p.cols();
    }
    Var out = make(std::move(v), needs);
    if (needs) {
        std::vector<int> idx;
        std::vector<Eigen::Index> sizes;
        for (Var p : parts) {
            idx.push_back(p.idx_);
            sizes.push_back(p.cols());
        }
        const int oi = out.idx_;
        node(out).backprop = [this, idx, sizes, oi] {
            Eigen::Index c0 = 0;
            for (std::size_t k = 0; k < idx.size(); ++k) {
                if (nodes_[idx[k]].needs_grad)
                    nodes_[idx[k]].grad += nodes_[oi].grad.middleCols(c0, sizes[k]);
                c0 += sizes[k];
            }
        };
    }
    return out;
}

Var Graph::slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
    check_same_graph(a);
    require(r0 >= 0 && n >= 0 && r0 + n <= a.rows(), "slice_rows: out of range");
    Var out = make(node(a).value.middleRows(r0, n), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi, r0, n] {
            nodes_[ai].grad.middleRows(r0, n) += nodes_[oi].grad;
        };
    }
    return out;
}

Var Graph::slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
    check_same_graph(a);
    require(c0 >= 0 && n >= 0 && c0 + n <= a.cols(), "slice_cols: out of range");
    Var out = make(node(a).value.middleCols(c0, n), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi, c0, n] {
            nodes_[ai].grad.middleCols(c0, n) += nodes_[oi].grad;
        };
    }
    return out;
}

Var Graph::gather_rows(Var a, std::vector<int> idx) {
    check_same_graph(a);
    for (int i : idx)
        require(i >= 0 && i < a.rows(), "gather_rows: index out of range");
    Mat v(static_cast<Eigen::Index>(idx.size()), a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) v.row(static_cast<Eigen::Index>(k)) = node(a).value.row(idx[k]);
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi, idx = std::move(idx)] {
            for (std::size_t k = 0; k < idx.size(); ++k)
                nodes_[ai].grad.row(idx[k]) += nodes_[oi].grad.row(static_cast<Eigen::Index>(k));
        };
    }
    return out;
}

Var Graph::assemble_rows(Eigen::Index n_rows, Var kept, std::vector<int> kept_pos, Var filler,
                         std::vector<int> fill_pos) {
    check_same_graph(kept);
    check_same_graph(filler);
    require(kept.rows() == static_cast<Eigen::Index>(kept_pos.size()),
            "assemble_rows: kept size mismatch");
    require(filler.rows() == 1 && filler.cols() == kept.cols(),
            "assemble_rows: filler must be 1 x d");
    require(static_cast<Eigen::Index>(kept_pos.size() + fill_pos.size()) == n_rows,
            "assemble_rows: positions must partition the rows");
    Mat v(n_rows, kept.cols());
    for (std::size_t k = 0; k < kept_pos.size(); ++k)
        v.row(kept_pos[k]) = node(kept).value.row(static_cast<Eigen::Index>(k));
    for (int p : fill_pos) v.row(p) = node(filler).value.row(0);
    Var out = make(std::move(v), node(kept).needs_grad || node(filler).needs_grad);
    if (node(out).needs_grad) {
        const int ki = kept.idx_, fi = filler.idx_, oi = out.idx_;
        node(out).backprop =
            [this, ki, fi, oi, kept_pos = std::move(kept_pos), fill_pos = std::move(fill_pos)] {
                if (nodes_[ki].needs_grad)
                    for (std::size_t k = 0; k < kept_pos.size(); ++k)
                        nodes_[ki].grad.row(static_cast<Eigen::Index>(k)) +=
                            nodes_[oi].grad.row(kept_pos[k]);
                if (nodes_[fi].needs_grad)
                    for (int p : fill_pos) nodes_[fi].grad.row(0) += nodes_[oi].grad.row(p);
            };
    }
    return out;
}

Var Graph::tanh_(Var a) {
    check_same_graph(a);
    Var out = make(node(a).value.array().tanh(), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi] {
            nodes_[ai].grad.array() +=
                nodes_[oi].grad.array() * (1.0 - nodes_[oi].value.array().square());
        };
    }
    return out;
}

Var Graph::gelu(Var a) {
    check_same_graph(a);
    const auto& x = node(a).value.array();
    Mat v = (0.5 * x * (1.0 + (x / std::numbers::sqrt2).erf())).matrix();
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi] {
            const auto& xv = nodes_[ai].value.array();
            const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
            Eigen::ArrayXXd d = 0.5 * (1.0 + (xv / std::numbers::sqrt2).erf()) +
                                xv * inv_sqrt2pi * (-0.5 * xv.square()).exp();
            nodes_[ai].grad.array() += nodes_[oi].grad.array() * d;
        };
    }
    return out;
}

Var Graph::leaky_relu(Var a, double alpha) {
    check_same_graph(a);
    const auto& x = node(a).value.array();
    Mat v = x.max(alpha * x).matrix();
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi, alpha] {
            const auto& xv = nodes_[ai].value.array();
            nodes_[ai].grad.array() +=
                nodes_[oi].grad.array() * (xv > 0.0).select(1.0, Eigen::ArrayXXd::Constant(xv.rows(), xv.cols(), alpha));
        };
    }
    return out;
}

Var Graph::relu(Var a) {
    check_same_graph(a);
    Mat v = node(a).value.array().max(0.0).matrix();
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi] {
            const auto& xv = nodes_[ai].value.array();
            nodes_[ai].grad.array() += nodes_[oi].grad.array() * (xv > 0.0).cast<double>();
        };
    }
    return out;
}

Var Graph::leaky_relu_mask(Var a, double alpha) {
    check_same_graph(a);
    const auto& x = node(a).value.array();
    Mat v = (x > 0.0).select(Mat::Ones(a.rows(), a.cols()),
                             Mat::Constant(a.rows(), a.cols(), alpha));
    return constant(std::move(v));
}

Var Graph::sum_all(Var a) {
    check_same_graph(a);
    Mat v(1, 1);
    v(0, 0) = node(a).value.sum();
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi] {
            nodes_[ai].grad.array() += nodes_[oi].grad(0, 0);
        };
    }
    return out;
}

Var Graph::mean_all(Var a) {
    check_same_graph(a);
    const double n = static_cast<double>(node(a).value.size());
    Mat v(1, 1);
    v(0, 0) = node(a).value.sum() / n;
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi, n] {
            nodes_[ai].grad.array() += nodes_[oi].grad(0, 0) / n;
        };
    }
    return out;
}

Var Graph::colwise_mean(Var a) {
    check_same_graph(a);
    require(a.rows() >= 1, "colwise_mean: empty");
    const double m = static_cast<double>(a.rows());
    Mat v = node(a).value.colwise().mean();
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi, m] {
            nodes_[ai].grad +=
                (Mat::Ones(nodes_[ai].value.rows(), 1) * nodes_[oi].grad) / m;
        };
    }
    return out;
}

Var Graph::softmax_rows(Var a) {
    check_same_graph(a);
    Mat v = node(a).value;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double mx = v.row(i).maxCoeff();
        v.row(i) = (v.row(i).array() - mx).exp();
        v.row(i) /= v.row(i).sum();
    }
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi] {
            const Mat& y = nodes_[oi].value;
            const Mat& g = nodes_[oi].grad;
            for (Eigen::Index i = 0; i < y.rows(); ++i) {
                const double dot = g.row(i).cwiseProduct(y.row(i)).sum();
                nodes_[ai].grad.row(i) +=
                    (g.row(i).array() - dot).matrix().cwiseProduct(y.row(i));
            }
        };
    }
    return out;
}

Var Graph::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
    check_same_graph(x);
    check_same_graph(gain);
    check_same_graph(bias);
    require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 &&
                bias.cols() == x.cols(),
            "layer_norm_rows: gain/bias must be 1 x cols");
    const Eigen::Index n = x.cols();
    const Mat& xv = node(x).value;
    Mat xhat(xv.rows(), n);
    Eigen::VectorXd inv_std(xv.rows());
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
        const double mu = xv.row(i).mean();
        const double var = (xv.row(i).array() - mu).square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std(i) = is;
        xhat.row(i) = ((xv.row(i).array() - mu) * is).matrix();
    }
    Mat v = xhat;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        v.row(i) = v.row(i).cwiseProduct(node(gain).value.row(0)) + node(bias).value.row(0);
    const bool needs =
        node(x).needs_grad || node(gain).needs_grad || node(bias).needs_grad;
    Var out = make(std::move(v), needs);
    if (needs) {
        const int xi = x.idx_, gi = gain.idx_, bi = bias.idx_, oi = out.idx_;
        node(out).backprop = [this, xi, gi, bi, oi, xhat = std::move(xhat),
                              inv_std = std::move(inv_std)] {
            const Mat& g = nodes_[oi].grad;
            if (nodes_[gi].needs_grad)
                nodes_[gi].grad += g.cwiseProduct(xhat).colwise().sum();
            if (nodes_[bi].needs_grad) nodes_[bi].grad += g.colwise().sum();
            if (nodes_[xi].needs_grad) {
                const auto& gain_row = nodes_[gi].value.row(0);
                for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    const Eigen::RowVectorXd gh = g.row(i).cwiseProduct(gain_row);
                    const double mean_gh = gh.mean();
                    const double mean_ghx = gh.cwiseProduct(xhat.row(i)).mean();
                    nodes_[xi].grad.row(i) +=
                        ((gh.array() - mean_gh - xhat.row(i).array() * mean_ghx) *
                         inv_std(i))
                            .matrix();
                }
            }
        };
    }
    return out;
}

Var Graph::l2_normalize_rows(Var a, double eps) {
    check_same_graph(a);
    const Mat& xv = node(a).value;
    Mat v(xv.rows(), xv.cols());
    Eigen::VectorXd inv_s(xv.rows());
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
        const double s = std::sqrt(xv.row(i).squaredNorm() + eps);
        inv_s(i) = 1.0 / s;
        v.row(i) = xv.row(i) * inv_s(i);
    }
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi, inv_s = std::move(inv_s)] {
            const Mat& y = nodes_[oi].value;
            const Mat& g = nodes_[oi].grad;
            for (Eigen::Index i = 0; i < y.rows(); ++i) {
                const double dot = g.row(i).cwiseProduct(y.row(i)).sum();
                nodes_[ai].grad.row(i) += (g.row(i) - dot * y.row(i)) * inv_s(i);
            }
        };
    }
    return out;
}

Var Graph::l2_norm(Var a) {
    check_same_graph(a);
    Mat v(1, 1);
    v(0, 0) = node(a).value.norm();
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi] {
            const double n = nodes_[oi].value(0, 0);
            if (n > 1e-300)
                nodes_[ai].grad += (nodes_[oi].grad(0, 0) / n) * nodes_[ai].value;
        };
    }
    return out;
}

Var Graph::sqrt_(Var a) {
    check_same_graph(a);
    Mat v = node(a).value.array().sqrt().matrix();
    Var out = make(std::move(v), node(a).needs_grad);
    if (node(out).needs_grad) {
        const int ai = a.idx_, oi = out.idx_;
        node(out).backprop = [this, ai, oi] {
            const auto& y = nodes_[oi].value.array();
            nodes_[ai].grad.array() +=
                (y > 0.0).select(nodes_[oi].grad.array() / (2.0 * y), 0.0);
        };
    }
    return out;
}

Var Graph::cross_entropy_rows(Var logits, std::vector<int> targets) {
    check_same_graph(logits);
    require(static_cast<Eigen::Index>(targets.size()) == logits.rows(),
            "cross_entropy_rows: one target per row");
    for (int t : targets)
        require(t >= 0 && t < logits.cols(), "cross_entropy_rows: target out of range");
    const Mat& x = node(logits).value;
    const double n = static_cast<double>(x.rows());
    Mat probs(x.rows(), x.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mx = x.row(i).maxCoeff();
        Eigen::RowVectorXd e = (x.row(i).array() - mx).exp();
        const double z = e.sum();
        probs.row(i) = e / z;
        loss += std::log(z) + mx - x(i, targets[static_cast<std::size_t>(i)]);
    }
    Mat v(1, 1);
    v(0, 0) = loss / n;
    Var out = make(std::move(v), node(logits).needs_grad);
    if (node(out).needs_grad) {
        const int li = logits.idx_, oi = out.idx_;
        node(out).backprop = [this, li, oi, probs = std::move(probs),
                              targets = std::move(targets), n] {
            const double g = nodes_[oi].grad(0, 0) / n;
            Mat d = probs;
            for (Eigen::Index i = 0; i < d.rows(); ++i)
                d(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
            nodes_[li].grad += g * d;
        };
    }
    return out;
}

void Graph::backward(Var loss) {
    check_same_graph(loss);
    require(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be 1x1");
    if (!node(loss).needs_grad)
        throw Error("backward: loss does not depend on any differentiable leaf");
    node(loss).grad(0, 0) += 1.0;
    for (int i = loss.idx_; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.needs_grad && n.backprop) n.backprop();
    }
    for (std::size_t i = 0; i <= static_cast<std::size_t>(loss.idx_); ++i) {
        Node& n = nodes_[i];
        if (n.bound != nullptr) n.bound->grad += n.grad;
    }
}

}  // namespace mre::nn
