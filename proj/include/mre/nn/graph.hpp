#pragma once

#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "mre/nn/parameter.hpp"

namespace mre::nn {

class Graph;

// Handle to a node on the tape. Cheap to copy; owned values live in the Graph.
class Var {
public:
    Var() = default;
    const Mat& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool valid() const { return g_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* g, int idx) : g_(g), idx_(idx) {}
    Graph* g_ = nullptr;
    int idx_ = -1;
};

// Reverse-mode autodiff tape over dense double matrices. Nodes are appended in
// topological order; backward() walks the tape in reverse. One Graph instance
// per training step; call clear() (or use a fresh Graph) between steps.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // --- leaves ---
    Var constant(Mat v);           // not differentiated through
    Var input(Mat v);              // differentiable leaf; grad readable via grad()
    Var param(Parameter& p);       // grads accumulate into p.grad on backward()

    // --- arithmetic ---
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                   // elementwise
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var add_rowvec(Var a, Var row);          // broadcast 1xN row over MxN
    Var div_by(Var a, Var denom);            // denom is 1x1; elementwise a / denom

    // --- shape ---
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n);
    Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n);
    Var gather_rows(Var a, std::vector<int> idx);
    // Builds an (n_rows x d) matrix with rows of `kept` at kept_pos and the
    // (1 x d) `filler` row at every fill_pos. Positions must partition [0, n).
    Var assemble_rows(Eigen::Index n_rows, Var kept, std::vector<int> kept_pos,
                      Var filler, std::vector<int> fill_pos);

    // --- nonlinearities ---
    Var tanh_(Var a);
    Var gelu(Var a);               // exact erf form
    Var leaky_relu(Var a, double alpha);
    Var relu(Var a);               // also the hinge [x]_+
    // Elementwise derivative of leaky_relu at a's values, emitted as a
    // constant (zero second derivative a.e.); used for analytic input-gradients.
    Var leaky_relu_mask(Var a, double alpha);

    // --- reductions / normalizations ---
    Var sum_all(Var a);            // 1x1
    Var mean_all(Var a);           // 1x1
    Var colwise_mean(Var a);       // MxN -> 1xN
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
    Var l2_normalize_rows(Var a, double eps = 1e-12);  // rows x / sqrt(|x|^2 + eps)
    Var l2_norm(Var a);            // Frobenius norm, 1x1; exact 0 at 0 with zero subgradient
    Var sqrt_(Var a);              // elementwise
    // Mean cross-entropy over rows of `logits` against integer targets,
    // softmax applied internally (numerically stable). 1x1.
    Var cross_entropy_rows(Var logits, std::vector<int> targets);

    void backward(Var loss);       // loss must be 1x1; seeds with 1
    const Mat& value(Var v) const;
    const Mat& grad(Var v) const;  // valid after backward()
    std::size_t size() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        Parameter* bound = nullptr;
        std::function<void()> backprop;  // pulls this node's grad into parents
    };

    Var make(Mat value, bool needs_grad);
    Node& node(Var v);
    const Node& node(Var v) const;
    void check_same_graph(Var v) const;

    std::deque<Node> nodes_;
};

}  // namespace mre::nn
