#pragma once

#include <functional>
#include <vector>

#include "clipin/tensor.hpp"

namespace clipin {

// Reverse-mode tape over Tensor operations. Nodes are appended in evaluation
// order; backward() walks the tape in reverse, so creation order is the
// topological order. Leaves can borrow external tensors (parameters) to keep
// per-sample graphs cheap.
class Graph {
public:
    using Id = int;

    // Leaf owning a copy of t.
    Id leaf(Tensor t, bool needs_grad);
    // Leaf borrowing t; the caller keeps t alive for the graph's lifetime.
    Id leaf_ref(const Tensor* t, bool needs_grad);

    Id rows_lookup(Id table, const std::vector<int>& row_ids);
    Id matmul(Id a, Id b);
    Id add(Id a, Id b);                    // same shape
    Id add_rowvec(Id m, Id v);             // v broadcast over rows of m
    Id scale(Id a, double c);
    Id transpose(Id a);
    Id slice_cols(Id a, int start, int count);
    Id concat_cols(const std::vector<Id>& parts);
    Id layer_norm(Id x, Id gamma, Id beta, double eps);
    Id gelu(Id x);
    Id softmax_rows(Id x);
    Id rotary(Id x, std::vector<int> positions, double base_theta);
    Id mean_rows(Id x);                    // [n,d] -> [d]
    Id l2_normalize(Id v);                 // [d] -> [d]
    Id sum_squares(Id x);                  // -> scalar
    Id sum(Id x);                          // -> scalar

    const Tensor& value(Id id) const;
    // Gradient of the last backward root w.r.t. node id (zeros if untouched).
    Tensor grad(Id id) const;
    bool needs_grad(Id id) const;

    // Seeds d(root)/d(root) = 1; root must be scalar.
    void backward(Id root);
    // Seeds an explicit output gradient (same shape as value(root)).
    void backward(Id root, const Tensor& seed);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;                 // owned; unused when external is set
        const Tensor* external = nullptr;
        Tensor grad;                  // allocated lazily during backward
        bool needs_grad = false;
        std::function<void(Graph&)> back;  // empty for leaves
    };

    Id push(Tensor value, bool needs_grad, std::function<void(Graph&)> back);
    Tensor& grad_buf(Id id);
    void add_to_grad(Id id, const Tensor& t);

    std::vector<Node> nodes_;
};

}  // namespace clipin
