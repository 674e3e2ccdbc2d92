#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "rtn/matrix.hpp"
#include "rtn/rng.hpp"

namespace rtn::ad {

class Node;
using Var = std::shared_ptr<Node>;

/// A vertex of the reverse-mode computation graph.
///
/// Leaves are either parameters (requires_grad, grad accumulates across
/// backward passes until the optimizer zeroes it) or constants. Interior
/// nodes get their grad reset at the start of every backward pass.
class Node {
public:
    Matrix value;
    Matrix grad;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_rule;
    bool requires_grad = false;

    bool is_leaf() const noexcept { return parents.empty(); }
    std::size_t rows() const noexcept { return value.rows(); }
    std::size_t cols() const noexcept { return value.cols(); }
};

Var constant(Matrix value);
Var parameter(Matrix value);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
/// x + row, with `row` (1 x cols) broadcast over every row of x.
Var add_row(const Var& x, const Var& row);
Var scale(const Var& x, double s);
/// Row-wise softmax of (scale * x), max-subtracted.
Var softmax_rows(const Var& x, double scale = 1.0);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var leaky_relu(const Var& x, double slope = 0.01);
/// Inverted dropout; identity when !training or rate == 0.
Var dropout(const Var& x, double rate, bool training, Rng& rng);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
/// out.row(k) = x.row(indices[k]); gradient scatter-adds back.
Var gather_rows(const Var& x, std::span<const std::size_t> indices);
Var sum(const Var& x);
Var log(const Var& x);
/// Mean over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);
/// Mean over rows of -log probs[row, target[row]]; probs must be positive.
Var nll(const Var& probs, std::span<const std::size_t> targets);

inline Var concat_cols(std::initializer_list<Var> parts) {
    return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

/// Propagates d loss / d node into every reachable node's grad.
/// `loss` must be 1x1.
void backward(const Var& loss);

}  // namespace rtn::ad
