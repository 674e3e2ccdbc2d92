#include "rtn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "rtn/errors.hpp"

namespace rtn::ad {

namespace {

Var make_node(Matrix value, std::vector<Var> parents, std::function<void(Node&)> rule) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = std::any_of(parents.begin(), parents.end(),
                                   [](const Var& p) { return p->requires_grad; });
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_rule = std::move(rule);
    }
    return n;
}

void check_same_shape(const char* op, const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) {
        throw DimensionError(std::string(op) + ": " + a->value.shape_str() + " vs " +
                             b->value.shape_str());
    }
}

}  // namespace

Var constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

Var parameter(Matrix value) {
    auto n = std::make_shared<Node>();
    n->grad = Matrix(value.rows(), value.cols());
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

Var matmul(const Var& a, const Var& b) {
    if (a->cols() != b->rows()) {
        throw DimensionError("matmul: " + a->value.shape_str() + " * " + b->value.shape_str());
    }
    Matrix out(a->rows(), b->cols());
    gemm_nn(a->value, b->value, out);
    return make_node(std::move(out), {a, b}, [](Node& self) {
        const Var& a = self.parents[0];
        const Var& b = self.parents[1];
        if (a->requires_grad) gemm_nt(self.grad, b->value, a->grad);
        if (b->requires_grad) gemm_tn(a->value, self.grad, b->grad);
    });
}

Var transpose(const Var& a) {
    return make_node(rtn::transpose(a->value), {a}, [](Node& self) {
        Node& a = *self.parents[0];
        for (std::size_t r = 0; r < self.rows(); ++r)
            for (std::size_t c = 0; c < self.cols(); ++c) a.grad(c, r) += self.grad(r, c);
    });
}

Var add(const Var& a, const Var& b) {
    check_same_shape("add", a, b);
    Matrix out = a->value;
    out += b->value;
    return make_node(std::move(out), {a, b}, [](Node& self) {
        for (const Var& p : self.parents)
            if (p->requires_grad) p->grad += self.grad;
    });
}

Var add_row(const Var& x, const Var& row) {
    if (row->rows() != 1 || row->cols() != x->cols()) {
        throw DimensionError("add_row: " + x->value.shape_str() + " + " + row->value.shape_str());
    }
    Matrix out = x->value;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto o = out.row(r);
        for (std::size_t c = 0; c < o.size(); ++c) o[c] += row->value(0, c);
    }
    return make_node(std::move(out), {x, row}, [](Node& self) {
        Node& x = *self.parents[0];
        Node& row = *self.parents[1];
        if (x.requires_grad) x.grad += self.grad;
        if (row.requires_grad) {
            for (std::size_t r = 0; r < self.rows(); ++r)
                for (std::size_t c = 0; c < self.cols(); ++c) row.grad(0, c) += self.grad(r, c);
        }
    });
}

Var scale(const Var& x, double s) {
    Matrix out = x->value;
    out *= s;
    return make_node(std::move(out), {x}, [s](Node& self) {
        Node& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad.data()[i] += s * self.grad.data()[i];
    });
}

Var softmax_rows(const Var& x, double scale) {
    Matrix out(x->rows(), x->cols());
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto in = x->value.row(r);
        auto o = out.row(r);
        if (in.empty()) continue;
        const double mx = *std::max_element(in.begin(), in.end());
        double z = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(scale * (in[c] - mx));
            z += o[c];
        }
        for (double& v : o) v /= z;
    }
    return make_node(std::move(out), {x}, [scale](Node& self) {
        Node& x = *self.parents[0];
        for (std::size_t r = 0; r < self.rows(); ++r) {
            auto y = self.value.row(r);
            auto g = self.grad.row(r);
            double dot = 0.0;
            for (std::size_t c = 0; c < y.size(); ++c) dot += g[c] * y[c];
            auto dx = x.grad.row(r);
            for (std::size_t c = 0; c < y.size(); ++c) dx[c] += scale * y[c] * (g[c] - dot);
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const std::size_t n = x->rows(), d = x->cols();
    if (gain->rows() != 1 || gain->cols() != d || !gain->value.same_shape(bias->value)) {
        throw DimensionError("layer_norm: x " + x->value.shape_str() + ", gain " +
                             gain->value.shape_str() + ", bias " + bias->value.shape_str());
    }
    Matrix xhat(n, d);
    std::vector<double> inv_std(n);
    Matrix out(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        auto in = x->value.row(r);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            xhat(r, c) = (in[c] - mean) * inv_std[r];
            out(r, c) = gain->value(0, c) * xhat(r, c) + bias->value(0, c);
        }
    }
    return make_node(
        std::move(out), {x, gain, bias},
        [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
            Node& x = *self.parents[0];
            Node& gain = *self.parents[1];
            Node& bias = *self.parents[2];
            const std::size_t d = self.cols();
            std::vector<double> dxhat(d);
            for (std::size_t r = 0; r < self.rows(); ++r) {
                auto g = self.grad.row(r);
                auto xh = xhat.row(r);
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    if (gain.requires_grad) gain.grad(0, c) += g[c] * xh[c];
                    if (bias.requires_grad) bias.grad(0, c) += g[c];
                    dxhat[c] = g[c] * gain.value(0, c);
                    mean_dxhat += dxhat[c];
                    mean_dxhat_xhat += dxhat[c] * xh[c];
                }
                if (!x.requires_grad) continue;
                mean_dxhat /= static_cast<double>(d);
                mean_dxhat_xhat /= static_cast<double>(d);
                auto dx = x.grad.row(r);
                for (std::size_t c = 0; c < d; ++c) {
                    dx[c] += inv_std[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
                }
            }
        });
}

Var leaky_relu(const Var& x, double slope) {
    Matrix out = x->value;
    for (double& v : out.data()) v = v > 0.0 ? v : slope * v;
    return make_node(std::move(out), {x}, [slope](Node& self) {
        Node& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            x.grad.data()[i] += (x.value.data()[i] > 0.0 ? 1.0 : slope) * self.grad.data()[i];
        }
    });
}

Var dropout(const Var& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout: rate must be in [0,1)");
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    Matrix mask(x->rows(), x->cols());
    for (double& m : mask.data()) m = rng.uniform() < rate ? 0.0 : keep_scale;
    Matrix out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= mask.data()[i];
    return make_node(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
        Node& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            x.grad.data()[i] += mask.data()[i] * self.grad.data()[i];
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw UsageError("concat_cols: no parts");
    if (parts.size() == 1) return parts[0];
    const std::size_t rows = parts[0]->rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        if (p->rows() != rows) {
            throw DimensionError("concat_cols: row mismatch " + parts[0]->value.shape_str() +
                                 " vs " + p->value.shape_str());
        }
        cols += p->cols();
    }
    Matrix out(rows, cols);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        for (std::size_t r = 0; r < rows; ++r) {
            auto src = p->value.row(r);
            std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
        }
        offset += p->cols();
    }
    return make_node(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
        std::size_t offset = 0;
        for (const Var& p : self.parents) {
            if (p->requires_grad) {
                for (std::size_t r = 0; r < self.rows(); ++r) {
                    auto g = self.grad.row(r);
                    auto dst = p->grad.row(r);
                    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[offset + c];
                }
            }
            offset += p->cols();
        }
    });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
    if (begin + count > x->cols()) {
        throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") of " + x->value.shape_str());
    }
    Matrix out(x->rows(), count);
    for (std::size_t r = 0; r < x->rows(); ++r) {
        auto src = x->value.row(r).subspan(begin, count);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return make_node(std::move(out), {x}, [begin](Node& self) {
        Node& x = *self.parents[0];
        for (std::size_t r = 0; r < self.rows(); ++r) {
            auto g = self.grad.row(r);
            auto dst = x.grad.row(r).subspan(begin, g.size());
            for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c];
        }
    });
}

Var gather_rows(const Var& x, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), x->cols());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= x->rows()) {
            throw IndexError("gather_rows: index " + std::to_string(indices[k]) + " >= " +
                             std::to_string(x->rows()));
        }
        auto src = x->value.row(indices[k]);
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return make_node(std::move(out), {x}, [idx = std::move(idx)](Node& self) {
        Node& x = *self.parents[0];
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto g = self.grad.row(k);
            auto dst = x.grad.row(idx[k]);
            for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c];
        }
    });
}

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x->value.data()) s += v;
    return make_node(Matrix(1, 1, s), {x}, [](Node& self) {
        Node& x = *self.parents[0];
        const double g = self.grad(0, 0);
        for (double& v : x.grad.data()) v += g;
    });
}

Var log(const Var& x) {
    Matrix out = x->value;
    for (double& v : out.data()) v = std::log(v);
    return make_node(std::move(out), {x}, [](Node& self) {
        Node& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            x.grad.data()[i] += self.grad.data()[i] / x.value.data()[i];
    });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
    const std::size_t n = logits->rows(), c = logits->cols();
    if (targets.size() != n) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             logits->value.shape_str() + " logits");
    }
    if (n == 0) throw UsageError("cross_entropy: no rows");
    Matrix probs(n, c);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (targets[r] >= c) {
            throw IndexError("cross_entropy: target " + std::to_string(targets[r]) +
                             " out of range for " + std::to_string(c) + " classes");
        }
        auto in = logits->value.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double z = 0.0;
        for (double v : in) z += std::exp(v - mx);
        const double lse = mx + std::log(z);
        total += lse - in[targets[r]];
        for (std::size_t k = 0; k < c; ++k) probs(r, k) = std::exp(in[k] - lse);
    }
    std::vector<std::size_t> t(targets.begin(), targets.end());
    return make_node(Matrix(1, 1, total / static_cast<double>(n)), {logits},
                     [probs = std::move(probs), t = std::move(t)](Node& self) {
                         Node& logits = *self.parents[0];
                         const double g = self.grad(0, 0) / static_cast<double>(t.size());
                         for (std::size_t r = 0; r < t.size(); ++r) {
                             auto dst = logits.grad.row(r);
                             auto p = probs.row(r);
                             for (std::size_t k = 0; k < dst.size(); ++k) {
                                 dst[k] += g * (p[k] - (k == t[r] ? 1.0 : 0.0));
                             }
                         }
                     });
}

Var nll(const Var& probs, std::span<const std::size_t> targets) {
    const std::size_t n = probs->rows();
    if (targets.size() != n) throw DimensionError("nll: target count mismatch");
    if (n == 0) throw UsageError("nll: no rows");
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (targets[r] >= probs->cols()) throw IndexError("nll: target out of range");
        total -= std::log(probs->value(r, targets[r]));
    }
    std::vector<std::size_t> t(targets.begin(), targets.end());
    return make_node(Matrix(1, 1, total / static_cast<double>(n)), {probs},
                     [t = std::move(t)](Node& self) {
                         Node& p = *self.parents[0];
                         const double g = self.grad(0, 0) / static_cast<double>(t.size());
                         for (std::size_t r = 0; r < t.size(); ++r) {
                             p.grad(r, t[r]) -= g / p.value(r, t[r]);
                         }
                     });
}

void backward(const Var& loss) {
    if (loss->rows() != 1 || loss->cols() != 1) {
        throw UsageError("backward: loss must be 1x1, got " + loss->value.shape_str());
    }
    if (!loss->requires_grad) return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Leaves collect this pass in a fresh buffer and add it to their running
    // grad once at the end, so repeated passes accumulate exact multiples.
    std::vector<std::pair<Node*, Matrix>> held;
    for (Node* n : order) {
        if (n->is_leaf()) held.emplace_back(n, std::move(n->grad));
        n->grad = Matrix(n->rows(), n->cols());
    }
    loss->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->is_leaf() && n->backward_rule) n->backward_rule(*n);
    }
    for (auto& [n, prev] : held) {
        if (prev.same_shape(n->grad)) n->grad += prev;
    }
}

}  // namespace rtn::ad
