#pragma once

#include <cstddef>

#include "rtn/dataset.hpp"
#include "rtn/matrix.hpp"

namespace rtn {

/// Per-class word vectors (C x dim), unit rows.
struct EmbeddingTable {
    Matrix vectors;

    std::size_t dim() const noexcept { return vectors.cols(); }
};

/// Stand-in for pretrained word vectors: each row is a unit vector drawn from
/// a splitmix64 stream seeded by the FNV-1a hash of the class name, so equal
/// names give equal rows on every platform. Requires dim >= 4.
EmbeddingTable pseudo_embedding(const Vocab& vocab, std::size_t dim);

}  // namespace rtn
