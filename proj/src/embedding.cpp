#include "rtn/embedding.hpp"

#include <cmath>

#include "rtn/errors.hpp"
#include "rtn/rng.hpp"

namespace rtn {

EmbeddingTable pseudo_embedding(const Vocab& vocab, std::size_t dim) {
    if (dim < 4) throw ConfigError("pseudo_embedding: dim must be >= 4");
    EmbeddingTable table{Matrix(vocab.num_classes(), dim)};
    for (std::size_t c = 0; c < vocab.num_classes(); ++c) {
        std::uint64_t state = fnv1a64(vocab.classes[c]);
        auto row = table.vectors.row(c);
        double norm2 = 0.0;
        for (double& v : row) {
            state = Rng::splitmix(state);
            v = static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;  // [-1, 1)
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& v : row) v *= inv;
    }
    return table;
}

}  // namespace rtn
