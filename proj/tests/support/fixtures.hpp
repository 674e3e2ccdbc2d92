#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rtn/dataset.hpp"
#include "rtn/embedding.hpp"
#include "rtn/frequency.hpp"
#include "rtn/model.hpp"
#include "rtn/rng.hpp"

namespace rtn::fixture {

inline Vocab vocab(std::size_t classes, std::size_t predicates) {
    Vocab v;
    for (std::size_t c = 0; c < classes; ++c) v.classes.push_back("c" + std::to_string(c));
    v.predicates.push_back("__background__");
    for (std::size_t p = 1; p < predicates; ++p) v.predicates.push_back("r" + std::to_string(p));
    return v;
}

inline Box random_box(Rng& rng) {
    const double w = rng.uniform(0.05, 0.5), h = rng.uniform(0.05, 0.5);
    const double x = rng.uniform(0.0, 1.0 - w), y = rng.uniform(0.0, 1.0 - h);
    return {x, y, x + w, y + h};
}

/// Valid random scene; relations on a random subset of ordered pairs.
inline SceneRecord random_scene(Rng& rng, std::size_t nodes, std::size_t classes, std::size_t predicates,
                                std::size_t visual_dim, std::size_t global_dim, double rel_prob = 0.3) {
    SceneRecord s;
    s.id = "s" + std::to_string(rng.below(1000000));
    for (std::size_t i = 0; i < nodes; ++i) {
        NodeRecord n;
        n.box = random_box(rng);
        for (std::size_t k = 0; k < visual_dim; ++k) n.visual.push_back(rng.normal());
        n.gt_class = static_cast<std::size_t>(rng.below(classes));
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            n.class_probs.push_back(rng.uniform(0.01, 1.0) + (c == n.gt_class ? 2.0 : 0.0));
            z += n.class_probs.back();
        }
        for (double& p : n.class_probs) p /= z;
        s.nodes.push_back(std::move(n));
    }
    for (std::size_t i = 0; i < nodes; ++i)
        for (std::size_t j = 0; j < nodes; ++j)
            if (i != j && rng.bernoulli(rel_prob))
                s.relations.push_back({i, j, 1 + static_cast<std::size_t>(rng.below(predicates - 1))});
    for (std::size_t g = 0; g < global_dim; ++g) s.global.push_back(rng.normal());
    return s;
}

/// Small but complete architecture: 3 encoder / 2 decoder layers.
inline ModelConfig tiny_config(std::size_t classes = 3, std::size_t predicates = 4) {
    ModelConfig c;
    c.embed.d_model = 16;
    c.embed.max_nodes = 16;
    c.embed.visual_dim = 10;
    c.embed.embed_dim = 6;
    c.embed.global_dim = 5;
    c.num_classes = classes;
    c.num_predicates = predicates;
    c.heads = 2;
    c.ffn_dim = 24;
    c.dropout = 0.0;
    return c;
}

inline RtnModel tiny_model(const ModelConfig& cfg, std::uint64_t seed = 7) {
    Rng rng(seed);
    const Vocab v = vocab(cfg.num_classes, cfg.num_predicates);
    FrequencyTable fq(cfg.num_classes, cfg.num_predicates);
    for (std::size_t s = 0; s < cfg.num_classes; ++s)
        for (std::size_t o = 0; o < cfg.num_classes; ++o) {
            auto slice = fq.slice(s, o);
            double z = 0.0;
            for (double& x : slice) z += (x = rng.uniform(0.1, 1.0));
            for (double& x : slice) x = std::log(x / z);
        }
    return RtnModel(cfg, init_params(cfg, rng), pseudo_embedding(v, cfg.embed.embed_dim), fq);
}

}  // namespace rtn::fixture
