#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rtn/dataset.hpp"

namespace rtn {

/// Smoothed log P(predicate | subject class, object class), predicate 0 = background.
class FrequencyTable {
public:
    FrequencyTable() = default;
    FrequencyTable(std::size_t num_classes, std::size_t num_predicates);

    std::size_t num_classes() const noexcept { return classes_; }
    std::size_t num_predicates() const noexcept { return predicates_; }

    double logit(std::size_t subj, std::size_t obj, std::size_t pred) const;
    std::span<const double> slice(std::size_t subj, std::size_t obj) const;
    std::span<double> slice(std::size_t subj, std::size_t obj);

private:
    std::size_t classes_ = 0;
    std::size_t predicates_ = 0;
    std::vector<double> logits_;
};

/// logits[s][o][r] = log((count(s,o,r) + alpha) / (sum_r' count(s,o,r') + alpha*p)).
/// Ordered pairs of gt nodes without an annotated relation count once as
/// background (predicate 0).
FrequencyTable build_frequency_table(std::span<const SceneRecord> train, const Vocab& vocab,
                                     double alpha = 1.0);

}  // namespace rtn
