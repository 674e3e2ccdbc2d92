#include "rtn/frequency.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "rtn/errors.hpp"

namespace rtn {

FrequencyTable::FrequencyTable(std::size_t num_classes, std::size_t num_predicates)
    : classes_(num_classes),
      predicates_(num_predicates),
      logits_(num_classes * num_classes * num_predicates,
              num_predicates ? -std::log(static_cast<double>(num_predicates)) : 0.0) {}

double FrequencyTable::logit(std::size_t subj, std::size_t obj, std::size_t pred) const {
    if (pred >= predicates_) throw IndexError("FrequencyTable: predicate out of range");
    return slice(subj, obj)[pred];
}

std::span<const double> FrequencyTable::slice(std::size_t subj, std::size_t obj) const {
    if (subj >= classes_ || obj >= classes_) {
        throw IndexError("FrequencyTable: class pair (" + std::to_string(subj) + ", " +
                         std::to_string(obj) + ") out of range");
    }
    return {logits_.data() + (subj * classes_ + obj) * predicates_, predicates_};
}

std::span<double> FrequencyTable::slice(std::size_t subj, std::size_t obj) {
    auto s = std::as_const(*this).slice(subj, obj);
    return {const_cast<double*>(s.data()), s.size()};
}

FrequencyTable build_frequency_table(std::span<const SceneRecord> train, const Vocab& vocab,
                                     double alpha) {
    if (!(alpha > 0.0)) throw ConfigError("build_frequency_table: alpha must be positive");
    const std::size_t C = vocab.num_classes(), P = vocab.num_predicates();
    std::vector<double> counts(C * C * P, 0.0);
    for (const SceneRecord& scene : train) {
        const std::size_t n = scene.nodes.size();
        std::vector<std::size_t> label(n * n, 0);
        for (const auto& r : scene.relations) label[r.subject * n + r.object] = r.predicate;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const std::size_t cs = scene.nodes[i].gt_class, co = scene.nodes[j].gt_class;
                const std::size_t r = label[i * n + j];
                if (cs >= C || co >= C || r >= P) throw IndexError("build_frequency_table: index out of vocab");
                counts[(cs * C + co) * P + r] += 1.0;
            }
        }
    }
    FrequencyTable table(C, P);
    for (std::size_t cs = 0; cs < C; ++cs) {
        for (std::size_t co = 0; co < C; ++co) {
            const double* c = counts.data() + (cs * C + co) * P;
            double total = 0.0;
            for (std::size_t r = 0; r < P; ++r) total += c[r];
            const double denom = total + alpha * static_cast<double>(P);
            auto out = table.slice(cs, co);
            for (std::size_t r = 0; r < P; ++r) out[r] = std::log((c[r] + alpha) / denom);
        }
    }
    return table;
}

}  // namespace rtn
