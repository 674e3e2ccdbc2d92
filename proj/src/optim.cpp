#include "rtn/optim.hpp"

#include "rtn/errors.hpp"

namespace rtn {

SgdMomentum::SgdMomentum(std::vector<ad::Var> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    if (!(lr > 0.0)) throw ConfigError("SgdMomentum: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("SgdMomentum: momentum must be in [0,1)");
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p->rows(), p->cols());
}

void SgdMomentum::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto v = velocity_[i].data();
        auto g = params_[i]->grad.data();
        auto w = params_[i]->value.data();
        for (std::size_t k = 0; k < v.size(); ++k) {
            v[k] = momentum_ * v[k] + g[k];
            w[k] -= lr_ * v[k];
        }
    }
    zero_grad();
}

void SgdMomentum::zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0);
}

void SgdMomentum::set_lr(double lr) {
    if (!(lr > 0.0)) throw ConfigError("SgdMomentum: lr must be positive");
    lr_ = lr;
}

bool PlateauScheduler::step(double metric, SgdMomentum& opt) {
    if (!has_best_ || metric > best_) {
        best_ = metric;
        has_best_ = true;
        bad_epochs_ = 0;
        return false;
    }
    if (++bad_epochs_ >= patience_) {
        opt.set_lr(opt.lr() * factor_);
        bad_epochs_ = 0;
        return true;
    }
    return false;
}

}  // namespace rtn
