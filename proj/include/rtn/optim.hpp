#pragma once

#include <vector>

#include "rtn/autodiff.hpp"

namespace rtn {

/// SGD with classical momentum: v <- mu*v + g; p <- p - lr*v; then g <- 0.
class SgdMomentum {
public:
    SgdMomentum(std::vector<ad::Var> params, double lr, double momentum = 0.9);

    void step();
    void zero_grad();

    double lr() const noexcept { return lr_; }
    void set_lr(double lr);
    double momentum() const noexcept { return momentum_; }
    const std::vector<Matrix>& velocity() const noexcept { return velocity_; }

private:
    std::vector<ad::Var> params_;
    std::vector<Matrix> velocity_;
    double lr_;
    double momentum_;
};

/// Multiplies lr by `factor` after `patience` consecutive epochs without a
/// strict improvement of a maximized metric.
class PlateauScheduler {
public:
    PlateauScheduler(int patience = 3, double factor = 0.5) : patience_(patience), factor_(factor) {}

    /// Returns true when the lr was reduced on this call.
    bool step(double metric, SgdMomentum& opt);

    double best() const noexcept { return best_; }
    int bad_epochs() const noexcept { return bad_epochs_; }

private:
    int patience_;
    double factor_;
    double best_ = -1.0;
    int bad_epochs_ = 0;
    bool has_best_ = false;
};

}  // namespace rtn
