#include <doctest.h>

#include "rtn/errors.hpp"
#include "rtn/optim.hpp"

using namespace rtn;

TEST_CASE("sgd step without momentum") {
    auto p = ad::parameter(Matrix::of({{1.0, -2.0}}));
    SgdMomentum opt({p}, 0.1, 0.0);
    p->grad.fill(1.0);
    opt.step();
    CHECK(p->value(0, 0) == doctest::Approx(0.9));
    CHECK(p->value(0, 1) == doctest::Approx(-2.1));
    CHECK(p->grad == Matrix(1, 2, 0.0));
}

TEST_CASE("zero grad and zero velocity leave parameters unchanged") {
    auto p = ad::parameter(Matrix::of({{0.3, 0.7}}));
    SgdMomentum opt({p}, 0.5);
    opt.step();
    CHECK(p->value == Matrix::of({{0.3, 0.7}}));
}

TEST_CASE("two momentum steps follow the unrolled recurrence") {
    auto p = ad::parameter(Matrix::of({{1.0}}));
    SgdMomentum opt({p}, 0.1, 0.9);
    p->grad(0, 0) = 2.0;
    opt.step();
    p->grad(0, 0) = -1.0;
    opt.step();
    // v1 = 2, p1 = 1 - 0.2 = 0.8; v2 = 0.9*2 - 1 = 0.8, p2 = 0.8 - 0.08 = 0.72
    CHECK(opt.velocity()[0](0, 0) == doctest::Approx(0.8));
    CHECK(p->value(0, 0) == doctest::Approx(0.72));
}

TEST_CASE("a step changes parameters iff some gradient is nonzero") {
    auto a = ad::parameter(Matrix::of({{1.0, 2.0}}));
    auto b = ad::parameter(Matrix::of({{3.0}}));
    SgdMomentum opt({a, b}, 0.01, 0.0);
    opt.step();
    CHECK(a->value == Matrix::of({{1.0, 2.0}}));
    b->grad(0, 0) = 1e-3;
    opt.step();
    CHECK(a->value == Matrix::of({{1.0, 2.0}}));
    CHECK(b->value(0, 0) != 3.0);
}

TEST_CASE("optimizer argument checks") {
    auto p = ad::parameter(Matrix(1, 1));
    CHECK_THROWS_AS(SgdMomentum({p}, 0.0), ConfigError);
    CHECK_THROWS_AS(SgdMomentum({p}, 0.1, 1.0), ConfigError);
}

TEST_CASE("plateau schedule") {
    auto p = ad::parameter(Matrix(1, 1));
    SgdMomentum opt({p}, 1e-3);
    PlateauScheduler sched(3, 0.5);
    CHECK_FALSE(sched.step(0.5, opt));
    // Three non-improving epochs trigger one reduction.
    CHECK_FALSE(sched.step(0.5, opt));
    CHECK_FALSE(sched.step(0.4, opt));
    CHECK(sched.step(0.5, opt));
    CHECK(opt.lr() == doctest::Approx(5e-4));
    for (int i = 0; i < 2; ++i) CHECK_FALSE(sched.step(0.1, opt));
    CHECK(sched.step(0.1, opt));
    CHECK(opt.lr() == doctest::Approx(1e-3 * 0.25));
    // An improvement resets the counter.
    CHECK_FALSE(sched.step(0.9, opt));
    CHECK(sched.bad_epochs() == 0);
    CHECK(sched.best() == 0.9);
}
