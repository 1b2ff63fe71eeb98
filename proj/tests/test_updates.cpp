#include <catch2/catch_amalgamated.hpp>

#include "tribyol/triplet.hpp"
#include "tribyol/updates.hpp"

using namespace tribyol;
using Catch::Approx;

TEST_CASE("sgd: scalar hand oracle, two steps") {
    OptimizerHyper h; // lr 0.03, momentum 0.9, wd 0.0004
    h.weight_decay = 0.0;
    double w = 1.0, buf = 0.0, g = 1.0;
    sgd_momentum_step<double>(std::span<double>(&w, 1), std::span<const double>(&g, 1),
                              std::span<double>(&buf, 1), h);
    REQUIRE(std::abs(w - 0.97) <= 1e-10);
    sgd_momentum_step<double>(std::span<double>(&w, 1), std::span<const double>(&g, 1),
                              std::span<double>(&buf, 1), h);
    REQUIRE(std::abs(buf - 1.9) <= 1e-10);
    REQUIRE(std::abs(w - 0.913) <= 1e-10);
}

TEST_CASE("sgd: zero gradient, zero buffer, no decay is a fixed point") {
    OptimizerHyper h;
    h.weight_decay = 0.0;
    double w = 1.2345, buf = 0.0, g = 0.0;
    for (int i = 0; i < 5; ++i)
        sgd_momentum_step<double>(std::span<double>(&w, 1),
                                  std::span<const double>(&g, 1),
                                  std::span<double>(&buf, 1), h);
    REQUIRE(w == 1.2345);
    REQUIRE(buf == 0.0);
}

TEST_CASE("sgd: ten random steps against an independent oracle") {
    Rng rng(71);
    OptimizerHyper h{0.05, 0.8, 0.001};
    double w = rng.normal(), buf = 0.0;
    double ow = w, obuf = 0.0;
    for (int i = 0; i < 10; ++i) {
        double g = rng.normal();
        sgd_momentum_step<double>(std::span<double>(&w, 1),
                                  std::span<const double>(&g, 1),
                                  std::span<double>(&buf, 1), h);
        // oracle, written out longhand
        obuf = 0.8 * obuf + g + 0.001 * ow;
        ow = ow - 0.05 * obuf;
        REQUIRE(std::abs(w - ow) <= 1e-10);
        REQUIRE(std::abs(buf - obuf) <= 1e-10);
    }
}

TEST_CASE("ema: scalar fixed points and the hand value") {
    double t = 2.0, o = 1.0;
    ema_span<double>(std::span<double>(&t, 1), std::span<const double>(&o, 1), 1.0);
    REQUIRE(t == 2.0); // tau = 1: unchanged
    ema_span<double>(std::span<double>(&t, 1), std::span<const double>(&o, 1), 0.0);
    REQUIRE(t == 1.0); // tau = 0: copy
    t = 2.0;
    ema_span<double>(std::span<double>(&t, 1), std::span<const double>(&o, 1), 0.9);
    REQUIRE(std::abs(t - 1.9) <= 1e-12);
}

TEST_CASE("ema: geometric contraction with frozen online weights") {
    const double tau = 0.9, online = 0.3, initial = 1.7;
    double target = initial;
    for (int k = 1; k <= 50; ++k) {
        ema_span<double>(std::span<double>(&target, 1),
                         std::span<const double>(&online, 1), tau);
        const double want_gap = std::pow(tau, k) * std::abs(initial - online);
        REQUIRE(std::abs(std::abs(target - online) - want_gap) <= 1e-6);
    }
}

TEST_CASE("ema: convexity for random tau") {
    Rng rng(72);
    for (int i = 0; i < 200; ++i) {
        double t0 = rng.normal() * 3.0, o = rng.normal() * 3.0;
        double t = t0;
        double tau = rng.uniform();
        ema_span<double>(std::span<double>(&t, 1), std::span<const double>(&o, 1), tau);
        REQUIRE(t >= std::min(t0, o) - 1e-12);
        REQUIRE(t <= std::max(t0, o) + 1e-12);
    }
}

TEST_CASE("select_target: parity rule and balance") {
    EmaSchedule sched;
    REQUIRE(select_target(0, sched) == 2);
    REQUIRE(select_target(1, sched) == 3);
    REQUIRE(select_target(2, sched) == 2);
    REQUIRE(select_target(3, sched) == 3);

    EmaSchedule swapped;
    swapped.even_target = 3;
    REQUIRE(select_target(0, swapped) == 3);
    REQUIRE(select_target(1, swapped) == 2);
    REQUIRE(select_target(2, swapped) == 3);

    int n2 = 0, n3 = 0, last = 0;
    for (int64_t it = 0; it < 1000; ++it) {
        int t = select_target(it, sched);
        REQUIRE(t != last); // strictly alternating
        last = t;
        (t == 2 ? n2 : n3) += 1;
    }
    REQUIRE(n2 == 500);
    REQUIRE(n3 == 500);
}

TEST_CASE("ema schedule: constant and cosine") {
    EmaSchedule c;
    c.validate();
    REQUIRE(c.tau_at(0) == 0.99);
    REQUIRE(c.tau_at(100000) == 0.99);

    EmaSchedule cos;
    cos.kind = "cosine";
    cos.total_steps = 100;
    cos.validate();
    REQUIRE(cos.tau_at(0) == Approx(0.99).margin(1e-12));
    REQUIRE(cos.tau_at(100) == Approx(1.0).margin(1e-12));
    double prev = -1.0;
    for (int64_t k = 0; k <= 100; k += 10) {
        const double t = cos.tau_at(k);
        REQUIRE(t >= prev);
        prev = t;
    }

    EmaSchedule bad;
    bad.tau = 1.5;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ema_update over networks: copy case covers running statistics") {
    auto st = init_triplet(nn::ArchitectureSpec::toy(), 3);
    // Make online differ everywhere, including running stats.
    for (auto& r : st.online.param_refs())
        for (auto& v : r.value->values()) v += 0.5f;
    ema_update(*st.target2, st.online, 0.0);
    auto t = nn::WeightSet::snapshot(*st.target2);
    auto o = nn::WeightSet::snapshot(st.online);
    for (const auto& e : t.entries) {
        const auto* oe = o.find(e.name);
        REQUIRE(oe != nullptr);
        for (int64_t i = 0; i < e.value.numel(); ++i)
            REQUIRE(e.value[(size_t)i] == oe->value[(size_t)i]);
    }

    // Structure mismatch: a truncated target ref list must throw.
    auto refs = st.target2->param_refs();
    refs.pop_back();
    auto online_refs = st.online.param_refs();
    REQUIRE_THROWS_AS(ema_update(refs, online_refs, 0.5), DimensionError);
}

TEST_CASE("optimizer_step over networks: validation and running stats") {
    auto st = init_triplet(nn::ArchitectureSpec::toy(), 4);
    auto refs = st.online.param_refs();

    // Grads: fill learnables with ones.
    for (auto& r : refs)
        if (r.grad) r.grad->fill(1.0f);

    // Snapshot running stats; they must not move.
    auto before = nn::WeightSet::snapshot(st.online);
    OptimizerHyper h;
    optimizer_step(refs, st.opt, h);
    auto after = nn::WeightSet::snapshot(st.online);
    for (const auto& e : after.entries) {
        const auto* be = before.find(e.name);
        if (e.kind == nn::Kind::RunningStat) {
            for (int64_t i = 0; i < e.value.numel(); ++i)
                REQUIRE(e.value[(size_t)i] == be->value[(size_t)i]);
        } else {
            bool changed = false;
            for (int64_t i = 0; i < e.value.numel(); ++i)
                changed |= e.value[(size_t)i] != be->value[(size_t)i];
            REQUIRE(changed);
        }
    }

    // Missing gradient -> error.
    auto broken = refs;
    for (auto& r : broken)
        if (r.kind == nn::Kind::Learnable) {
            r.grad = nullptr;
            break;
        }
    SgdState fresh;
    REQUIRE_THROWS_AS(optimizer_step(broken, fresh, h), Error);

    // Stale optimizer state (wrong buffer count) -> error.
    SgdState stale;
    std::vector<nn::ParamRef> two(refs.begin(), refs.begin() + 2);
    optimizer_step(two, stale, h);
    REQUIRE_THROWS_AS(optimizer_step(refs, stale, h), Error);
}
