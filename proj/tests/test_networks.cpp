#include <catch2/catch_amalgamated.hpp>

#include "tribyol/loss.hpp"
#include "tribyol/triplet.hpp"

using namespace tribyol;
using Catch::Approx;

namespace {

Tensor random_views(Rng& rng, int64_t b, int side = 32) {
    Tensor t({b, side, side, 3});
    for (auto& v : t.values()) v = (float)rng.normal();
    return t;
}

bool tensor_eq(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[(size_t)i] != b[(size_t)i]) return false;
    return true;
}

} // namespace

TEST_CASE("init_triplet: determinism, copies and structure") {
    auto spec = nn::ArchitectureSpec::toy();
    auto s1 = init_triplet(spec, 42);
    auto s2 = init_triplet(spec, 42);
    auto s3 = init_triplet(spec, 43);

    auto w1 = nn::WeightSet::snapshot(s1.online);
    auto w2 = nn::WeightSet::snapshot(s2.online);
    auto w3 = nn::WeightSet::snapshot(s3.online);
    REQUIRE(w1.content_hash() == w2.content_hash());
    REQUIRE(w1.content_hash() != w3.content_hash());

    // Targets carry no predictor entries and match online on the rest.
    auto t2 = nn::WeightSet::snapshot(*s1.target2);
    auto t3 = nn::WeightSet::snapshot(*s1.target3);
    for (const auto& e : t2.entries) REQUIRE(e.role != nn::Role::Predictor);
    for (const auto& e : t3.entries) REQUIRE(e.role != nn::Role::Predictor);

    size_t shared = 0;
    for (const auto& e : w1.entries) {
        if (e.role == nn::Role::Predictor) continue;
        const auto* te = t2.find(e.name);
        REQUIRE(te != nullptr);
        REQUIRE(tensor_eq(te->value, e.value));
        ++shared;
    }
    REQUIRE(shared == t2.size());
    REQUIRE(s1.iteration == 0);
}

TEST_CASE("forward_online: architecture dims and batch-size-1 behaviour") {
    auto st = init_triplet(nn::ArchitectureSpec::toy(), 7);
    Rng rng(1);
    Tensor views = random_views(rng, 4, 96);
    auto fwd = forward_online(st, views);
    REQUIRE(fwd.y1->shape() == std::vector<int64_t>{4, 256});
    REQUIRE(fwd.z1->shape() == std::vector<int64_t>{4, 128});
    REQUIRE(fwd.q1->shape() == std::vector<int64_t>{4, 128});

    // B = 1 must fall back to running statistics and succeed.
    Tensor one = random_views(rng, 1, 96);
    auto f1 = forward_online(st, one);
    REQUIRE(f1.q1->shape() == std::vector<int64_t>{1, 128});
    for (auto v : f1.q1->values()) REQUIRE(std::isfinite(v));
}

TEST_CASE("forward_online: duplicated rows give duplicated outputs (frozen stats)") {
    auto st = init_triplet(nn::ArchitectureSpec::toy(), 9);
    Rng rng(2);
    Tensor views = random_views(rng, 2, 32);
    // Duplicate both rows.
    Tensor dup({4, 32, 32, 3});
    const int64_t n = 32 * 32 * 3;
    for (int64_t i = 0; i < 2; ++i) {
        std::copy(views.data() + i * n, views.data() + (i + 1) * n, dup.data() + i * n);
        std::copy(views.data() + i * n, views.data() + (i + 1) * n,
                  dup.data() + (2 + i) * n);
    }
    auto f = forward_online(st, dup, PassKind::InferenceStats);
    for (int64_t j = 0; j < 128; ++j) {
        REQUIRE((*f.q1)[(size_t)(0 * 128 + j)] == Approx((*f.q1)[(size_t)(2 * 128 + j)]));
        REQUIRE((*f.q1)[(size_t)(1 * 128 + j)] == Approx((*f.q1)[(size_t)(3 * 128 + j)]));
    }
}

TEST_CASE("forward_target: shape, id validation, init equality with online") {
    auto st = init_triplet(nn::ArchitectureSpec::toy(), 21);
    Rng rng(3);
    Tensor views = random_views(rng, 3, 32);

    const Tensor& z2 = forward_target(st, 2, views, PassKind::InferenceStats);
    REQUIRE(z2.shape() == std::vector<int64_t>{3, 128});
    REQUIRE_THROWS_AS(forward_target(st, 4, views), Error);

    auto f = forward_online(st, views, PassKind::InferenceStats);
    for (int64_t i = 0; i < z2.numel(); ++i)
        REQUIRE(z2[(size_t)i] == Approx((*f.z1)[(size_t)i]).margin(1e-6));
}

TEST_CASE("stop-gradient: backward covers all and only online learnables") {
    auto st = init_triplet(nn::ArchitectureSpec::toy(), 5);
    Rng rng(4);
    Tensor views = random_views(rng, 4, 32);

    st.online.zero_grads();
    if (st.target2) st.target2->zero_grads();
    if (st.target3) st.target3->zero_grads();

    auto f = forward_online(st, views);
    const Tensor& z2 = forward_target(st, 2, views);
    Tensor z2c = z2; // copy before target-3 pass reuses buffers
    const Tensor& z3 = forward_target(st, 3, views);

    Tensor gq(f.q1->shape());
    double lv = loss::batch_pairwise_loss(*f.q1, z2c, 1.0, &gq) +
                loss::batch_pairwise_loss(*f.q1, z3, 1.0, &gq);
    REQUIRE(std::isfinite(lv));
    st.online.backward_from_q(st.online_cache, gq);

    // Every online learnable got a (somewhere) nonzero gradient.
    for (auto& r : st.online.param_refs()) {
        if (r.kind != nn::Kind::Learnable) continue;
        bool nonzero = false;
        for (auto v : r.grad->values()) nonzero |= v != 0.0f;
        INFO(r.name);
        REQUIRE(nonzero);
    }
    // Target gradients stayed exactly zero.
    for (auto* tgt : {st.target2.get(), st.target3.get()}) {
        for (auto& r : tgt->param_refs()) {
            if (!r.grad) continue;
            for (auto v : r.grad->values()) REQUIRE(v == 0.0f);
        }
    }

    // Perturbing a target weight changes the loss: the zero gradient above is
    // stop-gradient, not insensitivity.
    auto t2refs = st.target2->param_refs();
    Tensor* some_w = nullptr;
    for (auto& r : t2refs)
        if (r.kind == nn::Kind::Learnable && r.name.find("projector") != std::string::npos) {
            some_w = r.value;
            break;
        }
    REQUIRE(some_w != nullptr);
    (*some_w)[0] += 1e-3f;
    const Tensor& z2b = forward_target(st, 2, views);
    Tensor z2bc = z2b;
    const Tensor& z3b = forward_target(st, 3, views);
    auto f2 = forward_online(st, views);
    const double lv2 = loss::batch_pairwise_loss(*f2.q1, z2bc) +
                       loss::batch_pairwise_loss(*f2.q1, z3b);
    REQUIRE(std::abs(lv2 - lv) > 1e-8);
}

TEST_CASE("extract_backbone: encoder-only, online provenance") {
    auto st = init_triplet(nn::ArchitectureSpec::toy(), 33);
    auto backbone = extract_backbone(st);
    REQUIRE(backbone.provenance == "online");
    REQUIRE_FALSE(backbone.empty());
    for (const auto& e : backbone.entries) REQUIRE(e.role == nn::Role::Encoder);

    // Tensors equal the online branch's encoder entries, not a target's.
    auto online = nn::WeightSet::snapshot(st.online);
    for (const auto& e : backbone.entries) {
        const auto* oe = online.find(e.name);
        REQUIRE(oe != nullptr);
        REQUIRE(tensor_eq(oe->value, e.value));
    }
}

TEST_CASE("structural congruence holds after EMA updates") {
    auto st = init_triplet(nn::ArchitectureSpec::toy(), 11);
    Rng rng(8);
    // Nudge online weights, then EMA; congruence must be maintained.
    for (auto& r : st.online.param_refs())
        for (auto& v : r.value->values()) v += (float)(0.01 * rng.normal());
    ema_update(*st.target2, st.online, 0.9);
    ema_update(*st.target3, st.online, 0.9);

    auto w = nn::WeightSet::snapshot(st.online);
    for (auto* tgt : {st.target2.get(), st.target3.get()}) {
        auto t = nn::WeightSet::snapshot(*tgt);
        for (const auto& e : t.entries) {
            const auto* oe = w.find(e.name);
            REQUIRE(oe != nullptr);
            REQUIRE(oe->value.shape() == e.value.shape());
        }
    }
}

TEST_CASE("resnet50: full-scale architecture wiring") {
    auto spec = nn::ArchitectureSpec::full();
    nn::BranchNetwork net(spec, /*with_predictor=*/true);
    Rng rng(55);
    net.init(rng);

    // torchvision-style trainable parameter count for the conv trunk.
    int64_t learnable = 0;
    size_t running = 0;
    for (auto& r : net.param_refs()) {
        if (r.role != nn::Role::Encoder) continue;
        if (r.kind == nn::Kind::Learnable)
            learnable += r.value->numel();
        else
            ++running;
    }
    REQUIRE(learnable == 23508032);
    REQUIRE(running == 53 * 2); // one mean + one var per batch norm

    auto cache = net.make_cache();
    Tensor views({1, 96, 96, 3});
    Rng d(1);
    for (auto& v : views.values()) v = (float)d.normal();
    nn::BnContext ctx{nn::StatsMode::Running, false, 0.01};
    net.forward(views, cache, ctx);
    REQUIRE(cache.features.shape() == std::vector<int64_t>{1, 2048});
    REQUIRE(cache.z.shape() == std::vector<int64_t>{1, 128});
    REQUIRE(cache.q.shape() == std::vector<int64_t>{1, 128});
    for (auto v : cache.q.values()) REQUIRE(std::isfinite(v));
}
