#pragma once

#include <memory>
#include <string>

#include "tribyol/nn/network.hpp"
#include "tribyol/rng.hpp"
#include "tribyol/updates.hpp"

namespace tribyol {

enum class TrainMode { Tribyol, Byol2View, SimSiam2View };

inline std::string train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::Tribyol: return "tribyol";
        case TrainMode::Byol2View: return "byol2view";
        default: return "simsiam2view";
    }
}

inline TrainMode train_mode_from(const std::string& s) {
    if (s == "tribyol") return TrainMode::Tribyol;
    if (s == "byol2view") return TrainMode::Byol2View;
    if (s == "simsiam2view") return TrainMode::SimSiam2View;
    throw ConfigError("unknown mode: " + s +
                      " (want tribyol, byol2view or simsiam2view)");
}

// How a forward pass should treat normalization statistics.
//  OnlineTrain    - batch statistics, running stats updated (B > 1)
//  TargetEval     - batch statistics, running stats never touched (B > 1)
//  InferenceStats - running statistics only
// B = 1 always falls back to running statistics.
enum class PassKind { OnlineTrain, TargetEval, InferenceStats };

// The whole training state: online branch (with predictor), the EMA target
// branches the mode calls for, iteration counter and optimizer state.
struct TripletState {
    nn::ArchitectureSpec spec;
    TrainMode mode = TrainMode::Tribyol;
    uint64_t seed = 0;
    nn::BranchNetwork online;
    std::unique_ptr<nn::BranchNetwork> target2, target3;
    int64_t iteration = 0;
    SgdState opt;
    double bn_stat_momentum = 0.01; // trainer sets this to 1 - ema.tau

    // Scratch caches so repeated forwards reuse their workspace buffers.
    nn::BranchNetwork::Cache online_cache, t2_cache, t3_cache;

    bool has_target(int which) const {
        return which == 2 ? target2 != nullptr : target3 != nullptr;
    }

    nn::BranchNetwork& target(int which) {
        if (which == 2 && target2) return *target2;
        if (which == 3 && target3) return *target3;
        throw Error("no target " + std::to_string(which) + " in mode " +
                    train_mode_name(mode));
    }
};

namespace detail {

inline std::unique_ptr<nn::BranchNetwork> copy_as_target(nn::BranchNetwork& online,
                                                         const nn::ArchitectureSpec& spec) {
    auto target = std::make_unique<nn::BranchNetwork>(spec, /*with_predictor=*/false);
    auto online_refs = online.param_refs();
    std::vector<nn::ParamRef> shared;
    for (auto& r : online_refs)
        if (r.role != nn::Role::Predictor) shared.push_back(r);
    nn::WeightSet::snapshot(shared).apply_to(target->param_refs());
    return target;
}

inline nn::BnContext bn_context(PassKind pass, int64_t batch, double stat_momentum) {
    nn::BnContext ctx;
    ctx.stat_momentum = stat_momentum;
    if (pass == PassKind::InferenceStats || batch <= 1) {
        ctx.mode = nn::StatsMode::Running;
        ctx.update_running = false;
        return ctx;
    }
    ctx.mode = nn::StatsMode::Batch;
    ctx.update_running = pass == PassKind::OnlineTrain;
    return ctx;
}

} // namespace detail

inline TripletState init_triplet(const nn::ArchitectureSpec& spec, uint64_t seed,
                                 TrainMode mode = TrainMode::Tribyol) {
    spec.validate();
    TripletState st;
    st.spec = spec;
    st.mode = mode;
    st.seed = seed;
    st.online = nn::BranchNetwork(spec, /*with_predictor=*/true);
    Rng rng = Rng::derive(seed, {rng_stream::kWeightInit});
    st.online.init(rng);
    if (mode != TrainMode::SimSiam2View)
        st.target2 = detail::copy_as_target(st.online, spec);
    if (mode == TrainMode::Tribyol)
        st.target3 = detail::copy_as_target(st.online, spec);
    st.online_cache = st.online.make_cache();
    if (st.target2) st.t2_cache = st.target2->make_cache();
    if (st.target3) st.t3_cache = st.target3->make_cache();
    st.iteration = 0;
    return st;
}

// Online pass: Y1 = encoder(view), Z1 = projector(Y1), Q1 = predictor(Z1).
// The returned reference points into st.online_cache and stays valid until
// the next online forward.
struct OnlineForward {
    const Tensor* y1 = nullptr;
    const Tensor* z1 = nullptr;
    const Tensor* q1 = nullptr;
};

inline OnlineForward forward_online(TripletState& st, const Tensor& views,
                                    PassKind pass = PassKind::OnlineTrain) {
    auto ctx = detail::bn_context(pass, views.dim(0), st.bn_stat_momentum);
    st.online.forward(views, st.online_cache, ctx);
    return {&st.online_cache.features, &st.online_cache.z, &st.online_cache.q};
}

// Target pass: Z = projector(encoder(view)) under the selected target
// weights. Never records anything backward-able; target gradients stay zero.
inline const Tensor& forward_target(TripletState& st, int which, const Tensor& views,
                                    PassKind pass = PassKind::TargetEval) {
    if (which != 2 && which != 3)
        throw Error("forward_target: target id must be 2 or 3, got " +
                    std::to_string(which));
    auto ctx = detail::bn_context(pass, views.dim(0), st.bn_stat_momentum);
    nn::BranchNetwork& net = st.target(which);
    auto& cache = which == 2 ? st.t2_cache : st.t3_cache;
    net.forward(views, cache, ctx);
    return cache.z;
}

// The trained online encoder, ready for downstream evaluation.
inline nn::WeightSet extract_backbone(TripletState& st) {
    auto ws = nn::WeightSet::snapshot(st.online).filter_role(nn::Role::Encoder);
    ws.provenance = "online";
    return ws;
}

} // namespace tribyol
