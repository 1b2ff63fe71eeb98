#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tribyol/nn/network.hpp"

namespace tribyol {

struct OptimizerHyper {
    double lr = 0.03;
    double momentum = 0.9;
    double weight_decay = 0.0004;

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("optimizer.lr must be > 0");
        if (momentum < 0.0) throw ConfigError("optimizer.momentum must be >= 0");
        if (weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be >= 0");
    }
};

// SGD with momentum and coupled weight decay:
//   buf <- momentum * buf + grad + wd * w;  w <- w - lr * buf
template <typename T>
void sgd_momentum_step(std::span<T> w, std::span<const T> grad, std::span<T> buf,
                       const OptimizerHyper& h) {
    if (w.size() != grad.size() || w.size() != buf.size())
        throw DimensionError("sgd_momentum_step: size mismatch");
    for (size_t i = 0; i < w.size(); ++i) {
        buf[i] = (T)(h.momentum * buf[i] + grad[i] + h.weight_decay * w[i]);
        w[i] = (T)(w[i] - h.lr * buf[i]);
    }
}

// target <- tau * target + (1 - tau) * online, elementwise.
template <typename T>
void ema_span(std::span<T> target, std::span<const T> online, double tau) {
    if (target.size() != online.size())
        throw DimensionError("ema_span: size mismatch");
    for (size_t i = 0; i < target.size(); ++i)
        target[i] = (T)(tau * target[i] + (1.0 - tau) * online[i]);
}

// Momentum buffers, keyed like the online learnables.
struct SgdState {
    std::vector<std::string> keys;
    std::vector<Tensor> buffers;
    bool initialized = false;

    void init_for(const std::vector<nn::ParamRef>& learnables) {
        keys.clear();
        buffers.clear();
        for (const auto& r : learnables) {
            keys.push_back(r.name);
            buffers.emplace_back(r.value->shape());
        }
        initialized = true;
    }
};

// One optimizer step over the online branch learnables. Gradients must be
// present for exactly the given parameters; running statistics are untouched.
inline void optimizer_step(const std::vector<nn::ParamRef>& refs, SgdState& state,
                           const OptimizerHyper& hyper) {
    hyper.validate();
    std::vector<nn::ParamRef> learnables;
    for (const auto& r : refs)
        if (r.kind == nn::Kind::Learnable) learnables.push_back(r);
    for (const auto& r : learnables)
        if (!r.grad)
            throw Error("optimizer_step: missing gradient for " + r.name);
    if (!state.initialized) state.init_for(learnables);
    if (state.keys.size() != learnables.size())
        throw Error("optimizer_step: optimizer state has " +
                    std::to_string(state.keys.size()) + " buffers for " +
                    std::to_string(learnables.size()) + " learnables");
    for (size_t i = 0; i < learnables.size(); ++i) {
        auto& r = learnables[i];
        if (state.keys[i] != r.name)
            throw Error("optimizer_step: state key mismatch: " + state.keys[i] +
                        " vs " + r.name);
        sgd_momentum_step<float>(r.value->values(),
                                 std::span<const float>(r.grad->values()),
                                 state.buffers[i].values(), hyper);
    }
}

namespace detail {

inline void check_congruent(const nn::ParamRef& t, const nn::ParamRef& o) {
    if (t.name != o.name)
        throw DimensionError("ema_update: name mismatch " + t.name + " vs " + o.name);
    check_same_shape(*t.value, *o.value, "ema_update");
}

} // namespace detail

// EMA update of one target branch from the online branch. Covers every
// encoder+projector entry, running statistics included; predictor entries
// (online only) are skipped.
inline void ema_update(const std::vector<nn::ParamRef>& target,
                       const std::vector<nn::ParamRef>& online, double tau) {
    if (tau < 0.0 || tau > 1.0) throw ConfigError("ema.tau must be in [0, 1]");
    std::vector<nn::ParamRef> online_shared;
    for (const auto& r : online)
        if (r.role != nn::Role::Predictor) online_shared.push_back(r);
    if (online_shared.size() != target.size())
        throw DimensionError("ema_update: branch structure mismatch (" +
                             std::to_string(target.size()) + " target vs " +
                             std::to_string(online_shared.size()) + " online entries)");
    for (size_t i = 0; i < target.size(); ++i) {
        detail::check_congruent(target[i], online_shared[i]);
        ema_span<float>(target[i].value->values(),
                        std::span<const float>(online_shared[i].value->values()), tau);
    }
}

inline void ema_update(nn::BranchNetwork& target, nn::BranchNetwork& online, double tau) {
    auto tr = target.param_refs();
    auto onr = online.param_refs();
    ema_update(tr, onr, tau);
}

// Which target receives the EMA update at a given iteration, plus the tau
// schedule. Default: constant tau, even iterations -> target 2.
struct EmaSchedule {
    double tau = 0.99;
    std::string kind = "constant"; // constant | cosine
    int64_t total_steps = 0;       // required for cosine
    int even_target = 2;           // parity rule: even iterations hit this target

    void validate() const {
        if (tau < 0.0 || tau > 1.0) throw ConfigError("ema.tau must be in [0, 1]");
        if (kind != "constant" && kind != "cosine")
            throw ConfigError("ema.schedule must be constant or cosine");
        if (kind == "cosine" && total_steps < 1)
            throw ConfigError("ema.schedule=cosine needs a positive step count");
        if (even_target != 2 && even_target != 3)
            throw ConfigError("ema.parity target must be 2 or 3");
    }

    double tau_at(int64_t iteration) const {
        if (kind == "constant") return tau;
        const double t = std::min(1.0, (double)iteration / (double)total_steps);
        return 1.0 - (1.0 - tau) * (std::cos(3.14159265358979323846 * t) + 1.0) / 2.0;
    }
};

inline int select_target(int64_t iteration, const EmaSchedule& schedule) {
    if (iteration < 0) throw Error("select_target: negative iteration");
    const bool even = iteration % 2 == 0;
    const int other = schedule.even_target == 2 ? 3 : 2;
    return even ? schedule.even_target : other;
}

} // namespace tribyol
