#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tribyol/nn/encoders.hpp"
#include "tribyol/sha256.hpp"

namespace tribyol::nn {

// linear -> bn -> relu -> linear; shared shape for projector and predictor
// (they differ only in input width). No norm after the last linear.
class MlpHead {
public:
    MlpHead() = default;
    MlpHead(int in, int hidden, int out) : l1(in, hidden), bn(hidden), l2(hidden, out) {}

    struct Cache {
        Linear::Cache l1, l2;
        BatchNorm::Cache bn;
        Relu::Cache relu;
        Tensor t1, t2, t3;
    };

    void init(Rng& rng) {
        l1.init(rng);
        l2.init(rng);
    }

    void forward(const Tensor& x, Cache& c, const BnContext& ctx, Tensor& y) {
        l1.forward(x, c.l1, c.t1);
        bn.forward(c.t1, c.bn, c.t2, ctx.mode, ctx.update_running, ctx.stat_momentum);
        relu.forward(c.t2, c.relu, c.t3);
        l2.forward(c.t3, c.l2, y);
    }

    void backward(Cache& c, const Tensor& gy, Tensor* gx) {
        Tensor g1, g2;
        l2.backward(c.l2, gy, &g1);
        relu.backward(c.relu, g1, &g2);
        bn.backward(c.bn, g2, &g1);
        l1.backward(c.l1, g1, gx);
    }

    void collect(const std::string& prefix, Role role, std::vector<ParamRef>& out) {
        out.push_back({prefix + ".l1.w", role, Kind::Learnable, &l1.w, &l1.gw});
        out.push_back({prefix + ".l1.b", role, Kind::Learnable, &l1.b, &l1.gb});
        out.push_back({prefix + ".bn.gamma", role, Kind::Learnable, &bn.gamma, &bn.ggamma});
        out.push_back({prefix + ".bn.beta", role, Kind::Learnable, &bn.beta, &bn.gbeta});
        out.push_back({prefix + ".bn.running_mean", role, Kind::RunningStat,
                       &bn.running_mean, nullptr});
        out.push_back({prefix + ".bn.running_var", role, Kind::RunningStat,
                       &bn.running_var, nullptr});
        out.push_back({prefix + ".l2.w", role, Kind::Learnable, &l2.w, &l2.gw});
        out.push_back({prefix + ".l2.b", role, Kind::Learnable, &l2.b, &l2.gb});
    }

    Linear l1, l2;
    BatchNorm bn;
    Relu relu;
};

struct ArchitectureSpec {
    std::string encoder_kind = "toy4"; // toy4 | resnet50
    int64_t feature_dim = 256;         // must match the encoder kind
    int proj_hidden = 512;
    int embed_dim = 128;

    static ArchitectureSpec toy() { return {}; }
    static ArchitectureSpec full() { return {"resnet50", 2048, 512, 128}; }

    void validate() const {
        const int64_t want = encoder_kind == "resnet50" ? 2048 : 256;
        if (feature_dim != want)
            throw ConfigError("arch.feature_dim must be " + std::to_string(want) +
                              " for encoder " + encoder_kind);
        if (proj_hidden < 1 || embed_dim < 1)
            throw ConfigError("arch: projector dims must be positive");
    }

    std::string describe() const {
        return encoder_kind + "/f" + std::to_string(feature_dim) + "/h" +
               std::to_string(proj_hidden) + "/e" + std::to_string(embed_dim);
    }
};

// One branch of the triplet: encoder + projector, plus a predictor on the
// online branch only.
class BranchNetwork {
public:
    BranchNetwork() = default;

    BranchNetwork(const ArchitectureSpec& sp, bool with_predictor) : spec(sp) {
        sp.validate();
        encoder = make_encoder(sp.encoder_kind);
        projector = MlpHead((int)sp.feature_dim, sp.proj_hidden, sp.embed_dim);
        if (with_predictor)
            predictor.emplace(sp.embed_dim, sp.proj_hidden, sp.embed_dim);
    }

    struct Cache {
        std::unique_ptr<EncoderBase::Cache> enc;
        MlpHead::Cache proj, pred;
        Tensor features, z, q;
    };

    Cache make_cache() const {
        Cache c;
        c.enc = encoder->make_cache();
        return c;
    }

    void init(Rng& rng) {
        encoder->init(rng);
        projector.init(rng);
        if (predictor) predictor->init(rng);
    }

    bool has_predictor() const { return predictor.has_value(); }

    // Encoder features + projection (+ prediction when present).
    void forward(const Tensor& x, Cache& c, const BnContext& ctx) {
        if (x.rank() != 4)
            throw DimensionError("BranchNetwork: want [B,S,S,3] views, got " +
                                 x.shape_str());
        encoder->forward(x, *c.enc, ctx, c.features);
        projector.forward(c.features, c.proj, ctx, c.z);
        if (predictor) predictor->forward(c.z, c.pred, ctx, c.q);
    }

    // Backprop from d(loss)/dQ through predictor, projector and encoder.
    void backward_from_q(Cache& c, const Tensor& gq) {
        if (!predictor) throw Error("backward_from_q: branch has no predictor");
        Tensor gz, gfeat;
        predictor->backward(c.pred, gq, &gz);
        projector.backward(c.proj, gz, &gfeat);
        encoder->backward(*c.enc, gfeat);
    }

    std::vector<ParamRef> param_refs() {
        std::vector<ParamRef> out;
        encoder->collect("encoder.", Role::Encoder, out);
        projector.collect("projector", Role::Projector, out);
        if (predictor) predictor->collect("predictor", Role::Predictor, out);
        return out;
    }

    void zero_grads() {
        for (auto& r : param_refs())
            if (r.grad) r.grad->zero();
    }

    ArchitectureSpec spec;
    std::unique_ptr<EncoderBase> encoder;
    MlpHead projector;
    std::optional<MlpHead> predictor;
};

// ---------------------------------------------------------------------------
// WeightSet: an owning, ordered snapshot of named tensors with role/kind
// tags. Checkpoints, EMA tests and backbone extraction all speak this type.
// ---------------------------------------------------------------------------
struct WeightEntry {
    std::string name;
    Role role = Role::Encoder;
    Kind kind = Kind::Learnable;
    Tensor value;
};

class WeightSet {
public:
    WeightSet() = default;

    static WeightSet snapshot(const std::vector<ParamRef>& refs) {
        WeightSet ws;
        ws.entries.reserve(refs.size());
        for (const auto& r : refs)
            ws.entries.push_back({r.name, r.role, r.kind, *r.value});
        return ws;
    }

    static WeightSet snapshot(BranchNetwork& net) { return snapshot(net.param_refs()); }

    void apply_to(const std::vector<ParamRef>& refs) const {
        if (refs.size() != entries.size())
            throw DimensionError("WeightSet::apply_to: entry count mismatch " +
                                 std::to_string(entries.size()) + " vs " +
                                 std::to_string(refs.size()));
        for (size_t i = 0; i < refs.size(); ++i) {
            if (refs[i].name != entries[i].name)
                throw DimensionError("WeightSet::apply_to: name mismatch at " +
                                     entries[i].name + " vs " + refs[i].name);
            check_same_shape(*refs[i].value, entries[i].value, "WeightSet::apply_to");
            *refs[i].value = entries[i].value;
        }
    }

    void apply_to(BranchNetwork& net) const { apply_to(net.param_refs()); }

    WeightSet filter_role(Role role) const {
        WeightSet out;
        for (const auto& e : entries)
            if (e.role == role) out.entries.push_back(e);
        return out;
    }

    const WeightEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }

    size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }

    // Content hash over names, tags, shapes and raw float data.
    std::string content_hash() const {
        Sha256 h;
        for (const auto& e : entries) {
            h.update(e.name);
            h.update(role_name(e.role), std::strlen(role_name(e.role)));
            uint8_t k = e.kind == Kind::Learnable ? 0 : 1;
            h.update(&k, 1);
            for (int64_t d : e.value.shape()) h.update(&d, sizeof(d));
            h.update(e.value.data(), sizeof(float) * (size_t)e.value.numel());
        }
        return h.hex_digest();
    }

    std::vector<WeightEntry> entries;
    std::string provenance; // which branch these weights came from, if any
};

} // namespace tribyol::nn
