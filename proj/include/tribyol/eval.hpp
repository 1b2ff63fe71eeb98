#pragma once

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "tribyol/checkpoint.hpp"
#include "tribyol/config.hpp"
#include "tribyol/data/dataset.hpp"
#include "tribyol/trainer.hpp"

// Downstream protocols: linear evaluation on frozen features, fine-tuning
// with a label fraction, and cross-dataset transfer.

namespace tribyol {

struct EvalReport {
    std::string protocol;
    std::string pretrain_dataset; // "none" for random / from-scratch baselines
    std::string eval_dataset;
    std::string mode;             // pretrain mode, "from_scratch" or "random"
    double label_fraction = 1.0;
    std::vector<std::pair<int64_t, double>> accuracies; // (epoch, percent)
    double selected = 0.0;
    uint64_t seed = 0;
    std::string config_hash;
    std::string pretrain_config_hash;
    int64_t pretrain_batch_size = 0;
    std::string backbone_hash_before, backbone_hash_after;

    json to_json() const {
        json acc = json::array();
        for (auto& [e, a] : accuracies) acc.push_back({{"epoch", e}, {"accuracy", a}});
        return {{"format_version", 1},
                {"protocol", protocol},
                {"pretrain_dataset", pretrain_dataset},
                {"eval_dataset", eval_dataset},
                {"mode", mode},
                {"label_fraction", label_fraction},
                {"accuracies", acc},
                {"selected", selected},
                {"seed", seed},
                {"config_hash", config_hash},
                {"pretrain_config_hash", pretrain_config_hash},
                {"pretrain_batch_size", pretrain_batch_size},
                {"backbone_hash_before", backbone_hash_before},
                {"backbone_hash_after", backbone_hash_after}};
    }

    static EvalReport from_json(const json& j) {
        EvalReport r;
        r.protocol = j.at("protocol").get<std::string>();
        r.pretrain_dataset = j.at("pretrain_dataset").get<std::string>();
        r.eval_dataset = j.at("eval_dataset").get<std::string>();
        r.mode = j.at("mode").get<std::string>();
        r.label_fraction = j.at("label_fraction").get<double>();
        for (const auto& a : j.at("accuracies"))
            r.accuracies.emplace_back(a.at("epoch").get<int64_t>(),
                                      a.at("accuracy").get<double>());
        r.selected = j.at("selected").get<double>();
        r.seed = j.at("seed").get<uint64_t>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.pretrain_config_hash = j.at("pretrain_config_hash").get<std::string>();
        r.pretrain_batch_size = j.at("pretrain_batch_size").get<int64_t>();
        r.backbone_hash_before = j.at("backbone_hash_before").get<std::string>();
        r.backbone_hash_after = j.at("backbone_hash_after").get<std::string>();
        return r;
    }
};

// Per-class stratified subset: ceil(fraction * n_c) indices per class c,
// deterministic under seed.
inline std::vector<int64_t> subsample_labels(std::span<const int32_t> labels,
                                             double fraction, uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ConfigError("label fraction must be in (0, 1]");
    std::map<int32_t, std::vector<int64_t>> per_class;
    for (int64_t i = 0; i < (int64_t)labels.size(); ++i)
        per_class[labels[(size_t)i]].push_back(i);

    std::vector<int64_t> out;
    bool warned = false;
    for (auto& [cls, idx] : per_class) {
        int64_t want = (int64_t)std::ceil(fraction * (double)idx.size());
        if (want < 1) {
            want = 1;
            if (!warned) {
                std::fprintf(stderr,
                             "subsample_labels: fraction %.4f gives <1 sample for some "
                             "class; keeping 1 per class\n",
                             fraction);
                warned = true;
            }
        }
        Rng rng = Rng::derive(seed, {rng_stream::kSubsample, (uint64_t)cls});
        rng.shuffle(idx);
        out.insert(out.end(), idx.begin(), idx.begin() + want);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace eval_detail {

// Encoder rebuilt from a backbone WeightSet.
struct Backbone {
    std::unique_ptr<nn::EncoderBase> encoder;
    nn::ArchitectureSpec arch;

    static Backbone from_weights(const nn::WeightSet& ws, const nn::ArchitectureSpec& arch) {
        Backbone b;
        b.arch = arch;
        b.encoder = nn::make_encoder(arch.encoder_kind);
        std::vector<nn::ParamRef> refs;
        b.encoder->collect("encoder.", nn::Role::Encoder, refs);
        ws.apply_to(refs);
        return b;
    }

    static Backbone random(const nn::ArchitectureSpec& arch, uint64_t seed) {
        Backbone b;
        b.arch = arch;
        b.encoder = nn::make_encoder(arch.encoder_kind);
        Rng rng = Rng::derive(seed, {rng_stream::kWeightInit});
        b.encoder->init(rng);
        return b;
    }

    nn::WeightSet snapshot() {
        std::vector<nn::ParamRef> refs;
        encoder->collect("encoder.", nn::Role::Encoder, refs);
        return nn::WeightSet::snapshot(refs);
    }

    std::string hash() { return snapshot().content_hash(); }
};

// Frozen-statistics features for a whole labeled split, batched.
inline Tensor extract_features(Backbone& b, const data::SplitData& split,
                               const ChannelStats& stats, int out_size,
                               int64_t batch = 64) {
    Tensor feats({split.count, b.arch.feature_dim});
    auto cache = b.encoder->make_cache();
    nn::BnContext ctx{nn::StatsMode::Running, false, 0.01};
    for (int64_t start = 0; start < split.count; start += batch) {
        const int64_t n = std::min(batch, split.count - start);
        Tensor x({n, out_size, out_size, 3});
        for (int64_t i = 0; i < n; ++i) {
            Tensor one =
                train_detail::standardized_plain(split.image(start + i), stats, out_size);
            std::copy(one.data(), one.data() + one.numel(), x.data() + i * one.numel());
        }
        Tensor f;
        b.encoder->forward(x, *cache, ctx, f);
        std::copy(f.data(), f.data() + f.numel(), feats.data() + start * b.arch.feature_dim);
    }
    return feats;
}

// Stable softmax cross-entropy; returns mean loss, fills dL/dlogits.
inline double softmax_ce(const Tensor& logits, std::span<const int32_t> labels,
                         Tensor* glogits) {
    const int64_t b = logits.dim(0), c = logits.dim(1);
    double total = 0.0;
    for (int64_t i = 0; i < b; ++i) {
        const float* row = logits.data() + i * c;
        float mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < c; ++j) denom += std::exp((double)row[j] - mx);
        const int32_t y = labels[(size_t)i];
        total += -((double)row[y] - mx - std::log(denom));
        if (glogits) {
            float* g = glogits->data() + i * c;
            for (int64_t j = 0; j < c; ++j) {
                const double p = std::exp((double)row[j] - mx) / denom;
                g[j] = (float)((p - (j == y ? 1.0 : 0.0)) / (double)b);
            }
        }
    }
    return total / (double)b;
}

inline double accuracy_percent(const Tensor& logits, std::span<const int32_t> labels) {
    const int64_t b = logits.dim(0), c = logits.dim(1);
    int64_t hit = 0;
    for (int64_t i = 0; i < b; ++i) {
        const float* row = logits.data() + i * c;
        int64_t best = 0;
        for (int64_t j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        hit += best == labels[(size_t)i];
    }
    return 100.0 * (double)hit / (double)b;
}

// Classifier training on cached features; evaluates on the test features at
// the configured cadence and records (epoch, accuracy) pairs.
inline std::vector<std::pair<int64_t, double>> train_linear_classifier(
    const Tensor& train_feats, std::span<const int32_t> train_labels,
    const std::vector<int64_t>& subset, const Tensor& test_feats,
    std::span<const int32_t> test_labels, int num_classes, const ProbeConfig& cfg) {
    nn::Linear clf((int)train_feats.dim(1), num_classes);
    Rng init = Rng::derive(cfg.seed, {rng_stream::kProbe, 0});
    clf.init(init);

    SgdState opt;
    std::vector<nn::ParamRef> refs = {
        {"clf.w", nn::Role::Predictor, nn::Kind::Learnable, &clf.w, &clf.gw},
        {"clf.b", nn::Role::Predictor, nn::Kind::Learnable, &clf.b, &clf.gb}};

    const int64_t d = train_feats.dim(1);
    std::vector<std::pair<int64_t, double>> curve;
    auto evaluate = [&](int64_t epoch) {
        nn::Linear::Cache c;
        Tensor logits;
        clf.forward(test_feats, c, logits);
        curve.emplace_back(epoch, accuracy_percent(logits, test_labels));
    };
    if (cfg.epochs == 0) evaluate(0);

    std::vector<int64_t> order = subset;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuf = Rng::derive(cfg.seed, {rng_stream::kProbe, 1, (uint64_t)epoch});
        shuf.shuffle(order);
        for (int64_t start = 0; start < (int64_t)order.size(); start += cfg.batch_size) {
            const int64_t n = std::min<int64_t>(cfg.batch_size, (int64_t)order.size() - start);
            Tensor x({n, d});
            std::vector<int32_t> y((size_t)n);
            for (int64_t i = 0; i < n; ++i) {
                const int64_t src = order[(size_t)(start + i)];
                std::copy(train_feats.data() + src * d, train_feats.data() + (src + 1) * d,
                          x.data() + i * d);
                y[(size_t)i] = train_labels[(size_t)src];
            }
            nn::Linear::Cache c;
            Tensor logits;
            clf.forward(x, c, logits);
            Tensor glogits(logits.shape());
            softmax_ce(logits, y, &glogits);
            clf.gw.zero();
            clf.gb.zero();
            clf.backward(c, glogits, nullptr);
            optimizer_step(refs, opt, cfg.optimizer);
        }
        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)
            evaluate(epoch + 1);
    }
    return curve;
}

inline double max_accuracy(const std::vector<std::pair<int64_t, double>>& curve) {
    double best = 0.0;
    for (auto& [e, a] : curve) best = std::max(best, a);
    return best;
}

struct PretrainProvenance {
    std::string dataset = "none";
    std::string mode = "random";
    std::string config_hash = "none";
    int64_t batch_size = 0;

    static PretrainProvenance from_manifest(const json& m) {
        PretrainProvenance p;
        p.dataset = m.value("dataset", "unknown");
        p.mode = m.value("mode", "unknown");
        p.config_hash = m.value("config_hash", "unknown");
        p.batch_size = m.value("batch_size", (int64_t)0);
        return p;
    }
};

} // namespace eval_detail

// ---------------------------------------------------------------------------
// Linear probe: train a single linear classifier on frozen backbone features.
// ---------------------------------------------------------------------------
inline EvalReport linear_probe(eval_detail::Backbone& backbone,
                               const data::DatasetEntry& entry,
                               const data::SplitData& train_split,
                               const data::SplitData& test_split, const ProbeConfig& cfg,
                               const eval_detail::PretrainProvenance& prov,
                               const std::string& config_hash) {
    if (!train_split.labeled() || !test_split.labeled())
        throw DataError("linear_probe: splits must be labeled");
    for (int32_t l : train_split.labels)
        if (l < 0 || l >= entry.num_classes)
            throw DataError("linear_probe: label out of range for " +
                            std::to_string(entry.num_classes) + " classes");

    EvalReport rep;
    rep.protocol = cfg.protocol;
    rep.pretrain_dataset = prov.dataset;
    rep.eval_dataset = entry.id;
    rep.mode = prov.mode;
    rep.label_fraction = cfg.label_fraction;
    rep.seed = cfg.seed;
    rep.config_hash = config_hash;
    rep.pretrain_config_hash = prov.config_hash;
    rep.pretrain_batch_size = prov.batch_size;

    rep.backbone_hash_before = backbone.hash();
    Tensor train_feats = eval_detail::extract_features(backbone, train_split, entry.stats,
                                                       96);
    Tensor test_feats =
        eval_detail::extract_features(backbone, test_split, entry.stats, 96);
    auto subset = subsample_labels(train_split.labels, cfg.label_fraction, cfg.seed);
    rep.accuracies = eval_detail::train_linear_classifier(
        train_feats, train_split.labels, subset, test_feats, test_split.labels,
        entry.num_classes, cfg);
    rep.selected = eval_detail::max_accuracy(rep.accuracies);
    rep.backbone_hash_after = backbone.hash();
    if (rep.backbone_hash_before != rep.backbone_hash_after)
        throw Error("linear_probe: frozen backbone changed during probing");
    return rep;
}

// ---------------------------------------------------------------------------
// Fine-tune: backbone AND classifier trained jointly (the From-Scratch
// baseline runs the same procedure from random weights). freeze_backbone
// gives the frozen variant for comparison.
// ---------------------------------------------------------------------------
inline EvalReport fine_tune(eval_detail::Backbone& backbone,
                            const data::DatasetEntry& entry,
                            const data::SplitData& train_split,
                            const data::SplitData& test_split, const ProbeConfig& cfg,
                            const eval_detail::PretrainProvenance& prov,
                            const std::string& config_hash) {
    if (!train_split.labeled() || !test_split.labeled())
        throw DataError("fine_tune: splits must be labeled");

    EvalReport rep;
    rep.protocol = cfg.protocol;
    rep.pretrain_dataset = prov.dataset;
    rep.eval_dataset = entry.id;
    rep.mode = cfg.from_scratch ? "from_scratch" : prov.mode;
    rep.label_fraction = cfg.label_fraction;
    rep.seed = cfg.seed;
    rep.config_hash = config_hash;
    rep.pretrain_config_hash = cfg.from_scratch ? "none" : prov.config_hash;
    rep.pretrain_batch_size = prov.batch_size;
    rep.backbone_hash_before = backbone.hash();

    nn::Linear clf((int)backbone.arch.feature_dim, entry.num_classes);
    Rng init = Rng::derive(cfg.seed, {rng_stream::kProbe, 2});
    clf.init(init);

    std::vector<nn::ParamRef> refs;
    if (!cfg.freeze_backbone)
        backbone.encoder->collect("encoder.", nn::Role::Encoder, refs);
    refs.push_back({"clf.w", nn::Role::Predictor, nn::Kind::Learnable, &clf.w, &clf.gw});
    refs.push_back({"clf.b", nn::Role::Predictor, nn::Kind::Learnable, &clf.b, &clf.gb});

    auto subset = subsample_labels(train_split.labels, cfg.label_fraction, cfg.seed);
    SgdState opt;
    auto cache = backbone.encoder->make_cache();

    auto evaluate = [&](int64_t epoch, EvalReport& r) {
        Tensor feats =
            eval_detail::extract_features(backbone, test_split, entry.stats, 96);
        nn::Linear::Cache c;
        Tensor logits;
        clf.forward(feats, c, logits);
        r.accuracies.emplace_back(epoch,
                                  eval_detail::accuracy_percent(logits, test_split.labels));
    };
    if (cfg.epochs == 0) evaluate(0, rep);

    std::vector<int64_t> order = subset;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuf = Rng::derive(cfg.seed, {rng_stream::kProbe, 3, (uint64_t)epoch});
        shuf.shuffle(order);
        for (int64_t start = 0; start < (int64_t)order.size(); start += cfg.batch_size) {
            const int64_t n = std::min<int64_t>(cfg.batch_size, (int64_t)order.size() - start);
            Tensor x({n, 96, 96, 3});
            std::vector<int32_t> y((size_t)n);
            for (int64_t i = 0; i < n; ++i) {
                const int64_t src = order[(size_t)(start + i)];
                Tensor one = train_detail::standardized_plain(train_split.image(src),
                                                              entry.stats, 96);
                std::copy(one.data(), one.data() + one.numel(), x.data() + i * one.numel());
                y[(size_t)i] = train_split.labels[(size_t)src];
            }
            // Frozen mode keeps the encoder in inference statistics; joint
            // training uses batch statistics (B=1 falls back automatically).
            nn::BnContext ctx = cfg.freeze_backbone || n == 1
                                    ? nn::BnContext{nn::StatsMode::Running, false, 0.1}
                                    : nn::BnContext{nn::StatsMode::Batch, true, 0.1};
            Tensor feats;
            backbone.encoder->forward(x, *cache, ctx, feats);
            nn::Linear::Cache c;
            Tensor logits;
            clf.forward(feats, c, logits);
            Tensor glogits(logits.shape());
            eval_detail::softmax_ce(logits, y, &glogits);
            for (auto& r : refs) r.grad->zero();
            Tensor gfeats;
            clf.backward(c, glogits, cfg.freeze_backbone ? nullptr : &gfeats);
            if (!cfg.freeze_backbone) backbone.encoder->backward(*cache, gfeats);
            optimizer_step(refs, opt, cfg.optimizer);
        }
        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)
            evaluate(epoch + 1, rep);
    }
    rep.selected = eval_detail::max_accuracy(rep.accuracies);
    rep.backbone_hash_after = backbone.hash();
    if (cfg.freeze_backbone && rep.backbone_hash_before != rep.backbone_hash_after)
        throw Error("fine_tune: frozen backbone changed");
    return rep;
}

// ---------------------------------------------------------------------------
// Transfer: linear probe on a different dataset than the one the backbone was
// pretrained on; grayscale targets ride the channel-replication path.
// ---------------------------------------------------------------------------
inline EvalReport transfer_eval(eval_detail::Backbone& backbone,
                                const data::DatasetEntry& target,
                                const data::SplitData& train_split,
                                const data::SplitData& test_split, const ProbeConfig& cfg,
                                const eval_detail::PretrainProvenance& prov,
                                const std::string& config_hash) {
    EvalReport rep = linear_probe(backbone, target, train_split, test_split, cfg, prov,
                                  config_hash);
    rep.protocol = "transfer";
    return rep;
}

} // namespace tribyol
