#pragma once

#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "tribyol/augment.hpp"
#include "tribyol/data/dataset.hpp"
#include "tribyol/io.hpp"
#include "tribyol/sha256.hpp"
#include "tribyol/triplet.hpp"
#include "tribyol/updates.hpp"

// Run configuration: a single JSON file fully determines a run given the
// ingested datasets. Parsing fills every default, rejects unknown keys with
// their path, and hashes the normalized (defaults-filled, key-sorted) form so
// cosmetic edits do not change provenance.

namespace tribyol {

using nlohmann::json;

namespace cfg_detail {

class KeyChecker {
public:
    KeyChecker(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object())
            throw ConfigError(path_.empty() ? "config root must be an object"
                                            : path_ + ": must be an object");
    }

    template <typename T>
    T require(const std::string& key) {
        mark(key);
        if (!obj_.contains(key))
            throw ConfigError("missing required key " + full(key));
        return get_as<T>(key);
    }

    template <typename T>
    T get(const std::string& key, T fallback) {
        mark(key);
        if (!obj_.contains(key)) return fallback;
        return get_as<T>(key);
    }

    std::optional<json> child(const std::string& key) {
        mark(key);
        if (!obj_.contains(key)) return std::nullopt;
        if (!obj_.at(key).is_object())
            throw ConfigError(full(key) + ": must be an object");
        return obj_.at(key);
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown key " + full(it.key()));
    }

    std::string full(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    template <typename T>
    T get_as(const std::string& key) {
        try {
            return obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("bad value type at " + full(key));
        }
    }
    void mark(const std::string& key) { seen_.insert(key); }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace cfg_detail

struct TrainConfig {
    std::string dataset;
    TrainMode mode = TrainMode::Tribyol;
    int64_t batch_size = 32;
    int64_t epochs = 80;
    uint64_t seed = 1;
    bool loss_symmetrize = false;
    double loss13_coeff = 1.0; // diagnostic scale on the second target term
    nn::ArchitectureSpec arch;
    OptimizerHyper optimizer;
    EmaSchedule ema;
    AugmentPolicy augment;
    int64_t checkpoint_every = 1; // epochs

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
        if (loss13_coeff < 0.0) throw ConfigError("loss13_coeff must be >= 0");
        optimizer.validate();
        ema.validate();
        arch.validate();
        const AugmentPolicy& a = augment;
        auto prob = [](double p, const char* k) {
            if (p < 0.0 || p > 1.0)
                throw ConfigError(std::string("augment.") + k + " must be in [0, 1]");
        };
        prob(a.flip_prob, "flip_prob");
        prob(a.jitter_prob, "jitter_prob");
        prob(a.grayscale_prob, "grayscale_prob");
        prob(a.blur_prob, "blur_prob");
        if (a.crop_scale_min <= 0.0 || a.crop_scale_min > a.crop_scale_max ||
            a.crop_scale_max > 1.0)
            throw ConfigError("augment: crop scale range must satisfy 0 < min <= max <= 1");
        if (a.crop_ratio_min <= 0.0 || a.crop_ratio_min > a.crop_ratio_max)
            throw ConfigError("augment: bad crop ratio range");
        if (a.blur_sigma_min <= 0.0 || a.blur_sigma_min > a.blur_sigma_max)
            throw ConfigError("augment: bad blur sigma range");
        if (a.blur_kernel < 1 || a.blur_kernel % 2 == 0)
            throw ConfigError("augment.blur_kernel must be odd and positive");
        if (a.out_size < 9) throw ConfigError("augment.out_size too small");
        if (a.interpolation != "bicubic")
            throw ConfigError("augment.interpolation: only bicubic is implemented");
    }
};

struct ProbeConfig {
    std::string protocol; // linear | finetune | transfer
    std::string dataset;  // evaluation dataset (transfer: the target dataset)
    std::string checkpoint;
    bool from_scratch = false;
    bool freeze_backbone = true;
    int64_t epochs = 200;
    int64_t eval_every = 10;
    double label_fraction = 1.0;
    int64_t batch_size = 256;
    OptimizerHyper optimizer;
    uint64_t seed = 1;
    nn::ArchitectureSpec arch;

    void validate() const {
        if (protocol != "linear" && protocol != "finetune" && protocol != "transfer")
            throw ConfigError("probe protocol must be linear, finetune or transfer");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
        if (!(label_fraction > 0.0) || label_fraction > 1.0)
            throw ConfigError("label_fraction must be in (0, 1]");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (checkpoint.empty() && !from_scratch)
            throw ConfigError("probe needs a checkpoint (or from_scratch=true)");
        if (protocol != "finetune" && from_scratch)
            throw ConfigError("from_scratch only applies to finetune");
        optimizer.validate();
        arch.validate();
    }
};

struct RunConfig {
    int format_version = 1;
    std::string type; // pretrain | linear | finetune | transfer
    TrainConfig train;
    ProbeConfig probe;
    json normalized;
    std::string hash;

    bool is_pretrain() const { return type == "pretrain"; }
};

namespace cfg_detail {

inline nn::ArchitectureSpec parse_arch(const std::optional<json>& j, const std::string& path) {
    nn::ArchitectureSpec arch;
    if (j) {
        KeyChecker c(*j, path);
        arch.encoder_kind = c.get<std::string>("encoder", arch.encoder_kind);
        arch.feature_dim =
            c.get<int64_t>("feature_dim", arch.encoder_kind == "resnet50" ? 2048 : 256);
        arch.proj_hidden = c.get<int>("proj_hidden", arch.proj_hidden);
        arch.embed_dim = c.get<int>("embed_dim", arch.embed_dim);
        c.finish();
    }
    return arch;
}

inline OptimizerHyper parse_optimizer(const std::optional<json>& j, const std::string& path) {
    OptimizerHyper h;
    if (j) {
        KeyChecker c(*j, path);
        h.lr = c.get<double>("lr", h.lr);
        h.momentum = c.get<double>("momentum", h.momentum);
        h.weight_decay = c.get<double>("weight_decay", h.weight_decay);
        c.finish();
    }
    return h;
}

inline EmaSchedule parse_ema(const std::optional<json>& j, const std::string& path) {
    EmaSchedule e;
    if (j) {
        KeyChecker c(*j, path);
        e.tau = c.get<double>("tau", e.tau);
        e.kind = c.get<std::string>("schedule", e.kind);
        e.even_target = c.get<int>("parity", e.even_target);
        c.finish();
    }
    return e;
}

inline AugmentPolicy parse_augment(const std::optional<json>& j, const std::string& path) {
    AugmentPolicy a;
    if (j) {
        KeyChecker c(*j, path);
        a.crop_scale_min = c.get<double>("crop_scale_min", a.crop_scale_min);
        a.crop_scale_max = c.get<double>("crop_scale_max", a.crop_scale_max);
        a.crop_ratio_min = c.get<double>("crop_ratio_min", a.crop_ratio_min);
        a.crop_ratio_max = c.get<double>("crop_ratio_max", a.crop_ratio_max);
        a.flip_prob = c.get<double>("flip_prob", a.flip_prob);
        a.jitter_prob = c.get<double>("jitter_prob", a.jitter_prob);
        a.jitter_brightness = c.get<double>("jitter_brightness", a.jitter_brightness);
        a.jitter_contrast = c.get<double>("jitter_contrast", a.jitter_contrast);
        a.jitter_saturation = c.get<double>("jitter_saturation", a.jitter_saturation);
        a.jitter_hue = c.get<double>("jitter_hue", a.jitter_hue);
        a.grayscale_prob = c.get<double>("grayscale_prob", a.grayscale_prob);
        a.blur_prob = c.get<double>("blur_prob", a.blur_prob);
        a.blur_sigma_min = c.get<double>("blur_sigma_min", a.blur_sigma_min);
        a.blur_sigma_max = c.get<double>("blur_sigma_max", a.blur_sigma_max);
        a.blur_kernel = c.get<int>("blur_kernel", a.blur_kernel);
        a.out_size = c.get<int>("out_size", a.out_size);
        a.interpolation = c.get<std::string>("interpolation", a.interpolation);
        c.finish();
    }
    return a;
}

inline json arch_json(const nn::ArchitectureSpec& a) {
    return {{"encoder", a.encoder_kind},
            {"feature_dim", a.feature_dim},
            {"proj_hidden", a.proj_hidden},
            {"embed_dim", a.embed_dim}};
}

inline json optimizer_json(const OptimizerHyper& h) {
    return {{"lr", h.lr}, {"momentum", h.momentum}, {"weight_decay", h.weight_decay}};
}

inline json ema_json(const EmaSchedule& e) {
    return {{"tau", e.tau}, {"schedule", e.kind}, {"parity", e.even_target}};
}

inline json augment_json(const AugmentPolicy& a) {
    return {{"crop_scale_min", a.crop_scale_min},
            {"crop_scale_max", a.crop_scale_max},
            {"crop_ratio_min", a.crop_ratio_min},
            {"crop_ratio_max", a.crop_ratio_max},
            {"flip_prob", a.flip_prob},
            {"jitter_prob", a.jitter_prob},
            {"jitter_brightness", a.jitter_brightness},
            {"jitter_contrast", a.jitter_contrast},
            {"jitter_saturation", a.jitter_saturation},
            {"jitter_hue", a.jitter_hue},
            {"grayscale_prob", a.grayscale_prob},
            {"blur_prob", a.blur_prob},
            {"blur_sigma_min", a.blur_sigma_min},
            {"blur_sigma_max", a.blur_sigma_max},
            {"blur_kernel", a.blur_kernel},
            {"out_size", a.out_size},
            {"interpolation", a.interpolation}};
}

} // namespace cfg_detail

inline json normalize_config(const RunConfig& rc) {
    using namespace cfg_detail;
    json j;
    j["format_version"] = rc.format_version;
    j["type"] = rc.type;
    if (rc.is_pretrain()) {
        const TrainConfig& t = rc.train;
        j["dataset"] = t.dataset;
        j["mode"] = train_mode_name(t.mode);
        j["batch_size"] = t.batch_size;
        j["epochs"] = t.epochs;
        j["seed"] = t.seed;
        j["loss_symmetrize"] = t.loss_symmetrize;
        j["loss13_coeff"] = t.loss13_coeff;
        j["checkpoint_every"] = t.checkpoint_every;
        j["arch"] = arch_json(t.arch);
        j["optimizer"] = optimizer_json(t.optimizer);
        j["ema"] = ema_json(t.ema);
        j["augment"] = augment_json(t.augment);
    } else {
        const ProbeConfig& p = rc.probe;
        j["dataset"] = p.dataset;
        j["checkpoint"] = p.checkpoint;
        j["from_scratch"] = p.from_scratch;
        j["freeze_backbone"] = p.freeze_backbone;
        j["epochs"] = p.epochs;
        j["eval_every"] = p.eval_every;
        j["label_fraction"] = p.label_fraction;
        j["batch_size"] = p.batch_size;
        j["seed"] = p.seed;
        j["arch"] = arch_json(p.arch);
        j["optimizer"] = optimizer_json(p.optimizer);
    }
    return j;
}

inline RunConfig parse_config_json(const json& root) {
    using namespace cfg_detail;
    RunConfig rc;
    KeyChecker c(root, "");
    rc.format_version = c.get<int>("format_version", 1);
    if (rc.format_version != 1)
        throw ConfigError("unsupported format_version " +
                          std::to_string(rc.format_version));
    rc.type = c.require<std::string>("type");

    if (rc.type == "pretrain") {
        TrainConfig& t = rc.train;
        t.dataset = c.require<std::string>("dataset");
        t.mode = train_mode_from(c.get<std::string>("mode", "tribyol"));
        t.batch_size = c.get<int64_t>("batch_size", t.batch_size);
        t.epochs = c.get<int64_t>("epochs", t.epochs);
        t.seed = c.get<uint64_t>("seed", t.seed);
        t.loss_symmetrize = c.get<bool>("loss_symmetrize", t.loss_symmetrize);
        t.loss13_coeff = c.get<double>("loss13_coeff", t.loss13_coeff);
        t.checkpoint_every = c.get<int64_t>("checkpoint_every", t.checkpoint_every);
        t.arch = parse_arch(c.child("arch"), "arch");
        t.optimizer = parse_optimizer(c.child("optimizer"), "optimizer");
        t.ema = parse_ema(c.child("ema"), "ema");
        t.augment = parse_augment(c.child("augment"), "augment");
        c.finish();
        t.validate();
    } else if (rc.type == "linear" || rc.type == "finetune" || rc.type == "transfer") {
        ProbeConfig& p = rc.probe;
        p.protocol = rc.type;
        p.dataset = c.require<std::string>("dataset");
        p.checkpoint = c.get<std::string>("checkpoint", "");
        p.from_scratch = c.get<bool>("from_scratch", false);
        p.freeze_backbone =
            c.get<bool>("freeze_backbone", rc.type != "finetune");
        p.epochs = c.get<int64_t>("epochs", rc.type == "finetune" ? 10 : 200);
        p.eval_every = c.get<int64_t>("eval_every", rc.type == "finetune" ? 1 : 10);
        p.label_fraction = c.get<double>("label_fraction", 1.0);
        p.batch_size = c.get<int64_t>("batch_size", rc.type == "finetune" ? 32 : 256);
        p.seed = c.get<uint64_t>("seed", 1);
        p.arch = parse_arch(c.child("arch"), "arch");
        p.optimizer = parse_optimizer(c.child("optimizer"), "optimizer");
        c.finish();
        p.validate();
    } else {
        throw ConfigError("type must be pretrain, linear, finetune or transfer; got " +
                          rc.type);
    }

    // Recognized dataset id check is part of schema validation.
    data::lookup_dataset(rc.is_pretrain() ? rc.train.dataset : rc.probe.dataset);

    rc.normalized = normalize_config(rc);
    rc.hash = Sha256::hex_of(rc.normalized.dump());
    return rc;
}

inline RunConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config_json(root);
}

inline RunConfig parse_config(const io::fs::path& path) {
    return parse_config_text(io::read_text(path));
}

} // namespace tribyol
