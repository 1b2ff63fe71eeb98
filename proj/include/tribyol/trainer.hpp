#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "tribyol/checkpoint.hpp"
#include "tribyol/collapse.hpp"
#include "tribyol/config.hpp"
#include "tribyol/data/dataset.hpp"
#include "tribyol/loss.hpp"
#include "tribyol/metrics.hpp"
#include "tribyol/triplet.hpp"

// Pretraining loop: minibatch -> three views -> online/target forwards ->
// view loss -> optimizer step -> alternating EMA target update. Ablation
// modes reuse the same loop with fewer branches.

namespace tribyol {

struct PretrainResult {
    std::vector<StepRecord> records;
    CollapseReport final_collapse;
    std::string config_hash;
    io::fs::path final_checkpoint;
    int64_t iterations = 0;
    int64_t ema_updates_target2 = 0;
    int64_t ema_updates_target3 = 0;
};

// Per-step test/instrumentation hook.
using StepHook = std::function<void(const StepRecord&, TripletState&)>;

namespace train_detail {

inline Tensor standardized_plain(const Image& im, const ChannelStats& stats, int out_size) {
    // Identity crop + resize + standardize; the evaluation-time input path.
    Image rgb = img::replicate_to_rgb(im);
    Image resized = rgb.h == out_size && rgb.w == out_size
                        ? rgb
                        : img::crop_resize_bicubic(rgb, 0, 0, rgb.w, rgb.h, out_size,
                                                   out_size);
    Tensor t({1, out_size, out_size, 3});
    write_standardized(t, 0, resized, stats);
    return t;
}

inline Tensor stack_plain(const data::PretrainView& view, std::span<const int64_t> ids,
                          const ChannelStats& stats, int out_size) {
    Tensor out({(int64_t)ids.size(), out_size, out_size, 3});
    for (size_t i = 0; i < ids.size(); ++i) {
        Tensor one = standardized_plain(view.image(ids[i]), stats, out_size);
        std::copy(one.data(), one.data() + one.numel(),
                  out.data() + (int64_t)i * one.numel());
    }
    return out;
}

} // namespace train_detail

class Trainer {
public:
    Trainer(const TrainConfig& cfg, const data::DatasetEntry& entry,
            const data::PretrainView& view, std::string config_hash)
        : cfg(cfg), entry(entry), view(view), config_hash(std::move(config_hash)) {
        cfg.validate();
        iters_per_epoch = view.size() / cfg.batch_size; // partial batches dropped
        if (iters_per_epoch < 1)
            throw ConfigError("dataset smaller than one batch (" +
                              std::to_string(view.size()) + " images, batch " +
                              std::to_string(cfg.batch_size) + ")");
        sched = cfg.ema;
        if (sched.kind == "cosine") sched.total_steps = iters_per_epoch * cfg.epochs;
        state = init_triplet(cfg.arch, cfg.seed, cfg.mode);
        state.bn_stat_momentum = 1.0 - sched.tau;
        if (cfg.loss_symmetrize || cfg.mode == TrainMode::SimSiam2View) {
            aux_cache_v2 = state.online.make_cache();
            aux_cache_v3 = state.online.make_cache();
        }
    }

    // Continue from a checkpoint written by an earlier run of the same config.
    void resume_from(const io::fs::path& ckpt_path) {
        Checkpoint ck = load_checkpoint(ckpt_path);
        const std::string ck_hash = ck.manifest.at("config_hash").get<std::string>();
        if (ck_hash != config_hash)
            throw ConfigError("resume: checkpoint belongs to config " + ck_hash +
                              ", not " + config_hash);
        state = restore_triplet(ck);
        if (state.iteration % iters_per_epoch != 0)
            throw ConfigError("resume: checkpoint not at an epoch boundary");
    }

    PretrainResult run(const io::fs::path& out_dir, const StepHook& hook = nullptr) {
        PretrainResult res;
        res.config_hash = config_hash;
        MetricsWriter metrics;
        if (!out_dir.empty()) {
            io::fs::create_directories(out_dir);
            metrics = MetricsWriter(out_dir / "metrics.ndjson", config_hash, cfg.seed);
        }

        const int64_t start_epoch = state.iteration / iters_per_epoch;
        for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
            auto order = epoch_order(epoch);
            for (int64_t it = 0; it < iters_per_epoch; ++it) {
                const auto t0 = std::chrono::steady_clock::now();
                StepRecord rec = train_step(epoch,
                                            std::span<const int64_t>(
                                                order.data() + it * cfg.batch_size,
                                                (size_t)cfg.batch_size));
                rec.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                if (!std::isfinite(rec.loss)) {
                    metrics.event({{"type", "abort"},
                                   {"iteration", rec.iteration},
                                   {"loss", rec.loss},
                                   {"source_ids", last_source_ids}});
                    metrics.flush();
                    throw TrainAbortError(
                        "non-finite loss at iteration " + std::to_string(rec.iteration) +
                        " (offending source ids logged)");
                }
                res.records.push_back(rec);
                metrics.step(rec);
                if (hook) hook(rec, state);
                if (rec.target_updated == 2) ++res.ema_updates_target2;
                if (rec.target_updated == 3) ++res.ema_updates_target3;
            }
            metrics.flush();
            if (!out_dir.empty() && (epoch + 1) % cfg.checkpoint_every == 0 &&
                epoch + 1 < cfg.epochs)
                save_checkpoint(out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) +
                                           ".tbc"),
                                state, checkpoint_manifest(state, config_hash, sched));
        }

        res.final_collapse = final_collapse_check();
        res.iterations = state.iteration;
        metrics.event({{"type", "final"},
                       {"iterations", state.iteration},
                       {"collapsed", res.final_collapse.collapsed},
                       {"embed_std", res.final_collapse.mean_std},
                       {"threshold", res.final_collapse.threshold}});
        if (!out_dir.empty()) {
            json manifest = checkpoint_manifest(state, config_hash, sched);
            manifest["dataset"] = entry.id;
            manifest["collapsed"] = res.final_collapse.collapsed;
            manifest["final_embed_std"] = res.final_collapse.mean_std;
            res.final_checkpoint = out_dir / "checkpoint_final.tbc";
            save_checkpoint(res.final_checkpoint, state, manifest);
        }
        return res;
    }

    TripletState& triplet() { return state; }
    const EmaSchedule& schedule() const { return sched; }
    int64_t iterations_per_epoch() const { return iters_per_epoch; }

    // Embeddings of (up to) the first `cap` pretraining images, no
    // augmentation, running statistics.
    Tensor clean_embeddings(int64_t cap = 256) {
        const int64_t n = std::min<int64_t>(cap, view.size());
        std::vector<int64_t> ids(n);
        for (int64_t i = 0; i < n; ++i) ids[i] = i;
        Tensor x = train_detail::stack_plain(view, ids, entry.stats, cfg.augment.out_size);
        auto f = forward_online(state, x, PassKind::InferenceStats);
        return *f.z1;
    }

    CollapseReport final_collapse_check() {
        return detect_collapse(clean_embeddings());
    }

private:
    std::vector<int64_t> epoch_order(int64_t epoch) {
        std::vector<int64_t> order(view.size());
        for (int64_t i = 0; i < view.size(); ++i) order[i] = i;
        Rng rng = Rng::derive(cfg.seed, {rng_stream::kShuffle, (uint64_t)epoch});
        rng.shuffle(order);
        return order;
    }

    StepRecord train_step(int64_t epoch, std::span<const int64_t> ids) {
        std::vector<Image> batch;
        batch.reserve(ids.size());
        for (int64_t id : ids) batch.push_back(view.image(id));
        last_source_ids.assign(ids.begin(), ids.end());

        const int n_views = cfg.mode == TrainMode::Tribyol ? 3 : 2;
        ViewStream vs{cfg.seed, (uint64_t)epoch, (uint64_t)state.iteration};
        ViewBatch views =
            make_views(batch, ids, vs, cfg.augment, entry.stats, n_views);

        state.online.zero_grads();
        double loss_value = 0.0;
        switch (cfg.mode) {
            case TrainMode::Tribyol:
                loss_value = cfg.loss_symmetrize ? tribyol_symmetrized(views)
                                                 : tribyol_literal(views);
                break;
            case TrainMode::Byol2View:
                loss_value = cfg.loss_symmetrize ? byol_symmetrized(views)
                                                 : byol_literal(views);
                break;
            case TrainMode::SimSiam2View:
                loss_value = simsiam_step(views);
                break;
        }

        StepRecord rec;
        rec.iteration = state.iteration;
        rec.epoch = epoch;
        rec.loss = loss_value;
        rec.embed_std = ids.size() >= 2
                            ? detect_collapse(state.online_cache.z).mean_std
                            : 0.0;

        if (std::isfinite(loss_value)) {
            optimizer_step(state.online.param_refs(), state.opt, cfg.optimizer);
            rec.target_updated = apply_ema();
        }
        ++state.iteration;
        return rec;
    }

    // L = L_{1,2} + coeff * L_{1,3}
    double tribyol_literal(const ViewBatch& views) {
        auto f = forward_online(state, views.v1);
        Tensor z2 = forward_target(state, 2, views.v2); // copy: buffers get reused
        const Tensor& z3 = forward_target(state, 3, views.v3);
        Tensor gq(f.q1->shape());
        double lv = loss::batch_pairwise_loss(*f.q1, z2, 1.0, &gq);
        lv += loss::batch_pairwise_loss(*f.q1, z3, cfg.loss13_coeff, &gq);
        if (std::isfinite(lv)) state.online.backward_from_q(state.online_cache, gq);
        return lv;
    }

    // Each target also scores the online branch's alternate view:
    // [L(q(V1),z2(V2)) + L(q(V1),z3(V3)) + L(q(V2),z2(V1)) + L(q(V3),z3(V1))] / 2
    double tribyol_symmetrized(const ViewBatch& views) {
        auto ctx = detail::bn_context(PassKind::OnlineTrain, views.v1.dim(0),
                                      state.bn_stat_momentum);
        state.online.forward(views.v1, state.online_cache, ctx);
        state.online.forward(views.v2, aux_cache_v2, ctx);
        state.online.forward(views.v3, aux_cache_v3, ctx);

        Tensor z2_of_v2 = forward_target(state, 2, views.v2);
        Tensor z2_of_v1 = forward_target(state, 2, views.v1);
        Tensor z3_of_v3 = forward_target(state, 3, views.v3);
        Tensor z3_of_v1 = forward_target(state, 3, views.v1);

        Tensor gq1(state.online_cache.q.shape());
        Tensor gq2(aux_cache_v2.q.shape());
        Tensor gq3(aux_cache_v3.q.shape());
        double lv = loss::batch_pairwise_loss(state.online_cache.q, z2_of_v2, 0.5, &gq1);
        lv += loss::batch_pairwise_loss(state.online_cache.q, z3_of_v3, 0.5, &gq1);
        lv += loss::batch_pairwise_loss(aux_cache_v2.q, z2_of_v1, 0.5, &gq2);
        lv += loss::batch_pairwise_loss(aux_cache_v3.q, z3_of_v1, 0.5, &gq3);
        if (std::isfinite(lv)) {
            state.online.backward_from_q(state.online_cache, gq1);
            state.online.backward_from_q(aux_cache_v2, gq2);
            state.online.backward_from_q(aux_cache_v3, gq3);
        }
        return lv;
    }

    double byol_literal(const ViewBatch& views) {
        auto f = forward_online(state, views.v1);
        const Tensor& z2 = forward_target(state, 2, views.v2);
        Tensor gq(f.q1->shape());
        const double lv = loss::batch_pairwise_loss(*f.q1, z2, 1.0, &gq);
        if (std::isfinite(lv)) state.online.backward_from_q(state.online_cache, gq);
        return lv;
    }

    double byol_symmetrized(const ViewBatch& views) {
        auto ctx = detail::bn_context(PassKind::OnlineTrain, views.v1.dim(0),
                                      state.bn_stat_momentum);
        state.online.forward(views.v1, state.online_cache, ctx);
        state.online.forward(views.v2, aux_cache_v2, ctx);
        Tensor z2_of_v2 = forward_target(state, 2, views.v2);
        Tensor z2_of_v1 = forward_target(state, 2, views.v1);
        Tensor gq1(state.online_cache.q.shape());
        Tensor gq2(aux_cache_v2.q.shape());
        double lv = loss::batch_pairwise_loss(state.online_cache.q, z2_of_v2, 0.5, &gq1);
        lv += loss::batch_pairwise_loss(aux_cache_v2.q, z2_of_v1, 0.5, &gq2);
        if (std::isfinite(lv)) {
            state.online.backward_from_q(state.online_cache, gq1);
            state.online.backward_from_q(aux_cache_v2, gq2);
        }
        return lv;
    }

    // Two views through the online branch; each projector output, detached,
    // is the other view's regression target. No momentum network at all.
    double simsiam_step(const ViewBatch& views) {
        auto ctx = detail::bn_context(PassKind::OnlineTrain, views.v1.dim(0),
                                      state.bn_stat_momentum);
        state.online.forward(views.v1, state.online_cache, ctx);
        state.online.forward(views.v2, aux_cache_v2, ctx);
        Tensor z1_detached = state.online_cache.z;
        Tensor z2_detached = aux_cache_v2.z;
        Tensor gq1(state.online_cache.q.shape());
        Tensor gq2(aux_cache_v2.q.shape());
        double lv = loss::batch_pairwise_loss(state.online_cache.q, z2_detached, 0.5, &gq1);
        lv += loss::batch_pairwise_loss(aux_cache_v2.q, z1_detached, 0.5, &gq2);
        if (std::isfinite(lv)) {
            state.online.backward_from_q(state.online_cache, gq1);
            state.online.backward_from_q(aux_cache_v2, gq2);
        }
        return lv;
    }

    // Returns the id of the target updated this iteration (0 = none).
    int apply_ema() {
        if (cfg.mode == TrainMode::SimSiam2View) return 0;
        const double tau = sched.tau_at(state.iteration);
        if (cfg.mode == TrainMode::Byol2View) {
            ema_update(*state.target2, state.online, tau);
            return 2;
        }
        const int which = select_target(state.iteration, sched);
        ema_update(state.target(which), state.online, tau);
        return which;
    }

    TrainConfig cfg;
    const data::DatasetEntry& entry;
    const data::PretrainView& view;
    std::string config_hash;
    int64_t iters_per_epoch = 0;
    EmaSchedule sched;
    TripletState state;
    nn::BranchNetwork::Cache aux_cache_v2, aux_cache_v3;
    std::vector<int64_t> last_source_ids;
};

inline PretrainResult pretrain(const TrainConfig& cfg, const data::DatasetEntry& entry,
                               const data::PretrainView& view,
                               const io::fs::path& out_dir,
                               const std::string& config_hash,
                               const StepHook& hook = nullptr) {
    Trainer t(cfg, entry, view, config_hash);
    return t.run(out_dir, hook);
}

// Ablation entry point: same loop, non-default mode required.
inline PretrainResult run_mode_ablation(const TrainConfig& cfg,
                                        const data::DatasetEntry& entry,
                                        const data::PretrainView& view,
                                        const io::fs::path& out_dir,
                                        const std::string& config_hash,
                                        const StepHook& hook = nullptr) {
    if (cfg.mode == TrainMode::Tribyol)
        throw ConfigError("run_mode_ablation wants byol2view or simsiam2view");
    return pretrain(cfg, entry, view, out_dir, config_hash, hook);
}

} // namespace tribyol
