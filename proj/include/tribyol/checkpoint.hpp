#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "tribyol/io.hpp"
#include "tribyol/sha256.hpp"
#include "tribyol/triplet.hpp"

// Checkpoint archive: manifest (config hash, iteration, parity, architecture)
// + all branch WeightSets + optimizer state, with an integrity hash footer.
// Tensors round-trip bit-exactly.

namespace tribyol {

using nlohmann::json;

constexpr uint32_t kCheckpointMagic = 0x54425943; // "CYBT"
constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    json manifest;
    std::map<std::string, nn::WeightSet> sets; // online / target2 / target3
    SgdState opt;
};

namespace ckpt_detail {

inline void write_tensor(io::BinWriter& w, const Tensor& t) {
    w.u32((uint32_t)t.rank());
    for (int64_t d : t.shape()) w.i64(d);
    w.bytes(t.data(), sizeof(float) * (size_t)t.numel());
}

inline Tensor read_tensor(io::BinReader& r) {
    const uint32_t rank = r.u32();
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = r.i64();
    Tensor t(dims);
    r.bytes(t.data(), sizeof(float) * (size_t)t.numel());
    return t;
}

inline void write_weightset(io::BinWriter& w, const nn::WeightSet& ws) {
    w.str(ws.provenance);
    w.u64(ws.entries.size());
    for (const auto& e : ws.entries) {
        w.str(e.name);
        w.str(nn::role_name(e.role));
        w.u32(e.kind == nn::Kind::Learnable ? 0 : 1);
        write_tensor(w, e.value);
    }
}

inline nn::WeightSet read_weightset(io::BinReader& r) {
    nn::WeightSet ws;
    ws.provenance = r.str();
    const uint64_t n = r.u64();
    ws.entries.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        nn::WeightEntry e;
        e.name = r.str();
        e.role = nn::role_from_name(r.str());
        e.kind = r.u32() == 0 ? nn::Kind::Learnable : nn::Kind::RunningStat;
        e.value = read_tensor(r);
        ws.entries.push_back(std::move(e));
    }
    return ws;
}

} // namespace ckpt_detail

inline json checkpoint_manifest(const TripletState& st, const std::string& config_hash,
                                const EmaSchedule& sched, json extra = json::object()) {
    json m = std::move(extra);
    m["format_version"] = (int)kCheckpointVersion;
    m["config_hash"] = config_hash;
    m["iteration"] = st.iteration;
    m["parity_even_target"] = sched.even_target;
    m["mode"] = train_mode_name(st.mode);
    m["seed"] = st.seed;
    m["arch"] = {{"encoder", st.spec.encoder_kind},
                 {"feature_dim", st.spec.feature_dim},
                 {"proj_hidden", st.spec.proj_hidden},
                 {"embed_dim", st.spec.embed_dim},
                 {"describe", st.spec.describe()}};
    m["bn_stat_momentum"] = st.bn_stat_momentum;
    return m;
}

inline void save_checkpoint(const io::fs::path& path, TripletState& st,
                            const json& manifest) {
    io::BinWriter w;
    w.u32(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.str(manifest.dump());

    uint32_t n_sets = 1 + (st.target2 ? 1 : 0) + (st.target3 ? 1 : 0);
    w.u32(n_sets);
    auto dump_branch = [&](const char* name, nn::BranchNetwork& net) {
        w.str(name);
        auto ws = nn::WeightSet::snapshot(net);
        ws.provenance = name;
        ckpt_detail::write_weightset(w, ws);
    };
    dump_branch("online", st.online);
    if (st.target2) dump_branch("target2", *st.target2);
    if (st.target3) dump_branch("target3", *st.target3);

    w.u64(st.opt.initialized ? st.opt.keys.size() : 0);
    if (st.opt.initialized)
        for (size_t i = 0; i < st.opt.keys.size(); ++i) {
            w.str(st.opt.keys[i]);
            ckpt_detail::write_tensor(w, st.opt.buffers[i]);
        }

    const std::string digest =
        Sha256::hex_of(w.buffer().data(), w.buffer().size());
    io::BinWriter footer;
    footer.bytes(w.buffer().data(), w.buffer().size());
    footer.str(digest);
    io::write_file(path, footer.buffer().data(), footer.buffer().size());
}

inline Checkpoint load_checkpoint(const io::fs::path& path) {
    auto raw = io::read_file(path);
    // Footer: 8-byte length + 64 hex chars.
    if (raw.size() < 72 + 8) throw DataError("checkpoint too small: " + path.string());
    const size_t body = raw.size() - 72;
    const std::string want(reinterpret_cast<const char*>(raw.data()) + body + 8, 64);
    const std::string got = Sha256::hex_of(raw.data(), body);
    if (want != got)
        throw DataError("checkpoint integrity check failed: " + path.string());

    std::vector<uint8_t> trimmed(raw.begin(), raw.begin() + (long)body);
    io::BinReader r(trimmed);
    if (r.u32() != kCheckpointMagic)
        throw DataError("not a checkpoint: " + path.string());
    if (r.u32() != kCheckpointVersion)
        throw DataError("unsupported checkpoint version: " + path.string());
    Checkpoint ck;
    ck.manifest = json::parse(r.str());
    const uint32_t n_sets = r.u32();
    for (uint32_t i = 0; i < n_sets; ++i) {
        std::string name = r.str();
        ck.sets[name] = ckpt_detail::read_weightset(r);
    }
    const uint64_t n_buf = r.u64();
    ck.opt.initialized = n_buf > 0;
    for (uint64_t i = 0; i < n_buf; ++i) {
        ck.opt.keys.push_back(r.str());
        ck.opt.buffers.push_back(ckpt_detail::read_tensor(r));
    }
    return ck;
}

// Rebuilds a TripletState from a checkpoint (architecture and mode come from
// the manifest).
inline TripletState restore_triplet(const Checkpoint& ck) {
    nn::ArchitectureSpec spec;
    spec.encoder_kind = ck.manifest.at("arch").at("encoder").get<std::string>();
    spec.feature_dim = ck.manifest.at("arch").at("feature_dim").get<int64_t>();
    spec.proj_hidden = ck.manifest.at("arch").at("proj_hidden").get<int>();
    spec.embed_dim = ck.manifest.at("arch").at("embed_dim").get<int>();
    const TrainMode mode = train_mode_from(ck.manifest.at("mode").get<std::string>());
    TripletState st = init_triplet(spec, ck.manifest.at("seed").get<uint64_t>(), mode);
    st.iteration = ck.manifest.at("iteration").get<int64_t>();
    st.bn_stat_momentum = ck.manifest.at("bn_stat_momentum").get<double>();

    ck.sets.at("online").apply_to(st.online);
    if (st.target2) ck.sets.at("target2").apply_to(*st.target2);
    if (st.target3) ck.sets.at("target3").apply_to(*st.target3);
    st.opt = ck.opt;
    return st;
}

// The encoder weights stored in a checkpoint's online branch.
inline nn::WeightSet checkpoint_backbone(const Checkpoint& ck) {
    auto ws = ck.sets.at("online").filter_role(nn::Role::Encoder);
    ws.provenance = "online";
    return ws;
}

} // namespace tribyol
