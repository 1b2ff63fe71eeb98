#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tribyol/augment.hpp"
#include "tribyol/data/synth.hpp"
#include "tribyol/io.hpp"
#include "tribyol/sha256.hpp"

namespace tribyol::data {

using nlohmann::json;

// One stored split: uint8 HWC pixels plus labels where the split has them.
struct SplitData {
    std::string name;
    int h = 0, w = 0, c = 0;
    int64_t count = 0;
    std::vector<uint8_t> pixels;
    std::vector<int32_t> labels; // empty for unlabeled splits

    bool labeled() const { return !labels.empty(); }

    Image image(int64_t i) const {
        Image im(h, w, c);
        const size_t n = (size_t)h * w * c;
        const uint8_t* src = pixels.data() + (size_t)i * n;
        for (size_t k = 0; k < n; ++k) im.px[k] = src[k] / 255.0f;
        return im;
    }
};

struct SplitInfo {
    std::string name;
    int64_t count = 0;
    bool labeled = false;
};

struct DatasetEntry {
    std::string id;
    int height = 0, width = 0, channels = 0;
    int num_classes = 0;
    std::vector<SplitInfo> splits;
    std::vector<std::string> pretrain_splits;
    ChannelStats stats;
    std::string content_sha256; // over the stored split blobs
    std::string source_sha256;  // over the ingested source files
    int format_version = 1;

    json to_json() const {
        json j;
        j["format_version"] = format_version;
        j["id"] = id;
        j["height"] = height;
        j["width"] = width;
        j["channels"] = channels;
        j["num_classes"] = num_classes;
        j["pretrain_splits"] = pretrain_splits;
        j["stats"] = {{"mean", stats.mean}, {"std", stats.stddev}};
        j["content_sha256"] = content_sha256;
        j["source_sha256"] = source_sha256;
        json sp = json::array();
        for (const auto& s : splits)
            sp.push_back({{"name", s.name}, {"count", s.count}, {"labeled", s.labeled}});
        j["splits"] = sp;
        return j;
    }

    static DatasetEntry from_json(const json& j) {
        DatasetEntry e;
        e.format_version = j.at("format_version").get<int>();
        e.id = j.at("id").get<std::string>();
        e.height = j.at("height").get<int>();
        e.width = j.at("width").get<int>();
        e.channels = j.at("channels").get<int>();
        e.num_classes = j.at("num_classes").get<int>();
        e.pretrain_splits = j.at("pretrain_splits").get<std::vector<std::string>>();
        e.stats.mean = j.at("stats").at("mean").get<std::array<double, 3>>();
        e.stats.stddev = j.at("stats").at("std").get<std::array<double, 3>>();
        e.content_sha256 = j.at("content_sha256").get<std::string>();
        e.source_sha256 = j.at("source_sha256").get<std::string>();
        for (const auto& s : j.at("splits"))
            e.splits.push_back({s.at("name").get<std::string>(),
                                s.at("count").get<int64_t>(), s.at("labeled").get<bool>()});
        return e;
    }
};

// ---------------------------------------------------------------------------
// Registry of known dataset ids. `loader` names the source-format reader;
// ids without one are recognized (configs validate) but cannot be ingested
// here.
// ---------------------------------------------------------------------------
struct KnownDataset {
    std::string id;
    int height, width, channels, num_classes;
    std::string loader; // synth | cifar10 | cifar100 | idx | stl10 | (empty)
};

inline const std::vector<KnownDataset>& known_datasets() {
    static const std::vector<KnownDataset> k = {
        {"toy10", 96, 96, 3, 10, "synth"},
        {"toy10b", 96, 96, 3, 10, "synth"},
        {"toy10_gray", 96, 96, 1, 10, "synth"},
        {"cifar10", 32, 32, 3, 10, "cifar10"},
        {"cifar100", 32, 32, 3, 100, "cifar100"},
        {"stl10", 96, 96, 3, 10, "stl10"},
        {"mnist", 28, 28, 1, 10, "idx"},
        {"fashion_mnist", 28, 28, 1, 10, "idx"},
        {"kmnist", 28, 28, 1, 10, "idx"},
        {"svhn", 32, 32, 3, 10, ""},
        {"usps", 16, 16, 1, 10, ""},
        {"tiny_imagenet", 64, 64, 3, 200, ""},
    };
    return k;
}

inline std::string known_ids_string(bool ingestable_only) {
    std::string s;
    for (const auto& k : known_datasets()) {
        if (ingestable_only && k.loader.empty()) continue;
        if (!s.empty()) s += ", ";
        s += k.id;
    }
    return s;
}

inline const KnownDataset& lookup_dataset(const std::string& id) {
    for (const auto& k : known_datasets())
        if (k.id == id) return k;
    throw DataError("unknown dataset id '" + id + "' (known: " +
                    known_ids_string(false) + ")");
}

// ---------------------------------------------------------------------------
// Split blob format.
// ---------------------------------------------------------------------------
namespace detail {

constexpr uint32_t kSplitMagic = 0x54313053; // "S01T"
constexpr uint32_t kSplitVersion = 1;

inline std::vector<uint8_t> encode_split(const SplitData& s) {
    io::BinWriter w;
    w.u32(kSplitMagic);
    w.u32(kSplitVersion);
    w.u32((uint32_t)s.h);
    w.u32((uint32_t)s.w);
    w.u32((uint32_t)s.c);
    w.u64((uint64_t)s.count);
    w.u32(s.labeled() ? 1 : 0);
    if (s.labeled()) w.bytes(s.labels.data(), s.labels.size() * 4);
    w.bytes(s.pixels.data(), s.pixels.size());
    return w.buffer();
}

inline SplitData decode_split(const std::vector<uint8_t>& raw, const std::string& name) {
    io::BinReader r(raw);
    if (r.u32() != kSplitMagic) throw DataError("split blob " + name + ": bad magic");
    if (r.u32() != kSplitVersion)
        throw DataError("split blob " + name + ": unsupported version");
    SplitData s;
    s.name = name;
    s.h = (int)r.u32();
    s.w = (int)r.u32();
    s.c = (int)r.u32();
    s.count = (int64_t)r.u64();
    const bool labeled = r.u32() != 0;
    if (labeled) {
        s.labels.resize((size_t)s.count);
        r.bytes(s.labels.data(), (size_t)s.count * 4);
    }
    s.pixels.resize((size_t)s.count * s.h * s.w * s.c);
    r.bytes(s.pixels.data(), s.pixels.size());
    return s;
}

inline io::fs::path dataset_dir(const io::fs::path& root, const std::string& id) {
    return root / id;
}

inline io::fs::path split_path(const io::fs::path& root, const std::string& id,
                               const std::string& split) {
    return dataset_dir(root, id) / (split + ".split");
}

inline io::fs::path entry_path(const io::fs::path& root, const std::string& id) {
    return dataset_dir(root, id) / "entry.json";
}

inline ChannelStats compute_stats(const std::vector<const SplitData*>& splits) {
    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    int64_t n = 0;
    int c = 3;
    for (const auto* s : splits) {
        c = s->c;
        const size_t total = s->pixels.size();
        for (size_t i = 0; i < total; ++i) {
            const double v = s->pixels[i] / 255.0;
            const int ch = c == 1 ? 0 : (int)(i % 3);
            sum[ch] += v;
            sq[ch] += v * v;
        }
        n += (int64_t)total / c;
    }
    if (n == 0) throw DataError("compute_stats: no pretraining pixels");
    ChannelStats st;
    for (int ch = 0; ch < 3; ++ch) {
        // Single-channel datasets replicate their stats across RGB, matching
        // the channel replication applied to their images.
        const int use = c == 1 ? 0 : ch;
        const double mean = sum[use] / (double)n;
        double var = sq[use] / (double)n - mean * mean;
        if (var < 1e-8) var = 1e-8;
        st.mean[ch] = mean;
        st.stddev[ch] = std::sqrt(var);
    }
    return st;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Source-format loaders. Each returns the dataset's splits in canonical
// order and appends every source file it consumed to `sources` (for the
// source checksum).
// ---------------------------------------------------------------------------
namespace loaders {

using io::fs::path;

inline void note_source(Sha256& h, const path& p, const std::vector<uint8_t>& raw) {
    h.update(p.filename().string());
    h.update(raw.data(), raw.size());
}

inline std::vector<SplitData> load_synth(const KnownDataset& k, uint64_t seed,
                                         int64_t train_count, int64_t test_count) {
    SynthSpec spec;
    spec.family = k.id == "toy10b" ? "B" : (k.id == "toy10_gray" ? "gray" : "A");
    spec.side = k.height;
    spec.num_classes = k.num_classes;
    spec.seed = seed;

    auto make = [&](const std::string& name, int64_t count, uint64_t stream) {
        SplitData s;
        s.name = name;
        s.h = k.height;
        s.w = k.width;
        s.c = k.channels;
        s.count = count;
        s.pixels.resize((size_t)count * k.height * k.width * k.channels);
        s.labels.resize((size_t)count);
        for (int64_t i = 0; i < count; ++i) {
            const int cls = (int)(i % k.num_classes);
            Rng rng = Rng::derive(seed, {rng_stream::kSynthData, stream, (uint64_t)i});
            Image im = synth_image(spec, cls, rng);
            s.labels[(size_t)i] = cls;
            uint8_t* dst = s.pixels.data() + (size_t)i * im.px.size();
            for (size_t p = 0; p < im.px.size(); ++p)
                dst[p] = (uint8_t)std::lround(img::clamp01(im.px[p]) * 255.0f);
        }
        return s;
    };
    return {make("train", train_count, 1), make("test", test_count, 2)};
}

inline SplitData cifar_like(const KnownDataset& k, const std::vector<path>& files,
                            const std::string& name, int label_bytes, int label_index,
                            Sha256& src_hash) {
    SplitData s;
    s.name = name;
    s.h = 32;
    s.w = 32;
    s.c = 3;
    const size_t rec = (size_t)label_bytes + 3072;
    for (const auto& f : files) {
        auto raw = io::read_file(f);
        note_source(src_hash, f, raw);
        if (raw.size() % rec != 0)
            throw DataError(f.string() + ": size is not a multiple of the record size");
        const size_t n = raw.size() / rec;
        for (size_t i = 0; i < n; ++i) {
            const uint8_t* r = raw.data() + i * rec;
            s.labels.push_back(r[label_index]);
            // CHW planes -> HWC
            const uint8_t* planes = r + label_bytes;
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        s.pixels.push_back(planes[ch * 1024 + y * 32 + x]);
        }
    }
    s.count = (int64_t)s.labels.size();
    if (s.count == 0) throw DataError(name + ": no records found");
    if ((int)k.num_classes > 0)
        for (int32_t l : s.labels)
            if (l < 0 || l >= k.num_classes)
                throw DataError(name + ": label out of range");
    return s;
}

inline std::vector<SplitData> load_cifar10(const KnownDataset& k, const path& src,
                                           Sha256& src_hash) {
    std::vector<path> train;
    for (int i = 1; i <= 5; ++i)
        train.push_back(src / ("data_batch_" + std::to_string(i) + ".bin"));
    return {cifar_like(k, train, "train", 1, 0, src_hash),
            cifar_like(k, {src / "test_batch.bin"}, "test", 1, 0, src_hash)};
}

inline std::vector<SplitData> load_cifar100(const KnownDataset& k, const path& src,
                                            Sha256& src_hash) {
    // Records carry coarse + fine labels; the fine label is the class.
    return {cifar_like(k, {src / "train.bin"}, "train", 2, 1, src_hash),
            cifar_like(k, {src / "test.bin"}, "test", 2, 1, src_hash)};
}

inline std::vector<uint8_t> read_idx(const path& p, uint32_t want_magic,
                                     std::vector<uint32_t>& dims, Sha256& src_hash) {
    path actual = p;
    if (!io::fs::exists(actual) && io::fs::exists(path(p.string() + ".gz")))
        actual = path(p.string() + ".gz");
    auto raw = io::read_file(actual);
    note_source(src_hash, actual, raw);
    raw = io::maybe_gunzip(std::move(raw));
    if (raw.size() < 4) throw DataError(actual.string() + ": truncated idx file");
    const uint32_t magic = (uint32_t(raw[0]) << 24) | (uint32_t(raw[1]) << 16) |
                           (uint32_t(raw[2]) << 8) | uint32_t(raw[3]);
    if (magic != want_magic)
        throw DataError(actual.string() + ": unexpected idx magic");
    const int ndim = (int)(magic & 0xff);
    dims.clear();
    size_t off = 4;
    for (int i = 0; i < ndim; ++i) {
        dims.push_back((uint32_t(raw[off]) << 24) | (uint32_t(raw[off + 1]) << 16) |
                       (uint32_t(raw[off + 2]) << 8) | uint32_t(raw[off + 3]));
        off += 4;
    }
    return std::vector<uint8_t>(raw.begin() + (long)off, raw.end());
}

inline std::vector<SplitData> load_idx(const KnownDataset& k, const path& src,
                                       Sha256& src_hash) {
    auto one = [&](const std::string& img_file, const std::string& lbl_file,
                   const std::string& name) {
        std::vector<uint32_t> dims;
        SplitData s;
        s.name = name;
        auto px = read_idx(src / img_file, 0x00000803, dims, src_hash);
        if (dims.size() != 3) throw DataError(img_file + ": want 3 idx dims");
        s.count = dims[0];
        s.h = (int)dims[1];
        s.w = (int)dims[2];
        s.c = 1;
        if (px.size() != (size_t)s.count * s.h * s.w)
            throw DataError(img_file + ": pixel payload size mismatch");
        s.pixels = std::move(px);
        std::vector<uint32_t> ldims;
        auto lb = read_idx(src / lbl_file, 0x00000801, ldims, src_hash);
        if (ldims.size() != 1 || (int64_t)ldims[0] != s.count)
            throw DataError(lbl_file + ": label count mismatch");
        s.labels.assign(lb.begin(), lb.end());
        return s;
    };
    return {one("train-images-idx3-ubyte", "train-labels-idx1-ubyte", "train"),
            one("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", "test")};
}

inline std::vector<SplitData> load_stl10(const KnownDataset& k, const path& src,
                                         Sha256& src_hash) {
    auto images = [&](const std::string& file, SplitData& s) {
        auto raw = io::read_file(src / file);
        note_source(src_hash, src / file, raw);
        const size_t rec = 3 * 96 * 96;
        if (raw.size() % rec != 0)
            throw DataError(file + ": size not a multiple of the image record");
        s.h = 96;
        s.w = 96;
        s.c = 3;
        s.count = (int64_t)(raw.size() / rec);
        s.pixels.resize(raw.size());
        // Stored as per-channel planes, each plane column-major.
        for (int64_t i = 0; i < s.count; ++i) {
            const uint8_t* r = raw.data() + (size_t)i * rec;
            uint8_t* dst = s.pixels.data() + (size_t)i * rec;
            for (int y = 0; y < 96; ++y)
                for (int x = 0; x < 96; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        dst[((size_t)y * 96 + x) * 3 + ch] =
                            r[(size_t)ch * 9216 + (size_t)x * 96 + y];
        }
    };
    auto labels = [&](const std::string& file, SplitData& s) {
        auto raw = io::read_file(src / file);
        note_source(src_hash, src / file, raw);
        if ((int64_t)raw.size() != s.count)
            throw DataError(file + ": label count mismatch");
        s.labels.resize(raw.size());
        for (size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] < 1 || raw[i] > 10)
                throw DataError(file + ": labels must be 1..10");
            s.labels[i] = raw[i] - 1; // 1-based on disk
        }
    };
    SplitData train, test, unlabeled;
    train.name = "train";
    images("train_X.bin", train);
    labels("train_y.bin", train);
    test.name = "test";
    images("test_X.bin", test);
    labels("test_y.bin", test);
    unlabeled.name = "unlabeled";
    images("unlabeled_X.bin", unlabeled);
    return {train, test, unlabeled};
}

} // namespace loaders

// ---------------------------------------------------------------------------
// Ingestion and access.
// ---------------------------------------------------------------------------
struct IngestOptions {
    std::string expected_source_sha256; // refuse when the source differs
    // synthetic datasets only:
    uint64_t synth_seed = 7;
    int64_t synth_train = 5000;
    int64_t synth_test = 1000;
};

inline DatasetEntry ingest_dataset(const std::string& id, const std::string& source,
                                   const io::fs::path& data_root,
                                   const IngestOptions& opt = {}) {
    const KnownDataset& k = lookup_dataset(id);
    if (k.loader.empty())
        throw DataError("dataset '" + id +
                        "' has no ingestion loader here (ingestable: " +
                        known_ids_string(true) + ")");

    Sha256 src_hash;
    std::vector<SplitData> splits;
    std::vector<std::string> pretrain_splits = {"train"};
    if (k.loader == "synth") {
        src_hash.update("synthetic:" + id + ":" + std::to_string(opt.synth_seed) + ":" +
                        std::to_string(opt.synth_train) + ":" +
                        std::to_string(opt.synth_test));
        splits = loaders::load_synth(k, opt.synth_seed, opt.synth_train, opt.synth_test);
    } else if (k.loader == "cifar10") {
        splits = loaders::load_cifar10(k, source, src_hash);
    } else if (k.loader == "cifar100") {
        splits = loaders::load_cifar100(k, source, src_hash);
    } else if (k.loader == "idx") {
        splits = loaders::load_idx(k, source, src_hash);
    } else if (k.loader == "stl10") {
        splits = loaders::load_stl10(k, source, src_hash);
        pretrain_splits = {"unlabeled", "train"};
    } else {
        throw DataError("loader not wired: " + k.loader);
    }

    const std::string source_sha = src_hash.hex_digest();
    if (!opt.expected_source_sha256.empty() && source_sha != opt.expected_source_sha256)
        throw DataError("dataset '" + id + "': source checksum mismatch (got " +
                        source_sha + ", want " + opt.expected_source_sha256 + ")");

    DatasetEntry e;
    e.id = id;
    e.height = k.height;
    e.width = k.width;
    e.channels = k.channels;
    e.num_classes = k.num_classes;
    e.pretrain_splits = pretrain_splits;
    e.source_sha256 = source_sha;

    std::vector<const SplitData*> pre;
    for (const auto& s : splits)
        if (std::find(pretrain_splits.begin(), pretrain_splits.end(), s.name) !=
            pretrain_splits.end())
            pre.push_back(&s);
    e.stats = detail::compute_stats(pre);

    Sha256 content;
    for (const auto& s : splits) {
        auto blob = detail::encode_split(s);
        content.update(blob.data(), blob.size());
        io::write_file(detail::split_path(data_root, id, s.name), blob.data(),
                       blob.size());
        e.splits.push_back({s.name, s.count, s.labeled()});
    }
    e.content_sha256 = content.hex_digest();
    io::write_file(detail::entry_path(data_root, id), e.to_json().dump(2) + "\n");
    return e;
}

// Returns the registered entry; fails fast when the dataset is missing.
inline DatasetEntry load_entry(const std::string& id, const io::fs::path& data_root) {
    const auto p = detail::entry_path(data_root, id);
    if (!io::fs::exists(p))
        throw DataError("dataset '" + id + "' is not ingested under " +
                        data_root.string() + " (run the ingest command first)");
    return DatasetEntry::from_json(json::parse(io::read_text(p)));
}

// Opens all stored splits and verifies the content checksum before use.
inline std::map<std::string, SplitData> open_dataset(const DatasetEntry& e,
                                                     const io::fs::path& data_root) {
    Sha256 content;
    std::vector<std::pair<std::string, std::vector<uint8_t>>> blobs;
    for (const auto& s : e.splits) {
        auto raw = io::read_file(detail::split_path(data_root, e.id, s.name));
        content.update(raw.data(), raw.size());
        blobs.emplace_back(s.name, std::move(raw));
    }
    if (content.hex_digest() != e.content_sha256)
        throw DataError("dataset '" + e.id + "': content checksum mismatch, refusing");
    std::map<std::string, SplitData> out;
    for (auto& [name, raw] : blobs) out[name] = detail::decode_split(raw, name);
    return out;
}

// The label-free pretraining view: images pooled from the pretrain splits,
// decoded lazily (labels are not reachable through this type). The splits map
// must outlive the view.
class PretrainView {
public:
    PretrainView() = default;

    int64_t size() const { return (int64_t)index.size(); }

    Image image(int64_t i) const {
        const auto& [split, j] = index.at((size_t)i);
        return split->image(j);
    }

    static PretrainView over(const DatasetEntry& e,
                             const std::map<std::string, SplitData>& splits) {
        PretrainView v;
        for (const auto& name : e.pretrain_splits) {
            auto it = splits.find(name);
            if (it == splits.end())
                throw DataError("dataset '" + e.id + "': missing pretrain split " + name);
            for (int64_t i = 0; i < it->second.count; ++i)
                v.index.emplace_back(&it->second, i);
        }
        if (v.index.empty())
            throw DataError("dataset '" + e.id + "': empty pretrain view");
        return v;
    }

private:
    std::vector<std::pair<const SplitData*, int64_t>> index;
};

inline PretrainView make_pretrain_view(const DatasetEntry& e,
                                       const std::map<std::string, SplitData>& splits) {
    return PretrainView::over(e, splits);
}

} // namespace tribyol::data
