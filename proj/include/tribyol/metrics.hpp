#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "tribyol/error.hpp"
#include "tribyol/io.hpp"

namespace tribyol {

// One training step's diagnostics. Serialized as one JSON object per line.
struct StepRecord {
    int64_t iteration = 0;
    int64_t epoch = 0;
    double loss = 0.0;
    double embed_std = 0.0; // mean per-dimension std of normalized Z1
    int target_updated = 0; // 2, 3 or 0 (no EMA target in this mode)
    double wall_ms = 0.0;
};

class MetricsWriter {
public:
    MetricsWriter() = default;

    MetricsWriter(const io::fs::path& path, const std::string& config_hash,
                  uint64_t seed) {
        if (path.has_parent_path()) io::fs::create_directories(path.parent_path());
        out.open(path, std::ios::trunc);
        if (!out) throw DataError("cannot open metrics log " + path.string());
        nlohmann::json meta{{"type", "meta"}, {"config_hash", config_hash}, {"seed", seed}};
        out << meta.dump() << "\n";
        out.flush();
    }

    void step(const StepRecord& r) {
        if (!out.is_open()) return;
        nlohmann::json j{{"type", "step"},          {"iteration", r.iteration},
                         {"epoch", r.epoch},        {"loss", r.loss},
                         {"embed_std", r.embed_std}, {"target_updated", r.target_updated},
                         {"wall_ms", r.wall_ms}};
        out << j.dump() << "\n";
    }

    void event(const nlohmann::json& j) {
        if (!out.is_open()) return;
        out << j.dump() << "\n";
        out.flush();
    }

    void flush() {
        if (out.is_open()) out.flush();
    }

private:
    std::ofstream out;
};

} // namespace tribyol
