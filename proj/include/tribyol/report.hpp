#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tribyol/eval.hpp"
#include "tribyol/io.hpp"

// Aggregates EvalReport JSON files from a directory into CSV: one long-form
// file with every run, plus one pivoted grid per protocol (rows = method/mode,
// columns = dataset / label fraction / pretrain batch size) in the shape the
// downstream-task tables are usually read.

namespace tribyol {

inline std::vector<EvalReport> collect_reports(const io::fs::path& dir) {
    std::vector<EvalReport> out;
    if (!io::fs::exists(dir)) throw DataError("no such directory: " + dir.string());
    std::vector<io::fs::path> files;
    for (const auto& e : io::fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto name = e.path().filename().string();
        if (name.rfind("eval_report", 0) == 0 && e.path().extension() == ".json")
            files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
        out.push_back(EvalReport::from_json(json::parse(io::read_text(f))));
    return out;
}

inline std::string long_form_csv(const std::vector<EvalReport>& reports) {
    std::ostringstream os;
    os << "protocol,mode,pretrain_dataset,eval_dataset,label_fraction,"
          "pretrain_batch_size,seed,selected_accuracy,config_hash,"
          "pretrain_config_hash\n";
    for (const auto& r : reports) {
        os << r.protocol << ',' << r.mode << ',' << r.pretrain_dataset << ','
           << r.eval_dataset << ',' << r.label_fraction << ',' << r.pretrain_batch_size
           << ',' << r.seed << ',' << r.selected << ',' << r.config_hash << ','
           << r.pretrain_config_hash << "\n";
    }
    return os.str();
}

// Pivot: one row per mode; one column per evaluation context. Runs landing in
// the same cell (seeds) are averaged.
inline std::string pivot_csv(const std::vector<EvalReport>& reports,
                             const std::string& protocol) {
    auto column_key = [&](const EvalReport& r) {
        std::ostringstream k;
        k << r.eval_dataset;
        if (protocol == "finetune")
            k << "@" << r.label_fraction;
        else if (r.pretrain_batch_size > 0)
            k << "@b" << r.pretrain_batch_size;
        return k.str();
    };

    std::set<std::string> cols;
    std::map<std::string, std::map<std::string, std::pair<double, int>>> grid;
    for (const auto& r : reports) {
        if (r.protocol != protocol) continue;
        const std::string col = column_key(r);
        cols.insert(col);
        auto& cell = grid[r.mode][col];
        cell.first += r.selected;
        cell.second += 1;
    }
    std::ostringstream os;
    os << "mode";
    for (const auto& c : cols) os << ',' << c;
    os << "\n";
    for (const auto& [mode, row] : grid) {
        os << mode;
        for (const auto& c : cols) {
            auto it = row.find(c);
            os << ',';
            if (it != row.end() && it->second.second > 0)
                os << it->second.first / it->second.second;
        }
        os << "\n";
    }
    return os.str();
}

// Writes report.csv plus table_<protocol>.csv files; returns the file list.
inline std::vector<io::fs::path> write_report(const io::fs::path& in_dir,
                                              const io::fs::path& out_dir) {
    auto reports = collect_reports(in_dir);
    if (reports.empty())
        throw DataError("no eval_report*.json files under " + in_dir.string());
    std::vector<io::fs::path> written;
    io::fs::create_directories(out_dir);
    const auto long_path = out_dir / "report.csv";
    io::write_file(long_path, long_form_csv(reports));
    written.push_back(long_path);
    std::set<std::string> protocols;
    for (const auto& r : reports) protocols.insert(r.protocol);
    for (const auto& p : protocols) {
        const auto path = out_dir / ("table_" + p + ".csv");
        io::write_file(path, pivot_csv(reports, p));
        written.push_back(path);
    }
    return written;
}

} // namespace tribyol
