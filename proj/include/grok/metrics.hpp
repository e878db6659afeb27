// metrics.csv: one header row, one line per evaluation.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "grok/io.hpp"
#include "grok/optimizer.hpp"

namespace grok {

inline std::string metrics_header(const std::vector<std::string>& task_names = {}) {
    std::string h = "step,train_loss,test_loss,train_acc,test_acc,ffd_embed,fcr_embed,ffd_wl,fcr_wl,weight_l2";
    for (const auto& t : task_names) h += ",acc_task_" + t;
    return h;
}

inline std::string metrics_row(const ProgressPoint& pt) {
    std::string r = std::to_string(pt.step);
    for (double v : {pt.train_loss, pt.test_loss, pt.train_acc, pt.test_acc, pt.ffd_embed, pt.fcr_embed, pt.ffd_wl,
                     pt.fcr_wl, pt.weight_l2})
        r += "," + format_double(v);
    for (double v : pt.task_test_acc) r += "," + format_double(v);
    return r;
}

inline std::string metrics_csv(const ProgressTrace& trace, const std::vector<std::string>& task_names = {}) {
    std::string out = metrics_header(task_names) + "\n";
    for (const auto& pt : trace) out += metrics_row(pt) + "\n";
    return out;
}

// Streams rows to "<path>.partial" during training; finish() moves the
// completed file into place.
class MetricsWriter {
public:
    MetricsWriter(std::filesystem::path path, const std::vector<std::string>& task_names)
        : path_(std::move(path)), partial_(path_) {
        partial_ += ".partial";
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        out_.open(partial_, std::ios::binary | std::ios::trunc);
        if (!out_) throw IoError("cannot open " + partial_.string());
        out_ << metrics_header(task_names) << '\n';
    }

    void append(const ProgressPoint& pt) {
        out_ << metrics_row(pt) << '\n';
        out_.flush();
        if (!out_) throw IoError("write failed for " + partial_.string());
    }

    void finish() {
        out_.close();
        std::error_code ec;
        std::filesystem::rename(partial_, path_, ec);
        if (ec) throw IoError("cannot rename " + partial_.string() + ": " + ec.message());
    }

private:
    std::filesystem::path path_;
    std::filesystem::path partial_;
    std::ofstream out_;
};

inline ProgressTrace parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("metrics CSV is empty");
    ProgressTrace trace;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        if (cells.size() < 10) throw IoError("metrics row has " + std::to_string(cells.size()) + " columns");
        ProgressPoint pt;
        pt.step = std::stoll(cells[0]);
        double* fields[] = {&pt.train_loss, &pt.test_loss, &pt.train_acc, &pt.test_acc, &pt.ffd_embed,
                            &pt.fcr_embed,  &pt.ffd_wl,    &pt.fcr_wl,    &pt.weight_l2};
        for (std::size_t i = 0; i < 9; ++i) *fields[i] = std::stod(cells[i + 1]);
        for (std::size_t i = 10; i < cells.size(); ++i) pt.task_test_acc.push_back(std::stod(cells[i]));
        trace.push_back(pt);
    }
    return trace;
}

}  // namespace grok
