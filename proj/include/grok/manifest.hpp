// manifest.json: everything needed to re-run an experiment.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grok/checkpoint.hpp"
#include "grok/io.hpp"
#include "grok/optimizer.hpp"

namespace grok {

inline constexpr const char* kCodeVersion = "grokking-cpp 1.0.0";

struct RunManifest {
    std::string kind = "train";  // train | transfer | mixture
    std::vector<std::string> tasks;
    double fraction = 0.3;
    ModelDims dims;
    TrainConfig config;
    std::string freeze = "none";
    std::string donor_checkpoint;
    std::uint64_t donor_seed = 0;
    std::string donor_tasks;
    std::string code_version = kCodeVersion;
    std::optional<GrokReport> report;
};

inline nlohmann::json config_to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"weight_decay", c.weight_decay},
            {"max_steps", c.max_steps},
            {"eval_every", c.eval_every},
            {"grok_threshold", c.grok_threshold},
            {"memorization_threshold", c.memorization_threshold},
            {"sustain_evals", c.sustain_evals},
            {"eta", c.eta},
            {"early_stop", c.early_stop},
            {"checkpoint_every", c.checkpoint_every},
            {"seed", c.seed}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.max_steps = j.at("max_steps").get<std::int64_t>();
    c.eval_every = j.at("eval_every").get<std::int64_t>();
    c.grok_threshold = j.at("grok_threshold").get<double>();
    c.memorization_threshold = j.at("memorization_threshold").get<double>();
    c.sustain_evals = j.at("sustain_evals").get<int>();
    c.eta = j.at("eta").get<double>();
    c.early_stop = j.at("early_stop").get<bool>();
    c.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

namespace detail {

inline nlohmann::json opt_step(const std::optional<std::int64_t>& s) {
    return s ? nlohmann::json(*s) : nlohmann::json(nullptr);
}

inline std::optional<std::int64_t> opt_step_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<std::int64_t>();
}

}  // namespace detail

inline nlohmann::json report_to_json(const GrokReport& r) {
    nlohmann::json j = {{"grokked", r.grokked()},
                        {"co_grokked", r.co_grokked()},
                        {"memorization_step", detail::opt_step(r.memorization_step)},
                        {"grok_step", detail::opt_step(r.grok_step)},
                        {"final_train_acc", r.final_train_acc},
                        {"final_test_acc", r.final_test_acc},
                        {"best_test_acc", r.best_test_acc}};
    j["task_grok_steps"] = nlohmann::json::array();
    for (const auto& s : r.task_grok_steps) j["task_grok_steps"].push_back(detail::opt_step(s));
    j["task_best_test_acc"] = r.task_best_test_acc;
    return j;
}

inline GrokReport report_from_json(const nlohmann::json& j) {
    GrokReport r;
    r.memorization_step = detail::opt_step_from(j.at("memorization_step"));
    r.grok_step = detail::opt_step_from(j.at("grok_step"));
    r.final_train_acc = j.at("final_train_acc").get<double>();
    r.final_test_acc = j.at("final_test_acc").get<double>();
    r.best_test_acc = j.at("best_test_acc").get<double>();
    for (const auto& s : j.at("task_grok_steps")) r.task_grok_steps.push_back(detail::opt_step_from(s));
    r.task_best_test_acc = j.at("task_best_test_acc").get<std::vector<double>>();
    return r;
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    nlohmann::json j = {{"kind", m.kind},
                        {"tasks", m.tasks},
                        {"p", m.dims.p},
                        {"fraction", m.fraction},
                        {"seed", m.config.seed},
                        {"dims", detail::dims_to_json(m.dims)},
                        {"freeze", m.freeze},
                        {"donor_checkpoint", m.donor_checkpoint.empty() ? nlohmann::json(nullptr)
                                                                        : nlohmann::json(m.donor_checkpoint)},
                        {"train_config", config_to_json(m.config)},
                        {"code_version", m.code_version}};
    if (!m.donor_checkpoint.empty()) {
        j["donor_seed"] = m.donor_seed;
        j["donor_tasks"] = m.donor_tasks;
    }
    j["report"] = m.report ? report_to_json(*m.report) : nlohmann::json(nullptr);
    return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    m.kind = j.value("kind", "train");
    m.tasks = j.at("tasks").get<std::vector<std::string>>();
    m.fraction = j.at("fraction").get<double>();
    m.dims = detail::dims_from_json(j.at("dims"));
    m.config = config_from_json(j.at("train_config"));
    m.freeze = j.value("freeze", "none");
    if (j.contains("donor_checkpoint") && !j["donor_checkpoint"].is_null()) {
        m.donor_checkpoint = j["donor_checkpoint"].get<std::string>();
        m.donor_seed = j.value("donor_seed", std::uint64_t{0});
        m.donor_tasks = j.value("donor_tasks", "");
    }
    m.code_version = j.value("code_version", "");
    if (j.contains("report") && !j["report"].is_null()) m.report = report_from_json(j["report"]);
    return m;
}

inline void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
    write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
    try {
        return manifest_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("invalid manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace grok
