// The `grokking` command line: train, transfer, mixture, sweep, analyze.
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spawn.h>
#include <sys/wait.h>
#include <fcntl.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "grok/ablation.hpp"
#include "grok/artifacts.hpp"
#include "grok/dataset.hpp"
#include "grok/fourier.hpp"
#include "grok/measures.hpp"
#include "grok/model.hpp"
#include "grok/opspec.hpp"
#include "grok/optimizer.hpp"

extern char** environ;

namespace grok::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

// Bad user input that is detected after flag parsing.
class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Profile {
    std::uint32_t p;
    std::int64_t max_steps;
    std::int64_t eval_every;
};

inline const std::map<std::string, Profile>& profiles() {
    static const std::map<std::string, Profile> table = {
        {"paper", {97, 300000, 100}},
        {"ci", {23, 3000, 50}},
    };
    return table;
}

// Flags shared by every subcommand that trains a model.
struct TrainFlags {
    std::uint32_t p = 97;
    double frac = 0.3;
    std::uint64_t seed = 0;
    TrainConfig cfg;
    ModelDims dims;
    int n_op = 0;
    bool no_attn_scale = false;
    bool fan_in_init = false;
    std::string profile = "paper";
    std::string out;
    bool quiet = false;
};

inline void add_config_option(CLI::App* app) {
    app->add_option("--config", "flat key=value file mirroring the flags")->check(CLI::ExistingFile);
}

// Fills options from the --config file of a parsed subcommand. Options given
// on the command line keep their values.
inline void apply_config_file(CLI::App* app) {
    const CLI::Option* cfg = app->get_option("--config");
    if (cfg->count() == 0) return;
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_file(cfg->as<std::string>());
    } catch (const CLI::Error& e) {
        throw UsageError(std::string("cannot read config file: ") + e.what());
    }
    for (const auto& item : items) {
        if (!item.parents.empty()) throw UsageError("config file sections are not supported: " + item.fullname());
        std::string key = item.name;
        std::replace(key.begin(), key.end(), '_', '-');
        if (key == "config") throw UsageError("config files cannot include other config files");
        CLI::Option* opt = app->get_option_no_throw("--" + key);
        if (opt == nullptr) throw UsageError("unknown key '" + item.name + "' in config file");
        if (opt->count() > 0) continue;
        std::string value;
        for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
        opt->add_result(value);
        try {
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw UsageError("config key '" + item.name + "': " + e.what());
        }
    }
}

inline void add_train_flags(CLI::App* app, TrainFlags& f, bool with_p = true) {
    if (with_p) app->add_option("--p", f.p, "prime modulus");
    app->add_option("--frac", f.frac, "training fraction r in (0, 1)");
    app->add_option("--seed", f.seed, "seed for split and initialization");
    app->add_option("--steps", f.cfg.max_steps, "maximum optimizer steps");
    app->add_option("--eta", f.cfg.eta, "FFD threshold");
    app->add_option("--lr", f.cfg.lr, "learning rate");
    app->add_option("--weight-decay", f.cfg.weight_decay, "decoupled weight decay");
    app->add_option("--beta1", f.cfg.beta1, "Adam first-moment decay");
    app->add_option("--beta2", f.cfg.beta2, "Adam second-moment decay");
    app->add_option("--eval-every", f.cfg.eval_every, "steps between evaluations");
    app->add_option("--checkpoint-every", f.cfg.checkpoint_every, "steps between intermediate checkpoints (0: off)");
    app->add_option("--sustain", f.cfg.sustain_evals, "evaluations test accuracy must stay above threshold");
    app->add_flag("--early-stop", f.cfg.early_stop, "stop once grokking is confirmed");
    app->add_flag("--no-attn-scale", f.no_attn_scale, "drop the 1/sqrt(d_head) attention scale");
    app->add_flag("--fan-in-init", f.fan_in_init, "init std 1/sqrt(cols) instead of 1/sqrt(rows)");
    if (with_p) {
        app->add_option("--d-emb", f.dims.d_emb, "residual stream width");
        app->add_option("--d-mlp", f.dims.d_mlp, "MLP hidden width");
        app->add_option("--heads", f.dims.n_heads, "attention heads");
        app->add_option("--d-head", f.dims.d_head, "width per head");
        app->add_option("--n-op", f.n_op, "operation tokens to reserve (default: number of tasks)");
    }
    app->add_option("--profile", f.profile, "preset: paper or ci")->check(CLI::IsMember({"paper", "ci"}));
    app->add_option("--out", f.out, "run directory");
    app->add_flag("--quiet", f.quiet, "only print the final summary");
    add_config_option(app);
}

// Profile values fill in whatever neither the command line nor the config
// file set.
inline void apply_profile(const CLI::App* app, TrainFlags& f) {
    const Profile& pr = profiles().at(f.profile);
    if (app->get_option_no_throw("--p") && app->count("--p") == 0) f.p = pr.p;
    if (app->count("--steps") == 0) f.cfg.max_steps = pr.max_steps;
    if (app->count("--eval-every") == 0) f.cfg.eval_every = pr.eval_every;
}

inline OpExpr parse_task(const std::string& text) {
    try {
        return parse_op(text);
    } catch (const SyntaxError& e) {
        throw UsageError("cannot parse operation '" + text + "': " + e.what() + "\n  " + text + "\n  " +
                         std::string(e.offset(), ' ') + "^");
    } catch (const ExponentError& e) {
        throw UsageError("cannot parse operation '" + text + "': " + e.what());
    }
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// File-system friendly form of an operation string.
inline std::string slug(const std::string& op) {
    std::string out;
    for (char c : op) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out += c;
            continue;
        }
        switch (c) {
            case '+': out += "_plus_"; break;
            case '-': out += "_minus_"; break;
            case '*': out += "_times_"; break;
            case '^': out += "_pow_"; break;
            case '(': out += "L"; break;
            case ')': out += "R"; break;
            default: break;
        }
    }
    return out;
}

inline std::string fraction_tag(double r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", r);
    return buf;
}

struct RunSpec {
    std::string kind;
    std::vector<OpExpr> tasks;
    double frac = 0.3;
    ModelDims dims;
    TrainConfig cfg;
    FreezeSpec freeze;
    std::optional<ModelParams> donor;
    std::string donor_path;
    std::uint64_t donor_seed = 0;
    std::string donor_tasks;
    fs::path out;
    bool quiet = false;
};

inline void write_run_plots(const fs::path& dir, const ProgressTrace& trace, const ModelParams& params) {
    const FourierBasis basis = make_basis(params.dims.p);
    write_plot(dir / "plots" / "accuracy.svg", &render_accuracy_svg, trace, "train / test accuracy");
    write_plot(dir / "plots" / "measures.svg", &render_measures_svg, trace, "FFD / FCR");
    write_plot(dir / "plots" / "spectrum_embedding.svg", &render_spectrum_svg, embedding_spectrum(params, basis),
               "embedding spectrum");
    write_plot(dir / "plots" / "spectrum_wl.svg", &render_spectrum_svg, neuron_logit_spectrum(params, basis),
               "neuron-logit map spectrum");
}

inline void print_summary(std::ostream& os, const RunSpec& spec, const GrokReport& r) {
    auto step = [](const std::optional<std::int64_t>& s) { return s ? std::to_string(*s) : std::string("-"); };
    os << "run " << spec.out.string() << ": memorized@" << step(r.memorization_step) << " grokked@"
       << step(r.grok_step) << " best_test_acc=" << format_double(r.best_test_acc) << "\n";
    for (std::size_t i = 0; i < r.task_grok_steps.size(); ++i)
        os << "  task " << render_op(spec.tasks[i]) << ": grokked@" << step(r.task_grok_steps[i])
           << " best_test_acc=" << format_double(r.task_best_test_acc[i]) << "\n";
    os << (r.co_grokked() ? "verdict: grokked\n" : "verdict: not grokked\n");
}

inline int execute_run(const RunSpec& spec, std::ostream& os) {
    spec.dims.validate();
    spec.cfg.validate();
    const auto p = static_cast<std::uint32_t>(spec.dims.p);
    const DatasetSplit data = build_mixture(spec.tasks, p, spec.frac, spec.cfg.seed);

    RunManifest manifest;
    manifest.kind = spec.kind;
    for (const auto& t : spec.tasks) manifest.tasks.push_back(render_op(t));
    manifest.fraction = spec.frac;
    manifest.dims = spec.dims;
    manifest.config = spec.cfg;
    manifest.freeze = to_string(spec.freeze.mode);
    manifest.donor_checkpoint = spec.donor_path;
    manifest.donor_seed = spec.donor_seed;
    manifest.donor_tasks = spec.donor_tasks;
    fs::create_directories(spec.out);
    save_manifest(manifest, spec.out / "manifest.json");

    ModelParams init = apply_freeze(spec.dims, spec.freeze, spec.donor ? &*spec.donor : nullptr, spec.cfg.seed);

    std::vector<std::string> task_cols;
    if (spec.tasks.size() > 1) task_cols = manifest.tasks;
    MetricsWriter metrics(spec.out / "metrics.csv", task_cols);
    TrainHooks hooks;
    hooks.on_eval = [&](const ProgressPoint& pt) {
        metrics.append(pt);
        if (!spec.quiet && pt.step % (spec.cfg.eval_every * 10) == 0)
            os << "step " << pt.step << " train_loss=" << format_double(pt.train_loss)
               << " train_acc=" << pt.train_acc << " test_acc=" << pt.test_acc << " ffd_embed=" << pt.ffd_embed
               << " fcr_embed=" << pt.fcr_embed << std::endl;
    };
    hooks.on_checkpoint = [&](std::int64_t step, const ModelParams& params) {
        save_checkpoint(params, spec.out / ("ckpt_step" + std::to_string(step) + ".grok"));
    };

    TrainResult res;
    try {
        res = train(data, std::move(init), spec.cfg, hooks);
    } catch (const Diverged& e) {
        metrics.finish();
        os << "error: " << e.what() << "\n";
        return kRuntime;
    }
    metrics.finish();
    save_checkpoint(res.params, spec.out / "ckpt_final.grok");
    write_run_plots(spec.out, res.trace, res.params);
    manifest.report = res.report;
    save_manifest(manifest, spec.out / "manifest.json");
    print_summary(os, spec, res.report);
    return kOk;
}

inline RunSpec spec_from_flags(const TrainFlags& f, std::string kind, std::vector<OpExpr> tasks) {
    RunSpec s;
    s.kind = std::move(kind);
    s.tasks = std::move(tasks);
    s.frac = f.frac;
    s.cfg = f.cfg;
    s.cfg.seed = f.seed;
    s.dims = f.dims;
    s.dims.p = static_cast<int>(f.p);
    s.dims.n_op = std::max<int>(f.n_op, static_cast<int>(s.tasks.size()));
    s.dims.scale_attention = !f.no_attn_scale;
    s.dims.fan_in_init = f.fan_in_init;
    s.quiet = f.quiet;
    if (!(f.frac > 0.0 && f.frac < 1.0)) throw UsageError("--frac must lie in (0, 1)");
    try {
        check_modulus(f.p);
        s.dims.validate();
        s.cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return s;
}

inline fs::path default_out(const std::string& kind, const std::string& label, const RunSpec& s) {
    return fs::path("runs") / (kind + "-" + slug(label) + "-p" + std::to_string(s.dims.p) + "-r" +
                               fraction_tag(s.frac) + "-s" + std::to_string(s.cfg.seed));
}

// ---------------------------------------------------------------- sweep

struct SweepJob {
    std::string op;
    std::uint32_t p;
    double frac;
    double eta;
    std::uint64_t seed;
    fs::path dir;
    int status = -1;
    std::optional<GrokReport> report;
};

inline std::string grid_cell(const std::vector<const SweepJob*>& jobs) {
    int grokked = 0;
    double best = 0.0;
    for (const SweepJob* j : jobs) {
        if (j->status != 0 || !j->report) return "FAILED";
        if (j->report->grokked()) ++grokked;
        best += j->report->best_test_acc;
    }
    if (2 * grokked > static_cast<int>(jobs.size())) return "✓";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * best / static_cast<double>(jobs.size()));
    return buf;
}

inline pid_t spawn_child(const std::string& exe, const std::vector<std::string>& args, const fs::path& log) {
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(exe.c_str()));
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, 1, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&actions, 1, 2);
    pid_t pid = -1;
    const int rc = posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) throw IoError("cannot spawn " + exe + ": " + std::strerror(rc));
    return pid;
}

struct SweepFlags {
    std::string ops;
    std::string fracs = "0.3";
    std::string ps = "97";
    std::string seeds = "0,1,2";
    std::string etas = "0.5";
    int jobs = 1;
    std::string out = "runs/sweep";
    std::string exe;
    std::string profile = "paper";
    std::int64_t steps = 0;
    std::int64_t eval_every = 0;
    bool early_stop = false;
};

inline int cmd_sweep(const SweepFlags& f, std::ostream& os) {
    const auto ops = split_list(f.ops);
    if (ops.empty()) throw UsageError("--ops needs at least one operation");
    for (const auto& op : ops) parse_task(op);
    std::vector<double> fracs, etas;
    std::vector<std::uint32_t> ps;
    std::vector<std::uint64_t> seeds;
    try {
        for (const auto& s : split_list(f.fracs)) fracs.push_back(std::stod(s));
        for (const auto& s : split_list(f.etas)) etas.push_back(std::stod(s));
        for (const auto& s : split_list(f.ps)) ps.push_back(static_cast<std::uint32_t>(std::stoul(s)));
        for (const auto& s : split_list(f.seeds)) seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
        throw UsageError("sweep lists must be comma-separated numbers");
    }
    if (fracs.empty() || etas.empty() || ps.empty() || seeds.empty()) throw UsageError("sweep lists must be non-empty");
    if (f.jobs < 1) throw UsageError("--jobs must be >= 1");
    for (auto p : ps) {
        try {
            check_modulus(p);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    const std::string exe = f.exe.empty() ? fs::read_symlink("/proc/self/exe").string() : f.exe;
    const fs::path root(f.out);

    std::vector<SweepJob> jobs;
    for (const auto& op : ops)
        for (auto p : ps)
            for (double eta : etas)
                for (double r : fracs)
                    for (auto seed : seeds) {
                        SweepJob j{op, p, r, eta, seed, {}, -1, std::nullopt};
                        j.dir = root / slug(op) /
                                ("p" + std::to_string(p) + "_r" + fraction_tag(r) + "_eta" + fraction_tag(eta) + "_s" +
                                 std::to_string(seed));
                        jobs.push_back(std::move(j));
                    }

    std::map<pid_t, std::size_t> running;
    std::size_t next = 0;
    auto reap_one = [&]() {
        int status = 0;
        const pid_t pid = waitpid(-1, &status, 0);
        if (pid < 0) throw IoError("waitpid failed");
        auto it = running.find(pid);
        if (it == running.end()) return;
        SweepJob& j = jobs[it->second];
        j.status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
        if (j.status == 0) {
            try {
                j.report = load_manifest(j.dir / "manifest.json").report;
            } catch (const std::exception&) {
                j.status = kRuntime;
            }
        }
        os << (j.status == 0 ? "done   " : "FAILED ") << j.dir.string() << std::endl;
        running.erase(it);
    };
    while (next < jobs.size() || !running.empty()) {
        while (next < jobs.size() && running.size() < static_cast<std::size_t>(f.jobs)) {
            SweepJob& j = jobs[next];
            fs::create_directories(j.dir);
            std::vector<std::string> args = {"train",       "--op",   j.op,
                                             "--p",         std::to_string(j.p),
                                             "--frac",      format_double(j.frac),
                                             "--eta",       format_double(j.eta),
                                             "--seed",      std::to_string(j.seed),
                                             "--profile",   f.profile,
                                             "--out",       j.dir.string(),
                                             "--quiet"};
            if (f.steps > 0) args.insert(args.end(), {"--steps", std::to_string(f.steps)});
            if (f.eval_every > 0) args.insert(args.end(), {"--eval-every", std::to_string(f.eval_every)});
            if (f.early_stop) args.push_back("--early-stop");
            running[spawn_child(exe, args, j.dir / "log.txt")] = next;
            ++next;
        }
        reap_one();
    }

    std::string runs_csv = "task,p,frac,eta,seed,status,grokked,grok_step,best_test_acc,final_test_acc,run_dir\n";
    for (const auto& j : jobs) {
        runs_csv += "\"" + j.op + "\"," + std::to_string(j.p) + "," + format_double(j.frac) + "," +
                    format_double(j.eta) + "," + std::to_string(j.seed) + "," + (j.status == 0 ? "ok" : "FAILED");
        if (j.report) {
            runs_csv += std::string(",") + (j.report->grokked() ? "1" : "0") + "," +
                        (j.report->grok_step ? std::to_string(*j.report->grok_step) : "") + "," +
                        format_double(j.report->best_test_acc) + "," + format_double(j.report->final_test_acc);
        } else {
            runs_csv += ",,,,";
        }
        runs_csv += "," + j.dir.string() + "\n";
    }
    write_file_atomic(root / "runs.csv", runs_csv);

    std::string grid = "task,p,eta";
    for (double r : fracs) grid += "," + fraction_tag(r);
    grid += "\n";
    bool any_failed = false;
    for (const auto& op : ops)
        for (auto p : ps)
            for (double eta : etas) {
                grid += "\"" + op + "\"," + std::to_string(p) + "," + fraction_tag(eta);
                for (double r : fracs) {
                    std::vector<const SweepJob*> cell;
                    for (const auto& j : jobs)
                        if (j.op == op && j.p == p && j.eta == eta && j.frac == r) cell.push_back(&j);
                    const std::string c = grid_cell(cell);
                    any_failed = any_failed || c == "FAILED";
                    grid += "," + c;
                }
                grid += "\n";
            }
    write_file_atomic(root / "grid.csv", grid);
    os << grid;
    if (any_failed) {
        os << "error: some sweep runs failed; see runs.csv\n";
        return kRuntime;
    }
    return kOk;
}

// -------------------------------------------------------------- analyze

struct AnalyzeFlags {
    std::string ckpt;
    std::size_t op_index = 0;
    double theta_key = 0.5;
    double eta = 0.5;
    std::string key_source = "wl";
    std::string split = "train";
    std::string out;
};

inline std::string spectrum_csv(const FourierSpectrum& s) {
    std::string out = "k,cos_norm,sin_norm\n";
    for (int k = 0; k < s.n_freq(); ++k)
        out += std::to_string(k + 1) + "," + format_double(s.cos_norm[k]) + "," + format_double(s.sin_norm[k]) + "\n";
    return out;
}

inline std::string heatmap_csv(const Matrix& grid) {
    std::string out = "basis_row";
    for (Eigen::Index c = 0; c < grid.cols(); ++c) out += "," + FourierBasis::row_label(static_cast<int>(c));
    out += "\n";
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
        out += FourierBasis::row_label(static_cast<int>(r));
        for (Eigen::Index c = 0; c < grid.cols(); ++c) out += "," + format_double(grid(r, c));
        out += "\n";
    }
    return out;
}

inline int cmd_analyze(const AnalyzeFlags& f, std::ostream& os) {
    const fs::path ckpt(f.ckpt);
    const ModelParams m = load_checkpoint(ckpt);
    const int p = m.dims.p;
    const FourierBasis basis = make_basis(p);
    const fs::path out = f.out.empty() ? ckpt.parent_path() / "analysis" : fs::path(f.out);
    if (f.op_index >= static_cast<std::size_t>(m.dims.n_op))
        throw UsageError("--op-index " + std::to_string(f.op_index) + " exceeds the model's operation tokens");
    const auto op_token = static_cast<std::uint32_t>(p + static_cast<int>(f.op_index));

    const FourierSpectrum se = embedding_spectrum(m, basis);
    const FourierSpectrum sl = neuron_logit_spectrum(m, basis);
    write_file_atomic(out / "spectrum_embedding.csv", spectrum_csv(se));
    write_file_atomic(out / "spectrum_wl.csv", spectrum_csv(sl));
    const LogitHeatmap heat = logit_heatmap(m, op_token, basis);
    write_file_atomic(out / "heatmap.csv", heatmap_csv(heat.grid));
    write_plot(out / "plots" / "spectrum_embedding.svg", &render_spectrum_svg, se, "embedding spectrum");
    write_plot(out / "plots" / "spectrum_wl.svg", &render_spectrum_svg, sl, "neuron-logit map spectrum");
    write_plot(out / "plots" / "heatmap.svg", &render_heatmap_svg, heat.grid, "logit Fourier heatmap");

    nlohmann::json summary;
    summary["checkpoint"] = ckpt.string();
    summary["eta"] = f.eta;
    summary["theta_key"] = f.theta_key;
    summary["key_source"] = f.key_source;
    summary["ffd_embedding"] = ffd(se, f.eta);
    summary["fcr_embedding"] = fcr(se);
    summary["ffd_wl"] = ffd(sl, f.eta);
    summary["fcr_wl"] = fcr(sl);

    std::set<int> keys;
    try {
        keys = key_frequencies(f.key_source == "embedding" ? se : sl, f.theta_key);
    } catch (const DegenerateSpectrum& e) {
        os << "note: " << e.what() << "; no key frequencies\n";
    }
    summary["key_frequencies"] = keys;

    const fs::path manifest_path = ckpt.parent_path() / "manifest.json";
    if (!fs::exists(manifest_path)) {
        os << "note: no manifest.json next to the checkpoint; skipping data-dependent analysis\n";
    } else if (keys.empty()) {
        os << "note: empty key set; skipping decomposition\n";
    } else {
        const RunManifest man = load_manifest(manifest_path);
        if (f.op_index >= man.tasks.size())
            throw UsageError("--op-index " + std::to_string(f.op_index) + " exceeds the run's task list");
        std::vector<OpExpr> tasks;
        for (const auto& t : man.tasks) tasks.push_back(parse_op(t));
        const DatasetSplit data = build_mixture(tasks, static_cast<std::uint32_t>(p), man.fraction, man.config.seed);
        std::vector<Example> rows;
        for (const auto& ex : (f.split == "test" ? data.test : data.train))
            if (ex.op_token == op_token) rows.push_back(ex);
        const FrequencyAnalyzer fa(m, rows, basis);
        summary["task"] = man.tasks[f.op_index];
        summary["split"] = f.split;

        const DecompositionLosses dl = fa.decomposition_losses(keys);
        std::string dcsv = "component,key,nonkey,residual,loss\n";
        for (const auto& row : dl.rows())
            dcsv += std::string(row.name) + "," + (row.key ? "1" : "0") + "," + (row.nonkey ? "1" : "0") + "," +
                    (row.residual ? "1" : "0") + "," + format_double(row.loss) + "\n";
        write_file_atomic(out / "decomposition.csv", dcsv);

        const double base = fa.base_loss();
        std::string acsv = "k,is_key,ablated_loss,delta_loss\n";
        std::set<int> dependent;
        for (int k = 1; k <= fa.n_freq(); ++k) {
            const double l = fa.ablated_loss(k);
            acsv += std::to_string(k) + "," + (keys.count(k) ? "1" : "0") + "," + format_double(l) + "," +
                    format_double(l - base) + "\n";
            if (!keys.count(k) && l - base > kDependentThreshold) dependent.insert(k);
        }
        write_file_atomic(out / "ablation.csv", acsv);
        summary["base_loss"] = base;
        summary["restricted_loss"] = dl.restricted;
        summary["dependent_frequencies"] = dependent;
    }
    write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
    os << summary.dump(2) << "\n";
    return kOk;
}

// ----------------------------------------------------------------- main

inline int run(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Grokking experiments on modular arithmetic with a one-layer Transformer", "grokking"};
    app.require_subcommand(1);

    TrainFlags train_f, transfer_f, mixture_f;
    std::string op, transfer_op, mixture_ops, donor, freeze = "none", transfer_freeze;

    auto* train_cmd = app.add_subcommand("train", "train on a single operation");
    add_train_flags(train_cmd, train_f);
    train_cmd->add_option("--op", op, "operation, e.g. \"a+b\"")->required();
    train_cmd->add_option("--freeze", freeze, "none or random-embedding")
        ->check(CLI::IsMember({"none", "random-embedding"}));

    auto* transfer_cmd = app.add_subcommand("transfer", "train with modules copied from a donor and frozen");
    add_train_flags(transfer_cmd, transfer_f, false);
    transfer_cmd->add_option("--donor", donor, "donor checkpoint")->required()->check(CLI::ExistingFile);
    transfer_cmd->add_option("--freeze", transfer_freeze, "embedding or body")
        ->required()
        ->check(CLI::IsMember({"embedding", "body"}));
    transfer_cmd->add_option("--op", transfer_op, "downstream operation")->required();
    transfer_cmd->add_option("--p", transfer_f.p, "must equal the donor modulus");

    auto* mixture_cmd = app.add_subcommand("mixture", "train jointly on several operations");
    add_train_flags(mixture_cmd, mixture_f);
    mixture_cmd->add_option("--ops", mixture_ops, "comma-separated operations")->required();

    SweepFlags sweep_f;
    auto* sweep_cmd = app.add_subcommand("sweep", "grid of train runs in worker processes");
    sweep_cmd->add_option("--ops", sweep_f.ops, "comma-separated operations")->required();
    sweep_cmd->add_option("--fracs", sweep_f.fracs, "comma-separated training fractions");
    sweep_cmd->add_option("--ps", sweep_f.ps, "comma-separated moduli");
    sweep_cmd->add_option("--seeds", sweep_f.seeds, "comma-separated seeds");
    sweep_cmd->add_option("--etas", sweep_f.etas, "comma-separated FFD thresholds");
    sweep_cmd->add_option("--jobs", sweep_f.jobs, "concurrent worker processes");
    sweep_cmd->add_option("--out", sweep_f.out, "sweep directory");
    sweep_cmd->add_option("--steps", sweep_f.steps, "maximum optimizer steps per run");
    sweep_cmd->add_option("--eval-every", sweep_f.eval_every, "steps between evaluations per run");
    sweep_cmd->add_option("--profile", sweep_f.profile, "preset passed to every run")->check(CLI::IsMember({"paper", "ci"}));
    sweep_cmd->add_flag("--early-stop", sweep_f.early_stop, "stop each run once grokking is confirmed");
    sweep_cmd->add_option("--exe", sweep_f.exe, "worker executable (default: this program)");
    add_config_option(sweep_cmd);

    AnalyzeFlags analyze_f;
    auto* analyze_cmd = app.add_subcommand("analyze", "spectra, measures and ablations of a checkpoint");
    analyze_cmd->add_option("--ckpt", analyze_f.ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--op-index", analyze_f.op_index, "task index for mixture checkpoints");
    analyze_cmd->add_option("--theta-key", analyze_f.theta_key, "key-frequency threshold");
    analyze_cmd->add_option("--eta", analyze_f.eta, "FFD threshold");
    analyze_cmd->add_option("--key-source", analyze_f.key_source, "spectrum used for key frequencies")
        ->check(CLI::IsMember({"wl", "embedding"}));
    analyze_cmd->add_option("--split", analyze_f.split, "data for losses")->check(CLI::IsMember({"train", "test"}));
    analyze_cmd->add_option("--out", analyze_f.out, "analysis directory");
    add_config_option(analyze_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, os, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        for (CLI::App* sub : app.get_subcommands()) apply_config_file(sub);
        if (train_cmd->parsed()) {
            apply_profile(train_cmd, train_f);
            RunSpec s = spec_from_flags(train_f, "train", {parse_task(op)});
            if (freeze == "random-embedding") s.freeze.mode = FreezeMode::RandomEmbeddingFrozen;
            s.out = train_f.out.empty() ? default_out("train", op, s) : fs::path(train_f.out);
            return execute_run(s, os);
        }
        if (mixture_cmd->parsed()) {
            apply_profile(mixture_cmd, mixture_f);
            std::vector<OpExpr> tasks;
            for (const auto& t : split_list(mixture_ops)) tasks.push_back(parse_task(t));
            if (tasks.empty()) throw UsageError("--ops needs at least one operation");
            RunSpec s = spec_from_flags(mixture_f, "mixture", tasks);
            s.out = mixture_f.out.empty() ? default_out("mixture", mixture_ops, s) : fs::path(mixture_f.out);
            return execute_run(s, os);
        }
        if (transfer_cmd->parsed()) {
            const fs::path donor_path(donor);
            const fs::path donor_manifest = donor_path.parent_path() / "manifest.json";
            if (!fs::exists(donor_manifest))
                throw UsageError("donor manifest " + donor_manifest.string() + " not found");
            const RunManifest dm = load_manifest(donor_manifest);
            apply_profile(transfer_cmd, transfer_f);
            if (transfer_cmd->count("--p") == 0) transfer_f.p = static_cast<std::uint32_t>(dm.dims.p);
            if (static_cast<int>(transfer_f.p) != dm.dims.p)
                throw DimMismatch("donor modulus p=" + std::to_string(dm.dims.p) + " differs from requested p=" +
                                  std::to_string(transfer_f.p));
            if (transfer_cmd->count("--seed") == 0) transfer_f.seed = dm.config.seed;
            transfer_f.dims = dm.dims;
            transfer_f.n_op = dm.dims.n_op;
            transfer_f.no_attn_scale = !dm.dims.scale_attention;
            transfer_f.fan_in_init = dm.dims.fan_in_init;
            RunSpec s = spec_from_flags(transfer_f, "transfer", {parse_task(transfer_op)});
            s.freeze.mode = freeze_mode_from_string(transfer_freeze);
            s.donor = load_checkpoint(donor_path, dm.dims);
            s.donor_path = donor_path.string();
            s.donor_seed = dm.config.seed;
            for (const auto& t : dm.tasks) s.donor_tasks += (s.donor_tasks.empty() ? "" : ",") + t;
            s.out = transfer_f.out.empty()
                        ? default_out("transfer-" + transfer_freeze + "-from-" + slug(s.donor_tasks), transfer_op, s)
                        : fs::path(transfer_f.out);
            return execute_run(s, os);
        }
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_f, os);
        if (analyze_cmd->parsed()) return cmd_analyze(analyze_f, os);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DuplicateTask& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}

}  // namespace grok::cli
