#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advkit/attacks.hpp"
#include "advkit/config.hpp"
#include "advkit/dataset.hpp"
#include "advkit/defenses.hpp"
#include "advkit/metrics.hpp"
#include "advkit/models.hpp"
#include "advkit/report.hpp"
#include "advkit/serialize.hpp"

namespace advkit {

struct PipelineResult {
    AttackReport attack;
    DefenseReport defense;
    double clean_accuracy_raw = 0.0;
    std::size_t candidate_count = 0;
    std::map<std::string, std::string> artifacts;            // name -> path
    std::vector<std::pair<std::string, double>> stage_seconds;
    std::string config_hash;
};

namespace detail {

/// Guards an output directory against concurrent runs for its lifetime.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir) : lock_(dir / ".lock") {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (std::filesystem::exists(lock_))
            throw ConfigError("output directory '" + dir.string() +
                              "' is locked by another run (stale? remove " + lock_.string() + ")");
        std::ofstream out(lock_);
        out << "pid " << ::getpid() << "\n";
    }

    ~DirLock() {
        std::error_code ec;
        std::filesystem::remove(lock_, ec);
    }

    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::filesystem::path lock_;
};

template <typename Fn>
auto run_stage(const std::string& name, std::vector<std::pair<std::string, double>>& times,
               std::ostream* log, Fn&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
        double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        times.emplace_back(name, dt);
        if (log) *log << "[stage] " << name << " done in " << dt << " s\n";
    };
    try {
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            finish();
            return;
        } else {
            auto result = fn();
            finish();
            return result;
        }
    } catch (const ConfigError& e) {
        throw ConfigError("stage '" + name + "': " + e.what());
    } catch (const DataFormatError& e) {
        throw DataFormatError("stage '" + name + "': " + e.what());
    } catch (const TrainingDivergedError& e) {
        throw TrainingDivergedError("stage '" + name + "': " + e.what());
    } catch (const InputError& e) {
        throw InputError("stage '" + name + "': " + e.what());
    }
}

inline void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
    std::string out = "epoch,mean_loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, losses[i]);
        out += buf;
    }
    write_text_file(path, out);
}

} // namespace detail

inline ModelConfig resolve_model_config(const ExperimentConfig& cfg, const Dataset& data) {
    ModelConfig mc;
    mc.architecture = cfg.architecture;
    mc.in_channels = data.train.images.shape[1];
    mc.in_height = data.train.images.shape[2];
    mc.in_width = data.train.images.shape[3];
    mc.num_classes = data.num_classes;
    mc.width_factor = cfg.width_factor;
    mc.seed = cfg.model_seed;
    return mc;
}

/// The end-to-end experiment: train the raw model, pick candidates, attack
/// them, score the attack, train the defense, score the defense, and
/// persist every artifact under the config hash. Stage wall times and the
/// CC row are the only non-reproducible bytes (see run_meta.json).
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    PipelineResult res;
    res.config_hash = cfg.hash_hex();
    fs::path out(cfg.out_dir);
    detail::DirLock lock(out);
    auto& times = res.stage_seconds;
    auto artifact = [&](const std::string& name, const fs::path& p) {
        res.artifacts[name] = p.string();
        return p.string();
    };

    write_text_file(artifact("config", out / "config.toml"), cfg.canonical());

    Dataset data = detail::run_stage("load_dataset", times, log,
                                     [&] { return load_dataset(cfg.dataset); });

    ModelConfig mc = resolve_model_config(cfg, data);
    Model raw = build_model(mc);
    TrainConfig train_cfg = cfg.train;
    train_cfg.workers = cfg.workers;
    TrainResult train_hist = detail::run_stage("train_raw", times, log, [&] {
        return train_standard(raw, data.train, train_cfg);
    });
    detail::write_loss_csv(artifact("train_loss", out / "train_loss.csv"),
                           train_hist.epoch_loss);
    save_checkpoint(raw, artifact("raw_model", out / "raw_model.ckpt"), res.config_hash);

    res.clean_accuracy_raw = detail::run_stage("accuracy_raw", times, log, [&] {
        return accuracy(raw, data.test, cfg.workers);
    });
    if (log) *log << "raw clean accuracy: " << res.clean_accuracy_raw << "\n";

    LabeledBatch candidates = detail::run_stage("select_candidates", times, log, [&] {
        return select_candidates(raw, data.test, cfg.max_candidates, cfg.attack.seed,
                                 cfg.workers);
    });
    res.candidate_count = candidates.size();
    if (log) *log << "candidates: " << res.candidate_count << "\n";

    AdversarialSet adv = detail::run_stage("attack", times, log, [&] {
        return craft_adversarial_set(raw, candidates, cfg.attack, cfg.workers);
    });
    save_adversarial_set(adv, artifact("adversarial_set", out / "adversarial_set.rfa"),
                         res.config_hash);

    res.attack = detail::run_stage("attack_metrics", times, log, [&] {
        return attack_report(adv, raw, BlurSpec{}, cfg.workers);
    });

    Model defended = clone(raw);
    TrainConfig defense_cfg = cfg.defense;
    defense_cfg.workers = cfg.workers;
    TrainResult defense_hist = detail::run_stage("defense_training", times, log, [&] {
        return run_training(defended, data.train, defense_cfg);
    });
    detail::write_loss_csv(artifact("defense_loss", out / "defense_loss.csv"),
                           defense_hist.epoch_loss);
    save_checkpoint(defended, artifact("defended_model", out / "defended_model.ckpt"),
                    res.config_hash);

    res.defense = detail::run_stage("defense_metrics", times, log, [&] {
        return defense_report(raw, defended, data.test, cfg.workers);
    });

    detail::run_stage("emit_reports", times, log, [&] {
        std::vector<std::string> provenance = {
            "config_hash=" + res.config_hash,
            "seed=" + std::to_string(cfg.seed),
            "js_divergence_log=natural",
            "chronometric_rows=CC",
        };
        std::string label = std::string(train_mode_name(cfg.defense.mode)) + "_" +
                            architecture_name(cfg.architecture);
        std::vector<std::pair<std::string, AttackReport>> att = {{label, res.attack}};
        std::vector<std::pair<std::string, DefenseReport>> def = {{label, res.defense}};
        write_text_file(artifact("attack_report_csv", out / "attack_report.csv"),
                        render_attack_report(att, provenance, ReportFormat::csv));
        write_text_file(artifact("attack_report_md", out / "attack_report.md"),
                        render_attack_report(att, provenance, ReportFormat::markdown));
        write_text_file(artifact("defense_report_csv", out / "defense_report.csv"),
                        render_defense_report(def, provenance, ReportFormat::csv));
        write_text_file(artifact("defense_report_md", out / "defense_report.md"),
                        render_defense_report(def, provenance, ReportFormat::markdown));
    });

    nlohmann::json meta = {{"config_hash", res.config_hash},
                           {"seed", cfg.seed},
                           {"workers", cfg.workers},
                           {"clean_accuracy_raw", res.clean_accuracy_raw},
                           {"candidates", res.candidate_count},
                           {"mean_crafting_seconds", res.attack.cc}};
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [name, secs] : times) stages[name] = secs;
    meta["stage_seconds"] = stages;
    write_text_file(artifact("run_meta", out / "run_meta.json"), meta.dump(2) + "\n");

    return res;
}

} // namespace advkit
