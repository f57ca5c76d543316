#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gradmorph/data.hpp"
#include "gradmorph/metrics.hpp"
#include "gradmorph/perturb.hpp"
#include "gradmorph/segnet.hpp"
#include "gradmorph/translator.hpp"

namespace gradmorph {

struct TrainSchedule {
    int epochs = 30;
    int batch_size = 8;
};

// One config drives every command; a fixed seed makes the whole pipeline
// bit-reproducible. Serialized as JSON with the same key layout.
struct ExperimentConfig {
    fs::path data_root = "data";
    fs::path out_root = "out";
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = hardware concurrency (perturbation only)

    SegNetConfig segnet;
    TrainSchedule seg_train;
    PerturbConfig perturb;
    TranslatorConfig translator;
    TranslationLossConfig trans_loss;
    TrainSchedule trans_train;
    SynthConfig synth;  // synth.seed is derived from `seed` unless set explicitly

    void validate() const;
};

// Stable sub-stream derivation for the per-stage seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Empty path = all defaults. Overrides are dotted "key.path=value" pairs
// applied on top of the file (values parsed as JSON literals, else strings).
ExperimentConfig load_experiment_config(const fs::path& file, const std::vector<std::string>& overrides);
ExperimentConfig experiment_config_from_json_text(const std::string& text, const std::string& origin,
                                                  const std::vector<std::string>& overrides);

// Canonical resolved form (sorted keys); written next to every command's
// outputs and hashed into manifests.
std::string experiment_config_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

// --- commands (see the CLI for the user-facing surface) ---------------------

void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_train_seg(const ExperimentConfig& cfg);
void cmd_perturb(const ExperimentConfig& cfg, const std::string& split);
void cmd_train_translator(const ExperimentConfig& cfg);
void cmd_infer(const ExperimentConfig& cfg, const std::string& split);
void cmd_evaluate(const ExperimentConfig& cfg);
void cmd_end2end_baseline(const ExperimentConfig& cfg);

// Serial pre-processor + segmentation stack trained jointly with the
// segmentation loss only (the no-perturbation-constraint baseline arm).
std::vector<double> train_serial_stack(TranslatorModel& translator, SegModel& segnet, const SampleSet& train,
                                       int epochs, int batch_size, std::uint64_t seed);

// Fixed artifact locations under the output root.
struct OutLayout {
    fs::path root;
    explicit OutLayout(fs::path out_root) : root(std::move(out_root)) {}

    fs::path manifest() const { return root / "manifest"; }
    fs::path resolved_config(const std::string& cmd) const { return root / "resolved" / (cmd + ".json"); }
    fs::path segnet_ckpt() const { return root / "checkpoints" / "segnet.ckpt"; }
    fs::path translator_ckpt() const { return root / "checkpoints" / "translator.ckpt"; }
    fs::path seg_loss_curve() const { return root / "curves" / "seg_loss.csv"; }
    fs::path translator_loss_curve() const { return root / "curves" / "translator_loss.csv"; }
    fs::path perturb_dir(const std::string& split) const { return root / "perturb" / split; }
    fs::path predictions_dir(const std::string& split) const { return root / "predictions" / split; }
    fs::path reports_dir() const { return root / "reports"; }
    fs::path end2end_dir() const { return root / "end2end"; }
};

}  // namespace gradmorph
