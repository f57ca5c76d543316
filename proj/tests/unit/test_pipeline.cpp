#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gradmorph/checkpoint.hpp"
#include "gradmorph/data.hpp"
#include "gradmorph/errors.hpp"
#include "gradmorph/io.hpp"
#include "gradmorph/pipeline.hpp"
#include "gradmorph/segnet.hpp"

using namespace gradmorph;

TEST_SUITE_BEGIN("pipeline");

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& name) : path(fs::temp_directory_path() / ("gradmorph_pipe_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Small fast configuration used by the command tests.
ExperimentConfig mini_config(const fs::path& root) {
    ExperimentConfig cfg;
    cfg.data_root = root / "data";
    cfg.out_root = root / "out";
    cfg.seed = 13;
    cfg.threads = 1;
    cfg.segnet.depth = 2;
    cfg.segnet.base_channels = 4;
    cfg.seg_train = {3, 4};
    cfg.perturb.max_iters = 5;
    cfg.translator.blocks = 1;
    cfg.translator.growth_channels = 4;
    cfg.translator.layers_per_block = 2;
    cfg.trans_train = {3, 4};
    cfg.synth.count = 8;
    cfg.synth.image_size = 16;
    cfg.synth.contrast = 0.35;
    cfg.synth.noise_stddev = 0.10;
    cfg.synth.split_ratio = 0.75;
    cfg.synth.seed = derive_seed(cfg.seed, 5);
    cfg.validate();
    return cfg;
}

std::vector<std::uint8_t> slurp(const fs::path& p) { return read_file_bytes(p); }

}  // namespace

TEST_CASE("config loads defaults, applies overrides and rejects unknown keys") {
    const ExperimentConfig def = load_experiment_config("", {});
    CHECK(def.seed == 1);
    CHECK(def.segnet.depth == 3);
    CHECK(def.perturb.gamma == 1.0);
    CHECK(def.perturb.max_iters == 100);
    CHECK(def.synth.seed == derive_seed(1, 5));  // derived from the global seed

    const ExperimentConfig ovr = load_experiment_config(
        "", {"seed=9", "seg_train.epochs=42", "paths.out_root=/tmp/x", "synth.family=ellipses",
             "perturb.gamma=0.1", "synth.texture=true"});
    CHECK(ovr.seed == 9);
    CHECK(ovr.seg_train.epochs == 42);
    CHECK(ovr.out_root == fs::path("/tmp/x"));
    CHECK(ovr.synth.family == ShapeFamily::Ellipses);
    CHECK(ovr.perturb.gamma == 0.1);
    CHECK(ovr.synth.texture);
    CHECK(ovr.synth.seed == derive_seed(9, 5));

    // explicit synth.seed wins over derivation
    CHECK(load_experiment_config("", {"synth.seed=777"}).synth.seed == 777);

    CHECK_THROWS_AS(load_experiment_config("", {"nonsense=1"}), ContractViolation);
    CHECK_THROWS_AS(load_experiment_config("", {"segnet.depht=3"}), ContractViolation);
    CHECK_THROWS_AS(load_experiment_config("", {"perturb.gamma=-1"}), ContractViolation);
    CHECK_THROWS_AS(load_experiment_config("", {"badformat"}), ContractViolation);
}

TEST_CASE("config files round-trip through the resolved dump") {
    TempDir tmp("cfg");
    const ExperimentConfig cfg = mini_config(tmp.path);
    const fs::path f = tmp.path / "cfg.json";
    write_text_file(f, experiment_config_json(cfg));
    const ExperimentConfig back = load_experiment_config(f, {});
    CHECK(config_hash(back) == config_hash(cfg));
    CHECK(back.synth.count == 8);
    CHECK(back.translator.blocks == 1);
}

TEST_CASE("gen-data writes both splits plus a manifest and regenerates identically") {
    TempDir tmp("gen");
    const ExperimentConfig cfg = mini_config(tmp.path);
    cmd_gen_data(cfg);

    CHECK(fs::exists(cfg.data_root / "train" / "images" / "s0000.pgm"));
    CHECK(fs::exists(cfg.data_root / "train" / "masks" / "s0000.pgm"));
    CHECK(fs::exists(cfg.data_root / "test" / "images"));
    const std::string manifest = read_text_file(cfg.data_root / "manifest.json");
    CHECK(manifest.find("config_hash") != std::string::npos);
    CHECK(manifest.find(config_hash(cfg)) != std::string::npos);

    const auto before = slurp(cfg.data_root / "train" / "images" / "s0000.pgm");
    cmd_gen_data(cfg);
    CHECK(slurp(cfg.data_root / "train" / "images" / "s0000.pgm") == before);

    const SampleSet train = load_sampleset(cfg.data_root / "train");
    const SampleSet test = load_sampleset(cfg.data_root / "test");
    CHECK(train.size() == 6);
    CHECK(test.size() == 2);
}

TEST_CASE("the full command chain produces every artifact") {
    TempDir tmp("chain");
    const ExperimentConfig cfg = mini_config(tmp.path);
    const OutLayout out(cfg.out_root);

    // perturb before training fails with an io error
    cmd_gen_data(cfg);
    CHECK_THROWS_AS(cmd_perturb(cfg, "train"), IoError);

    cmd_train_seg(cfg);
    CHECK(fs::exists(out.segnet_ckpt()));
    CHECK(fs::exists(out.seg_loss_curve()));
    CHECK(fs::exists(out.resolved_config("train-seg")));

    cmd_perturb(cfg, "train");
    cmd_perturb(cfg, "test");
    // the paired dataset extends the split tree, stems shared with images/
    CHECK(fs::exists(cfg.data_root / "train" / "perturbed" / "s0000.gmt"));
    CHECK(fs::exists(cfg.data_root / "train" / "deltas" / "s0000.gmt"));
    CHECK(fs::exists(cfg.data_root / "train" / "traces" / "s0000.csv"));
    CHECK(fs::exists(out.perturb_dir("test") / "pred_perturbed" / "s0006.pgm"));
    CHECK(fs::exists(out.perturb_dir("train") / "summary.csv"));

    const std::string trace = read_text_file(cfg.data_root / "train" / "traces" / "s0000.csv");
    CHECK(trace.rfind("iteration,G,dice,delta_linf\n", 0) == 0);

    cmd_train_translator(cfg);
    CHECK(fs::exists(out.translator_ckpt()));
    CHECK(fs::exists(out.translator_loss_curve()));

    cmd_infer(cfg, "test");
    CHECK(fs::exists(out.predictions_dir("test") / "orig" / "s0006.pgm"));
    CHECK(fs::exists(out.predictions_dir("test") / "gpts" / "s0006.pgm"));
    CHECK(fs::exists(out.predictions_dir("test") / "translated" / "s0006.gmt"));

    // the orig path equals direct segmentation through the checkpoint
    {
        const SegModel seg = load_segnet(out.segnet_ckpt());
        const SampleSet test = load_sampleset(cfg.data_root / "test");
        const LabelMap direct = predict(seg, test[0].image);
        const LabelMap from_disk =
            read_labelmap_pgm(out.predictions_dir("test") / "orig" / (test[0].id + ".pgm"), 2);
        CHECK(direct.labels == from_disk.labels);
    }

    cmd_evaluate(cfg);
    CHECK(fs::exists(out.reports_dir() / "per_sample_orig.csv"));
    CHECK(fs::exists(out.reports_dir() / "summary_orig.csv"));
    CHECK(fs::exists(out.reports_dir() / "per_sample_gpts.csv"));
    CHECK(fs::exists(out.reports_dir() / "summary_oracle_gp.csv"));
    CHECK(fs::exists(out.reports_dir() / "per_sample_reconstruction.csv"));

    cmd_end2end_baseline(cfg);
    const std::string comparison = read_text_file(out.end2end_dir() / "comparison.csv");
    CHECK(comparison.find("pretrained_preprocessor") != std::string::npos);
    CHECK(comparison.find("end2end_serial") != std::string::npos);
    CHECK(comparison.find("nan") == std::string::npos);
    // equal parameter budgets in both arms
    {
        const SegModel seg = load_segnet(out.segnet_ckpt());
        const TranslatorModel tr = load_translator(out.translator_ckpt());
        const std::string budget = std::to_string(seg.params.total_elements() + tr.params.total_elements());
        CHECK(comparison.find("pretrained_preprocessor," + budget) != std::string::npos);
        CHECK(comparison.find("end2end_serial," + budget) != std::string::npos);
    }

    const std::string manifest = read_text_file(out.manifest());
    CHECK(manifest.find("# train-seg") != std::string::npos);
    CHECK(manifest.find("checkpoints/segnet.ckpt") != std::string::npos);
    CHECK(manifest.find("# evaluate") != std::string::npos);
}

TEST_CASE("a fixed seed reproduces checkpoints bit-exactly across runs") {
    TempDir tmp("repro");
    ExperimentConfig cfg = mini_config(tmp.path);
    cmd_gen_data(cfg);
    cmd_train_seg(cfg);
    const auto first = slurp(OutLayout(cfg.out_root).segnet_ckpt());

    ExperimentConfig cfg2 = cfg;
    cfg2.out_root = tmp.path / "out2";
    cmd_train_seg(cfg2);
    CHECK(slurp(OutLayout(cfg2.out_root).segnet_ckpt()) == first);
}

TEST_SUITE_END();
