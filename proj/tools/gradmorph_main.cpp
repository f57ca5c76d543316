#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradmorph/errors.hpp"
#include "gradmorph/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_override;
    std::string data_override;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON experiment config (defaults apply when omitted)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set seg_train.epochs=50");
    cmd->add_option("--out", args.out_override, "Output root (overrides paths.out_root)");
    cmd->add_option("--data", args.data_override, "Dataset root (overrides paths.data_root)");
}

gradmorph::ExperimentConfig resolve(const CommonArgs& args) {
    std::vector<std::string> overrides = args.overrides;
    if (!args.out_override.empty()) overrides.push_back("paths.out_root=" + args.out_override);
    if (!args.data_override.empty()) overrides.push_back("paths.data_root=" + args.data_override);
    return gradmorph::load_experiment_config(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient-driven input transfer for segmentation networks"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string split = "test";

    CLI::App* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
    add_common(gen, args);

    CLI::App* train_seg = app.add_subcommand("train-seg", "Train the segmentation network");
    add_common(train_seg, args);

    CLI::App* perturb = app.add_subcommand("perturb", "Compute per-image input perturbations for a split");
    add_common(perturb, args);
    perturb->add_option("--split", split, "train|test")->required();

    CLI::App* train_tr = app.add_subcommand("train-translator", "Train the image-to-image translation network");
    add_common(train_tr, args);

    CLI::App* infer = app.add_subcommand("infer", "Segment a split directly and through the translator");
    add_common(infer, args);
    infer->add_option("--split", split, "train|test (default test)");

    CLI::App* evaluate = app.add_subcommand("evaluate", "Build metric reports from on-disk predictions");
    add_common(evaluate, args);

    CLI::App* e2e = app.add_subcommand("end2end-baseline",
                                       "Compare the pre-trained pre-processor against a serially trained stack");
    add_common(e2e, args);

    CLI11_PARSE(app, argc, argv);

    try {
        const gradmorph::ExperimentConfig cfg = resolve(args);
        if (gen->parsed()) gradmorph::cmd_gen_data(cfg);
        if (train_seg->parsed()) gradmorph::cmd_train_seg(cfg);
        if (perturb->parsed()) gradmorph::cmd_perturb(cfg, split);
        if (train_tr->parsed()) gradmorph::cmd_train_translator(cfg);
        if (infer->parsed()) gradmorph::cmd_infer(cfg, split);
        if (evaluate->parsed()) gradmorph::cmd_evaluate(cfg);
        if (e2e->parsed()) gradmorph::cmd_end2end_baseline(cfg);
    } catch (const gradmorph::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const gradmorph::ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
