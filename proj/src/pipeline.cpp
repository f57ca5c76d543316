#include "gradmorph/pipeline.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "gradmorph/checkpoint.hpp"
#include "gradmorph/errors.hpp"
#include "gradmorph/io.hpp"
#include "gradmorph/rng.hpp"
#include "gradmorph/strfmt.hpp"

namespace gradmorph {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t x = base ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

namespace {

// Seed sub-streams, one per pipeline stage.
enum SeedStream : std::uint64_t {
    kSeedSegnetInit = 1,
    kSeedSegTrain = 2,
    kSeedTranslatorInit = 3,
    kSeedTranslatorTrain = 4,
    kSeedSynth = 5,
    kSeedSerialInit = 6,
    kSeedSerialTrain = 7,
};

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items())
        if (allowed.find(key) == allowed.end())
            throw ContractViolation("config: unknown key '" + where + key + "'");
}

json config_to_json(const ExperimentConfig& c) {
    return json{
        {"paths", {{"data_root", c.data_root.string()}, {"out_root", c.out_root.string()}}},
        {"seed", c.seed},
        {"threads", c.threads},
        {"segnet",
         {{"depth", c.segnet.depth},
          {"base_channels", c.segnet.base_channels},
          {"num_classes", c.segnet.num_classes},
          {"input_channels", c.segnet.input_channels}}},
        {"seg_train", {{"epochs", c.seg_train.epochs}, {"batch_size", c.seg_train.batch_size}}},
        {"perturb",
         {{"gamma", c.perturb.gamma},
          {"max_iters", c.perturb.max_iters},
          {"dice_tolerance", c.perturb.dice_tolerance}}},
        {"translator",
         {{"blocks", c.translator.blocks},
          {"growth_channels", c.translator.growth_channels},
          {"layers_per_block", c.translator.layers_per_block},
          {"input_channels", c.translator.input_channels}}},
        {"trans_loss",
         {{"lambda", c.trans_loss.lambda},
          {"ssim_window", c.trans_loss.ssim_window},
          {"ssim_k1", c.trans_loss.ssim_k1},
          {"ssim_k2", c.trans_loss.ssim_k2},
          {"dynamic_range", c.trans_loss.dynamic_range}}},
        {"trans_train", {{"epochs", c.trans_train.epochs}, {"batch_size", c.trans_train.batch_size}}},
        {"synth",
         {{"count", c.synth.count},
          {"image_size", c.synth.image_size},
          {"family", to_string(c.synth.family)},
          {"contrast", c.synth.contrast},
          {"noise_stddev", c.synth.noise_stddev},
          {"texture", c.synth.texture},
          {"split_ratio", c.synth.split_ratio},
          {"seed", c.synth.seed}}},
    };
}

ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig c;
    check_keys(doc, "", {"paths", "seed", "threads", "segnet", "seg_train", "perturb", "translator",
                         "trans_loss", "trans_train", "synth"});

    if (doc.contains("paths")) {
        const json& p = doc.at("paths");
        check_keys(p, "paths.", {"data_root", "out_root"});
        c.data_root = p.value("data_root", c.data_root.string());
        c.out_root = p.value("out_root", c.out_root.string());
    }
    c.seed = doc.value("seed", c.seed);
    c.threads = doc.value("threads", c.threads);

    if (doc.contains("segnet")) {
        const json& s = doc.at("segnet");
        check_keys(s, "segnet.", {"depth", "base_channels", "num_classes", "input_channels"});
        c.segnet.depth = s.value("depth", c.segnet.depth);
        c.segnet.base_channels = s.value("base_channels", c.segnet.base_channels);
        c.segnet.num_classes = s.value("num_classes", c.segnet.num_classes);
        c.segnet.input_channels = s.value("input_channels", c.segnet.input_channels);
    }
    if (doc.contains("seg_train")) {
        const json& s = doc.at("seg_train");
        check_keys(s, "seg_train.", {"epochs", "batch_size"});
        c.seg_train.epochs = s.value("epochs", c.seg_train.epochs);
        c.seg_train.batch_size = s.value("batch_size", c.seg_train.batch_size);
    }
    if (doc.contains("perturb")) {
        const json& s = doc.at("perturb");
        check_keys(s, "perturb.", {"gamma", "max_iters", "dice_tolerance"});
        c.perturb.gamma = s.value("gamma", c.perturb.gamma);
        c.perturb.max_iters = s.value("max_iters", c.perturb.max_iters);
        c.perturb.dice_tolerance = s.value("dice_tolerance", c.perturb.dice_tolerance);
    }
    if (doc.contains("translator")) {
        const json& s = doc.at("translator");
        check_keys(s, "translator.", {"blocks", "growth_channels", "layers_per_block", "input_channels"});
        c.translator.blocks = s.value("blocks", c.translator.blocks);
        c.translator.growth_channels = s.value("growth_channels", c.translator.growth_channels);
        c.translator.layers_per_block = s.value("layers_per_block", c.translator.layers_per_block);
        c.translator.input_channels = s.value("input_channels", c.translator.input_channels);
    }
    if (doc.contains("trans_loss")) {
        const json& s = doc.at("trans_loss");
        check_keys(s, "trans_loss.", {"lambda", "ssim_window", "ssim_k1", "ssim_k2", "dynamic_range"});
        c.trans_loss.lambda = s.value("lambda", c.trans_loss.lambda);
        c.trans_loss.ssim_window = s.value("ssim_window", c.trans_loss.ssim_window);
        c.trans_loss.ssim_k1 = s.value("ssim_k1", c.trans_loss.ssim_k1);
        c.trans_loss.ssim_k2 = s.value("ssim_k2", c.trans_loss.ssim_k2);
        c.trans_loss.dynamic_range = s.value("dynamic_range", c.trans_loss.dynamic_range);
    }
    if (doc.contains("trans_train")) {
        const json& s = doc.at("trans_train");
        check_keys(s, "trans_train.", {"epochs", "batch_size"});
        c.trans_train.epochs = s.value("epochs", c.trans_train.epochs);
        c.trans_train.batch_size = s.value("batch_size", c.trans_train.batch_size);
    }
    bool synth_seed_given = false;
    if (doc.contains("synth")) {
        const json& s = doc.at("synth");
        check_keys(s, "synth.",
                   {"count", "image_size", "family", "contrast", "noise_stddev", "texture", "split_ratio", "seed"});
        c.synth.count = s.value("count", c.synth.count);
        c.synth.image_size = s.value("image_size", c.synth.image_size);
        if (s.contains("family")) c.synth.family = shape_family_from_string(s.at("family").get<std::string>());
        c.synth.contrast = s.value("contrast", c.synth.contrast);
        c.synth.noise_stddev = s.value("noise_stddev", c.synth.noise_stddev);
        c.synth.texture = s.value("texture", c.synth.texture);
        c.synth.split_ratio = s.value("split_ratio", c.synth.split_ratio);
        if (s.contains("seed")) {
            c.synth.seed = s.at("seed").get<std::uint64_t>();
            synth_seed_given = true;
        }
    }
    if (!synth_seed_given) c.synth.seed = derive_seed(c.seed, kSeedSynth);
    return c;
}

void apply_override(json& doc, const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ContractViolation("--set expects key.path=value, got '" + spec + "'");
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // unquoted strings are taken verbatim
    }

    json* cur = &doc;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ContractViolation("--set: empty key segment in '" + spec + "'");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        cur = &(*cur)[key];
        start = dot + 1;
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    segnet.validate();
    perturb.validate();
    translator.validate();
    trans_loss.validate();
    synth.validate();
    if (seg_train.epochs < 0 || trans_train.epochs < 0) throw ContractViolation("config: epochs must be >= 0");
    if (seg_train.batch_size < 1 || trans_train.batch_size < 1)
        throw ContractViolation("config: batch_size must be >= 1");
    if (segnet.input_channels != translator.input_channels)
        throw ContractViolation("config: segnet.input_channels must equal translator.input_channels");
    if (synth.image_size % segnet.spatial_multiple() != 0)
        throw ContractViolation("config: image_size " + std::to_string(synth.image_size) +
                                " not divisible by segnet factor " + std::to_string(segnet.spatial_multiple()));
    if (synth.image_size % translator.spatial_multiple() != 0)
        throw ContractViolation("config: image_size " + std::to_string(synth.image_size) +
                                " not divisible by translator factor " +
                                std::to_string(translator.spatial_multiple()));
}

ExperimentConfig experiment_config_from_json_text(const std::string& text, const std::string& origin,
                                                  const std::vector<std::string>& overrides) {
    json doc;
    try {
        doc = text.empty() ? json::object() : json::parse(text);
    } catch (const json::exception& e) {
        throw ContractViolation("config " + origin + ": " + e.what());
    }
    if (!doc.is_object()) throw ContractViolation("config " + origin + ": top level must be an object");
    for (const std::string& o : overrides) apply_override(doc, o);
    ExperimentConfig cfg = config_from_json(doc);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& file, const std::vector<std::string>& overrides) {
    std::string text;
    if (!file.empty()) text = read_text_file(file);
    return experiment_config_from_json_text(text, file.empty() ? "<defaults>" : file.string(), overrides);
}

std::string experiment_config_json(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a64_hex(config_to_json(cfg).dump()); }

// ---------------------------------------------------------------------------
// staging, manifest, small csv writers
// ---------------------------------------------------------------------------

namespace {

// Commands build artifacts in a staging directory and rename them into
// place, so an interrupted run never leaves half-written outputs.
class Stager {
public:
    Stager(fs::path out_root, const std::string& cmd)
        : out_root_(std::move(out_root)), staging_(out_root_ / (".staging-" + cmd)) {
        fs::remove_all(staging_);
        fs::create_directories(staging_);
    }
    ~Stager() {
        std::error_code ec;
        fs::remove_all(staging_, ec);
    }

    const fs::path& dir() const { return staging_; }

    // Moves staging/<rel> over out_root/<rel>, replacing what was there.
    void commit(const std::vector<fs::path>& rel_paths) {
        for (const fs::path& rel : rel_paths) {
            const fs::path src = staging_ / rel;
            const fs::path dst = out_root_ / rel;
            if (!fs::exists(src)) throw IoError("staging artifact missing: " + src.string());
            fs::remove_all(dst);
            if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
            fs::rename(src, dst);
            committed_.push_back(rel);
        }
    }

    // Appends "hash  path" lines for every committed file to the manifest.
    void write_manifest(const std::string& cmd) {
        std::vector<std::string> lines;
        for (const fs::path& rel : committed_) {
            const fs::path dst = out_root_ / rel;
            if (fs::is_directory(dst)) {
                std::vector<fs::path> files;
                for (const auto& e : fs::recursive_directory_iterator(dst))
                    if (e.is_regular_file()) files.push_back(e.path());
                std::sort(files.begin(), files.end());
                for (const fs::path& f : files)
                    lines.push_back(file_hash_hex(f) + "  " + fs::relative(f, out_root_).generic_string());
            } else {
                lines.push_back(file_hash_hex(dst) + "  " + rel.generic_string());
            }
        }
        std::string text = "# " + cmd + "\n";
        for (const std::string& l : lines) text += l + "\n";
        const fs::path manifest = out_root_ / "manifest";
        std::string existing;
        if (fs::exists(manifest)) existing = read_text_file(manifest);
        write_text_file(manifest, existing + text);
    }

private:
    fs::path out_root_;
    fs::path staging_;
    std::vector<fs::path> committed_;
};

void write_resolved_config(const ExperimentConfig& cfg, const std::string& cmd) {
    const OutLayout out(cfg.out_root);
    write_text_file(out.resolved_config(cmd), experiment_config_json(cfg));
}

void write_loss_curve_csv(const fs::path& path, const std::vector<double>& curve) {
    std::string text = "epoch,loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i)
        text += fmt_int(static_cast<long long>(i)) + "," + fmt_double(curve[i]) + "\n";
    write_text_file(path, text);
}

void write_trace_csv(const fs::path& path, const std::vector<PerturbTraceRow>& trace) {
    std::string text = "iteration,G,dice,delta_linf\n";
    for (const PerturbTraceRow& r : trace)
        text += fmt_int(r.iteration) + "," + fmt_double(r.objective) + "," + fmt_double(r.dice) + "," +
                fmt_double(r.delta_linf) + "\n";
    write_text_file(path, text);
}

std::string opt_cell(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

void write_report_csvs(const MetricsReport& report, const fs::path& dir, const std::string& method) {
    std::string per_sample = "id,dice,fpr,fnr,ssim\n";
    for (const MetricRow& r : report.rows)
        per_sample += r.id + "," + opt_cell(r.dice) + "," + opt_cell(r.fpr) + "," + opt_cell(r.fnr) + "," +
                      opt_cell(r.ssim) + "\n";
    write_text_file(dir / ("per_sample_" + method + ".csv"), per_sample);

    std::string summary = "metric,mean,stderr,n\n";
    for (const auto& [name, agg] : report.aggregates)
        summary += name + "," + fmt_double(agg.mean) + "," + fmt_double(agg.stderr_val) + "," + fmt_int(agg.n) + "\n";
    write_text_file(dir / ("summary_" + method + ".csv"), summary);

    for (const auto& [name, curve] : report.kde) {
        std::string kde = "grid,density\n";
        for (std::size_t i = 0; i < curve.grid.size(); ++i)
            kde += fmt_double(curve.grid[i]) + "," + fmt_double(curve.density[i]) + "\n";
        write_text_file(dir / ("kde_" + method + "_" + name + ".csv"), kde);
    }
}

std::map<std::string, fs::path> list_files(const fs::path& dir, const std::string& ext) {
    std::map<std::string, fs::path> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.emplace(e.path().stem().string(), e.path());
    return out;
}

void check_split(const std::string& split) {
    if (split != "train" && split != "test")
        throw ContractViolation("split must be 'train' or 'test', got '" + split + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& cfg) {
    cfg.validate();
    const SynthDataset ds = generate_synthetic(cfg.synth);

    // stage the whole dataset tree, then swap it in
    const fs::path staging = cfg.data_root.string() + ".staging";
    fs::remove_all(staging);
    save_sampleset(staging / "train", ds.train, cfg.segnet.num_classes);
    save_sampleset(staging / "test", ds.test, cfg.segnet.num_classes);

    json manifest;
    manifest["seed"] = cfg.synth.seed;
    manifest["config_hash"] = config_hash(cfg);
    manifest["synth"] = {
        {"count", cfg.synth.count},
        {"image_size", cfg.synth.image_size},
        {"family", to_string(cfg.synth.family)},
        {"contrast", cfg.synth.contrast},
        {"noise_stddev", cfg.synth.noise_stddev},
        {"texture", cfg.synth.texture},
        {"split_ratio", cfg.synth.split_ratio},
        {"seed", cfg.synth.seed},
    };
    json train_ids = json::array(), test_ids = json::array();
    for (const Sample& s : ds.train) train_ids.push_back(s.id);
    for (const Sample& s : ds.test) test_ids.push_back(s.id);
    manifest["train_ids"] = train_ids;
    manifest["test_ids"] = test_ids;
    write_text_file(staging / "manifest.json", manifest.dump(2) + "\n");

    fs::remove_all(cfg.data_root);
    if (cfg.data_root.has_parent_path()) fs::create_directories(cfg.data_root.parent_path());
    fs::rename(staging, cfg.data_root);

    write_resolved_config(cfg, "gen-data");
    std::cout << "gen-data: " << ds.train.size() << " train / " << ds.test.size() << " test samples under "
              << cfg.data_root.string() << "\n";
}

void cmd_train_seg(const ExperimentConfig& cfg) {
    cfg.validate();
    const SampleSet train = load_sampleset(cfg.data_root / "train", cfg.segnet.num_classes);
    if (train.empty()) throw IoError("train-seg: no training samples under " + (cfg.data_root / "train").string());

    SegModel model = build_segnet(cfg.segnet, derive_seed(cfg.seed, kSeedSegnetInit));
    AdadeltaState opt;
    const std::vector<double> curve =
        train_segmentation(model, train, cfg.seg_train.epochs, cfg.seg_train.batch_size, opt,
                           derive_seed(cfg.seed, kSeedSegTrain));

    Stager stage(cfg.out_root, "train-seg");
    save_segnet(stage.dir() / "checkpoints" / "segnet.ckpt", model);
    write_loss_curve_csv(stage.dir() / "curves" / "seg_loss.csv", curve);
    stage.commit({fs::path("checkpoints") / "segnet.ckpt", fs::path("curves") / "seg_loss.csv"});
    write_resolved_config(cfg, "train-seg");
    stage.write_manifest("train-seg");
    std::cout << "train-seg: " << cfg.seg_train.epochs << " epochs"
              << (curve.empty() ? "" : ", final loss " + fmt_double(curve.back())) << "\n";
}

void cmd_perturb(const ExperimentConfig& cfg, const std::string& split) {
    cfg.validate();
    check_split(split);
    const OutLayout out(cfg.out_root);
    const SampleSet samples = load_sampleset(cfg.data_root / split, cfg.segnet.num_classes);
    if (samples.empty()) throw IoError("perturb: no samples under " + (cfg.data_root / split).string());
    const SegModel model = load_segnet(out.segnet_ckpt());

    const BatchPerturbSummary summary = batch_perturb(model, samples, cfg.perturb, cfg.threads);

    // The paired dataset extends the split tree (stems shared with
    // images/masks); run reports go under the output root.
    const fs::path data_staging = cfg.data_root / (".staging-perturb-" + split);
    fs::remove_all(data_staging);
    Stager stage(cfg.out_root, "perturb-" + split);
    const fs::path report_base = stage.dir() / "perturb" / split;
    std::string index = "id,status,terminated_by,iterations,final_dice,error\n";
    for (const BatchPerturbItem& item : summary.items) {
        if (item.ok) {
            const PerturbResult& r = item.result;
            write_tensor(data_staging / "perturbed" / (item.id + ".gmt"), r.perturbed_image);
            write_tensor(data_staging / "deltas" / (item.id + ".gmt"), r.delta_total);
            write_trace_csv(data_staging / "traces" / (item.id + ".csv"), r.trace);
            write_labelmap_pgm(report_base / "pred_perturbed" / (item.id + ".pgm"), r.final_pred,
                               cfg.segnet.num_classes);
            index += item.id + ",ok," + to_string(r.terminated_by) + "," +
                     fmt_int(static_cast<long long>(r.trace.size())) + "," + fmt_double(r.final_dice) + ",\n";
        } else {
            index += item.id + ",failed,,,," + item.error + "\n";
        }
    }
    write_text_file(report_base / "summary.csv", index);

    for (const char* sub : {"perturbed", "deltas", "traces"}) {
        const fs::path dst = cfg.data_root / split / sub;
        fs::remove_all(dst);
        if (fs::exists(data_staging / sub)) fs::rename(data_staging / sub, dst);
    }
    fs::remove_all(data_staging);
    stage.commit({fs::path("perturb") / split});
    write_resolved_config(cfg, "perturb-" + split);
    stage.write_manifest("perturb-" + split);

    std::cout << "perturb " << split << ": " << (summary.items.size() - static_cast<std::size_t>(summary.failures))
              << "/" << summary.items.size() << " samples, mean final Dice " << fmt_double(summary.mean_final_dice());
    if (summary.failures > 0) std::cout << " (" << summary.failures << " failed)";
    std::cout << "\n";
}

void cmd_train_translator(const ExperimentConfig& cfg) {
    cfg.validate();
    const SampleSet train = load_sampleset(cfg.data_root / "train", cfg.segnet.num_classes);
    const auto perturbed = list_files(cfg.data_root / "train" / "perturbed", ".gmt");
    if (perturbed.empty())
        throw IoError("train-translator: no perturbed training images under " +
                      (cfg.data_root / "train" / "perturbed").string() + "; run `perturb --split train` first");

    ImagePairSet pairs;
    for (const Sample& s : train) {
        const auto it = perturbed.find(s.id);
        if (it == perturbed.end()) continue;  // failed samples are skipped
        pairs.emplace_back(s.image, read_tensor(it->second));
    }
    if (pairs.empty()) throw IoError("train-translator: no (image, perturbed) pairs matched by stem");

    TranslatorModel model = build_translator(cfg.translator, derive_seed(cfg.seed, kSeedTranslatorInit));
    AdadeltaState opt;
    const std::vector<double> curve = train_translator(model, pairs, cfg.trans_loss, cfg.trans_train.epochs,
                                                       cfg.trans_train.batch_size, opt,
                                                       derive_seed(cfg.seed, kSeedTranslatorTrain));

    Stager stage(cfg.out_root, "train-translator");
    save_translator(stage.dir() / "checkpoints" / "translator.ckpt", model);
    write_loss_curve_csv(stage.dir() / "curves" / "translator_loss.csv", curve);
    stage.commit({fs::path("checkpoints") / "translator.ckpt", fs::path("curves") / "translator_loss.csv"});
    write_resolved_config(cfg, "train-translator");
    stage.write_manifest("train-translator");
    std::cout << "train-translator: " << pairs.size() << " pairs, " << cfg.trans_train.epochs << " epochs"
              << (curve.empty() ? "" : ", final loss " + fmt_double(curve.back())) << "\n";
}

void cmd_infer(const ExperimentConfig& cfg, const std::string& split) {
    cfg.validate();
    check_split(split);
    const OutLayout out(cfg.out_root);
    const SampleSet samples = load_sampleset(cfg.data_root / split, cfg.segnet.num_classes);
    if (samples.empty()) throw IoError("infer: no samples under " + (cfg.data_root / split).string());
    const SegModel seg = load_segnet(out.segnet_ckpt());
    const TranslatorModel tr = load_translator(out.translator_ckpt());

    Stager stage(cfg.out_root, "infer-" + split);
    const fs::path base = stage.dir() / "predictions" / split;
    for (const Sample& s : samples) {
        const LabelMap pred_orig = predict(seg, s.image);
        write_labelmap_pgm(base / "orig" / (s.id + ".pgm"), pred_orig, cfg.segnet.num_classes);

        const Tensor translated = translate(tr, s.image);
        write_tensor(base / "translated" / (s.id + ".gmt"), translated);
        const LabelMap pred_gpts = predict(seg, translated);
        write_labelmap_pgm(base / "gpts" / (s.id + ".pgm"), pred_gpts, cfg.segnet.num_classes);
    }
    stage.commit({fs::path("predictions") / split});
    write_resolved_config(cfg, "infer-" + split);
    stage.write_manifest("infer-" + split);
    std::cout << "infer " << split << ": wrote orig/gpts predictions for " << samples.size() << " images\n";
}

void cmd_evaluate(const ExperimentConfig& cfg) {
    cfg.validate();
    const OutLayout out(cfg.out_root);
    const SampleSet samples = load_sampleset(cfg.data_root / "test", cfg.segnet.num_classes);
    if (samples.empty()) throw IoError("evaluate: no samples under " + (cfg.data_root / "test").string());

    const fs::path pred_base = out.predictions_dir("test");
    const auto orig = list_files(pred_base / "orig", ".pgm");
    if (orig.empty())
        throw IoError("evaluate: no predictions under " + (pred_base / "orig").string() + "; run `infer` first");
    const auto gpts = list_files(pred_base / "gpts", ".pgm");
    const auto oracle = list_files(out.perturb_dir("test") / "pred_perturbed", ".pgm");
    const auto translated = list_files(pred_base / "translated", ".gmt");
    const auto perturbed = list_files(cfg.data_root / "test" / "perturbed", ".gmt");

    const auto rows_for = [&](const std::map<std::string, fs::path>& preds) {
        std::vector<MetricRow> rows;
        for (const Sample& s : samples) {
            const auto it = preds.find(s.id);
            if (it == preds.end()) throw IoError("evaluate: missing prediction for sample '" + s.id + "'");
            const LabelMap pred = read_labelmap_pgm(it->second, cfg.segnet.num_classes);
            MetricRow row;
            row.id = s.id;
            row.dice = dice(pred, s.mask, 1);
            row.fpr = fpr(pred, s.mask, 1);
            row.fnr = fnr(pred, s.mask, 1);
            rows.push_back(std::move(row));
        }
        return rows;
    };

    Stager stage(cfg.out_root, "evaluate");
    const fs::path rep = stage.dir() / "reports";
    write_report_csvs(build_metrics_report(rows_for(orig)), rep, "orig");
    if (!gpts.empty()) write_report_csvs(build_metrics_report(rows_for(gpts)), rep, "gpts");
    if (!oracle.empty()) write_report_csvs(build_metrics_report(rows_for(oracle)), rep, "oracle_gp");

    // reconstruction fidelity: SSIM between the translator output and the
    // oracle-perturbed image, both read back from disk
    if (!translated.empty() && !perturbed.empty()) {
        std::vector<MetricRow> rows;
        for (const Sample& s : samples) {
            const auto t = translated.find(s.id);
            const auto p = perturbed.find(s.id);
            if (t == translated.end() || p == perturbed.end()) continue;
            MetricRow row;
            row.id = s.id;
            row.ssim = ssim(read_tensor(t->second), read_tensor(p->second), cfg.trans_loss);
            rows.push_back(std::move(row));
        }
        if (!rows.empty()) write_report_csvs(build_metrics_report(std::move(rows)), rep, "reconstruction");
    }

    stage.commit({fs::path("reports")});
    write_resolved_config(cfg, "evaluate");
    stage.write_manifest("evaluate");
    std::cout << "evaluate: reports under " << out.reports_dir().string() << "\n";
}

// ---------------------------------------------------------------------------
// end-to-end serial baseline
// ---------------------------------------------------------------------------

std::vector<double> train_serial_stack(TranslatorModel& translator, SegModel& segnet, const SampleSet& train,
                                       int epochs, int batch_size, std::uint64_t seed) {
    if (train.empty()) throw ContractViolation("train_serial_stack: dataset is empty");
    AdadeltaState opt_tr = AdadeltaState::for_params(translator.params);
    AdadeltaState opt_seg = AdadeltaState::for_params(segnet.params);

    std::vector<double> curve;
    Rng rng(seed);
    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - pos);
            std::vector<Tensor> grad_tr = zeros_like(translator.params);
            std::vector<Tensor> grad_seg = zeros_like(segnet.params);
            for (std::size_t b = 0; b < take; ++b) {
                const Sample& s = train[static_cast<std::size_t>(order[pos + b])];
                TapeGraph tape;
                const BoundParams btr = bind_params(tape, translator.params, true);
                const BoundParams bseg = bind_params(tape, segnet.params, true);
                Value img = tape.constant(s.image);
                Value pre = translator_forward(tape, translator.config, btr, img);
                Value logits = segnet_forward(tape, segnet.config, bseg, pre);
                Value loss = tape.softmax_cross_entropy(logits, s.mask);
                epoch_loss += loss.tensor()[0];
                tape.backward(loss);
                accumulate_param_grads(tape, btr, grad_tr);
                accumulate_param_grads(tape, bseg, grad_seg);
            }
            const double inv = 1.0 / static_cast<double>(take);
            for (Tensor& g : grad_tr)
                for (std::int64_t j = 0; j < g.size(); ++j) g[j] *= inv;
            for (Tensor& g : grad_seg)
                for (std::int64_t j = 0; j < g.size(); ++j) g[j] *= inv;
            adadelta_step(translator.params, grad_tr, opt_tr);
            adadelta_step(segnet.params, grad_seg, opt_seg);
            pos += take;
        }
        curve.push_back(epoch_loss / static_cast<double>(train.size()));
    }
    return curve;
}

void cmd_end2end_baseline(const ExperimentConfig& cfg) {
    cfg.validate();
    const OutLayout out(cfg.out_root);
    const SampleSet train = load_sampleset(cfg.data_root / "train", cfg.segnet.num_classes);
    const SampleSet test = load_sampleset(cfg.data_root / "test", cfg.segnet.num_classes);
    if (train.empty() || test.empty()) throw IoError("end2end-baseline: dataset incomplete under " + cfg.data_root.string());

    // arm (i): perturbation-trained pre-processor in front of the trained
    // segmentation network
    const SegModel seg_pre = load_segnet(out.segnet_ckpt());
    const TranslatorModel tr_pre = load_translator(out.translator_ckpt());

    // arm (ii): same architectures trained serially from scratch with the
    // segmentation loss only
    SegModel seg_serial = build_segnet(cfg.segnet, derive_seed(cfg.seed, kSeedSerialInit));
    TranslatorModel tr_serial = build_translator(cfg.translator, derive_seed(cfg.seed, kSeedSerialInit + 100));
    const std::vector<double> curve = train_serial_stack(tr_serial, seg_serial, train, cfg.seg_train.epochs,
                                                         cfg.seg_train.batch_size,
                                                         derive_seed(cfg.seed, kSeedSerialTrain));

    const auto arm_dice = [&](const TranslatorModel& tr, const SegModel& seg) {
        std::vector<double> dices;
        for (const Sample& s : test) dices.push_back(dice(predict(seg, translate(tr, s.image)), s.mask, 1));
        return aggregate(dices);
    };
    const Aggregate pre = arm_dice(tr_pre, seg_pre);
    const Aggregate serial = arm_dice(tr_serial, seg_serial);
    const std::int64_t budget_pre = tr_pre.params.total_elements() + seg_pre.params.total_elements();
    const std::int64_t budget_serial = tr_serial.params.total_elements() + seg_serial.params.total_elements();

    Stager stage(cfg.out_root, "end2end-baseline");
    std::string csv = "arm,param_count,dice_mean,dice_stderr,n\n";
    csv += "pretrained_preprocessor," + fmt_int(budget_pre) + "," + fmt_double(pre.mean) + "," +
           fmt_double(pre.stderr_val) + "," + fmt_int(pre.n) + "\n";
    csv += "end2end_serial," + fmt_int(budget_serial) + "," + fmt_double(serial.mean) + "," +
           fmt_double(serial.stderr_val) + "," + fmt_int(serial.n) + "\n";
    write_text_file(stage.dir() / "end2end" / "comparison.csv", csv);
    write_loss_curve_csv(stage.dir() / "end2end" / "serial_loss.csv", curve);
    stage.commit({fs::path("end2end")});
    write_resolved_config(cfg, "end2end-baseline");
    stage.write_manifest("end2end-baseline");
    std::cout << "end2end-baseline: pretrained " << fmt_double(pre.mean) << " vs serial " << fmt_double(serial.mean)
              << " mean Dice\n";
}

}  // namespace gradmorph
