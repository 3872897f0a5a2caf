// Command-line driver: phantom data generation, preprocessing, training,
// evaluation, comparison tables, and qualitative slice export.
//
// Exit codes: 0 success, 1 usage, 2 data/config error, 3 internal error.

#include <fcntl.h>
#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "curriseg/checkpoint.hpp"
#include "curriseg/config.hpp"
#include "curriseg/curriculum.hpp"
#include "curriseg/errors.hpp"
#include "curriseg/evaluate.hpp"
#include "curriseg/metrics.hpp"
#include "curriseg/network.hpp"
#include "curriseg/phantom.hpp"
#include "curriseg/preprocess.hpp"
#include "curriseg/slices.hpp"
#include "curriseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace curriseg;

namespace {

// One writer per output directory: a .lock file created O_EXCL and removed
// on scope exit. A leftover lock from a crashed run must be deleted by hand.
class DirLock {
  public:
    DirLock() = default;
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;
    ~DirLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }

    void acquire(const fs::path& dir) {
        fs::create_directories(dir);
        path_ = (dir / ".lock").string();
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw DataError("output directory " + dir.string() +
                            " is locked by another run (delete .lock if it is stale)");
        std::string pid = std::to_string(::getpid()) + "\n";
        ssize_t rc = ::write(fd_, pid.data(), pid.size());
        (void)rc;
    }

  private:
    std::string path_;
    int fd_ = -1;
};

// Takes the lock first so a live writer is never clobbered, then refuses a
// non-empty directory unless --force, in which case the old contents are
// removed so reruns start clean.
void claim_output_dir(const fs::path& dir, bool force, DirLock& lock) {
    if (fs::exists(dir) && !fs::is_directory(dir))
        throw DataError("output path " + dir.string() + " exists and is not a directory");
    lock.acquire(dir);
    bool has_contents = false;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename() != ".lock") {
            has_contents = true;
            break;
        }
    if (has_contents && !force)
        throw DataError("output directory " + dir.string() +
                        " already has contents; rerun with --force to replace them");
    if (has_contents)
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().filename() != ".lock") fs::remove_all(e.path());
}

void refuse_existing_file(const fs::path& path, bool force) {
    if (fs::exists(path) && !force)
        throw DataError("output file " + path.string() +
                        " already exists; rerun with --force to replace it");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Adds the experiment config hash to a checkpoint written by the training
// layer, which only knows the network topology.
void stamp_checkpoint(const std::string& path, const std::string& hash) {
    CheckpointData data = load_checkpoint(path);
    nlohmann::json meta = nlohmann::json::parse(data.meta_json);
    meta["config_hash"] = hash;
    data.meta_json = meta.dump();
    save_checkpoint(path, data);
}

struct Cli {
    std::string config_path;
    std::string out;
    bool force = false;
    uint64_t seed = 0;
    bool deterministic = true;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* det_opt = nullptr;

    // subcommand arguments
    int cases = 0;
    double split = 0.0;
    std::string schedule;
    int epochs = 0;
    double lr = 0.0;
    double threshold = 0.0;
    CLI::Option* cases_opt = nullptr;
    CLI::Option* split_opt = nullptr;
    CLI::Option* epochs_opt = nullptr;
    CLI::Option* lr_opt = nullptr;
    CLI::Option* thr_opt = nullptr;
    std::string samples_dir;
    std::vector<std::string> checkpoints;
    std::string label;
    double liver_threshold = 0.5;
    std::string eval_split = "test";
    std::string dump_dir;
    std::vector<std::string> report_files;
    std::string volume_path, gt_path, pred_path;
    std::vector<int> zs;

    ExperimentConfig resolve_config() const {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        if (seed_opt->count()) cfg.seed = seed;
        if (det_opt->count()) cfg.deterministic = deterministic;
        if (cases_opt->count()) cfg.phantom_cases = cases;
        if (split_opt->count()) cfg.split_fraction = split;
        if (epochs_opt->count()) cfg.epochs_per_stage = epochs;
        if (lr_opt->count()) cfg.base_lr = lr;
        if (thr_opt->count()) cfg.threshold = threshold;
        if (!schedule.empty()) cfg.schedule = schedule_kind_from_name(schedule);
        validate(cfg);
        return cfg;
    }
};

void cmd_phantom(const Cli& args) {
    ExperimentConfig cfg = args.resolve_config();
    std::string hash = config_hash(cfg);
    fs::path out = args.out.empty() ? fs::path(cfg.data_root) : fs::path(args.out);
    DirLock lock;
    claim_output_dir(out, args.force, lock);

    DatasetManifest manifest = generate_dataset(cfg.phantom, cfg.phantom_cases, cfg.seed,
                                                cfg.split_fraction, out.string(), hash);
    write_text_file(out / "config.json", config_to_json(cfg));
    int train = 0, test = 0;
    for (const CaseEntry& e : manifest.cases) (e.split == "train" ? train : test) += 1;
    std::cout << "wrote " << manifest.cases.size() << " cases (" << train << " train, " << test
              << " test), seed " << cfg.seed << ", config " << hash << "\n";
    std::cout << "manifest: " << (out / "dataset.json").string() << "\n";
}

void cmd_preprocess(const Cli& args) {
    ExperimentConfig cfg = args.resolve_config();
    std::string hash = config_hash(cfg);
    fs::path manifest_path = fs::path(cfg.data_root) / "dataset.json";
    DatasetManifest manifest = read_manifest(manifest_path.string());

    fs::path out = args.out.empty() ? fs::path(cfg.output_root) / "samples" : fs::path(args.out);
    DirLock lock;
    claim_output_dir(out, args.force, lock);

    PreprocessCounts counts =
        preprocess_dataset(manifest, manifest_path.string(), cfg.preprocess, out.string(),
                           cfg.seed, hash);
    write_text_file(out / "config.json", config_to_json(cfg));
    std::cout << "samples: " << counts.whole << " whole, " << counts.positive << " positive, "
              << counts.negative << " negative patches of " << counts.patch_dims.d << "x"
              << counts.patch_dims.h << "x" << counts.patch_dims.w << "\n";
    std::cout << "store: " << out.string() << "\n";
}

void print_stage_summary(const TrainLog& log) {
    for (const StageBoundary& b : log.boundaries) {
        double last_dice = 0.0;
        for (const EpochRecord& e : log.epochs)
            if (e.stage == b.stage) last_dice = e.train_dice;
        std::cout << "  stage " << b.stage << " (" << data_source_name(b.data) << "): "
                  << b.step_end << " steps total, train dice " << last_dice << ", "
                  << b.wall_seconds << " s\n";
    }
}

void cmd_train(const Cli& args) {
    ExperimentConfig cfg = args.resolve_config();
    std::string hash = config_hash(cfg);
    std::string kind = schedule_kind_name(cfg.schedule);
    fs::path out = args.out.empty()
                       ? fs::path(cfg.output_root) / (kind + "_seed" + std::to_string(cfg.seed))
                       : fs::path(args.out);
    DirLock lock;
    claim_output_dir(out, args.force, lock);
    write_text_file(out / "config.json", config_to_json(cfg));

    std::vector<std::string> checkpoint_paths;
    if (cfg.schedule == ScheduleKind::cascade) {
        fs::path manifest_path = fs::path(cfg.data_root) / "dataset.json";
        DatasetManifest manifest = read_manifest(manifest_path.string());
        CascadeResult r = run_cascade(cfg.network, manifest, manifest_path.string(),
                                      cfg.preprocess, cfg.base_lr, cfg.epochs_per_stage, cfg.seed,
                                      out.string());
        r.liver_log.config_hash = hash;
        r.tumor_log.config_hash = hash;
        write_train_log(r.liver_log, (out / "train_log_liver.json").string());
        write_train_log(r.tumor_log, (out / "train_log_tumor.json").string());
        checkpoint_paths = r.checkpoint_paths;
        std::cout << "cascade liver stages:\n";
        print_stage_summary(r.liver_log);
        std::cout << "cascade tumor stages:\n";
        print_stage_summary(r.tumor_log);
    } else {
        fs::path store_dir = args.samples_dir.empty() ? fs::path(cfg.output_root) / "samples"
                                                      : fs::path(args.samples_dir);
        SampleStore store = read_sample_store(store_dir.string());
        Schedule schedule = make_schedule(cfg.schedule, cfg.base_lr, cfg.epochs_per_stage);
        ScheduleResult r = run_schedule(cfg.network, schedule, store, cfg.seed, out.string());
        r.log.config_hash = hash;
        write_train_log(r.log, (out / "train_log.json").string());
        checkpoint_paths = r.checkpoint_paths;
        std::cout << kind << " stages:\n";
        print_stage_summary(r.log);
    }
    for (const std::string& p : checkpoint_paths) {
        stamp_checkpoint(p, hash);
        std::cout << "checkpoint: " << p << "\n";
    }
    std::cout << "run directory: " << out.string() << " (seed " << cfg.seed << ", config " << hash
              << ")\n";
}

void check_topology(const nlohmann::json& meta, const NetworkConfig& expected,
                    const std::string& path) {
    if (!meta.contains("network"))
        throw DataError("checkpoint " + path + " has no embedded network topology");
    NetworkConfig stored = network_config_from_json(meta.at("network").dump());
    if (network_config_to_json(stored) != network_config_to_json(expected))
        throw DataError("checkpoint " + path +
                        " topology does not match the configured network; its metadata says " +
                        meta.at("network").dump());
}

void cmd_eval(const Cli& args) {
    ExperimentConfig cfg = args.resolve_config();
    std::string hash = config_hash(cfg);
    fs::path manifest_path = fs::path(cfg.data_root) / "dataset.json";
    DatasetManifest manifest = read_manifest(manifest_path.string());

    std::vector<CheckpointData> datas;
    std::vector<nlohmann::json> metas;
    for (const std::string& p : args.checkpoints) {
        datas.push_back(load_checkpoint(p));
        try {
            metas.push_back(nlohmann::json::parse(datas.back().meta_json));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("checkpoint " + p + " has malformed metadata: " + e.what());
        }
        check_topology(metas.back(), cfg.network, p);
    }

    const int wd = cfg.preprocess.subvol_depth;
    const int ws = cfg.preprocess.subvol_stride;
    std::string label = args.label;
    uint64_t model_seed = cfg.seed;
    std::vector<Mask> dumped;
    Predictor predict;
    if (datas.size() == 1) {
        Network net = network_from_checkpoint(datas[0]);
        if (label.empty()) label = metas[0].value("schedule", "model");
        model_seed = metas[0].value("seed", cfg.seed);
        predict = [net, wd, ws, thr = cfg.threshold](const Volume& v) {
            return predict_mask(net, v, wd, ws, thr);
        };
    } else if (datas.size() == 2) {
        CascadeModel model;
        bool have_liver = false, have_tumor = false;
        for (size_t i = 0; i < 2; ++i) {
            std::string role = metas[i].value("role", "");
            if (role == "liver") {
                model.liver_net = network_from_checkpoint(datas[i]);
                model_seed = metas[i].value("seed", cfg.seed);
                have_liver = true;
            } else if (role == "tumor") {
                model.tumor_net = network_from_checkpoint(datas[i]);
                have_tumor = true;
            }
        }
        if (!have_liver || !have_tumor)
            throw DataError(
                "evaluating a cascade needs one liver and one tumor checkpoint; check the "
                "metadata roles");
        model.liver_threshold = args.liver_threshold;
        if (label.empty()) label = "cascade";
        predict = [model, wd, ws, thr = cfg.threshold](const Volume& v) {
            return cascade_predict(model, v, wd, ws, thr);
        };
    } else {
        throw DataError("--checkpoint takes one network, or two for a cascade; got " +
                        std::to_string(datas.size()));
    }

    Predictor wrapped = predict;
    if (!args.dump_dir.empty())
        wrapped = [&dumped, predict](const Volume& v) {
            Mask m = predict(v);
            dumped.push_back(m);
            return m;
        };

    MetricsReport report =
        evaluate_split(manifest, manifest_path.string(), cfg.preprocess, args.eval_split, wrapped);

    fs::path out = args.out.empty()
                       ? fs::path(cfg.output_root) /
                             ("report_" + label + "_seed" + std::to_string(model_seed) + ".json")
                       : fs::path(args.out);
    refuse_existing_file(out, args.force);
    write_text_file(out, report_to_json(report, label, model_seed, hash));

    if (!args.dump_dir.empty()) {
        DirLock dump_lock;
        claim_output_dir(args.dump_dir, args.force, dump_lock);
        size_t i = 0;
        for (const CaseEntry& e : manifest.cases) {
            if (e.split != args.eval_split) continue;
            Volume v = read_raw_volume(manifest_relative(manifest_path.string(), e.volume_path));
            Mask m = read_raw_mask(manifest_relative(manifest_path.string(), e.mask_path));
            auto [gv, gm] = preprocess_case(v, m, cfg.preprocess);
            fs::path base = fs::path(args.dump_dir) / e.id;
            write_raw(gv, base.string() + "_input.raw");
            write_raw(binarize(gm, 2), base.string() + "_gt.raw");
            write_raw(dumped.at(i), base.string() + "_pred.raw");
            ++i;
        }
        std::cout << "dumped " << i << " preprocessed cases to " << args.dump_dir << "\n";
    }

    LabeledReport row{label, model_seed, hash, report};
    std::cout << render_report_table({row});
    std::cout << "mean prediction time " << report.mean_wall_seconds << " s/case over "
              << report.cases.size() << " cases\n";
    std::cout << "report: " << out.string() << "\n";
}

void cmd_report(const Cli& args) {
    std::vector<LabeledReport> rows;
    for (const std::string& p : args.report_files) rows.push_back(report_from_json(read_text_file(p)));
    std::string table = render_report_table(rows);
    std::cout << table;
    if (!args.out.empty()) {
        refuse_existing_file(args.out, args.force);
        write_text_file(args.out, table);
        std::cout << "table: " << args.out << "\n";
    }
}

void cmd_slices(const Cli& args) {
    ExperimentConfig cfg = args.resolve_config();
    std::string hash = config_hash(cfg);
    Volume v = read_raw_volume(args.volume_path);
    Mask gt = read_raw_mask(args.gt_path);
    Mask pred = read_raw_mask(args.pred_path);
    fs::path out = args.out.empty() ? fs::path(cfg.output_root) / "slices" : fs::path(args.out);
    DirLock lock;
    claim_output_dir(out, args.force, lock);
    std::string comment = "seed " + std::to_string(cfg.seed) + " config " + hash;
    auto paths = export_slices(out.string(), v, gt, pred, args.zs, comment);
    std::cout << "wrote " << paths.size() << " images to " << out.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Curriculum-trained volumetric tumor segmentation toolkit"};
    app.require_subcommand(1);
    Cli args;

    app.add_option("--config", args.config_path, "experiment config JSON; flags override it");
    args.seed_opt = app.add_option("--seed", args.seed, "global rng seed");
    args.det_opt =
        app.add_flag("--deterministic,!--no-deterministic", args.deterministic,
                     "record the determinism contract in outputs (on by default)");
    app.add_option("--out", args.out, "output directory (or file for eval/report)");
    app.add_flag("--force", args.force, "replace existing output");

    std::vector<std::string> schedule_names;
    for (ScheduleKind k : all_schedule_kinds()) {
        std::string n = schedule_kind_name(k);
        schedule_names.push_back(n);
        std::replace(n.begin(), n.end(), '_', '-');
        if (n != schedule_names.back()) schedule_names.push_back(n);
    }

    CLI::App* phantom = app.add_subcommand("phantom", "generate a synthetic dataset");
    args.cases_opt = phantom->add_option("--cases", args.cases, "number of phantom cases");
    args.split_opt = phantom->add_option("--split", args.split, "training fraction");

    CLI::App* preprocess =
        app.add_subcommand("preprocess", "build the training sample store from a dataset");

    CLI::App* train = app.add_subcommand("train", "train under a schedule");
    train->add_option("--schedule", args.schedule, "training schedule")
        ->check(CLI::IsMember(schedule_names));
    args.epochs_opt = train->add_option("--epochs", args.epochs, "epochs per stage");
    args.lr_opt = train->add_option("--lr", args.lr, "stage-one learning rate");
    train->add_option("--samples", args.samples_dir, "sample store directory");

    CLI::App* eval = app.add_subcommand("eval", "evaluate checkpoints on a dataset split");
    eval->add_option("--checkpoint", args.checkpoints, "checkpoint file (twice for a cascade)")
        ->required()
        ->expected(1, 2);
    eval->add_option("--label", args.label, "row label for the report");
    args.thr_opt = eval->add_option("--threshold", args.threshold, "probability threshold");
    eval->add_option("--liver-threshold", args.liver_threshold,
                     "cascade first-stage probability threshold");
    eval->add_option("--split", args.eval_split, "dataset split to score")
        ->check(CLI::IsMember({"train", "test"}));
    eval->add_option("--dump-cases", args.dump_dir,
                     "also write preprocessed input/gt/pred raw files here");

    CLI::App* report = app.add_subcommand("report", "render a comparison table from reports");
    report->add_option("reports", args.report_files, "metrics report JSON files")
        ->required()
        ->expected(-1);

    CLI::App* slices = app.add_subcommand("slices", "export qualitative slice images");
    slices->add_option("--volume", args.volume_path, "preprocessed volume raw file")->required();
    slices->add_option("--gt", args.gt_path, "ground-truth mask raw file")->required();
    slices->add_option("--pred", args.pred_path, "predicted mask raw file")->required();
    slices->add_option("--z", args.zs, "slice indices")->required();

    for (CLI::App* sub : {phantom, preprocess, train, eval, report, slices}) sub->fallthrough();

    try {
        app.parse(argc, argv);
        if (phantom->parsed()) cmd_phantom(args);
        if (preprocess->parsed()) cmd_preprocess(args);
        if (train->parsed()) cmd_train(args);
        if (eval->parsed()) cmd_eval(args);
        if (report->parsed()) cmd_report(args);
        if (slices->parsed()) cmd_slices(args);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
