#include "curriseg/curriculum.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "curriseg/checkpoint.hpp"
#include "curriseg/errors.hpp"
#include "curriseg/log.hpp"
#include "curriseg/ops.hpp"
#include "curriseg/optimizer.hpp"

namespace curriseg {

namespace {

constexpr double kDiceSmooth = 1.0;

DataSource data_source_from(const std::string& name) {
    if (name == "whole") return DataSource::whole;
    if (name == "patch") return DataSource::patch;
    throw DataError("unknown data source \"" + name + "\"");
}

bool kind_matches(SampleKind kind, DataSource source) {
    if (source == DataSource::whole) return kind == SampleKind::whole;
    return kind == SampleKind::patch_positive || kind == SampleKind::patch_negative;
}

Tensor image_batch(const std::vector<const Sample*>& picks) {
    Dims d = picks[0]->image.dims;
    Tensor x = Tensor::zeros({int(picks.size()), 1, d.d, d.h, d.w});
    double* out = x.data();
    const int64_t n = d.numel();
    for (size_t i = 0; i < picks.size(); ++i) {
        const std::vector<float>& vals = picks[i]->image.values;
        for (int64_t j = 0; j < n; ++j) out[i * n + j] = vals[j];
    }
    return x;
}

Tensor target_batch(const std::vector<const Sample*>& picks) {
    Dims d = picks[0]->target.dims;
    Tensor t = Tensor::zeros({int(picks.size()), 1, d.d, d.h, d.w});
    double* out = t.data();
    const int64_t n = d.numel();
    for (size_t i = 0; i < picks.size(); ++i) {
        const std::vector<uint8_t>& labels = picks[i]->target.labels;
        for (int64_t j = 0; j < n; ++j) out[i * n + j] = labels[j] ? 1.0 : 0.0;
    }
    return t;
}

double sample_loss(const Network& net, const Sample& s) {
    NoGradGuard guard;
    std::vector<const Sample*> one{&s};
    Tensor pred = forward(net, image_batch(one));
    return ops::soft_dice_loss(pred, target_batch(one), kDiceSmooth).item();
}

struct CropBox {
    std::array<int, 3> start;
    Dims extent;
};

// Pad the box, round each extent up to the divisibility multiple, and place
// the window centered on the padded box, preferring positions inside the
// grid (spill is zero-padded by the crop).
CropBox liver_crop_box(const BoundingBox& bb, Dims grid, int pad, int multiple) {
    std::array<int, 3> start{};
    std::array<int, 3> ext{};
    for (int a = 0; a < 3; ++a) {
        int lo = bb.lo[a] - pad;
        int want = bb.hi[a] + pad - lo + 1;
        ext[a] = (want + multiple - 1) / multiple * multiple;
        int s = lo - (ext[a] - want) / 2;
        int dim = grid[a];
        start[a] = std::clamp(s, std::min(0, dim - ext[a]), std::max(0, dim - ext[a]));
    }
    return {start, Dims{ext[0], ext[1], ext[2]}};
}

nlohmann::json network_meta(const NetworkConfig& cfg) {
    return nlohmann::json::parse(network_config_to_json(cfg));
}

std::string save_stage_checkpoint(const std::string& dir, const std::string& name,
                                  const Network& net, nlohmann::json meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string path = (fs::path(dir) / (name + ".ckpt")).string();
    CheckpointData data;
    meta["network"] = network_meta(net.config);
    data.meta_json = meta.dump();
    data.params = net.params;
    save_checkpoint(path, data);
    return path;
}

}  // namespace

const char* data_source_name(DataSource s) {
    return s == DataSource::whole ? "whole" : "patch";
}

Schedule make_schedule(ScheduleKind kind, double base_lr, int epochs_per_stage) {
    if (!(base_lr > 0.0)) throw DataError("base_lr must be positive");
    if (epochs_per_stage <= 0) throw DataError("epochs_per_stage must be positive");
    auto whole = [&](double lr) { return StageSpec{DataSource::whole, lr, 1, epochs_per_stage}; };
    auto patch = [&](double lr) { return StageSpec{DataSource::patch, lr, 2, epochs_per_stage}; };
    Schedule s;
    s.kind = kind;
    switch (kind) {
        case ScheduleKind::three_stage:
            s.stages = {whole(base_lr), patch(base_lr / 10.0), whole(base_lr / 100.0)};
            break;
        case ScheduleKind::naive:
            s.stages = {whole(base_lr)};
            break;
        case ScheduleKind::whole_to_patch:
            s.stages = {whole(base_lr), patch(base_lr / 10.0)};
            break;
        case ScheduleKind::patch_to_whole:
            s.stages = {patch(base_lr), whole(base_lr / 10.0)};
            break;
        case ScheduleKind::cascade:
            throw DataError("the cascade trains two networks; run_cascade builds its own stages");
    }
    return s;
}

std::string train_log_to_json(const TrainLog& log) {
    nlohmann::json j;
    j["schedule"] = log.schedule;
    j["seed"] = log.seed;
    j["config_hash"] = log.config_hash;
    nlohmann::json steps = nlohmann::json::array();
    for (const StepRecord& s : log.steps)
        steps.push_back({{"step", s.step}, {"stage", s.stage}, {"loss", s.loss}});
    j["steps"] = std::move(steps);
    nlohmann::json epochs = nlohmann::json::array();
    for (const EpochRecord& e : log.epochs)
        epochs.push_back({{"stage", e.stage},
                          {"epoch", e.epoch},
                          {"train_dice", e.train_dice},
                          {"val_dice", e.val_dice}});
    j["epochs"] = std::move(epochs);
    nlohmann::json bounds = nlohmann::json::array();
    for (const StageBoundary& b : log.boundaries)
        bounds.push_back({{"stage", b.stage},
                          {"step_end", b.step_end},
                          {"wall_seconds", b.wall_seconds},
                          {"data", data_source_name(b.data)}});
    j["boundaries"] = std::move(bounds);
    return j.dump(2) + "\n";
}

TrainLog train_log_from_json(const std::string& text) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        TrainLog log;
        log.schedule = j.at("schedule").get<std::string>();
        log.seed = j.at("seed").get<uint64_t>();
        log.config_hash = j.value("config_hash", std::string());
        for (const auto& e : j.at("steps"))
            log.steps.push_back({e.at("step").get<int>(), e.at("stage").get<int>(),
                                 e.at("loss").get<double>()});
        for (const auto& e : j.at("epochs"))
            log.epochs.push_back({e.at("stage").get<int>(), e.at("epoch").get<int>(),
                                  e.at("train_dice").get<double>(),
                                  e.at("val_dice").get<double>()});
        for (const auto& e : j.at("boundaries"))
            log.boundaries.push_back({e.at("stage").get<int>(), e.at("step_end").get<int>(),
                                      e.at("wall_seconds").get<double>(),
                                      data_source_from(e.at("data").get<std::string>())});
        return log;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed train log: ") + e.what());
    }
}

void write_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write train log " + path);
    out << train_log_to_json(log);
}

TrainLog read_train_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open train log " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return train_log_from_json(buf.str());
}

uint64_t stage_seed(uint64_t seed, int stage_index) {
    return seed ^ (0x9e3779b97f4a7c15ull * uint64_t(stage_index + 1));
}

void train_stage(Network& net, const std::vector<const Sample*>& pool,
                 const std::vector<const Sample*>& val, const StageSpec& stage, uint64_t seed,
                 int stage_index, TrainLog& log) {
    if (!(stage.learning_rate > 0.0)) throw DataError("stage learning rate must be positive");
    if (stage.batch_size <= 0 || stage.epochs <= 0)
        throw DataError("stage batch size and epochs must be positive");
    if (pool.empty()) throw DataError("training pool for stage " + std::to_string(stage_index) +
                                      " is empty");
    for (const Sample* s : pool)
        if (!kind_matches(s->kind, stage.data_source))
            throw DataError(std::string(sample_kind_name(s->kind)) + " sample from case " +
                            s->case_id + " in a " + data_source_name(stage.data_source) +
                            " stage");
    if (stage.batch_size > 1)
        for (const Sample* s : pool)
            if (!(s->image.dims == pool[0]->image.dims))
                throw DataError("batched stages need one common sample size, got " +
                                dims_str(s->image.dims) + " and " + dims_str(pool[0]->image.dims));

    OptimizerState opt;
    opt.hyper.lr = stage.learning_rate;
    std::mt19937_64 rng(seed);
    std::vector<int> order(pool.size());
    std::iota(order.begin(), order.end(), 0);

    auto start_time = std::chrono::steady_clock::now();
    for (int epoch = 1; epoch <= stage.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (size_t at = 0; at < order.size(); at += stage.batch_size) {
            std::vector<const Sample*> picks;
            for (size_t i = at; i < std::min(order.size(), at + stage.batch_size); ++i)
                picks.push_back(pool[order[i]]);
            Tensor pred = forward(net, image_batch(picks));
            Tensor loss = ops::soft_dice_loss(pred, target_batch(picks), kDiceSmooth);
            backward(loss);
            optimizer_step(net.params, opt);
            zero_gradients(net.params);
            double value = loss.item();
            loss_sum += value;
            ++batches;
            log.steps.push_back({int(log.steps.size()) + 1, stage_index, value});
        }
        EpochRecord rec;
        rec.stage = stage_index;
        rec.epoch = epoch;
        rec.train_dice = 1.0 - loss_sum / batches;
        if (!val.empty()) {
            double vsum = 0.0;
            for (const Sample* s : val) vsum += sample_loss(net, *s);
            rec.val_dice = 1.0 - vsum / double(val.size());
        }
        log.epochs.push_back(rec);
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time)
                      .count();
    log.boundaries.push_back({stage_index, int(log.steps.size()), wall, stage.data_source});
}

namespace {

struct Pools {
    std::vector<const Sample*> whole, patch, val;
};

// Hold the last tenth of the training cases (sorted ids) out of every
// training pool; they only feed the per-epoch validation score.
Pools split_pools(const SampleStore& store) {
    std::set<std::string> ids;
    for (const Sample& s : store.samples)
        if (s.kind == SampleKind::whole) ids.insert(s.case_id);
    std::vector<std::string> sorted(ids.begin(), ids.end());
    size_t val_count = sorted.size() / 10;
    std::set<std::string> val_ids(sorted.end() - val_count, sorted.end());

    Pools pools;
    std::vector<const Sample*> positives, negatives;
    for (const Sample& s : store.samples) {
        bool held_out = val_ids.count(s.case_id) > 0;
        if (s.kind == SampleKind::whole) {
            (held_out ? pools.val : pools.whole).push_back(&s);
        } else if (!held_out) {
            (s.kind == SampleKind::patch_positive ? positives : negatives).push_back(&s);
        }
    }
    // 2:1 positive:negative mix, negatives taken in store order
    size_t take = std::min(negatives.size(), (positives.size() + 1) / 2);
    pools.patch = positives;
    pools.patch.insert(pools.patch.end(), negatives.begin(), negatives.begin() + take);
    if (take < (positives.size() + 1) / 2 && !positives.empty())
        log_warn("patch pool short of negatives: wanted " +
                 std::to_string((positives.size() + 1) / 2) + ", have " +
                 std::to_string(negatives.size()));
    return pools;
}

}  // namespace

ScheduleResult run_schedule(const NetworkConfig& ncfg, const Schedule& schedule,
                            const SampleStore& store, uint64_t seed,
                            const std::string& checkpoint_dir) {
    if (schedule.stages.empty()) throw DataError("schedule has no stages");
    Pools pools = split_pools(store);

    ScheduleResult result;
    result.net = build_network(ncfg, seed);
    result.log.schedule = schedule_kind_name(schedule.kind);
    result.log.seed = seed;

    for (size_t i = 0; i < schedule.stages.size(); ++i) {
        const StageSpec& stage = schedule.stages[i];
        const auto& pool = stage.data_source == DataSource::whole ? pools.whole : pools.patch;
        train_stage(result.net, pool, pools.val, stage, stage_seed(seed, int(i)), int(i) + 1,
                    result.log);
        if (!checkpoint_dir.empty()) {
            std::string name =
                std::string(schedule_kind_name(schedule.kind)) + "_stage" + std::to_string(i + 1);
            nlohmann::json meta{{"schedule", schedule_kind_name(schedule.kind)},
                                {"stage", int(i) + 1},
                                {"seed", seed}};
            result.checkpoint_paths.push_back(
                save_stage_checkpoint(checkpoint_dir, name, result.net, std::move(meta)));
        }
    }
    return result;
}

CascadeResult run_cascade(const NetworkConfig& ncfg, const DatasetManifest& manifest,
                          const std::string& manifest_path, const PreprocessConfig& pcfg,
                          double base_lr, int epochs_per_stage, uint64_t seed,
                          const std::string& checkpoint_dir) {
    validate(pcfg);
    if (!(base_lr > 0.0)) throw DataError("base_lr must be positive");
    if (epochs_per_stage <= 0) throw DataError("epochs_per_stage must be positive");

    const int multiple = 1 << (ncfg.levels - 1);
    std::vector<Sample> liver_wholes;
    std::vector<Sample> tumor_crops;
    for (const CaseEntry& e : manifest.cases) {
        if (e.split != "train") continue;
        Volume v = read_raw_volume(manifest_relative(manifest_path, e.volume_path));
        Mask m = read_raw_mask(manifest_relative(manifest_path, e.mask_path));
        if (count(m.labels.begin(), m.labels.end(), uint8_t(0)) == int64_t(m.labels.size())) {
            log_warn("case " + e.id + " has no liver voxels, skipped by the cascade");
            continue;
        }

        Volume rv = resample(v, pcfg.target_spacing);
        Mask rm = resample(m, pcfg.target_spacing);
        Volume wv = window_transform(rv, pcfg.window_lo, pcfg.window_hi);
        auto [cv, cm] = effective_range(wv, rm, pcfg.z_margin);
        auto wholes = generate_subvolumes(cv, cm, pcfg, e.id, 1);
        std::move(wholes.begin(), wholes.end(), std::back_inserter(liver_wholes));

        auto [gv, gm] = preprocess_case(v, m, pcfg);
        Mask liver = binarize(gm, 1);
        auto bb = bounding_box(liver);
        if (!bb) continue;  // unreachable given the check above, kept for safety
        CropBox box = liver_crop_box(*bb, gv.dims, 4, multiple);
        Sample crop;
        crop.image = crop_with_pad(gv, box.start, box.extent);
        crop.target = crop_with_pad(binarize(gm, 2), box.start, box.extent);
        crop.kind = SampleKind::whole;
        crop.case_id = e.id;
        crop.origin[0] = box.start[0];
        crop.origin[1] = box.start[1];
        crop.origin[2] = box.start[2];
        tumor_crops.push_back(std::move(crop));
    }
    if (liver_wholes.empty()) throw DataError("dataset has no usable training cases");

    CascadeResult result;

    SampleStore liver_store;
    liver_store.seed = seed;
    liver_store.samples = std::move(liver_wholes);
    ScheduleResult liver = run_schedule(ncfg, make_schedule(ScheduleKind::naive, base_lr,
                                                            epochs_per_stage),
                                        liver_store, seed);
    result.model.liver_net = std::move(liver.net);
    result.liver_log = std::move(liver.log);
    result.liver_log.schedule = "cascade_liver";

    const uint64_t tumor_seed = seed ^ 0x6c62272e07bb0142ull;
    result.model.tumor_net = build_network(ncfg, tumor_seed);
    result.tumor_log.schedule = "cascade_tumor";
    result.tumor_log.seed = tumor_seed;
    std::vector<const Sample*> crop_pool;
    for (const Sample& s : tumor_crops) crop_pool.push_back(&s);
    StageSpec tumor_stage{DataSource::whole, base_lr, 1, epochs_per_stage};
    train_stage(result.model.tumor_net, crop_pool, {}, tumor_stage, stage_seed(tumor_seed, 0), 1,
                result.tumor_log);

    if (!checkpoint_dir.empty()) {
        nlohmann::json meta{{"schedule", "cascade"}, {"role", "liver"}, {"seed", seed}};
        result.checkpoint_paths.push_back(
            save_stage_checkpoint(checkpoint_dir, "cascade_liver", result.model.liver_net, meta));
        meta["role"] = "tumor";
        meta["seed"] = tumor_seed;
        result.checkpoint_paths.push_back(
            save_stage_checkpoint(checkpoint_dir, "cascade_tumor", result.model.tumor_net, meta));
    }
    return result;
}

Network network_from_checkpoint(const CheckpointData& data) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(data.meta_json);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint metadata: ") + e.what());
    }
    if (!meta.contains("network"))
        throw DataError("checkpoint metadata carries no network topology");
    NetworkConfig cfg = network_config_from_json(meta["network"].dump());
    Network net = build_network(cfg, 0);
    if (net.params.size() != data.params.size())
        throw DataError("checkpoint holds " + std::to_string(data.params.size()) +
                        " parameters, topology expects " + std::to_string(net.params.size()));
    for (const Parameter& p : data.params) {
        auto it = net.index.find(p.name);
        if (it == net.index.end())
            throw DataError("checkpoint parameter " + p.name + " not in the topology");
        Tensor& dst = net.params[it->second].tensor;
        if (dst.shape() != p.tensor.shape())
            throw DataError("checkpoint parameter " + p.name + " has shape " +
                            shape_str(p.tensor.shape()) + ", topology expects " +
                            shape_str(dst.shape()));
        dst.values() = p.tensor.values();
    }
    return net;
}

Mask cascade_predict(const CascadeModel& model, const Volume& v, int window_depth,
                     int window_stride, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw DataError("threshold must lie strictly between 0 and 1");
    Volume liver_probs = predict_probabilities(model.liver_net, v, window_depth, window_stride);
    Mask liver = Mask::create(v.dims, v.spacing, 0);
    for (int64_t i = 0; i < v.dims.numel(); ++i)
        liver.labels[i] = liver_probs.values[i] >= model.liver_threshold ? 1 : 0;

    Mask out = Mask::create(v.dims, v.spacing, 0);
    auto bb = bounding_box(liver);
    if (!bb) return out;

    const int multiple = 1 << (model.tumor_net.config.levels - 1);
    CropBox box = liver_crop_box(*bb, v.dims, model.pad_voxels, multiple);
    Volume crop = crop_with_pad(v, box.start, box.extent);
    Volume probs = predict_probabilities(model.tumor_net, crop, crop.dims.d, crop.dims.d);
    for (int z = 0; z < crop.dims.d; ++z) {
        int vz = box.start[0] + z;
        if (vz < 0 || vz >= v.dims.d) continue;
        for (int y = 0; y < crop.dims.h; ++y) {
            int vy = box.start[1] + y;
            if (vy < 0 || vy >= v.dims.h) continue;
            for (int x = 0; x < crop.dims.w; ++x) {
                int vx = box.start[2] + x;
                if (vx < 0 || vx >= v.dims.w) continue;
                out.at(vz, vy, vx) = probs.at(z, y, x) >= threshold ? 1 : 0;
            }
        }
    }
    return out;
}

}  // namespace curriseg
