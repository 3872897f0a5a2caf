#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curriseg/config.hpp"
#include "curriseg/network.hpp"
#include "curriseg/preprocess.hpp"
#include "curriseg/volume_io.hpp"

namespace curriseg {

enum class DataSource { whole, patch };
const char* data_source_name(DataSource s);

struct StageSpec {
    DataSource data_source = DataSource::whole;
    double learning_rate = 1e-3;
    int batch_size = 1;  // whole stages 1, patch stages 2
    int epochs = 1;
    double pos_neg_ratio = 2.0;  // patch stages: positives per negative
};

struct Schedule {
    ScheduleKind kind = ScheduleKind::naive;
    std::vector<StageSpec> stages;
};

// Stage learning rates decay by a factor of 10 per stage from base_lr.
// The cascade trains two separate networks and has no single-network
// schedule; asking for one is an error.
Schedule make_schedule(ScheduleKind kind, double base_lr, int epochs_per_stage);

struct StepRecord {
    int step = 0;  // 1-based, global across stages
    int stage = 0;
    double loss = 0.0;
};

struct EpochRecord {
    int stage = 0;
    int epoch = 0;              // 1-based within the stage
    double train_dice = 0.0;    // 1 - mean step loss of the epoch
    double val_dice = -1.0;     // -1 when no validation samples exist
};

struct StageBoundary {
    int stage = 0;
    int step_end = 0;  // last global step of the stage
    double wall_seconds = 0.0;
    DataSource data = DataSource::whole;
};

struct TrainLog {
    std::string schedule;
    uint64_t seed = 0;
    std::string config_hash;
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    std::vector<StageBoundary> boundaries;
};

std::string train_log_to_json(const TrainLog& log);
TrainLog train_log_from_json(const std::string& text);
void write_train_log(const TrainLog& log, const std::string& path);
TrainLog read_train_log(const std::string& path);

// Per-stage RNG stream; depends on the stage index but not the schedule
// kind, so shared stage prefixes across schedules replay identically.
uint64_t stage_seed(uint64_t seed, int stage_index);

// One stage of optimization: epochs x shuffled minibatches of soft-dice
// steps with a fresh Adam state at the stage's learning rate. Weights update
// in place; steps, epoch summaries, and the boundary append to log. Samples
// must all match the stage's data source; the pool must be non-empty and
// share one grid size. Validation (may be empty) is scored per epoch without
// gradients.
void train_stage(Network& net, const std::vector<const Sample*>& pool,
                 const std::vector<const Sample*>& val, const StageSpec& stage, uint64_t seed,
                 int stage_index, TrainLog& log);

struct ScheduleResult {
    Network net;
    TrainLog log;
    std::vector<std::string> checkpoint_paths;  // one per stage boundary
};

// Full schedule run: fresh network from (config, seed), stages executed in
// order on pools drawn from the store (10% of train cases held out for
// validation scoring). Patch stages mix all positives with the first
// ceil(positives / ratio) negatives. When checkpoint_dir is non-empty a
// checkpoint named <kind>_stage<i>.ckpt is written at each stage boundary
// with the network config embedded.
ScheduleResult run_schedule(const NetworkConfig& ncfg, const Schedule& schedule,
                            const SampleStore& store, uint64_t seed,
                            const std::string& checkpoint_dir = "");

struct CascadeModel {
    Network liver_net;
    Network tumor_net;
    double liver_threshold = 0.5;
    int pad_voxels = 4;  // liver crop margin before divisibility rounding
};

struct CascadeResult {
    CascadeModel model;
    TrainLog liver_log;
    TrainLog tumor_log;
    std::vector<std::string> checkpoint_paths;
};

// Two-network baseline: the first network learns the liver on whole inputs,
// the second learns the tumor on liver-bounding-box crops of each training
// case (ground-truth boxes, padded and rounded up to the network's
// divisibility). Cases without liver voxels are skipped with a warning.
CascadeResult run_cascade(const NetworkConfig& ncfg, const DatasetManifest& manifest,
                          const std::string& manifest_path, const PreprocessConfig& pcfg,
                          double base_lr, int epochs_per_stage, uint64_t seed,
                          const std::string& checkpoint_dir = "");

// Liver pass, crop to the predicted liver box (padded + rounded), tumor pass
// on the crop, paste back. Tumor voxels outside the crop region are zero by
// construction; an empty liver prediction yields an empty tumor mask.
Mask cascade_predict(const CascadeModel& model, const Volume& v, int window_depth,
                     int window_stride, double threshold);

// Rebuild a network from a checkpoint written by run_schedule or
// run_cascade: the topology comes from the embedded metadata, the weights
// from the stored parameters. Missing or mismatched parameters are errors.
Network network_from_checkpoint(const struct CheckpointData& data);

}  // namespace curriseg
