#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "curriseg/volume.hpp"

namespace curriseg {

struct OverlapCounts {
    int64_t pred = 0, gt = 0, inter = 0, uni = 0;
};

// Nonzero voxels are foreground. Dims must match.
OverlapCounts overlap_counts(const Mask& pred, const Mask& gt);

// 2|P∩G| / (|P|+|G|); both masks empty counts as perfect agreement (1).
double dice_per_case(const Mask& pred, const Mask& gt);
// 1 − |P∩G|/|P∪G|; both empty → 0.
double voe(const Mask& pred, const Mask& gt);
// (|P|−|G|)/|G|, signed; errors when the ground truth is empty (evaluate_case
// records a degenerate flag instead of calling this).
double rvd(const Mask& pred, const Mask& gt);

// Dice on counts pooled across cases before the ratio.
double dice_global(const std::vector<OverlapCounts>& cases);

// Foreground voxels with at least one background 6-neighbor; out-of-grid
// counts as background.
struct SurfaceSet {
    std::vector<std::array<int, 3>> voxels;  // (z,y,x)
    Spacing spacing;
};
SurfaceSet surface_voxels(const Mask& mask);

// Nearest-neighbor distances in mm, both directions; size |sp| + |sg|.
// Either side empty → error (callers flag the case degenerate instead).
std::vector<double> symmetric_surface_distances(const SurfaceSet& sp, const SurfaceSet& sg);

double assd(const std::vector<double>& distances);
double msd(const std::vector<double>& distances);
double rmsd(const std::vector<double>& distances);

struct CaseMetrics {
    std::string case_id;
    OverlapCounts counts;
    double dc = 0.0;
    double voe = 0.0;
    double rvd = 0.0;
    bool rvd_degenerate = false;  // ground truth empty
    double assd_mm = 0.0, msd_mm = 0.0, rmsd_mm = 0.0;
    bool surface_degenerate = false;  // either surface empty
    double wall_seconds = 0.0;  // prediction time, report-only
};

CaseMetrics evaluate_case(const Mask& pred, const Mask& gt, const std::string& case_id = "");

struct MetricsReport {
    std::vector<CaseMetrics> cases;
    double mean_dc = 0.0;
    double dice_global = 0.0;
    double mean_voe = 0.0;
    double mean_rvd = 0.0, mean_abs_rvd = 0.0;
    int rvd_cases = 0;  // non-degenerate count behind the RVD means
    double mean_assd_mm = 0.0, mean_msd_mm = 0.0, mean_rmsd_mm = 0.0;
    int surface_cases = 0;
    double mean_wall_seconds = 0.0;
};

MetricsReport aggregate(std::vector<CaseMetrics> cases);

// JSON serialization for eval output files.
std::string report_to_json(const MetricsReport& report, const std::string& label,
                           uint64_t seed, const std::string& config_hash);
struct LabeledReport {
    std::string label;
    uint64_t seed = 0;
    std::string config_hash;
    MetricsReport report;
};
LabeledReport report_from_json(const std::string& text);

// One row per report, columns exactly DC, DG, VOE, RVD, ASSD, MSD, RMSD.
// Best DC and DG are starred when several rows are present; degenerate
// aggregates render as a dash.
std::string render_report_table(const std::vector<LabeledReport>& rows);

}  // namespace curriseg
