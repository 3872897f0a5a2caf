#include "curriseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "curriseg/errors.hpp"
#include "curriseg/log.hpp"

namespace curriseg {

namespace {

void require_aligned(const Mask& pred, const Mask& gt) {
    if (!(pred.dims == gt.dims))
        throw DataError("prediction dims " + dims_str(pred.dims) + " and ground-truth dims " +
                        dims_str(gt.dims) + " do not match");
}

}  // namespace

OverlapCounts overlap_counts(const Mask& pred, const Mask& gt) {
    require_aligned(pred, gt);
    OverlapCounts c;
    for (int64_t i = 0; i < pred.dims.numel(); ++i) {
        bool p = pred.labels[i] != 0;
        bool g = gt.labels[i] != 0;
        c.pred += p;
        c.gt += g;
        c.inter += p && g;
        c.uni += p || g;
    }
    return c;
}

double dice_per_case(const Mask& pred, const Mask& gt) {
    OverlapCounts c = overlap_counts(pred, gt);
    if (c.pred + c.gt == 0) return 1.0;
    return 2.0 * double(c.inter) / double(c.pred + c.gt);
}

double voe(const Mask& pred, const Mask& gt) {
    OverlapCounts c = overlap_counts(pred, gt);
    if (c.uni == 0) return 0.0;
    return 1.0 - double(c.inter) / double(c.uni);
}

double rvd(const Mask& pred, const Mask& gt) {
    OverlapCounts c = overlap_counts(pred, gt);
    if (c.gt == 0) throw DataError("relative volume difference undefined for empty ground truth");
    return double(c.pred - c.gt) / double(c.gt);
}

double dice_global(const std::vector<OverlapCounts>& cases) {
    if (cases.empty()) throw DataError("dice_global needs at least one case");
    int64_t inter = 0, total = 0;
    for (const OverlapCounts& c : cases) {
        inter += c.inter;
        total += c.pred + c.gt;
    }
    if (total == 0) return 1.0;
    return 2.0 * double(inter) / double(total);
}

SurfaceSet surface_voxels(const Mask& mask) {
    SurfaceSet s;
    s.spacing = mask.spacing;
    const Dims d = mask.dims;
    auto fg = [&](int z, int y, int x) {
        if (z < 0 || z >= d.d || y < 0 || y >= d.h || x < 0 || x >= d.w) return false;
        return mask.at(z, y, x) != 0;
    };
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                if (mask.at(z, y, x) == 0) continue;
                if (!fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) || !fg(z, y + 1, x) ||
                    !fg(z, y, x - 1) || !fg(z, y, x + 1))
                    s.voxels.push_back({z, y, x});
            }
    return s;
}

namespace {

void nearest_distances(const SurfaceSet& from, const SurfaceSet& to, std::vector<double>& out) {
    double sz = from.spacing.z, sy = from.spacing.y, sx = from.spacing.x;
    size_t base = out.size();
    out.resize(base + from.voxels.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(from.voxels.size()); ++i) {
        const auto& p = from.voxels[i];
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to.voxels) {
            double dz = (p[0] - q[0]) * sz;
            double dy = (p[1] - q[1]) * sy;
            double dx = (p[2] - q[2]) * sx;
            double d2 = dz * dz + dy * dy + dx * dx;
            if (d2 < best) best = d2;
        }
        out[base + i] = std::sqrt(best);
    }
}

}  // namespace

std::vector<double> symmetric_surface_distances(const SurfaceSet& sp, const SurfaceSet& sg) {
    if (sp.voxels.empty() || sg.voxels.empty())
        throw DataError("surface distances need two non-empty surfaces");
    if (!(sp.spacing == sg.spacing))
        throw DataError("surface sets disagree on voxel spacing");
    std::vector<double> out;
    out.reserve(sp.voxels.size() + sg.voxels.size());
    nearest_distances(sp, sg, out);
    nearest_distances(sg, sp, out);
    return out;
}

double assd(const std::vector<double>& distances) {
    if (distances.empty()) throw DataError("empty distance multiset");
    double sum = 0.0;
    for (double d : distances) sum += d;
    return sum / double(distances.size());
}

double msd(const std::vector<double>& distances) {
    if (distances.empty()) throw DataError("empty distance multiset");
    return *std::max_element(distances.begin(), distances.end());
}

double rmsd(const std::vector<double>& distances) {
    if (distances.empty()) throw DataError("empty distance multiset");
    double sum = 0.0;
    for (double d : distances) sum += d * d;
    return std::sqrt(sum / double(distances.size()));
}

CaseMetrics evaluate_case(const Mask& pred, const Mask& gt, const std::string& case_id) {
    require_aligned(pred, gt);
    if (!(pred.spacing == gt.spacing))
        throw DataError("prediction and ground truth disagree on voxel spacing");
    CaseMetrics m;
    m.case_id = case_id;
    m.counts = overlap_counts(pred, gt);
    m.dc = dice_per_case(pred, gt);
    m.voe = voe(pred, gt);
    if (m.counts.gt == 0) {
        m.rvd_degenerate = true;
    } else {
        m.rvd = double(m.counts.pred - m.counts.gt) / double(m.counts.gt);
    }
    SurfaceSet sp = surface_voxels(pred);
    SurfaceSet sg = surface_voxels(gt);
    if (sp.voxels.empty() || sg.voxels.empty()) {
        m.surface_degenerate = true;
        if (!case_id.empty())
            log_warn("case " + case_id + ": empty surface, distance metrics skipped");
    } else {
        std::vector<double> d = symmetric_surface_distances(sp, sg);
        m.assd_mm = assd(d);
        m.msd_mm = msd(d);
        m.rmsd_mm = rmsd(d);
    }
    return m;
}

MetricsReport aggregate(std::vector<CaseMetrics> cases) {
    if (cases.empty()) throw DataError("cannot aggregate zero cases");
    MetricsReport r;
    std::vector<OverlapCounts> counts;
    for (const CaseMetrics& c : cases) {
        r.mean_dc += c.dc;
        r.mean_voe += c.voe;
        r.mean_wall_seconds += c.wall_seconds;
        counts.push_back(c.counts);
        if (!c.rvd_degenerate) {
            r.mean_rvd += c.rvd;
            r.mean_abs_rvd += std::abs(c.rvd);
            ++r.rvd_cases;
        }
        if (!c.surface_degenerate) {
            r.mean_assd_mm += c.assd_mm;
            r.mean_msd_mm += c.msd_mm;
            r.mean_rmsd_mm += c.rmsd_mm;
            ++r.surface_cases;
        }
    }
    double n = double(cases.size());
    r.mean_dc /= n;
    r.mean_voe /= n;
    r.mean_wall_seconds /= n;
    r.dice_global = dice_global(counts);
    if (r.rvd_cases > 0) {
        r.mean_rvd /= r.rvd_cases;
        r.mean_abs_rvd /= r.rvd_cases;
    }
    if (r.surface_cases > 0) {
        r.mean_assd_mm /= r.surface_cases;
        r.mean_msd_mm /= r.surface_cases;
        r.mean_rmsd_mm /= r.surface_cases;
    }
    r.cases = std::move(cases);
    return r;
}

std::string report_to_json(const MetricsReport& report, const std::string& label,
                           uint64_t seed, const std::string& config_hash) {
    nlohmann::json j;
    j["label"] = label;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["aggregate"] = {{"dc", report.mean_dc},
                      {"dg", report.dice_global},
                      {"voe", report.mean_voe},
                      {"rvd", report.mean_rvd},
                      {"abs_rvd", report.mean_abs_rvd},
                      {"rvd_cases", report.rvd_cases},
                      {"assd_mm", report.mean_assd_mm},
                      {"msd_mm", report.mean_msd_mm},
                      {"rmsd_mm", report.mean_rmsd_mm},
                      {"surface_cases", report.surface_cases},
                      {"wall_seconds", report.mean_wall_seconds}};
    nlohmann::json list = nlohmann::json::array();
    for (const CaseMetrics& c : report.cases)
        list.push_back({{"case", c.case_id},
                        {"pred_voxels", c.counts.pred},
                        {"gt_voxels", c.counts.gt},
                        {"inter_voxels", c.counts.inter},
                        {"union_voxels", c.counts.uni},
                        {"dc", c.dc},
                        {"voe", c.voe},
                        {"rvd", c.rvd},
                        {"rvd_degenerate", c.rvd_degenerate},
                        {"assd_mm", c.assd_mm},
                        {"msd_mm", c.msd_mm},
                        {"rmsd_mm", c.rmsd_mm},
                        {"surface_degenerate", c.surface_degenerate},
                        {"wall_seconds", c.wall_seconds}});
    j["cases"] = std::move(list);
    return j.dump(2) + "\n";
}

LabeledReport report_from_json(const std::string& text) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        LabeledReport out;
        out.label = j.at("label").get<std::string>();
        out.seed = j.at("seed").get<uint64_t>();
        out.config_hash = j.at("config_hash").get<std::string>();
        MetricsReport& r = out.report;
        const auto& a = j.at("aggregate");
        r.mean_dc = a.at("dc").get<double>();
        r.dice_global = a.at("dg").get<double>();
        r.mean_voe = a.at("voe").get<double>();
        r.mean_rvd = a.at("rvd").get<double>();
        r.mean_abs_rvd = a.at("abs_rvd").get<double>();
        r.rvd_cases = a.at("rvd_cases").get<int>();
        r.mean_assd_mm = a.at("assd_mm").get<double>();
        r.mean_msd_mm = a.at("msd_mm").get<double>();
        r.mean_rmsd_mm = a.at("rmsd_mm").get<double>();
        r.surface_cases = a.at("surface_cases").get<int>();
        r.mean_wall_seconds = a.at("wall_seconds").get<double>();
        for (const auto& e : j.at("cases")) {
            CaseMetrics c;
            c.case_id = e.at("case").get<std::string>();
            c.counts.pred = e.at("pred_voxels").get<int64_t>();
            c.counts.gt = e.at("gt_voxels").get<int64_t>();
            c.counts.inter = e.at("inter_voxels").get<int64_t>();
            c.counts.uni = e.at("union_voxels").get<int64_t>();
            c.dc = e.at("dc").get<double>();
            c.voe = e.at("voe").get<double>();
            c.rvd = e.at("rvd").get<double>();
            c.rvd_degenerate = e.at("rvd_degenerate").get<bool>();
            c.assd_mm = e.at("assd_mm").get<double>();
            c.msd_mm = e.at("msd_mm").get<double>();
            c.rmsd_mm = e.at("rmsd_mm").get<double>();
            c.surface_degenerate = e.at("surface_degenerate").get<bool>();
            c.wall_seconds = e.at("wall_seconds").get<double>();
            r.cases.push_back(std::move(c));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed metrics report: ") + e.what());
    }
}

std::string render_report_table(const std::vector<LabeledReport>& rows) {
    if (rows.empty()) throw DataError("no reports to render");
    size_t best_dc = 0, best_dg = 0;
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].report.mean_dc > rows[best_dc].report.mean_dc) best_dc = i;
        if (rows[i].report.dice_global > rows[best_dg].report.dice_global) best_dg = i;
    }
    size_t label_w = 8;
    for (const auto& r : rows) label_w = std::max(label_w, r.label.size());

    std::string out;
    char buf[64];
    auto cell = [&](const std::string& text) {
        std::snprintf(buf, sizeof buf, "%9s", text.c_str());
        out += buf;
    };
    auto num = [&](double v, bool starred, bool degenerate) {
        if (degenerate) {
            cell("-");
            return;
        }
        char nb[32];
        std::snprintf(nb, sizeof nb, starred ? "%.3f*" : "%.3f", v);
        cell(nb);
    };

    std::snprintf(buf, sizeof buf, "%-*s", int(label_w), "approach");
    out += buf;
    for (const char* h : {"DC", "DG", "VOE", "RVD", "ASSD", "MSD", "RMSD"}) cell(h);
    out += "\n";
    bool mark = rows.size() > 1;
    for (size_t i = 0; i < rows.size(); ++i) {
        const MetricsReport& r = rows[i].report;
        std::snprintf(buf, sizeof buf, "%-*s", int(label_w), rows[i].label.c_str());
        out += buf;
        num(r.mean_dc, mark && i == best_dc, false);
        num(r.dice_global, mark && i == best_dg, false);
        num(r.mean_voe, false, false);
        num(r.mean_rvd, false, r.rvd_cases == 0);
        num(r.mean_assd_mm, false, r.surface_cases == 0);
        num(r.mean_msd_mm, false, r.surface_cases == 0);
        num(r.mean_rmsd_mm, false, r.surface_cases == 0);
        out += "\n";
    }
    return out;
}

}  // namespace curriseg
