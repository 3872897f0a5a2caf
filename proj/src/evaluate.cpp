#include "curriseg/evaluate.hpp"

#include <chrono>

#include "curriseg/errors.hpp"

namespace curriseg {

MetricsReport evaluate_split(const DatasetManifest& manifest, const std::string& manifest_path,
                             const PreprocessConfig& pcfg, const std::string& split,
                             const Predictor& predict) {
    std::vector<CaseMetrics> cases;
    for (const CaseEntry& e : manifest.cases) {
        if (e.split != split) continue;
        Volume v = read_raw_volume(manifest_relative(manifest_path, e.volume_path));
        Mask m = read_raw_mask(manifest_relative(manifest_path, e.mask_path));
        auto [gv, gm] = preprocess_case(v, m, pcfg);

        auto t0 = std::chrono::steady_clock::now();
        Mask pred = predict(gv);
        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        CaseMetrics cm = evaluate_case(pred, binarize(gm, 2), e.id);
        cm.wall_seconds = wall;
        cases.push_back(std::move(cm));
    }
    if (cases.empty()) throw DataError("no cases in split \"" + split + "\"");
    return aggregate(std::move(cases));
}

}  // namespace curriseg
