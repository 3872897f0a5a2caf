#pragma once

#include <functional>
#include <string>

#include "curriseg/metrics.hpp"
#include "curriseg/preprocess.hpp"
#include "curriseg/volume_io.hpp"

namespace curriseg {

// Binary tumor prediction on a preprocessed grid.
using Predictor = std::function<Mask(const Volume&)>;

// Runs the preprocessing chain on every case of the chosen split, applies
// the predictor, and scores against the tumor-binarized ground truth on the
// same grid. The recorded per-case wall time covers the predictor call only.
MetricsReport evaluate_split(const DatasetManifest& manifest, const std::string& manifest_path,
                             const PreprocessConfig& pcfg, const std::string& split,
                             const Predictor& predict);

}  // namespace curriseg
