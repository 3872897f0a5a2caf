#pragma once

#include <string>
#include <vector>

#include "curriseg/volume.hpp"

namespace curriseg {

// One z slice as a binary portable pixmap (P6): voxel values clamped to
// [0,1] become gray, overlay voxels (when given) paint pure green. The
// optional comment goes into a header comment line, so output bytes stay a
// pure function of the inputs. Throws on a z outside the volume or an
// overlay grid mismatch.
std::vector<unsigned char> render_slice_ppm(const Volume& v, const Mask* overlay, int z,
                                            const std::string& comment = "");

// Fig-2-style trio per requested z: z<idx>_input.ppm (plain),
// z<idx>_gt.ppm, z<idx>_pred.ppm (overlaid). Returns the written paths.
std::vector<std::string> export_slices(const std::string& dir, const Volume& v, const Mask& gt,
                                       const Mask& pred, const std::vector<int>& zs,
                                       const std::string& comment = "");

}  // namespace curriseg
