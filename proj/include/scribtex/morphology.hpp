#pragma once

#include <cstdint>
#include <vector>

#include "scribtex/image.hpp"

namespace scribtex {

/// Binary dilation with a (2r+1)^2 square. Out-of-bounds samples are ignored.
TexelMask dilate_square(const TexelMask& m, int radius);
/// Binary erosion with a (2r+1)^2 square. Out-of-bounds samples are ignored,
/// so closing stays extensive at the image border.
TexelMask erode_square(const TexelMask& m, int radius);
/// dilate then erode, `radius` 1 is the 3x3 kernel.
TexelMask close_square(const TexelMask& m, int radius = 1);

/// Erosion by the disk {(dx,dy) : dx^2 + dy^2 <= r^2}. Out-of-bounds counts as
/// unset: a texel survives only if the whole disk lies inside the mask.
TexelMask erode_disk(const TexelMask& m, int radius);

/// 8-connected component labels; -1 for unset texels. Labels are assigned in
/// raster order of each component's first texel.
struct Components {
    std::vector<int> labels;
    int count = 0;
};
Components connected_components(const TexelMask& m);

/// Fill masked pixels of an RGB(A) image by averaging known neighbours, peeling
/// inward from the mask boundary, then relaxing the filled values. Pixels
/// outside the mask are returned unchanged. With no known pixels at all, the
/// masked area takes the mean of the input.
Image diffusion_fill(const Image& img, const TexelMask& fill, int relax_iterations = 16);

}  // namespace scribtex
