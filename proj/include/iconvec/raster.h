#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iconvec/geometry.h"

namespace iconvec {

enum class FillRule { nonzero, evenodd };

// Binary occupancy grid over the unit square. Pixel (row, col) covers the
// cell [col/R,(col+1)/R) x [row/R,(row+1)/R); a pixel is set iff its center
// is inside the filled geometry.
struct RasterMask {
    int resolution = 0;
    std::vector<uint8_t> bits;  // row-major, 0/1

    static RasterMask empty(int resolution) {
        return {resolution, std::vector<uint8_t>(size_t(resolution) * resolution, 0)};
    }
    uint8_t at(int row, int col) const { return bits[size_t(row) * resolution + col]; }
    size_t popcount() const;
};

// Scanline fill of the flattened paths (flatten tol = 0.25/R). Each path is
// filled under `rule` on its own subpaths; paths are composited by union.
RasterMask rasterize(const SvgScript& script, int resolution, FillRule rule = FillRule::nonzero);

// |a and b| / |a or b|; 1.0 when both masks are empty. Throws ShapeError on
// resolution mismatch.
double iou(const RasterMask& a, const RasterMask& b);

// PGM P5 export, maxval 255, foreground 255.
std::string mask_to_pgm(const RasterMask& mask);
void write_pgm(const RasterMask& mask, const std::string& path);

}  // namespace iconvec
