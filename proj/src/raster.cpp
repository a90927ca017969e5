#include "iconvec/raster.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "iconvec/errors.h"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace iconvec {

size_t RasterMask::popcount() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
}

namespace {

struct Edge {
    double x0, y0, x1, y1;  // y0 < y1 always
    int dir;                // +1 when the source edge pointed downward in y
};

// Subpaths are treated as closed polygons, matching SVG fill semantics for
// unclosed subpaths.
void collect_edges(const std::vector<Polyline>& lines, std::vector<Edge>& edges) {
    for (const Polyline& line : lines) {
        size_t n = line.size();
        for (size_t i = 0; i < n; ++i) {
            Vec2 a = line[i];
            Vec2 b = line[(i + 1) % n];
            if (a.y == b.y) continue;
            if (a.y < b.y)
                edges.push_back({a.x, a.y, b.x, b.y, +1});
            else
                edges.push_back({b.x, b.y, a.x, a.y, -1});
        }
    }
}

void fill_path(const Path& path, int R, FillRule rule, RasterMask& mask) {
    std::vector<Edge> edges;
    collect_edges(flatten(path, 0.25 / R), edges);
    if (edges.empty()) return;

#pragma omp parallel for schedule(static) if (R >= 64 && !omp_in_parallel())
    for (int row = 0; row < R; ++row) {
        double y = (row + 0.5) / R;
        // (crossing x, winding delta), half-open in y: [y0, y1).
        std::vector<std::pair<double, int>> xs;
        for (const Edge& e : edges) {
            if (y < e.y0 || y >= e.y1) continue;
            double x = e.x0 + (y - e.y0) * (e.x1 - e.x0) / (e.y1 - e.y0);
            xs.emplace_back(x, e.dir);
        }
        if (xs.empty()) continue;
        std::sort(xs.begin(), xs.end());
        int winding = 0;
        for (size_t k = 0; k < xs.size(); ++k) {
            winding += xs[k].second;
            bool inside = rule == FillRule::nonzero ? winding != 0 : (k % 2) == 0;
            if (!inside || k + 1 >= xs.size()) continue;
            // Pixel centers (col+0.5)/R in [xs[k], xs[k+1]).
            int lo = static_cast<int>(std::ceil(xs[k].first * R - 0.5));
            int hi = static_cast<int>(std::ceil(xs[k + 1].first * R - 0.5)) - 1;
            lo = std::max(lo, 0);
            hi = std::min(hi, R - 1);
            for (int col = lo; col <= hi; ++col) mask.bits[size_t(row) * R + col] = 1;
        }
    }
}

}  // namespace

RasterMask rasterize(const SvgScript& script, int resolution, FillRule rule) {
    if (resolution < 8) throw ShapeError("rasterize: resolution must be >= 8");
    RasterMask mask = RasterMask::empty(resolution);
    for (const Path& path : script.paths) fill_path(path, resolution, rule, mask);
    return mask;
}

double iou(const RasterMask& a, const RasterMask& b) {
    if (a.resolution != b.resolution) throw ShapeError("iou: resolution mismatch");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] & b.bits[i];
        uni += a.bits[i] | b.bits[i];
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::string mask_to_pgm(const RasterMask& mask) {
    std::string out = "P5\n" + std::to_string(mask.resolution) + " " +
                      std::to_string(mask.resolution) + "\n255\n";
    out.reserve(out.size() + mask.bits.size());
    for (uint8_t b : mask.bits) out.push_back(b ? char(255) : char(0));
    return out;
}

void write_pgm(const RasterMask& mask, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    std::string data = mask_to_pgm(mask);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace iconvec
