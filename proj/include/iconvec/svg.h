#pragma once

#include <string>
#include <vector>

#include "iconvec/geometry.h"

namespace iconvec {

// Parses an SVG 1.1 path-data string and lowers every command to absolute
// MoveTo / LineTo / CubicBezier:
//   H/V  -> LineTo
//   Q/T  -> CubicBezier by degree elevation
//   S    -> CubicBezier with the reflected control point
//   A    -> CubicBezier pieces split at quadrant boundaries
//   Z    -> LineTo back to the subpath start
// Throws ParseError on malformed numbers (with byte offset) and
// UnsupportedFeatureError on unknown command letters.
std::vector<Command> parse_path_data(const std::string& d);

// Basic shapes, pre-validated by the caller.
std::vector<Command> rect_to_commands(double x, double y, double w, double h,
                                      double rx = 0.0, double ry = 0.0);
std::vector<Command> circle_to_commands(Vec2 center, double r);
std::vector<Command> ellipse_to_commands(Vec2 center, double rx, double ry);
std::vector<Command> line_to_commands(Vec2 a, Vec2 b);
std::vector<Command> polyline_to_commands(const std::vector<Vec2>& pts, bool close);

// Parses a whole SVG document and lowers it to the canonical form: M/L/C
// commands only, transforms applied, coordinates normalized to [0,1] by the
// viewBox (clamped), style discarded, paths in canonical order. Does not
// enforce path/command count limits; filtering is the dataset's job.
SvgScript canonicalize(const std::string& svg_text);

// Sorts paths by (y, x) of the first command endpoint, then command count
// descending; ties keep their relative order.
void canonical_sort(SvgScript& script);

// Canonical output form: one <path> per Path, absolute M/L/C only, six
// decimal places, viewBox="0 0 1 1", black fill.
std::string write_svg(const SvgScript& script);

}  // namespace iconvec
