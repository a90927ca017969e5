#pragma once

#include <cstdint>
#include <vector>

namespace iconvec {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    bool operator==(const Vec2&) const = default;
};

double dot(Vec2 a, Vec2 b);
double norm(Vec2 a);
double dist(Vec2 a, Vec2 b);

// 2D affine transform: p -> (a*x + c*y + e, b*x + d*y + f). Column-major
// coefficient order matches the SVG matrix() attribute.
struct Affine {
    double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

    Vec2 apply(Vec2 p) const { return {a * p.x + c * p.y + e, b * p.x + d * p.y + f}; }
    // this * o, i.e. o is applied first.
    Affine concat(const Affine& o) const;

    static Affine translate(double tx, double ty);
    static Affine scale(double sx, double sy);
    static Affine rotate_deg(double deg);
};

enum class CmdKind : uint8_t { MoveTo, LineTo, CubicBezier };

// One drawing instruction. MoveTo/LineTo carry one point, CubicBezier three
// (two control points then the end point).
struct Command {
    CmdKind kind = CmdKind::MoveTo;
    Vec2 p[3];

    static Command move_to(Vec2 p0);
    static Command line_to(Vec2 p0);
    static Command cubic(Vec2 c1, Vec2 c2, Vec2 end);

    int point_count() const { return kind == CmdKind::CubicBezier ? 3 : 1; }
    Vec2 endpoint() const { return kind == CmdKind::CubicBezier ? p[2] : p[0]; }
    bool operator==(const Command&) const = default;
};

// Implicit start point of every path is (0,0); a path need not begin with
// MoveTo. Interior MoveTo starts a new subpath.
struct Path {
    std::vector<Command> commands;
    bool operator==(const Path&) const = default;
};

struct SvgScript {
    std::vector<Path> paths;
    double viewbox_w = 1.0;
    double viewbox_h = 1.0;

    bool empty() const { return paths.empty(); }
    bool operator==(const SvgScript&) const = default;
    // Geometry-only comparison; ignores the recorded source viewbox.
    bool same_geometry(const SvgScript& o) const { return paths == o.paths; }
};

using Polyline = std::vector<Vec2>;

// De Casteljau evaluation of a cubic Bezier at t in [0,1].
Vec2 cubic_point(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double t);

// Adaptive flattening of one cubic. Appends points after `from` (which is
// assumed already emitted). Flatness test: max control-point distance to the
// p0-p3 chord <= tol.
void flatten_cubic(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double tol, Polyline& out);

// Flattens a path into one polyline per subpath; deviation from the true
// curves is <= tol. The pen starts at (0,0), so a path that begins with a
// drawing command yields a polyline prefixed with (0,0).
std::vector<Polyline> flatten(const Path& path, double tol);

// Points sampled on the path outlines of `script`, used by the Chamfer
// metric. Coordinates stay in the script's (normalized) space.
struct OutlineSample {
    std::vector<Vec2> points;
};

// m points uniform by arclength over all subpath outlines combined, placed
// at arclengths (k + 0.5) * total / m (midpoint rule). Throws GeometryError
// when the script has no outline length.
OutlineSample arclength_sample(const SvgScript& script, int m, double flatten_tol = 1e-3);

// Control-point offset such that four cubics approximate a circle quadrant.
// Minimax value: max radial deviation 1.96e-4*r (the classic 4/3*tan(pi/8)
// would give 2.73e-4*r).
inline constexpr double kCircleKappa = 0.551915024494;

}  // namespace iconvec
