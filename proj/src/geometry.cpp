#include "iconvec/geometry.h"

#include <algorithm>
#include <cmath>

#include "iconvec/errors.h"

namespace iconvec {

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }
double dist(Vec2 a, Vec2 b) { return norm(a - b); }

Affine Affine::concat(const Affine& o) const {
    return {a * o.a + c * o.b,      b * o.a + d * o.b,
            a * o.c + c * o.d,      b * o.c + d * o.d,
            a * o.e + c * o.f + e,  b * o.e + d * o.f + f};
}

Affine Affine::translate(double tx, double ty) { return {1, 0, 0, 1, tx, ty}; }
Affine Affine::scale(double sx, double sy) { return {sx, 0, 0, sy, 0, 0}; }
Affine Affine::rotate_deg(double deg) {
    double r = deg * M_PI / 180.0;
    return {std::cos(r), std::sin(r), -std::sin(r), std::cos(r), 0, 0};
}

Command Command::move_to(Vec2 p0) {
    Command c;
    c.kind = CmdKind::MoveTo;
    c.p[0] = p0;
    return c;
}

Command Command::line_to(Vec2 p0) {
    Command c;
    c.kind = CmdKind::LineTo;
    c.p[0] = p0;
    return c;
}

Command Command::cubic(Vec2 c1, Vec2 c2, Vec2 end) {
    Command c;
    c.kind = CmdKind::CubicBezier;
    c.p[0] = c1;
    c.p[1] = c2;
    c.p[2] = end;
    return c;
}

Vec2 cubic_point(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double t) {
    Vec2 a = p0 * (1 - t) + p1 * t;
    Vec2 b = p1 * (1 - t) + p2 * t;
    Vec2 c = p2 * (1 - t) + p3 * t;
    Vec2 ab = a * (1 - t) + b * t;
    Vec2 bc = b * (1 - t) + c * t;
    return ab * (1 - t) + bc * t;
}

namespace {

// Distance from q to the segment p0-p1; falls back to point distance when
// the chord is degenerate.
double dist_to_chord(Vec2 q, Vec2 p0, Vec2 p1) {
    Vec2 d = p1 - p0;
    double len2 = dot(d, d);
    if (len2 <= 0.0) return dist(q, p0);
    double t = std::clamp(dot(q - p0, d) / len2, 0.0, 1.0);
    return dist(q, p0 + d * t);
}

void flatten_cubic_rec(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double tol, int depth, Polyline& out) {
    double flat = std::max(dist_to_chord(p1, p0, p3), dist_to_chord(p2, p0, p3));
    if (flat <= tol || depth >= 24) {
        out.push_back(p3);
        return;
    }
    Vec2 p01 = (p0 + p1) * 0.5;
    Vec2 p12 = (p1 + p2) * 0.5;
    Vec2 p23 = (p2 + p3) * 0.5;
    Vec2 p012 = (p01 + p12) * 0.5;
    Vec2 p123 = (p12 + p23) * 0.5;
    Vec2 mid = (p012 + p123) * 0.5;
    flatten_cubic_rec(p0, p01, p012, mid, tol, depth + 1, out);
    flatten_cubic_rec(mid, p123, p23, p3, tol, depth + 1, out);
}

}  // namespace

void flatten_cubic(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double tol, Polyline& out) {
    flatten_cubic_rec(p0, p1, p2, p3, tol, 0, out);
}

std::vector<Polyline> flatten(const Path& path, double tol) {
    std::vector<Polyline> result;
    Vec2 cur{0, 0};
    Polyline open;
    auto begin_draw = [&] {
        if (open.empty()) open.push_back(cur);
    };
    auto close_subpath = [&] {
        if (open.size() >= 2) result.push_back(std::move(open));
        open.clear();
    };
    for (const Command& c : path.commands) {
        switch (c.kind) {
            case CmdKind::MoveTo:
                close_subpath();
                cur = c.p[0];
                break;
            case CmdKind::LineTo:
                begin_draw();
                open.push_back(c.p[0]);
                cur = c.p[0];
                break;
            case CmdKind::CubicBezier:
                begin_draw();
                flatten_cubic(cur, c.p[0], c.p[1], c.p[2], tol, open);
                cur = c.p[2];
                break;
        }
    }
    close_subpath();
    return result;
}

OutlineSample arclength_sample(const SvgScript& script, int m, double flatten_tol) {
    if (m < 1) throw RangeError("arclength_sample: m must be >= 1");
    if (script.empty()) throw GeometryError("arclength_sample: empty script");

    // Concatenated segment list over every subpath of every path.
    struct Seg {
        Vec2 a, b;
        double len;
    };
    std::vector<Seg> segs;
    double total = 0.0;
    for (const Path& p : script.paths) {
        for (const Polyline& line : flatten(p, flatten_tol)) {
            for (size_t i = 0; i + 1 < line.size(); ++i) {
                double len = dist(line[i], line[i + 1]);
                if (len <= 0.0) continue;
                segs.push_back({line[i], line[i + 1], len});
                total += len;
            }
        }
    }
    if (segs.empty() || total <= 0.0)
        throw GeometryError("arclength_sample: script has zero outline length");

    OutlineSample out;
    out.points.reserve(m);
    size_t seg = 0;
    double seg_start = 0.0;
    for (int k = 0; k < m; ++k) {
        double s = (k + 0.5) * total / m;
        while (seg + 1 < segs.size() && seg_start + segs[seg].len < s) {
            seg_start += segs[seg].len;
            ++seg;
        }
        double t = std::clamp((s - seg_start) / segs[seg].len, 0.0, 1.0);
        out.points.push_back(segs[seg].a + (segs[seg].b - segs[seg].a) * t);
    }
    return out;
}

}  // namespace iconvec
