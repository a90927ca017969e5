#include "iconvec/svg.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <optional>

#include "iconvec/errors.h"
#include "iconvec/xml.h"

namespace iconvec {

namespace {

// ---------------------------------------------------------------------------
// Path data scanning

struct Scanner {
    const std::string& s;
    size_t pos = 0;

    bool eof() const { return pos >= s.size(); }

    void skip_sep() {
        while (!eof() && (std::isspace(static_cast<unsigned char>(s[pos])) || s[pos] == ','))
            ++pos;
    }

    bool number_ahead() {
        skip_sep();
        if (eof()) return false;
        char c = s[pos];
        return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+';
    }

    double number() {
        skip_sep();
        size_t begin = pos;
        if (eof()) throw ParseError("path data: expected number", pos);
        if (s[pos] == '+' || s[pos] == '-') ++pos;
        size_t digits = 0;
        while (!eof() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos, ++digits;
        if (!eof() && s[pos] == '.') {
            ++pos;
            while (!eof() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos, ++digits;
        }
        if (digits == 0) throw ParseError("path data: malformed number", begin);
        if (!eof() && (s[pos] == 'e' || s[pos] == 'E')) {
            ++pos;
            if (!eof() && (s[pos] == '+' || s[pos] == '-')) ++pos;
            size_t exp_digits = 0;
            while (!eof() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos, ++exp_digits;
            if (exp_digits == 0) throw ParseError("path data: malformed exponent", begin);
        }
        return std::stod(s.substr(begin, pos - begin));
    }

    // Arc flags are single characters and may be packed without separators.
    int flag() {
        skip_sep();
        if (eof() || (s[pos] != '0' && s[pos] != '1'))
            throw ParseError("path data: expected arc flag 0/1", pos);
        return s[pos++] - '0';
    }
};

// ---------------------------------------------------------------------------
// Arc lowering: endpoint parameterization -> center, then one cubic per
// piece split at quadrant boundaries of the ellipse parameter.

void append_unit_arc_cubic(std::vector<Command>& out, Vec2 center, double rx, double ry,
                           double phi, double t0, double t1) {
    double alpha = 4.0 / 3.0 * std::tan((t1 - t0) / 4.0);
    Vec2 p0{std::cos(t0), std::sin(t0)};
    Vec2 p3{std::cos(t1), std::sin(t1)};
    Vec2 c1 = p0 + Vec2{-std::sin(t0), std::cos(t0)} * alpha;
    Vec2 c2 = p3 - Vec2{-std::sin(t1), std::cos(t1)} * alpha;
    Affine to_world = Affine::translate(center.x, center.y)
                          .concat(Affine::rotate_deg(phi * 180.0 / M_PI))
                          .concat(Affine::scale(rx, ry));
    out.push_back(Command::cubic(to_world.apply(c1), to_world.apply(c2), to_world.apply(p3)));
}

void arc_to_cubics(std::vector<Command>& out, Vec2 from, double rx, double ry, double phi_deg,
                   int large_arc, int sweep, Vec2 to) {
    if (from == to) return;
    rx = std::abs(rx);
    ry = std::abs(ry);
    if (rx == 0.0 || ry == 0.0) {
        out.push_back(Command::line_to(to));
        return;
    }
    double phi = phi_deg * M_PI / 180.0;
    double cp = std::cos(phi), sp = std::sin(phi);
    // Rotate into the ellipse frame.
    double dx = (from.x - to.x) / 2.0, dy = (from.y - to.y) / 2.0;
    double x1p = cp * dx + sp * dy;
    double y1p = -sp * dx + cp * dy;
    double lam = (x1p * x1p) / (rx * rx) + (y1p * y1p) / (ry * ry);
    if (lam > 1.0) {
        double s = std::sqrt(lam);
        rx *= s;
        ry *= s;
    }
    double num = rx * rx * ry * ry - rx * rx * y1p * y1p - ry * ry * x1p * x1p;
    double den = rx * rx * y1p * y1p + ry * ry * x1p * x1p;
    double co = std::sqrt(std::max(0.0, num / den));
    if (large_arc == sweep) co = -co;
    double cxp = co * rx * y1p / ry;
    double cyp = -co * ry * x1p / rx;
    Vec2 center{cp * cxp - sp * cyp + (from.x + to.x) / 2.0,
                sp * cxp + cp * cyp + (from.y + to.y) / 2.0};
    auto angle = [](double ux, double uy) { return std::atan2(uy, ux); };
    double t1 = angle((x1p - cxp) / rx, (y1p - cyp) / ry);
    double t2 = angle((-x1p - cxp) / rx, (-y1p - cyp) / ry);
    double dt = t2 - t1;
    if (!sweep && dt > 0) dt -= 2 * M_PI;
    if (sweep && dt < 0) dt += 2 * M_PI;

    // Cut at every multiple of pi/2 strictly inside [t1, t1+dt].
    double dir = dt >= 0 ? 1.0 : -1.0;
    double t = t1;
    double remaining = std::abs(dt);
    while (remaining > 1e-12) {
        double boundary = dir > 0 ? std::floor(t / (M_PI / 2.0) + 1.0) * (M_PI / 2.0)
                                  : std::ceil(t / (M_PI / 2.0) - 1.0) * (M_PI / 2.0);
        double step = std::min(remaining, std::abs(boundary - t));
        if (step < 1e-12) step = std::min(remaining, M_PI / 2.0);
        double tn = t + dir * step;
        append_unit_arc_cubic(out, center, rx, ry, phi, t, tn);
        remaining -= step;
        t = tn;
    }
    // Land exactly on the endpoint regardless of rounding.
    if (!out.empty() && out.back().kind == CmdKind::CubicBezier) out.back().p[2] = to;
}

}  // namespace

// ---------------------------------------------------------------------------
// Path data parser

std::vector<Command> parse_path_data(const std::string& d) {
    std::vector<Command> out;
    Scanner sc{d};
    Vec2 cur{0, 0};
    Vec2 subpath_start{0, 0};
    // Reflection state for S/T.
    std::optional<Vec2> prev_cubic_ctrl;
    std::optional<Vec2> prev_quad_ctrl;
    char cmd = 0;

    auto point = [&](bool relative) -> Vec2 {
        double x = sc.number();
        double y = sc.number();
        return relative ? cur + Vec2{x, y} : Vec2{x, y};
    };
    auto elevate_quadratic = [&](Vec2 q, Vec2 end) {
        Vec2 c1 = cur + (q - cur) * (2.0 / 3.0);
        Vec2 c2 = end + (q - end) * (2.0 / 3.0);
        out.push_back(Command::cubic(c1, c2, end));
        prev_quad_ctrl = q;
        cur = end;
    };

    for (;;) {
        sc.skip_sep();
        if (sc.eof()) break;
        char c = sc.s[sc.pos];
        if (std::isalpha(static_cast<unsigned char>(c))) {
            cmd = c;
            ++sc.pos;
        } else if (cmd == 0) {
            throw ParseError("path data: expected command letter", sc.pos);
        } else if (cmd == 'M') {
            cmd = 'L';  // implicit LineTo after MoveTo
        } else if (cmd == 'm') {
            cmd = 'l';
        } else if (cmd == 'Z' || cmd == 'z') {
            throw ParseError("path data: number after close-path", sc.pos);
        }

        bool rel = std::islower(static_cast<unsigned char>(cmd));
        char op = static_cast<char>(std::toupper(static_cast<unsigned char>(cmd)));
        bool drew_curve = false;
        switch (op) {
            case 'M': {
                Vec2 p = point(rel);
                out.push_back(Command::move_to(p));
                cur = p;
                subpath_start = p;
                break;
            }
            case 'L': {
                Vec2 p = point(rel);
                out.push_back(Command::line_to(p));
                cur = p;
                break;
            }
            case 'H': {
                double x = sc.number();
                Vec2 p{rel ? cur.x + x : x, cur.y};
                out.push_back(Command::line_to(p));
                cur = p;
                break;
            }
            case 'V': {
                double y = sc.number();
                Vec2 p{cur.x, rel ? cur.y + y : y};
                out.push_back(Command::line_to(p));
                cur = p;
                break;
            }
            case 'C': {
                Vec2 c1 = point(rel);
                Vec2 c2 = point(rel);
                Vec2 end = point(rel);
                out.push_back(Command::cubic(c1, c2, end));
                prev_cubic_ctrl = c2;
                cur = end;
                drew_curve = true;
                break;
            }
            case 'S': {
                Vec2 c1 = prev_cubic_ctrl ? cur + (cur - *prev_cubic_ctrl) : cur;
                Vec2 c2 = point(rel);
                Vec2 end = point(rel);
                out.push_back(Command::cubic(c1, c2, end));
                prev_cubic_ctrl = c2;
                cur = end;
                drew_curve = true;
                break;
            }
            case 'Q': {
                Vec2 q = point(rel);
                Vec2 end = point(rel);
                elevate_quadratic(q, end);
                drew_curve = true;
                prev_cubic_ctrl.reset();
                break;
            }
            case 'T': {
                Vec2 q = prev_quad_ctrl ? cur + (cur - *prev_quad_ctrl) : cur;
                Vec2 end = point(rel);
                elevate_quadratic(q, end);
                drew_curve = true;
                prev_cubic_ctrl.reset();
                break;
            }
            case 'A': {
                double rx = sc.number();
                double ry = sc.number();
                double rot = sc.number();
                int large_arc = sc.flag();
                int sweep = sc.flag();
                Vec2 end = point(rel);
                arc_to_cubics(out, cur, rx, ry, rot, large_arc, sweep, end);
                cur = end;
                break;
            }
            case 'Z': {
                out.push_back(Command::line_to(subpath_start));
                cur = subpath_start;
                break;
            }
            default:
                throw UnsupportedFeatureError(std::string("path data: unsupported command '") + cmd + "'");
        }
        if (!drew_curve) prev_cubic_ctrl.reset();
        if (op != 'Q' && op != 'T') prev_quad_ctrl.reset();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Basic shapes

std::vector<Command> rect_to_commands(double x, double y, double w, double h, double rx, double ry) {
    if (w <= 0.0 || h <= 0.0) throw GeometryError("rect: zero-area");
    if (rx < 0.0 || ry < 0.0) throw GeometryError("rect: negative corner radius");
    if (rx == 0.0 && ry > 0.0) rx = ry;
    if (ry == 0.0 && rx > 0.0) ry = rx;
    rx = std::min(rx, w / 2.0);
    ry = std::min(ry, h / 2.0);
    std::vector<Command> out;
    if (rx == 0.0) {
        out.push_back(Command::move_to({x, y}));
        out.push_back(Command::line_to({x + w, y}));
        out.push_back(Command::line_to({x + w, y + h}));
        out.push_back(Command::line_to({x, y + h}));
        out.push_back(Command::line_to({x, y}));
        return out;
    }
    const double kx = kCircleKappa * rx, ky = kCircleKappa * ry;
    out.push_back(Command::move_to({x + rx, y}));
    out.push_back(Command::line_to({x + w - rx, y}));
    out.push_back(Command::cubic({x + w - rx + kx, y}, {x + w, y + ry - ky}, {x + w, y + ry}));
    out.push_back(Command::line_to({x + w, y + h - ry}));
    out.push_back(Command::cubic({x + w, y + h - ry + ky}, {x + w - rx + kx, y + h}, {x + w - rx, y + h}));
    out.push_back(Command::line_to({x + rx, y + h}));
    out.push_back(Command::cubic({x + rx - kx, y + h}, {x, y + h - ry + ky}, {x, y + h - ry}));
    out.push_back(Command::line_to({x, y + ry}));
    out.push_back(Command::cubic({x, y + ry - ky}, {x + rx - kx, y}, {x + rx, y}));
    return out;
}

std::vector<Command> ellipse_to_commands(Vec2 c, double rx, double ry) {
    if (rx <= 0.0 || ry <= 0.0) throw GeometryError("ellipse: non-positive radius");
    const double kx = kCircleKappa * rx, ky = kCircleKappa * ry;
    std::vector<Command> out;
    out.push_back(Command::move_to({c.x + rx, c.y}));
    out.push_back(Command::cubic({c.x + rx, c.y + ky}, {c.x + kx, c.y + ry}, {c.x, c.y + ry}));
    out.push_back(Command::cubic({c.x - kx, c.y + ry}, {c.x - rx, c.y + ky}, {c.x - rx, c.y}));
    out.push_back(Command::cubic({c.x - rx, c.y - ky}, {c.x - kx, c.y - ry}, {c.x, c.y - ry}));
    out.push_back(Command::cubic({c.x + kx, c.y - ry}, {c.x + rx, c.y - ky}, {c.x + rx, c.y}));
    return out;
}

std::vector<Command> circle_to_commands(Vec2 c, double r) {
    if (r <= 0.0) throw GeometryError("circle: non-positive radius");
    return ellipse_to_commands(c, r, r);
}

std::vector<Command> line_to_commands(Vec2 a, Vec2 b) {
    return {Command::move_to(a), Command::line_to(b)};
}

std::vector<Command> polyline_to_commands(const std::vector<Vec2>& pts, bool close) {
    if (pts.size() < 2) throw GeometryError("polyline: needs at least 2 points");
    std::vector<Command> out;
    out.push_back(Command::move_to(pts[0]));
    for (size_t i = 1; i < pts.size(); ++i) out.push_back(Command::line_to(pts[i]));
    if (close) out.push_back(Command::line_to(pts[0]));
    return out;
}

// ---------------------------------------------------------------------------
// Document canonicalization

namespace {

double parse_double_attr(const std::string& v, const char* what) {
    try {
        size_t used = 0;
        double x = std::stod(v, &used);
        while (used < v.size() && std::isspace(static_cast<unsigned char>(v[used]))) ++used;
        if (used < v.size()) {
            if (v.compare(used, 2, "px") == 0 && used + 2 == v.size()) return x;
            throw NormalizeError(std::string(what) + ": unsupported unit in '" + v + "'");
        }
        return x;
    } catch (const std::invalid_argument&) {
        throw ParseError(std::string(what) + ": malformed number '" + v + "'", 0);
    }
}

double attr_or(const xml::Element& el, const char* key, double fallback) {
    const std::string* v = el.attr(key);
    return v ? parse_double_attr(*v, key) : fallback;
}

std::vector<double> parse_number_list(const std::string& s, const char* what) {
    std::vector<double> out;
    Scanner sc{s};
    while (sc.number_ahead()) out.push_back(sc.number());
    sc.skip_sep();
    if (!sc.eof()) throw ParseError(std::string(what) + ": malformed number list", sc.pos);
    return out;
}

Affine parse_transform(const std::string& s) {
    Affine t;
    Scanner sc{s};
    for (;;) {
        sc.skip_sep();
        if (sc.eof()) break;
        size_t begin = sc.pos;
        while (!sc.eof() && std::isalpha(static_cast<unsigned char>(sc.s[sc.pos]))) ++sc.pos;
        std::string fn = s.substr(begin, sc.pos - begin);
        sc.skip_sep();
        if (sc.eof() || sc.s[sc.pos] != '(') throw ParseError("transform: expected '('", sc.pos);
        ++sc.pos;
        std::vector<double> args;
        while (sc.number_ahead()) args.push_back(sc.number());
        sc.skip_sep();
        if (sc.eof() || sc.s[sc.pos] != ')') throw ParseError("transform: expected ')'", sc.pos);
        ++sc.pos;

        if (fn == "translate" && (args.size() == 1 || args.size() == 2)) {
            t = t.concat(Affine::translate(args[0], args.size() == 2 ? args[1] : 0.0));
        } else if (fn == "scale" && (args.size() == 1 || args.size() == 2)) {
            t = t.concat(Affine::scale(args[0], args.size() == 2 ? args[1] : args[0]));
        } else if (fn == "rotate" && args.size() == 1) {
            t = t.concat(Affine::rotate_deg(args[0]));
        } else if (fn == "rotate" && args.size() == 3) {
            t = t.concat(Affine::translate(args[1], args[2])
                             .concat(Affine::rotate_deg(args[0]))
                             .concat(Affine::translate(-args[1], -args[2])));
        } else if (fn == "matrix" && args.size() == 6) {
            t = t.concat(Affine{args[0], args[1], args[2], args[3], args[4], args[5]});
        } else {
            throw UnsupportedFeatureError("transform: unsupported function '" + fn + "'");
        }
    }
    return t;
}

bool skipped_container(const std::string& name) {
    static const char* kSkip[] = {"defs",   "style",          "title",  "desc",
                                  "metadata", "clipPath",     "mask",   "pattern",
                                  "linearGradient", "radialGradient", "filter", "symbol",
                                  "marker", "script"};
    for (const char* s : kSkip)
        if (name == s) return true;
    return false;
}

void collect_shapes(const xml::Element& el, Affine ctm, std::vector<Path>& out) {
    const std::string* dn = el.attr("display");
    if (dn && *dn == "none") return;
    if (const std::string* tr = el.attr("transform")) ctm = ctm.concat(parse_transform(*tr));

    std::vector<Command> cmds;
    const std::string& n = el.name;
    if (n == "path") {
        if (const std::string* d = el.attr("d")) cmds = parse_path_data(*d);
    } else if (n == "rect") {
        cmds = rect_to_commands(attr_or(el, "x", 0), attr_or(el, "y", 0),
                                attr_or(el, "width", 0), attr_or(el, "height", 0),
                                attr_or(el, "rx", 0), attr_or(el, "ry", 0));
    } else if (n == "circle") {
        cmds = circle_to_commands({attr_or(el, "cx", 0), attr_or(el, "cy", 0)}, attr_or(el, "r", 0));
    } else if (n == "ellipse") {
        cmds = ellipse_to_commands({attr_or(el, "cx", 0), attr_or(el, "cy", 0)},
                                   attr_or(el, "rx", 0), attr_or(el, "ry", 0));
    } else if (n == "line") {
        cmds = line_to_commands({attr_or(el, "x1", 0), attr_or(el, "y1", 0)},
                                {attr_or(el, "x2", 0), attr_or(el, "y2", 0)});
    } else if (n == "polyline" || n == "polygon") {
        const std::string* pts = el.attr("points");
        std::vector<double> nums = pts ? parse_number_list(*pts, "points") : std::vector<double>{};
        if (nums.size() % 2 != 0) throw ParseError("points: odd coordinate count", 0);
        std::vector<Vec2> v;
        for (size_t i = 0; i + 1 < nums.size(); i += 2) v.push_back({nums[i], nums[i + 1]});
        if (!v.empty()) cmds = polyline_to_commands(v, n == "polygon");
    } else if (n == "use" || n == "image" || n == "text" || n == "textPath" || n == "foreignObject") {
        throw UnsupportedFeatureError("canonicalize: unsupported element <" + n + ">");
    } else if (skipped_container(n)) {
        return;
    } else {
        // svg, g, a, switch, unknown grouping elements: recurse.
        for (const auto& child : el.children) collect_shapes(*child, ctm, out);
        return;
    }

    if (cmds.empty()) return;
    bool draws = false;
    Path path;
    path.commands.reserve(cmds.size());
    for (Command c : cmds) {
        for (int i = 0; i < c.point_count(); ++i) c.p[i] = ctm.apply(c.p[i]);
        if (c.kind != CmdKind::MoveTo) draws = true;
        path.commands.push_back(c);
    }
    if (draws) out.push_back(std::move(path));
}

}  // namespace

void canonical_sort(SvgScript& script) {
    std::stable_sort(script.paths.begin(), script.paths.end(), [](const Path& a, const Path& b) {
        Vec2 pa = a.commands.front().endpoint();
        Vec2 pb = b.commands.front().endpoint();
        if (pa.y != pb.y) return pa.y < pb.y;
        if (pa.x != pb.x) return pa.x < pb.x;
        return a.commands.size() > b.commands.size();
    });
}

SvgScript canonicalize(const std::string& svg_text) {
    auto root = xml::parse(svg_text);
    if (root->name != "svg") throw ParseError("canonicalize: root element is not <svg>", 0);

    double minx = 0, miny = 0, w = 0, h = 0;
    if (const std::string* vb = root->attr("viewBox")) {
        std::vector<double> nums = parse_number_list(*vb, "viewBox");
        if (nums.size() != 4) throw ParseError("viewBox: expected 4 numbers", 0);
        minx = nums[0];
        miny = nums[1];
        w = nums[2];
        h = nums[3];
    } else if (root->attr("width") && root->attr("height")) {
        w = parse_double_attr(*root->attr("width"), "width");
        h = parse_double_attr(*root->attr("height"), "height");
    } else {
        throw NormalizeError("canonicalize: no viewBox and no width/height");
    }
    if (w <= 0.0 || h <= 0.0) throw NormalizeError("canonicalize: non-positive viewbox size");

    SvgScript script;
    script.viewbox_w = w;
    script.viewbox_h = h;
    for (const auto& child : root->children) collect_shapes(*child, Affine{}, script.paths);

    for (Path& p : script.paths) {
        for (Command& c : p.commands) {
            for (int i = 0; i < c.point_count(); ++i) {
                c.p[i].x = std::clamp((c.p[i].x - minx) / w, 0.0, 1.0);
                c.p[i].y = std::clamp((c.p[i].y - miny) / h, 0.0, 1.0);
            }
        }
    }
    canonical_sort(script);
    return script;
}

std::string write_svg(const SvgScript& script) {
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1 1\">\n";
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        out += buf;
    };
    for (const Path& p : script.paths) {
        out += "<path d=\"";
        bool first = true;
        for (const Command& c : p.commands) {
            if (!first) out += ' ';
            first = false;
            out += c.kind == CmdKind::MoveTo ? 'M' : c.kind == CmdKind::LineTo ? 'L' : 'C';
            for (int i = 0; i < c.point_count(); ++i) {
                out += ' ';
                put(c.p[i].x);
                out += ' ';
                put(c.p[i].y);
            }
        }
        out += "\" fill=\"black\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace iconvec
