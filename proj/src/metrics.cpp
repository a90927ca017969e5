#include "iconvec/metrics.h"

#include <cmath>
#include <cstdio>
#include <limits>

#include "iconvec/errors.h"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace iconvec {

namespace {

double directed_mean_nn(const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    const int n = static_cast<int>(from.size());
    std::vector<double> mins(n);
#pragma omp parallel for schedule(static) if (n >= 256 && !omp_in_parallel())
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec2& q : to) {
            double dx = from[i].x - q.x, dy = from[i].y - q.y;
            double d2 = dx * dx + dy * dy;
            if (d2 < best) best = d2;
        }
        mins[i] = std::sqrt(best);
    }
    double sum = 0.0;
    for (double d : mins) sum += d;
    return sum / n;
}

}  // namespace

double chamfer(const OutlineSample& x, const OutlineSample& y) {
    if (x.points.empty() || y.points.empty())
        throw GeometryError("chamfer: empty point set");
    return 0.5 * (directed_mean_nn(x.points, y.points) + directed_mean_nn(y.points, x.points));
}

std::string write_metrics_report(const std::vector<MetricsRow>& rows) {
    std::string out;
    char buf[128];
    double iou_sum = 0.0, cd_sum = 0.0;
    for (const MetricsRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s\t%.6f\t%.6f\n", r.icon_id.c_str(), r.iou, r.cd);
        out += buf;
        iou_sum += r.iou;
        cd_sum += r.cd;
    }
    double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    std::snprintf(buf, sizeof(buf), "aggregate\t%.6f\t%.6f\n", iou_sum / n, cd_sum / n);
    out += buf;
    return out;
}

}  // namespace iconvec
