#pragma once

#include <string>
#include <vector>

#include "iconvec/geometry.h"

namespace iconvec {

// Symmetric Chamfer distance between outline samples, in unit-square units:
// 0.5 * (mean over x of min-distance to y + mean over y of min-distance to
// x), Euclidean. Throws GeometryError when either sample is empty.
double chamfer(const OutlineSample& x, const OutlineSample& y);

// One row of a metrics report. `flag` marks degenerate predictions (empty
// geometry); it is carried in the JSON report only, the text format stays
// three columns.
struct MetricsRow {
    std::string icon_id;
    double iou = 0.0;
    double cd = 0.0;
    bool flagged = false;
};

// Plain-text report: one line per icon `icon_id<TAB>iou<TAB>cd`, plus a
// trailing aggregate line with id "aggregate" carrying the arithmetic means.
std::string write_metrics_report(const std::vector<MetricsRow>& rows);

}  // namespace iconvec
