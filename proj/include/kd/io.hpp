#pragma once

#include <optional>
#include <string>

#include "kd/points.hpp"

namespace kd {

// A loaded point-set file: plain weighted points, plus per-point unit
// orientation vectors when u-columns were present.
struct LoadedPointSet {
  WeightedPointSet points;
  std::optional<OrientedPointSet> oriented;
};

// CSV dialect: comma-separated, required header row `x1,..,xd[,w][,u1,..,ud]`,
// '.' decimal, UTF-8. The JSON alternative mirrors the columns:
//   {"columns": ["x1","x2","w"], "rows": [[...], ...]}
// Format is chosen by extension (.json -> JSON, otherwise CSV). Orientation
// rows are normalized on load (tolerance 1e-6, else a parse error).
LoadedPointSet load_point_set(const std::string& path);

void save_point_set_csv(const std::string& path, const WeightedPointSet& P);

}  // namespace kd
