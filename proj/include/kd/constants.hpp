#pragma once

namespace kd::constants {

// Random-sampling coreset size constant: k = ceil((C/eps^2)(d + ln(1/delta))).
// Calibrated so the size achieves kernel discrepancy <= eps in >= 90% of
// trials at eps=0.2, delta=0.1, d=2, n=1000 ("coreset size calibration" test
// in tests/test_coreset.cpp and acceptance criterion 6).
inline constexpr double kCoresetSizeC = 8.0;

// Feature-certificate coreset size constant:
// k = ceil((C/eps^3) ln(n/delta) ln((1/(eps delta)) ln n)), calibrated by the
// certificate trials in tests/test_coreset.cpp.
inline constexpr double kFeatureCoresetC = 16.0;

}  // namespace kd::constants
