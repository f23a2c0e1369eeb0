#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

namespace cyclevc {

// Row-major so a row is one time frame (contiguous feature vector).
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

inline bool all_finite(const Mat& m) {
    return m.allFinite();
}

}  // namespace cyclevc
