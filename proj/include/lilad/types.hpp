#pragma once

#include <Eigen/Dense>

namespace lilad {

// Row-major so flat buffers serialize in document order.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

}  // namespace lilad
