#pragma once

#include <Eigen/Dense>

namespace stemper {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace stemper
