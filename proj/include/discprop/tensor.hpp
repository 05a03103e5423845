#pragma once

#include <Eigen/Dense>

namespace discprop {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace discprop
