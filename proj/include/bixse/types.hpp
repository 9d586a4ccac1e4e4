#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace bixse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace bixse
