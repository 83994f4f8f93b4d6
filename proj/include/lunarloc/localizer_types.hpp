#pragma once

#include <Eigen/Core>

#include "lunarloc/terrain.hpp"

namespace lunarloc {

struct RoverState {
    Vec2 position{0, 0};            // m, global frame
    double heading = 0;             // rad, (-pi, pi]
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();  // m^2, position only
    double distance_traveled = 0;   // m

    // 3-sigma bound along the worst covariance axis.
    double three_sigma() const;
};

}  // namespace lunarloc
