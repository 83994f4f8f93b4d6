#pragma once

#include <optional>
#include <string>

#include "lunarloc/terrain.hpp"

namespace lunarloc {

enum class DetectionMethod { Lidar, Stereo };

struct CraterDetection {
    Vec2 center_xy{0, 0};  // frame of the input cloud / disparity map
    double diameter = 0;
    double score = 0;
    std::optional<std::string> landmark_id;
    DetectionMethod method = DetectionMethod::Lidar;
};

}  // namespace lunarloc
