#pragma once

#include <stdexcept>
#include <string>

#include "lunarloc/pointcloud.hpp"
#include "lunarloc/terrain.hpp"

namespace lunarloc::io {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PlyFormat { Ascii, BinaryLittleEndian };

// PLY with float x,y,z properties. The sensor origin travels in a comment:
//   comment sensor_origin <x> <y> <z>
void write_ply(const std::string& path, const PointCloud& cloud,
               PlyFormat format = PlyFormat::BinaryLittleEndian);
// Parse errors name the byte offset where parsing failed.
PointCloud read_ply(const std::string& path);

// Heightfield raster: raw little-endian float32 row-major at <path>, JSON
// sidecar at <path>.json with origin_xy, cell_size, n_rows, n_cols.
void write_heightfield(const std::string& raster_path, const HeightField& hf);
HeightField read_heightfield(const std::string& raster_path);

// Scene truth (craters, rover pose, seed + heightfield file reference).
void write_scene(const std::string& dir, const std::string& stem, const SceneTruth& scene);
SceneTruth read_scene(const std::string& truth_json_path);

}  // namespace lunarloc::io
