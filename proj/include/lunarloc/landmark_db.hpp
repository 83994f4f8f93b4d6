#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lunarloc/terrain.hpp"

namespace lunarloc {

struct LandmarkRecord {
    std::string id;
    Vec2 position{0, 0};  // m, global frame
    double diameter = 0;
    double depth = 0;
};

// Orbital crater landmark map with a uniform-grid spatial index.
class LandmarkDb {
public:
    LandmarkDb() = default;
    explicit LandmarkDb(std::vector<LandmarkRecord> records, double grid_cell = 50.0);

    const std::vector<LandmarkRecord>& records() const { return records_; }
    size_t size() const { return records_.size(); }

    // Exactly the records with |position - center| <= radius and diameter in
    // [diam_min, diam_max].
    std::vector<LandmarkRecord> query_radius(const Vec2& center, double radius,
                                             double diam_min = 0.0,
                                             double diam_max = 1e9) const;

    void save_jsonl(const std::string& path) const;
    static LandmarkDb load_jsonl(const std::string& path);

private:
    int64_t key(int32_t gx, int32_t gy) const {
        return (static_cast<int64_t>(gx) << 32) ^ static_cast<uint32_t>(gy);
    }
    std::vector<LandmarkRecord> records_;
    double grid_cell_ = 50.0;
    std::unordered_map<int64_t, std::vector<int>> grid_;
};

// Synthetic orbital map: one record per crater with position perturbed by
// zero-mean Gaussian noise per axis.
LandmarkDb db_from_scene(const SceneTruth& scene, double position_noise_sigma, uint64_t seed = 1);

}  // namespace lunarloc
