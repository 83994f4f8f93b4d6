#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lunarloc/lidar_detector.hpp"
#include "lunarloc/sensor_sim.hpp"
#include "lunarloc/stereo_detector.hpp"
#include "lunarloc/terrain.hpp"

namespace lunarloc {

enum class SweepDetector { Lidar, Stereo };

struct SweepGrid {
    std::vector<double> diameters;       // m
    std::vector<double> ranges;          // m, rover to crater near rim
    std::vector<double> approach_deg;    // bearing of the crater from the rover
    int seeds_per_cell = 40;

    bool valid() const {
        return !diameters.empty() && !ranges.empty() && !approach_deg.empty() &&
               seeds_per_cell > 0;
    }
};

struct SweepConfigs {
    double scene_cell_size = 0.05;  // m
    double scene_roughness = 0.03;  // m RMS
    double depth_fraction = 0.2;    // crater depth as a fraction of diameter
    double rim_fraction = 0.02;     // rim height as a fraction of diameter
    LidarConfig lidar;
    StereoConfig stereo;
    LidarDetectorConfig lidar_detector;
    StereoDetectorConfig stereo_detector;
};

// One trial = one (diameter, range, approach, seed) cell evaluation.
struct SweepRow {
    double diameter = 0;
    double range = 0;
    double approach_deg = 0;
    uint64_t seed = 0;
    bool detected = false;
    double err_x = 0, err_y = 0;  // m, detection center minus truth (TPs only)
};

struct PdEntry {
    double diameter = 0;
    double range = 0;
    int n = 0;
    int n_detected = 0;
    double p_d = 0;
    double ci_lo = 0, ci_hi = 0;  // Wilson 95% interval
};

struct SigmaEntry {
    double diameter = 0;
    int n_tp = 0;
    double sigma_p = 0;  // RMS radial center error over true positives, 15-20 m ranges
};

struct KppReport {
    SweepDetector detector = SweepDetector::Lidar;
    double tp_radius_fraction = 0.25;  // TP if error < max(fraction * D, tp_radius_floor)
    double tp_radius_floor = 1.0;      // m
    std::vector<SweepRow> rows;

    std::vector<PdEntry> pd_table() const;
    std::vector<SigmaEntry> sigma_table(double range_lo = 15.0, double range_hi = 20.0) const;
};

// Wilson score interval for a binomial proportion at 95% confidence.
void wilson_interval(int successes, int n, double& lo, double& hi);

// Single-crater scene for one sweep cell: crater near rim at `range` meters
// from the rover along the approach bearing, rover facing the crater.
SceneTruth make_sweep_scene(double diameter, double range, double approach_deg,
                            double depth_fraction, double rim_fraction, double cell_size,
                            double roughness, uint64_t seed);

KppReport run_sweep(SweepDetector detector, const SweepGrid& grid, const SweepConfigs& cfgs,
                    uint64_t master_seed);

// CSV: diameter_m, range_m, approach_deg, seed, detected, err_x_m, err_y_m.
// JSON: aggregates (P_d with intervals, sigma per diameter) plus the TP rule.
void emit_report(const KppReport& report, const std::string& csv_path,
                 const std::string& json_path);
std::vector<SweepRow> read_report_csv(const std::string& csv_path);

}  // namespace lunarloc
