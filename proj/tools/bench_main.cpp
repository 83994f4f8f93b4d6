// Benchmarks the OpenMP kernels against their serial reference paths and
// checks that both produce identical results.
#include <chrono>
#include <cmath>
#include <cstdio>

#include "lunarloc/evalkit.hpp"
#include "lunarloc/pointcloud.hpp"
#include "lunarloc/sensor_sim.hpp"

using namespace lunarloc;

namespace {

template <typename F>
double time_ms(F&& f) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

bool rasters_equal(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (std::isnan(a[i]) != std::isnan(b[i])) return false;
        if (!std::isnan(a[i]) && a[i] != b[i]) return false;
    }
    return true;
}

bool clouds_equal(const PointCloud& a, const PointCloud& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a.points[i] != b.points[i]) return false;
    return true;
}

}  // namespace

int main() {
    SceneTruth scene = make_sweep_scene(10.0, 15.0, 0.0, 0.12, 0.02, 0.05, 0.03, 42);
    LidarConfig lidar;

    PointCloud serial_cloud, omp_cloud;
    double t_serial = time_ms([&] { serial_cloud = simulate_lidar(scene, lidar, 7, ExecMode::Serial); });
    double t_omp = time_ms([&] { omp_cloud = simulate_lidar(scene, lidar, 7, ExecMode::OpenMP); });
    std::printf("simulate_lidar   serial %8.1f ms   openmp %8.1f ms   speedup %.2fx   match %s\n",
                t_serial, t_omp, t_serial / t_omp, clouds_equal(serial_cloud, omp_cloud) ? "yes" : "NO");

    NormalField n_serial, n_omp;
    double tn_serial = time_ms([&] { n_serial = estimate_normals(serial_cloud, 0.3, ExecMode::Serial); });
    double tn_omp = time_ms([&] { n_omp = estimate_normals(serial_cloud, 0.3, ExecMode::OpenMP); });
    bool n_match = n_serial.valid == n_omp.valid && n_serial.normals.size() == n_omp.normals.size();
    for (size_t i = 0; n_match && i < n_serial.normals.size(); ++i)
        if (n_serial.valid[i] && n_serial.normals[i] != n_omp.normals[i]) n_match = false;
    std::printf("estimate_normals serial %8.1f ms   openmp %8.1f ms   speedup %.2fx   match %s\n",
                tn_serial, tn_omp, tn_serial / tn_omp, n_match ? "yes" : "NO");

    StereoConfig stereo;
    StereoSimResult s_serial, s_omp;
    double ts_serial = time_ms([&] { s_serial = simulate_stereo(scene, stereo, 7, ExecMode::Serial); });
    double ts_omp = time_ms([&] { s_omp = simulate_stereo(scene, stereo, 7, ExecMode::OpenMP); });
    std::printf("simulate_stereo  serial %8.1f ms   openmp %8.1f ms   speedup %.2fx   match %s\n",
                ts_serial, ts_omp, ts_serial / ts_omp,
                rasters_equal(s_serial.disparity.disparity, s_omp.disparity.disparity) ? "yes" : "NO");
    return 0;
}
