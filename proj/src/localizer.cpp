#include "lunarloc/localizer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "lunarloc/io.hpp"
#include "lunarloc/rng.hpp"

namespace lunarloc {

using nlohmann::json;

double RoverState::three_sigma() const {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(covariance);
    return 3.0 * std::sqrt(std::max(0.0, es.eigenvalues()(1)));
}

double LocalizerConfig::measurement_sigma(DetectionMethod method, double diameter) const {
    const auto& table =
        (method == DetectionMethod::Lidar) ? lidar_sigma_by_diameter : stereo_sigma_by_diameter;
    if (table.empty()) return 1.0;
    if (diameter <= table.front().first) return table.front().second;
    if (diameter >= table.back().first) return table.back().second;
    for (size_t i = 1; i < table.size(); ++i) {
        if (diameter <= table[i].first) {
            double t = (diameter - table[i - 1].first) / (table[i].first - table[i - 1].first);
            return table[i - 1].second + t * (table[i].second - table[i - 1].second);
        }
    }
    return table.back().second;
}

namespace {

double wrap_angle(double a) {
    while (a > M_PI) a -= 2 * M_PI;
    while (a <= -M_PI) a += 2 * M_PI;
    return a;
}

Eigen::Matrix2d rot2(double h) {
    Eigen::Matrix2d R;
    R << std::cos(h), -std::sin(h), std::sin(h), std::cos(h);
    return R;
}

}  // namespace

RoverState propagate(const RoverState& state, const OdometrySegment& odo, uint64_t seed) {
    RoverState next = state;
    next.heading = wrap_angle(state.heading + odo.delta_heading);
    Vec2 step = odo.delta_forward * Vec2(std::cos(next.heading), std::sin(next.heading));
    next.position += step;
    const double sigma = odo.drift_fraction * std::abs(odo.delta_forward);
    if (sigma > 0) {
        uint64_t key = rng::mix(seed, 0x0d0, static_cast<uint64_t>(state.distance_traveled * 1000));
        next.position.x() += sigma * rng::gaussian(rng::mix(key, 0));
        next.position.y() += sigma * rng::gaussian(rng::mix(key, 1));
        next.covariance += sigma * sigma * Eigen::Matrix2d::Identity();
    }
    next.distance_traveled += std::abs(odo.delta_forward);
    return next;
}

MatchSet associate(const std::vector<CraterDetection>& detections, const LandmarkDb& db,
                   const RoverState& prior, const LocalizerConfig& cfg) {
    MatchSet out;
    if (detections.empty()) return out;
    const Eigen::Matrix2d R = rot2(prior.heading);
    const double gate = prior.three_sigma() + 3.0;

    struct Tentative {
        CraterDetection det;
        LandmarkRecord lm;
        Vec2 predicted_global;
        double residual;
    };
    std::vector<Tentative> tentative;
    for (const auto& det : detections) {
        Vec2 predicted = prior.position + R * det.center_xy;
        auto candidates = db.query_radius(predicted, gate);
        const LandmarkRecord* best = nullptr;
        double best_res = 1e18;
        for (const auto& lm : candidates) {
            if (std::abs(lm.diameter - det.diameter) > cfg.diam_agreement * lm.diameter) continue;
            // When the detector already names a landmark, honor it.
            if (det.landmark_id && *det.landmark_id != lm.id) continue;
            double res = (lm.position - predicted).norm();
            if (res < best_res) {
                best_res = res;
                best = &lm;
            }
        }
        if (!best) continue;
        if (best_res > prior.three_sigma() + 3.0) continue;  // beyond the prior gate
        tentative.push_back({det, *best, predicted, best_res});
    }
    if (tentative.empty()) return out;

    // Pairwise rigid-translation consistency: detection-to-detection distances
    // must match landmark-to-landmark distances. Keep the largest consistent
    // subset (exact over subsets; detection counts here are small).
    const int n = static_cast<int>(tentative.size());
    auto consistent = [&](int i, int j) {
        Vec2 di = tentative[static_cast<size_t>(i)].det.center_xy;
        Vec2 dj = tentative[static_cast<size_t>(j)].det.center_xy;
        Vec2 li = tentative[static_cast<size_t>(i)].lm.position;
        Vec2 lj = tentative[static_cast<size_t>(j)].lm.position;
        if (tentative[static_cast<size_t>(i)].lm.id == tentative[static_cast<size_t>(j)].lm.id)
            return false;  // one landmark per detection
        return std::abs((di - dj).norm() - (li - lj).norm()) <= cfg.consistency_tol;
    };
    int best_mask = 0, best_count = 0;
    const int limit = std::min(n, 16);
    for (int mask = 1; mask < (1 << limit); ++mask) {
        int cnt = __builtin_popcount(static_cast<unsigned>(mask));
        if (cnt <= best_count) continue;
        bool ok = true;
        for (int i = 0; i < limit && ok; ++i) {
            if (!(mask & (1 << i))) continue;
            for (int j = i + 1; j < limit && ok; ++j) {
                if (!(mask & (1 << j))) continue;
                if (!consistent(i, j)) ok = false;
            }
        }
        if (ok) {
            best_mask = mask;
            best_count = cnt;
        }
    }
    if (best_count >= 2) {
        for (int i = 0; i < limit; ++i)
            if (best_mask & (1 << i))
                out.pairs.push_back({tentative[static_cast<size_t>(i)].det,
                                     tentative[static_cast<size_t>(i)].lm,
                                     tentative[static_cast<size_t>(i)].residual});
    } else {
        // A single detection cannot be cross-checked; keep the best-gated one.
        auto it = std::min_element(tentative.begin(), tentative.end(),
                                   [](const Tentative& a, const Tentative& b) {
                                       return a.residual < b.residual;
                                   });
        out.pairs.push_back({it->det, it->lm, it->residual});
    }
    return out;
}

RoverState update(const RoverState& state, const MatchSet& matches, const LocalizerConfig& cfg) {
    if (matches.pairs.empty()) return state;
    const Eigen::Matrix2d R = rot2(state.heading);

    Eigen::Matrix2d info;
    Eigen::Vector2d info_vec;
    const bool infinite_prior = state.covariance.determinant() < 1e-18 &&
                                state.covariance.trace() < 1e-12;
    if (infinite_prior) {
        info = Eigen::Matrix2d::Zero();
        info_vec = Eigen::Vector2d::Zero();
        // Zero prior covariance: treat the prior as exact unless measurements
        // are exact too; handled by adding a tiny regularizer below.
        info = 1e12 * Eigen::Matrix2d::Identity();
        info_vec = info * state.position;
    } else {
        info = state.covariance.inverse();
        info_vec = info * state.position;
    }

    for (const auto& m : matches.pairs) {
        const double sigma = cfg.measurement_sigma(m.detection.method, m.detection.diameter);
        if (!(sigma >= 0)) throw SingularFusion("negative measurement sigma");
        Vec2 z = m.landmark.position - R * m.detection.center_xy;
        if (sigma == 0) {
            // Exact measurement dominates.
            RoverState next = state;
            next.position = z;
            next.covariance = Eigen::Matrix2d::Zero();
            return next;
        }
        const double w = 1.0 / (sigma * sigma);
        info += w * Eigen::Matrix2d::Identity();
        info_vec += w * z;
    }
    Eigen::FullPivLU<Eigen::Matrix2d> lu(info);
    if (!lu.isInvertible()) throw SingularFusion("non-invertible fused information matrix");
    RoverState next = state;
    next.covariance = lu.inverse();
    next.position = next.covariance * info_vec;
    // Symmetrize against numerical drift.
    next.covariance = 0.5 * (next.covariance + next.covariance.transpose());
    return next;
}

TraverseLog run_traverse(const SceneTruth& scene, const std::vector<Vec2>& route,
                         const TraverseConfig& cfg, const LandmarkDb& db, uint64_t seed) {
    TraverseLog log;
    if (route.size() < 2) return log;

    RoverState truth;
    truth.position = route[0];
    truth.heading = std::atan2(route[1].y() - route[0].y(), route[1].x() - route[0].x());
    RoverState est = truth;  // start known

    // Unmatched detections retained (rover frame) for re-association.
    struct Pending {
        CraterDetection det;
        double age = 0;  // m of travel since sensed
    };
    std::vector<Pending> pending;

    double since_sense = cfg.sense_every;  // sense at the start
    double t = 0;
    size_t leg = 1;
    Vec2 pos = route[0];
    int step_idx = 0;

    auto log_step = [&](bool update_step, const MatchSet& matches) {
        TraverseStep s;
        s.t = t;
        s.truth_xy = truth.position;
        s.est_xy = est.position;
        s.cov = est.covariance;
        s.update_step = update_step;
        s.n_matches = static_cast<int>(matches.pairs.size());
        for (const auto& m : matches.pairs) s.matched_ids.push_back(m.landmark.id);
        log.steps.push_back(std::move(s));
    };

    while (leg < route.size()) {
        // Sense/update at the configured cadence.
        if (since_sense >= cfg.sense_every) {
            since_sense = 0;
            MatchSet matches;
            try {
                SceneTruth view = scene;  // cheap: heightfield shared via copy of vector
                view.rover_pose = {truth.position.x(), truth.position.y(), truth.heading};
                PointCloud cloud = simulate_lidar(view, cfg.lidar,
                                                  rng::mix(seed, 0x5ca, static_cast<uint64_t>(step_idx)),
                                                  cfg.detector.exec);
                std::vector<CraterDetection> dets =
                    detect_lidar(cloud, est, db, cfg.detector);
                // Detections arrive in site frame; express them rover-relative
                // as the sensor would.
                const Eigen::Matrix2d Rt = rot2(truth.heading);
                for (auto& d : dets) d.center_xy = Rt.transpose() * (d.center_xy - truth.position);
                std::vector<CraterDetection> all = dets;
                for (const auto& p : pending) all.push_back(p.det);
                matches = associate(all, db, est, cfg.localizer);
                est = update(est, matches, cfg.localizer);
                // Retain unmatched fresh detections for later passes.
                std::vector<Pending> keep;
                for (const auto& d : dets) {
                    bool matched = false;
                    for (const auto& m : matches.pairs)
                        if ((m.detection.center_xy - d.center_xy).norm() < 1e-9) matched = true;
                    if (!matched) keep.push_back({d, 0.0});
                }
                for (auto& p : pending)
                    if (p.age <= 100.0) {
                        bool matched = false;
                        for (const auto& m : matches.pairs)
                            if ((m.detection.center_xy - p.det.center_xy).norm() < 1e-9)
                                matched = true;
                        if (!matched) keep.push_back(p);
                    }
                pending = std::move(keep);
            } catch (const std::exception&) {
                // Sensor/detector failure at this step: continue dead reckoning.
            }
            log_step(true, matches);
        }

        // Advance one odometry step toward the current waypoint.
        Vec2 to_wp = route[leg] - pos;
        double dist = to_wp.norm();
        if (dist < 1e-9) {
            ++leg;
            continue;
        }
        double step_len = std::min(cfg.step_length, dist);
        double target_heading = std::atan2(to_wp.y(), to_wp.x());
        OdometrySegment odo;
        odo.delta_forward = step_len;
        odo.delta_heading = wrap_angle(target_heading - truth.heading);
        odo.drift_fraction = cfg.drift_fraction;

        const double h_old = truth.heading;
        RoverState new_truth = propagate(truth, odo, rng::mix(seed, 0x0d0, static_cast<uint64_t>(step_idx)));
        // Estimated state sees the same odometry (commanded motion) without
        // knowing the noise realization.
        Vec2 noise = new_truth.position -
                     (truth.position + step_len * Vec2(std::cos(new_truth.heading),
                                                       std::sin(new_truth.heading)));
        est.heading = new_truth.heading;
        est.position += step_len * Vec2(std::cos(new_truth.heading), std::sin(new_truth.heading));
        est.covariance += std::pow(cfg.drift_fraction * step_len, 2) * Eigen::Matrix2d::Identity();
        est.distance_traveled += step_len;
        truth = new_truth;
        // Truth moved by commanded step + noise; the estimate holds the
        // commanded step, so the error grows by exactly the noise.
        (void)noise;

        // Propagate retained rover-frame detections by the commanded motion
        // (rotate out of the old rover frame, subtract the step, rotate back).
        const Eigen::Matrix2d Ro = rot2(h_old);
        const Eigen::Matrix2d Rn = rot2(truth.heading);
        const Vec2 step_global = step_len * Vec2(std::cos(truth.heading), std::sin(truth.heading));
        for (auto& p : pending) {
            p.det.center_xy = Rn.transpose() * (Ro * p.det.center_xy - step_global);
            p.age += step_len;
        }
        pending.erase(std::remove_if(pending.begin(), pending.end(),
                                     [](const Pending& p) { return p.age > 100.0; }),
                      pending.end());

        pos = truth.position;
        t += step_len;
        since_sense += step_len;
        ++step_idx;
        log_step(false, MatchSet{});
    }
    return log;
}

void write_traverse_log(const std::string& path, const TraverseLog& log) {
    std::ofstream out(path);
    if (!out) throw io::IoError(path + ": cannot open for writing");
    for (const auto& s : log.steps) {
        json j = {{"t", s.t},
                  {"truth_xy", {s.truth_xy.x(), s.truth_xy.y()}},
                  {"est_xy", {s.est_xy.x(), s.est_xy.y()}},
                  {"cov", {{s.cov(0, 0), s.cov(0, 1)}, {s.cov(1, 0), s.cov(1, 1)}}},
                  {"n_matches", s.n_matches},
                  {"matched_ids", s.matched_ids},
                  {"update", s.update_step}};
        out << j.dump() << "\n";
    }
}

}  // namespace lunarloc
