// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Registration evaluation metrics: inlier ratio, feature matching recall,
// correspondence RMSE with indoor recall, patch inlier ratio, pose errors,
// and outdoor recall.

#pragma once

#include "gsalign/core.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace gsalign {

struct Correspondence {
  int source = 0;
  int target = 0;
};

struct MetricThresholds {
  double delta_corr = 0.1;  // inlier distance, meters
  double eta = 0.05;        // minimum inlier ratio for FMR
  double gamma_rmse = 0.2;  // indoor RMSE success bound, meters
  double zeta = 0.05;       // patch overlap distance, meters
  double rre_max_deg = 3.0;
  double rte_max_m = 1.5;

  void validate() const {
    if (delta_corr <= 0 || eta < 0 || gamma_rmse <= 0 || zeta <= 0 ||
        rre_max_deg <= 0 || rte_max_m <= 0) {
      throw std::invalid_argument("metric thresholds must be positive");
    }
  }
};

/// Fraction of correspondences with ||T_gt(p) - q|| < delta_corr.
inline double inlier_ratio(const std::vector<Correspondence>& corrs,
                           const std::vector<Vec3>& p,
                           const std::vector<Vec3>& q,
                           const RigidTransform& t_gt, double delta_corr) {
  if (corrs.empty()) throw std::invalid_argument("no correspondences");
  int inliers = 0;
  for (const auto& c : corrs) {
    if ((t_gt.apply(p[c.source]) - q[c.target]).norm() < delta_corr) ++inliers;
  }
  return static_cast<double>(inliers) / corrs.size();
}

/// Fraction of pairs whose inlier ratio reaches eta.
inline double feature_matching_recall(const std::vector<double>& pair_irs,
                                      double eta) {
  if (pair_irs.empty()) throw std::invalid_argument("no pairs");
  int hits = 0;
  for (double ir : pair_irs) {
    if (ir >= eta) ++hits;
  }
  return static_cast<double>(hits) / pair_irs.size();
}

/// RMSE over ground-truth correspondences evaluated at the estimated pose.
inline double correspondence_rmse(const std::vector<Correspondence>& corrs,
                                  const std::vector<Vec3>& p,
                                  const std::vector<Vec3>& q,
                                  const RigidTransform& t_est) {
  if (corrs.empty()) throw std::invalid_argument("no correspondences");
  double sq = 0.0;
  for (const auto& c : corrs) {
    sq += (t_est.apply(p[c.source]) - q[c.target]).squaredNorm();
  }
  return std::sqrt(sq / corrs.size());
}

/// Fraction of pairs whose RMSE is below gamma_rmse.
inline double registration_recall_indoor(const std::vector<double>& rmses,
                                         double gamma_rmse) {
  if (rmses.empty()) throw std::invalid_argument("no pairs");
  int hits = 0;
  for (double r : rmses) {
    if (r < gamma_rmse) ++hits;
  }
  return static_cast<double>(hits) / rmses.size();
}

/// Fraction of matched superpoint pairs whose patches genuinely overlap:
/// some point pair across the two patches lies within zeta under T_gt.
inline double patch_inlier_ratio(
    const std::vector<Correspondence>& superpoint_pairs,
    const std::vector<std::vector<int>>& patches_p,
    const std::vector<std::vector<int>>& patches_q,
    const std::vector<Vec3>& p, const std::vector<Vec3>& q,
    const RigidTransform& t_gt, double zeta) {
  if (superpoint_pairs.empty()) throw std::invalid_argument("no superpoint pairs");
  int hits = 0;
  for (const auto& sp : superpoint_pairs) {
    const auto& sp_p = patches_p.at(sp.source);
    const auto& sp_q = patches_q.at(sp.target);
    bool overlap = false;
    for (int i : sp_p) {
      const Vec3 moved = t_gt.apply(p[i]);
      for (int j : sp_q) {
        if ((moved - q[j]).norm() < zeta) {
          overlap = true;
          break;
        }
      }
      if (overlap) break;
    }
    if (overlap) ++hits;
  }
  return static_cast<double>(hits) / superpoint_pairs.size();
}

/// (RRE in degrees, RTE in meters). RRE is arccos((trace(R^T R_gt) - 1) / 2)
/// with the argument clamped against floating-point drift; the angle is
/// evaluated through rotation_angle, which computes the same quantity without
/// losing small angles to the conditioning of acos near 1.
inline std::pair<double, double> pose_errors(const RigidTransform& t_est,
                                             const RigidTransform& t_gt) {
  const double rre_deg =
      rotation_angle(Mat3(t_est.R.transpose() * t_gt.R)) * 180.0 / kPi;
  const double rte = (t_est.t - t_gt.t).norm();
  return {rre_deg, rte};
}

/// Fraction of pairs with RRE < rre_max AND RTE < rte_max.
inline double registration_recall_outdoor(
    const std::vector<std::pair<double, double>>& errors,
    const MetricThresholds& th) {
  if (errors.empty()) throw std::invalid_argument("no pairs");
  int hits = 0;
  for (const auto& [rre, rte] : errors) {
    if (rre < th.rre_max_deg && rte < th.rte_max_m) ++hits;
  }
  return static_cast<double>(hits) / errors.size();
}

struct PairMetrics {
  std::string name;
  std::optional<double> ir;
  std::optional<double> rmse;
  std::optional<double> pir;
  std::optional<double> rre_deg;
  std::optional<double> rte_m;
};

struct MetricsReport {
  MetricThresholds thresholds;
  std::vector<PairMetrics> pairs;
  std::optional<double> fmr;
  std::optional<double> rr_indoor;
  std::optional<double> rr_outdoor;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["thresholds"] = {{"delta_corr", thresholds.delta_corr},
                       {"eta", thresholds.eta},
                       {"gamma_rmse", thresholds.gamma_rmse},
                       {"zeta", thresholds.zeta},
                       {"rre_max_deg", thresholds.rre_max_deg},
                       {"rte_max_m", thresholds.rte_max_m}};
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : pairs) {
      nlohmann::json e{{"name", p.name}};
      auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) e[key] = *v;
      };
      put("ir", p.ir);
      put("rmse", p.rmse);
      put("pir", p.pir);
      put("rre_deg", p.rre_deg);
      put("rte_m", p.rte_m);
      arr.push_back(std::move(e));
    }
    j["pairs"] = std::move(arr);
    if (fmr) j["fmr"] = *fmr;
    if (rr_indoor) j["rr_indoor"] = *rr_indoor;
    if (rr_outdoor) j["rr_outdoor"] = *rr_outdoor;
    return j;
  }

  std::string to_table() const {
    std::ostringstream out;
    out << "thresholds: delta_corr=" << thresholds.delta_corr
        << " eta=" << thresholds.eta << " gamma_rmse=" << thresholds.gamma_rmse
        << " zeta=" << thresholds.zeta << " rre<" << thresholds.rre_max_deg
        << "deg rte<" << thresholds.rte_max_m << "m\n";
    out << std::left << std::setw(18) << "pair" << std::right << std::setw(9)
        << "IR" << std::setw(10) << "RMSE" << std::setw(9) << "PIR"
        << std::setw(10) << "RRE(deg)" << std::setw(9) << "RTE(m)" << "\n";
    auto cell = [&](const std::optional<double>& v, int w) {
      out << std::setw(w);
      if (v) {
        out << std::fixed << std::setprecision(4) << *v;
      } else {
        out << "-";
      }
      out << std::defaultfloat;
    };
    for (const auto& p : pairs) {
      out << std::left << std::setw(18) << p.name << std::right;
      cell(p.ir, 9);
      cell(p.rmse, 10);
      cell(p.pir, 9);
      cell(p.rre_deg, 10);
      cell(p.rte_m, 9);
      out << "\n";
    }
    out << "suite:";
    if (fmr) out << " FMR=" << *fmr;
    if (rr_indoor) out << " RR_indoor=" << *rr_indoor;
    if (rr_outdoor) out << " RR_outdoor=" << *rr_outdoor;
    out << "\n";
    return out.str();
  }
};

}  // namespace gsalign
