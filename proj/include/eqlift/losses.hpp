#pragma once

#include <cmath>
#include <vector>

#include "eqlift/compute.hpp"
#include "eqlift/geometry.hpp"
#include "eqlift/model.hpp"

namespace eqlift {

// Per-pair target for the siamese loss: the relative camera rotation and the
// ground-truth pose distance in millimeters (hip-centered, common frame).
struct SiameseTarget {
    Rotation3 rel_rot;      // R2 * R1^-1
    double pose_dist = 0.0; // mm, >= 0
};

inline constexpr double kDefaultLambda1 = 0.01;

// rel_rot and pose_dist for one record pair; the distance is evaluated with
// pose 1 rotated into the camera-2 frame (orthonormality makes the choice of
// common frame irrelevant).
inline SiameseTarget build_siamese_target(const Camera& cam1, const Pose3& pose1_cam,
                                          const Camera& cam2, const Pose3& pose2_cam) {
    SiameseTarget t;
    t.rel_rot = relative_rotation(cam1, cam2);
    t.pose_dist = (t.rel_rot.m * pose1_cam - pose2_cam).norm();
    return t;
}

// Mean over the batch of squared Euclidean distance in normalized coordinates.
// Gradient w.r.t. pred is written into `dpred` when non-null.
inline double l2_pose_loss(const Mat& pred, const Mat& target, Mat* dpred = nullptr) {
    detail::check(pred.rows() == target.rows() && pred.cols() == target.cols(),
                  "l2_pose_loss: shape mismatch");
    const double inv_b = 1.0 / static_cast<double>(pred.rows());
    Mat diff = pred - target;
    if (dpred) *dpred = 2.0 * inv_b * diff;
    return diff.squaredNorm() * inv_b;
}

// Mean over pairs of (|rel_rot * h1 - h2|_F - lambda1 * pose_dist)^2.
// h1, h2: batch x 3M with unit triples. Gradients are accumulated into
// dh1/dh2 when non-null (same shape as h1/h2, zeroed here).
inline double siamese_loss(const Mat& h1, const Mat& h2,
                           const std::vector<SiameseTarget>& targets,
                           double lambda1 = kDefaultLambda1, Mat* dh1 = nullptr,
                           Mat* dh2 = nullptr) {
    detail::check(h1.rows() == h2.rows() && h1.cols() == h2.cols(),
                  "siamese_loss: embedding shape mismatch");
    detail::check(static_cast<Eigen::Index>(targets.size()) == h1.rows(),
                  "siamese_loss: target count != batch size");
    const Eigen::Index m = h1.cols() / 3;
    const double inv_b = 1.0 / static_cast<double>(h1.rows());
    if (dh1) dh1->setZero(h1.rows(), h1.cols());
    if (dh2) dh2->setZero(h2.rows(), h2.cols());

    double loss = 0.0;
    for (Eigen::Index i = 0; i < h1.rows(); ++i) {
        const Mat3& r = targets[static_cast<std::size_t>(i)].rel_rot.m;
        Eigen::Matrix3Xd a(3, m);
        for (Eigen::Index k = 0; k < m; ++k) {
            Vec3 v1(h1(i, 3 * k), h1(i, 3 * k + 1), h1(i, 3 * k + 2));
            Vec3 v2(h2(i, 3 * k), h2(i, 3 * k + 1), h2(i, 3 * k + 2));
            a.col(k) = r * v1 - v2;
        }
        double dist = a.norm();
        double resid = dist - lambda1 * targets[static_cast<std::size_t>(i)].pose_dist;
        loss += resid * resid * inv_b;
        if (dh1 || dh2) {
            double scale = 2.0 * inv_b * resid / std::max(dist, 1e-12);
            Eigen::Matrix3Xd da = scale * a;
            for (Eigen::Index k = 0; k < m; ++k) {
                if (dh1) {
                    Vec3 g = r.transpose() * da.col(k);
                    (*dh1)(i, 3 * k) += g.x();
                    (*dh1)(i, 3 * k + 1) += g.y();
                    (*dh1)(i, 3 * k + 2) += g.z();
                }
                if (dh2) {
                    (*dh2)(i, 3 * k) -= da(0, k);
                    (*dh2)(i, 3 * k + 1) -= da(1, k);
                    (*dh2)(i, 3 * k + 2) -= da(2, k);
                }
            }
        }
    }
    return loss;
}

// l = l2_a + l2_b + lambda2 * l_s
inline double total_loss(double l2_a, double l2_b, double l_s, double lambda2) {
    return l2_a + l2_b + lambda2 * l_s;
}

// Unit-norm embedding columns bound the siamese distance by 2*sqrt(M); a
// target above that is unreachable and worth a warning in the harness.
inline double siamese_distance_bound(int m) {
    return 2.0 * std::sqrt(static_cast<double>(m));
}

}  // namespace eqlift
