#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <string>

#include "eqlift/errors.hpp"

namespace eqlift {

inline constexpr int kJoints = 16;
inline constexpr int kHipJoint = 0;
inline constexpr double kDepthEpsilonMm = 1.0;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// 3xn joint positions in millimeters. Frame (world / camera / hip-centered)
// is tracked by the caller; all poses in this codebase use 16 joints with
// joint 0 = hip.
using Pose3 = Eigen::Matrix<double, 3, kJoints>;
// 2xn joint positions in pixels.
using Pose2 = Eigen::Matrix<double, 2, kJoints>;

// Proper rotation, world vertical = +y, right-handed.
struct Rotation3 {
    Mat3 m = Mat3::Identity();

    Rotation3() = default;
    explicit Rotation3(const Mat3& mat) : m(mat) {}

    static Rotation3 identity() { return Rotation3(); }

    Rotation3 inverse() const { return Rotation3(m.transpose()); }
    Rotation3 operator*(const Rotation3& o) const { return Rotation3(m * o.m); }
    Vec3 operator*(const Vec3& v) const { return m * v; }

    bool is_valid(double tol = 1e-9) const {
        return (m.transpose() * m - Mat3::Identity()).norm() <= tol &&
               std::abs(m.determinant() - 1.0) <= tol;
    }
};

// Extrinsics (world -> camera) plus pinhole intrinsics.
struct Camera {
    Rotation3 rot;        // world -> camera
    Vec3 center{0, 0, 0}; // camera position, world mm
    Vec2 focal{1150.0, 1150.0};      // fx, fy in pixels
    Vec2 principal{500.0, 500.0};    // cx, cy in pixels
    std::string id;

    bool is_valid() const {
        return rot.is_valid(1e-6) && focal.x() > 0 && focal.y() > 0;
    }
};

// Right-handed rotation about the world vertical (y) axis.
inline Rotation3 rot_vertical(double angle_deg) {
    const double a = angle_deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, 0, s,
         0, 1, 0,
        -s, 0, c;
    return Rotation3(m);
}

// Rotation taking camera-1-frame directions into camera-2-frame directions.
inline Rotation3 relative_rotation(const Camera& c1, const Camera& c2) {
    return Rotation3(c2.rot.m * c1.rot.m.transpose());
}

// Camera at `center` looking at `target`, camera y pointing down in world
// terms (z forward, x right). Degenerate when the view direction is vertical.
inline Camera look_at_camera(const Vec3& center, const Vec3& target,
                             const Vec2& focal, const Vec2& principal,
                             const std::string& id) {
    Vec3 z = (target - center).normalized();
    Vec3 up(0, 1, 0);
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-9)
        throw ConfigInvalid("look_at_camera: view direction is vertical");
    x.normalize();
    Vec3 y = z.cross(x);
    Camera cam;
    cam.rot.m.row(0) = x.transpose();
    cam.rot.m.row(1) = y.transpose();
    cam.rot.m.row(2) = z.transpose();
    cam.center = center;
    cam.focal = focal;
    cam.principal = principal;
    cam.id = id;
    return cam;
}

// Pinhole projection of a world-frame pose. Every joint must be strictly in
// front of the camera (camera-frame z > kDepthEpsilonMm).
inline Pose2 project(const Camera& cam, const Pose3& pose_world) {
    Pose2 out;
    for (int j = 0; j < kJoints; ++j) {
        Vec3 q = cam.rot.m * (pose_world.col(j) - cam.center);
        if (q.z() <= kDepthEpsilonMm)
            throw NonPositiveDepth("project: joint " + std::to_string(j) +
                                   " has camera-frame depth " +
                                   std::to_string(q.z()) + " mm");
        out(0, j) = cam.focal.x() * q.x() / q.z() + cam.principal.x();
        out(1, j) = cam.focal.y() * q.y() / q.z() + cam.principal.y();
    }
    return out;
}

// Camera-frame coordinates with the hip moved to the origin.
inline Pose3 to_camera_hip_centered(const Camera& cam, const Pose3& pose_world) {
    Pose3 out;
    Vec3 hip = cam.rot.m * (pose_world.col(kHipJoint) - cam.center);
    for (int j = 0; j < kJoints; ++j)
        out.col(j) = cam.rot.m * (pose_world.col(j) - cam.center) - hip;
    return out;
}

// Least-squares rigid (optionally uniformly scaled) alignment of pred onto
// gt, reflections excluded via the determinant correction.
inline Pose3 procrustes_align(const Pose3& pred, const Pose3& gt,
                              bool with_scale = false) {
    Vec3 mu_p = pred.rowwise().mean();
    Vec3 mu_g = gt.rowwise().mean();
    Pose3 pc = pred.colwise() - mu_p;
    Pose3 gc = gt.colwise() - mu_g;
    if (gc.norm() < 1e-12)
        throw DegenerateTarget("procrustes_align: all target joints coincide");

    Mat3 cov = pc * gc.transpose();
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    Mat3 v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    Mat3 r = v * d * u.transpose();

    double s = 1.0;
    if (with_scale) {
        double denom = pc.squaredNorm();
        if (denom < 1e-12)
            throw DegenerateTarget("procrustes_align: source joints coincide");
        s = (svd.singularValues().asDiagonal().toDenseMatrix() * d).trace() / denom;
    }
    return (s * (r * pc)).colwise() + mu_g;
}

}  // namespace eqlift
