// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gsmind {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

using InstanceId = std::uint32_t;
inline constexpr InstanceId kNoInstance = std::numeric_limits<InstanceId>::max();

inline constexpr double kNearPlane = 0.01;

/// Rigid camera-to-world transform.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return {}; }
    static Pose from_matrix(const Mat4 &m);
    Mat4 matrix() const;
    Pose inverse() const;
    Vec3 operator*(const Vec3 &p) const { return rotation * p + translation; }
    Pose operator*(const Pose &other) const;

    /// Orthonormality and determinant checks within `tol`.
    bool is_valid(double tol = 1e-9) const;
    bool operator==(const Pose &other) const {
        return rotation == other.rotation && translation == other.translation;
    }
};

/// Right perturbation T * [Rodrigues(phi) | rho] with delta = (rho, phi).
Pose retract(const Pose &pose, const Vec6 &delta);
Mat3 rodrigues(const Vec3 &axis_angle);
Mat3 skew(const Vec3 &v);

/// Translation distance (m) and rotation angle (rad) between two poses.
double translation_error(const Pose &a, const Pose &b);
double rotation_error(const Pose &a, const Pose &b);

/// Text form: 16 numbers, row-major 4x4 camera-to-world.
std::string format_pose(const Pose &pose);
Pose parse_pose(const std::string &text);

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    void validate() const;
    bool operator==(const Intrinsics &) const = default;
    /// Same principal point and size, focal lengths divided by `factor` (wider view).
    Intrinsics widened(double factor) const;
};

/// One anisotropic primitive. Parameters stored in single precision.
struct GaussianSplat {
    Eigen::Vector3f center = Eigen::Vector3f::Zero();
    Eigen::Vector3f color = Eigen::Vector3f::Zero();
    Eigen::Vector3f log_scale = Eigen::Vector3f::Zero();
    Eigen::Vector4f rotation{1.0f, 0.0f, 0.0f, 0.0f}; // (w, x, y, z)
    float opacity_logit = 0.0f;
    InstanceId instance_id = kNoInstance;

    double opacity() const;
    bool operator==(const GaussianSplat &other) const;
};

double sigmoid(double x);
double inverse_sigmoid(double p);

/// Rotation matrix of q / |q| with q = (w, x, y, z).
Mat3 quaternion_to_matrix(const Vec4 &q);

/// R diag(exp(2 s)) R^T; throws InvalidRotation if |q| deviates from 1 by more than 1e-6.
Mat3 compose_covariance(const Vec3 &log_scale, const Vec4 &rotation);
Mat3 covariance_of(const GaussianSplat &g);

/// exp(-1/2 (x-u)^T Sigma^-1 (x-u)).
double density_at(const GaussianSplat &g, const Vec3 &x);

/// Camera-space point for a world point.
Vec3 world_to_camera(const Pose &camera_to_world, const Vec3 &p);

struct ProjectedGaussian {
    Vec2 mean;
    Mat2 cov;
    double depth = 0.0;
};

/// First-order pinhole projection of a Gaussian. Throws BehindCamera when z <= near plane.
ProjectedGaussian project_gaussian(const GaussianSplat &g, const Pose &pose, const Intrinsics &K);

/// The 2x3 pinhole Jacobian at camera-space point p.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3 &p_cam, const Intrinsics &K);

Pose look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up);

Vec2 project_point(const Vec3 &p, const Pose &pose, const Intrinsics &K);

/// Camera-space ray direction with unit z for pixel (x, y).
inline Vec3 pixel_ray(double x, double y, const Intrinsics &K) {
    return {(x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0};
}

struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    Vec3 center() const { return 0.5 * (min + max); }
    double volume() const;
    bool contains(const Vec3 &p, double tol = 0.0) const;
    bool operator==(const Aabb &other) const { return min == other.min && max == other.max; }
};

double aabb_iou(const Aabb &a, const Aabb &b);
double aabb_intersection_volume(const Aabb &a, const Aabb &b);

} // namespace gsmind
