// SPDX-License-Identifier: Apache-2.0
#include "gsmind/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "gsmind/errors.hpp"

namespace gsmind {

Pose Pose::from_matrix(const Mat4 &m) {
    Pose p;
    p.rotation = m.topLeftCorner<3, 3>();
    p.translation = m.topRightCorner<3, 1>();
    return p;
}

Mat4 Pose::matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

Pose Pose::inverse() const {
    Pose p;
    p.rotation = rotation.transpose();
    p.translation = -(p.rotation * translation);
    return p;
}

Pose Pose::operator*(const Pose &other) const {
    Pose p;
    p.rotation = rotation * other.rotation;
    p.translation = rotation * other.translation + translation;
    return p;
}

bool Pose::is_valid(double tol) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Mat3 skew(const Vec3 &v) {
    Mat3 s;
    s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return s;
}

Mat3 rodrigues(const Vec3 &axis_angle) {
    const double theta = axis_angle.norm();
    const Mat3 k = skew(axis_angle);
    if (theta < 1e-12) return Mat3::Identity() + k;
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    return Mat3::Identity() + a * k + b * k * k;
}

Pose retract(const Pose &pose, const Vec6 &delta) {
    Pose d;
    d.rotation = rodrigues(delta.tail<3>());
    d.translation = delta.head<3>();
    Pose out = pose * d;
    // re-orthonormalize to keep accumulated drift out of long refinements
    Eigen::JacobiSVD<Mat3> svd(out.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.rotation = svd.matrixU() * svd.matrixV().transpose();
    return out;
}

double translation_error(const Pose &a, const Pose &b) { return (a.translation - b.translation).norm(); }

double rotation_error(const Pose &a, const Pose &b) {
    const Mat3 r = a.rotation.transpose() * b.rotation;
    const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
}

std::string format_pose(const Pose &pose) {
    const Mat4 m = pose.matrix();
    std::ostringstream os;
    os << std::setprecision(17);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            os << m(r, c) << (c == 3 ? '\n' : ' ');
        }
    }
    return os.str();
}

Pose parse_pose(const std::string &text) {
    std::istringstream is(text);
    Mat4 m;
    for (int i = 0; i < 16; ++i) {
        if (!(is >> m(i / 4, i % 4))) fail(Errc::BadShape, "pose text needs 16 numbers");
    }
    double extra;
    if (is >> extra) fail(Errc::BadShape, "pose text has more than 16 numbers");
    const Pose p = Pose::from_matrix(m);
    if (!p.is_valid(1e-6)) fail(Errc::BadShape, "pose rotation is not orthonormal");
    return p;
}

void Intrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) fail(Errc::InvalidArgument, "focal lengths must be positive");
    if (width <= 0 || height <= 0) fail(Errc::InvalidArgument, "image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
        fail(Errc::InvalidArgument, "principal point outside image");
    }
}

Intrinsics Intrinsics::widened(double factor) const {
    Intrinsics k = *this;
    k.fx /= factor;
    k.fy /= factor;
    return k;
}

double GaussianSplat::opacity() const { return sigmoid(opacity_logit); }

bool GaussianSplat::operator==(const GaussianSplat &other) const {
    return center == other.center && color == other.color && log_scale == other.log_scale &&
           rotation == other.rotation && opacity_logit == other.opacity_logit &&
           instance_id == other.instance_id;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double inverse_sigmoid(double p) { return std::log(p / (1.0 - p)); }

Mat3 quaternion_to_matrix(const Vec4 &q_raw) {
    const Vec4 q = q_raw / q_raw.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Mat3 compose_covariance(const Vec3 &log_scale, const Vec4 &rotation) {
    if (std::abs(rotation.norm() - 1.0) > 1e-6) {
        fail(Errc::InvalidRotation, "quaternion is not unit norm");
    }
    const Mat3 r = quaternion_to_matrix(rotation);
    const Vec3 var = (2.0 * log_scale).array().exp();
    return r * var.asDiagonal() * r.transpose();
}

Mat3 covariance_of(const GaussianSplat &g) {
    return compose_covariance(g.log_scale.cast<double>(), g.rotation.cast<double>());
}

double density_at(const GaussianSplat &g, const Vec3 &x) {
    const Mat3 sigma = covariance_of(g);
    Eigen::FullPivLU<Mat3> lu(sigma);
    if (!lu.isInvertible() || !(std::abs(sigma.determinant()) > 0.0)) {
        fail(Errc::SingularCovariance, "covariance not invertible");
    }
    const Vec3 d = x - g.center.cast<double>();
    return std::exp(-0.5 * d.dot(lu.solve(d)));
}

Vec3 world_to_camera(const Pose &camera_to_world, const Vec3 &p) {
    return camera_to_world.rotation.transpose() * (p - camera_to_world.translation);
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3 &p, const Intrinsics &K) {
    const double iz = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> j;
    j << K.fx * iz, 0.0, -K.fx * p.x() * iz * iz, 0.0, K.fy * iz, -K.fy * p.y() * iz * iz;
    return j;
}

ProjectedGaussian project_gaussian(const GaussianSplat &g, const Pose &pose, const Intrinsics &K) {
    const Vec3 pc = world_to_camera(pose, g.center.cast<double>());
    if (!(pc.z() > kNearPlane)) fail(Errc::BehindCamera, "gaussian center behind near plane");
    const Mat3 r_cw = pose.rotation.transpose();
    const Mat3 sigma_cam = r_cw * covariance_of(g) * r_cw.transpose();
    const auto j = projection_jacobian(pc, K);
    ProjectedGaussian out;
    out.mean = {K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy};
    out.cov = j * sigma_cam * j.transpose();
    out.cov(0, 1) = out.cov(1, 0) = 0.5 * (out.cov(0, 1) + out.cov(1, 0));
    out.depth = pc.z();
    return out;
}

Pose look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up) {
    Vec3 forward = target - eye;
    if (forward.norm() <= 1e-6) fail(Errc::DegenerateLookAt, "eye and target coincide");
    forward.normalize();
    // image +y points down: camera y is -up with the forward component removed
    Vec3 right = forward.cross(up);
    if (up.norm() <= 1e-12 || right.norm() <= 1e-9 * up.norm()) {
        fail(Errc::DegenerateLookAt, "up vector parallel to view direction");
    }
    right.normalize();
    const Vec3 down = forward.cross(right);
    Pose p;
    p.rotation.col(0) = right;
    p.rotation.col(1) = down;
    p.rotation.col(2) = forward;
    p.translation = eye;
    return p;
}

Vec2 project_point(const Vec3 &p, const Pose &pose, const Intrinsics &K) {
    const Vec3 pc = world_to_camera(pose, p);
    if (!(pc.z() > kNearPlane)) fail(Errc::BehindCamera, "point behind near plane");
    return {K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy};
}

double Aabb::volume() const {
    const Vec3 e = (max - min).cwiseMax(0.0);
    return e.x() * e.y() * e.z();
}

bool Aabb::contains(const Vec3 &p, double tol) const {
    return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
}

double aabb_intersection_volume(const Aabb &a, const Aabb &b) {
    const Vec3 lo = a.min.cwiseMax(b.min);
    const Vec3 hi = a.max.cwiseMin(b.max);
    const Vec3 e = (hi - lo).cwiseMax(0.0);
    return e.x() * e.y() * e.z();
}

double aabb_iou(const Aabb &a, const Aabb &b) {
    const double inter = aabb_intersection_volume(a, b);
    const double uni = a.volume() + b.volume() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

} // namespace gsmind
