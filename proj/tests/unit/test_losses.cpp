// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gsmind/errors.hpp"
#include "gsmind/losses.hpp"
#include "gsmind/render.hpp"
#include "test_support.hpp"

using namespace gsmind;
using gsmind::testing::relative_error;
using gsmind::testing::square_intrinsics;

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

Image<double> random_image(std::mt19937_64 &rng, int w, int h, int c) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image<double> img(w, h, c);
    for (auto &v : img.storage()) v = u(rng);
    return img;
}

// Direct per-pixel evaluation: truncated 11x11 window renormalized at the border.
double ssim_oracle(const Image<double> &a, const Image<double> &b) {
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        for (int y = 0; y < a.height(); ++y) {
            for (int x = 0; x < a.width(); ++x) {
                double wsum = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dy = -5; dy <= 5; ++dy) {
                    for (int dx = -5; dx <= 5; ++dx) {
                        const int xx = x + dx, yy = y + dy;
                        if (xx < 0 || yy < 0 || xx >= a.width() || yy >= a.height()) continue;
                        const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
                        const double va = a(xx, yy, c), vb = b(xx, yy, c);
                        wsum += w;
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                }
                ma /= wsum;
                mb /= wsum;
                const double va = saa / wsum - ma * ma, vb = sbb / wsum - mb * mb, cab = sab / wsum - ma * mb;
                total += ((2 * ma * mb + kC1) * (2 * cab + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
            }
        }
    }
    return total / static_cast<double>(a.size());
}

template <typename F>
void check_image_gradient(const Image<double> &x, const Image<double> &grad, F &&f, double tol) {
    for (std::size_t i = 0; i < x.size(); i += 7) {
        Image<double> p = x, m = x;
        const double h = 1e-6;
        p.storage()[i] += h;
        m.storage()[i] -= h;
        const double fd = (f(p) - f(m)) / (2 * h);
        EXPECT_LT(std::abs(fd - grad.storage()[i]), tol * std::max(1.0, std::abs(fd))) << "index " << i;
    }
}

GaussianSplat with_scale(const Vec3 &s) {
    GaussianSplat g;
    g.log_scale = s.array().log().matrix().cast<float>();
    return g;
}

} // namespace

TEST(Ssim, IdenticalAndConstantClosedForm) {
    std::mt19937_64 rng(1);
    const auto a = random_image(rng, 13, 9, 3);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    for (double va : {0.0, 0.3, 1.0}) {
        for (double vb : {0.0, 0.5, 0.9}) {
            const Image<double> x(12, 12, 1, va), y(12, 12, 1, vb);
            EXPECT_NEAR(ssim(x, y), (2 * va * vb + kC1) / (va * va + vb * vb + kC1), 1e-12);
        }
    }
    EXPECT_THROW(ssim(Image<double>(4, 4), Image<double>(4, 5)), Error);
}

TEST(Ssim, MatchesSlidingWindowOracle) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 5; ++t) {
        const int w = 6 + static_cast<int>(rng() % 20), h = 6 + static_cast<int>(rng() % 20);
        const auto a = random_image(rng, w, h, 3), b = random_image(rng, w, h, 3);
        const double s = ssim(a, b);
        EXPECT_NEAR(s, ssim_oracle(a, b), 1e-9);
        EXPECT_GE(s, -1.0);
        EXPECT_LE(s, 1.0);
    }
}

TEST(Ssim, GradientMatchesFiniteDifference) {
    std::mt19937_64 rng(3);
    const auto a = random_image(rng, 14, 12, 2), b = random_image(rng, 14, 12, 2);
    Image<double> g;
    ssim(a, b, &g);
    check_image_gradient(a, g, [&](const Image<double> &x) { return ssim(x, b); }, 1e-6);
}

TEST(LossRgb, Values) {
    std::mt19937_64 rng(4);
    const auto a = random_image(rng, 10, 10, 3);
    EXPECT_NEAR(loss_rgb(a, a), 0.0, 1e-12);
    const ColorImage ones(16, 16, 3, 1.0), zeros(16, 16, 3, 0.0);
    const double s = kC1 / (1.0 + kC1);
    EXPECT_NEAR(loss_rgb(ones, zeros), 0.8 + 0.2 * (1.0 - s), 1e-12);
    for (int t = 0; t < 5; ++t) {
        const auto x = random_image(rng, 11, 9, 3), y = random_image(rng, 11, 9, 3);
        double l1 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) l1 += std::abs(x.storage()[i] - y.storage()[i]);
        l1 /= static_cast<double>(x.size());
        EXPECT_NEAR(loss_rgb(x, y), 0.8 * l1 + 0.2 * (1.0 - ssim_oracle(x, y)), 1e-9);
    }
    EXPECT_THROW(loss_rgb(ColorImage(4, 4, 3), ColorImage(4, 3, 3)), Error);
}

TEST(LossRgb, GradientMatchesFiniteDifference) {
    std::mt19937_64 rng(5);
    const auto a = random_image(rng, 12, 10, 3), b = random_image(rng, 12, 10, 3);
    ColorImage g;
    loss_rgb(a, b, 0.2, &g);
    check_image_gradient(a, g, [&](const ColorImage &x) { return loss_rgb(x, b); }, 1e-6);
}

TEST(LossDepth, ValuesAndMasking) {
    const DepthImage a(8, 8, 1, 1.0), b(8, 8, 1, 1.1);
    EXPECT_EQ(loss_depth(a, a), 0.0);
    EXPECT_NEAR(loss_depth(a, b), 0.1, 1e-12);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    DepthImage x(9, 7), y(9, 7);
    double sum = 0;
    int n = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        x.storage()[i] = rng() % 5 ? u(rng) : 0.0;
        y.storage()[i] = rng() % 5 ? u(rng) : 0.0;
        if (x.storage()[i] > 0 && y.storage()[i] > 0) {
            sum += std::abs(x.storage()[i] - y.storage()[i]);
            ++n;
        }
    }
    DepthImage g;
    EXPECT_NEAR(loss_depth(x, y, &g), sum / n, 1e-12);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x.storage()[i] > 0 && y.storage()[i] > 0)) EXPECT_EQ(g.storage()[i], 0.0);
    }
    EXPECT_EQ(loss_depth(DepthImage(3, 3), DepthImage(3, 3)), 0.0);
}

TEST(LossNormal, IdenticalAndComposedOracle) {
    const Intrinsics K = square_intrinsics(12, 12.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(1.0, 1.2);
    DepthImage a(12, 12), b(12, 12);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) {
            a(x, y) = 1.0 + 0.02 * x + 0.01 * y;
            b(x, y) = u(rng);
        }
    }
    EXPECT_NEAR(loss_normal(a, a, K), 0.0, 1e-12);
    const auto na = depth_to_normals(a, K), nb = depth_to_normals(b, K);
    double sum = 0;
    int n = 0;
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) {
            const Vec3 p(na(x, y, 0), na(x, y, 1), na(x, y, 2)), q(nb(x, y, 0), nb(x, y, 1), nb(x, y, 2));
            if (p.squaredNorm() == 0 || q.squaredNorm() == 0) continue;
            sum += 1.0 - p.dot(q);
            ++n;
        }
    }
    ASSERT_GT(n, 0);
    DepthImage g;
    const double l = loss_normal(a, b, K, &g);
    EXPECT_NEAR(l, sum / n, 1e-12);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 2.0);
    check_image_gradient(a, g, [&](const DepthImage &x) { return loss_normal(x, b, K); }, 1e-5);
}

TEST(LossScale, Examples) {
    EXPECT_EQ(loss_scale(std::vector<GaussianSplat>{}), 0.0);
    const std::vector<GaussianSplat> iso{with_scale(Vec3(0.1, 0.1, 0.1)), with_scale(Vec3(2, 2, 2))};
    EXPECT_EQ(loss_scale(iso), 0.0);
    EXPECT_EQ(scale_excess(Vec3(std::log(10.0), 0.0, 0.0)), 0.0);
    EXPECT_NEAR(scale_excess(Vec3(std::log(100.0), 0.0, 0.0)), std::log(10.0), 1e-12);
    const std::vector<GaussianSplat> one{with_scale(Vec3(100, 1, 1))};
    EXPECT_NEAR(loss_scale(one), std::log(10.0), 1e-6);
    // mean over the violating subset only
    const std::vector<GaussianSplat> mixed{with_scale(Vec3(100, 1, 1)), with_scale(Vec3(1, 1, 1)),
                                           with_scale(Vec3(1, 1000, 1))};
    EXPECT_NEAR(loss_scale(mixed), 0.5 * (std::log(10.0) + std::log(100.0)), 1e-5);
}

TEST(LossScale, PermutationAndRotationInvariance) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.5);
    for (int t = 0; t < 50; ++t) {
        const Vec3 s(n(rng), n(rng), n(rng));
        GaussianSplat a;
        a.log_scale = s.cast<float>();
        GaussianSplat b = a;
        b.log_scale = Vec3(s.z(), s.x(), s.y()).cast<float>();
        b.rotation = Vec4(n(rng), n(rng), n(rng), n(rng)).normalized().cast<float>();
        EXPECT_EQ(loss_scale(std::vector<GaussianSplat>{a}), loss_scale(std::vector<GaussianSplat>{b}));
        EXPECT_GE(scale_excess(s), 0.0);
    }
}

TEST(LossScale, GradientMatchesFiniteDifference) {
    std::vector<GaussianSplat> gs{with_scale(Vec3(50, 1, 2)), with_scale(Vec3(1, 1, 1)),
                                  with_scale(Vec3(0.01, 0.5, 0.3))};
    std::vector<Vec3> grad;
    loss_scale(gs, 10.0, &grad);
    ASSERT_EQ(grad.size(), gs.size());
    EXPECT_EQ(grad[1], Vec3::Zero());
    for (std::size_t i : {0u, 2u}) {
        for (int k = 0; k < 3; ++k) {
            auto p = gs, m = gs;
            const float h = 1e-2f;
            p[i].log_scale[k] += h;
            m[i].log_scale[k] -= h;
            const double fd = (loss_scale(p) - loss_scale(m)) / (2.0 * h);
            EXPECT_NEAR(grad[i][k], fd, 1e-4);
        }
    }
}

TEST(TotalLoss, Weights) {
    EXPECT_EQ(total_loss({}), 0.0);
    EXPECT_NEAR(total_loss({1, 1, 1, 1}), 2.2, 1e-15);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int t = 0; t < 20; ++t) {
        const LossComponents c{u(rng), u(rng), u(rng), u(rng)};
        EXPECT_NEAR(total_loss(c), c.rgb + 0.1 * c.depth + 0.1 * c.normal + c.scale, 1e-12);
    }
    EXPECT_GT(total_loss({0, 0, 1e-9, 0}), 0.0);
}

TEST(DepthToNormals, PlaneFacesCamera) {
    const Intrinsics K = square_intrinsics(8, 8.0);
    const auto n = depth_to_normals(DepthImage(8, 8, 1, 2.0), K);
    EXPECT_EQ(n(0, 0, 2), 0.0);
    EXPECT_NEAR(std::abs(n(4, 4, 2)), 1.0, 1e-12);
    EXPECT_NEAR(n(4, 4, 0), 0.0, 1e-12);
}
