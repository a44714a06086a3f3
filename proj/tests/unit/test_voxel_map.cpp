// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "gsmind/errors.hpp"
#include "gsmind/voxel_map.hpp"
#include "test_support.hpp"

using namespace gsmind;
using gsmind::testing::square_intrinsics;

namespace {

DepthImage constant_depth(int size, double d) { return DepthImage(size, size, 1, d); }

std::vector<VoxelKey> keys_along_x(int n) {
    std::vector<VoxelKey> keys;
    for (int i = 0; i < n; ++i) keys.push_back({i, 0, 0});
    return keys;
}

void expect_cell_invariants(const VoxelMap &vm) {
    for (const auto &[key, cell] : vm.cells()) {
        std::uint64_t sum = 0;
        double psum = 0.0;
        for (const auto &s : cell.slots) {
            if (s.empty()) continue;
            sum += s.count;
            psum += assignment_probability(cell, s.id);
        }
        EXPECT_LE(sum, cell.total);
        EXPECT_LE(psum, 1.0 + 1e-12);
    }
}

} // namespace

TEST(VoxelMap, KeyAndCenter) {
    VoxelMap vm(0.02);
    EXPECT_EQ(vm.key_of(Vec3(0.01, -0.01, 0.05)), (VoxelKey{0, -1, 2}));
    EXPECT_TRUE(vm.center_of({0, -1, 2}).isApprox(Vec3(0.01, -0.01, 0.05)));
    EXPECT_THROW(VoxelMap(0.0), Error);
}

TEST(VoxelMap, IntegratePlaneCountsEveryPixel) {
    VoxelMap vm(0.02);
    const Intrinsics K = square_intrinsics(8, 8.0); // 0.125 m pixel spacing at 1 m
    const auto fresh = vm.integrate_frame(constant_depth(8, 1.0), Pose::identity(), K);
    EXPECT_EQ(fresh.size(), 64u);
    EXPECT_EQ(vm.size(), 64u);
    EXPECT_TRUE(vm.integrate_frame(constant_depth(8, 1.0), Pose::identity(), K).empty());
}

TEST(VoxelMap, InvalidAndFarDepthIgnored) {
    VoxelMap vm(0.02, 8.0);
    const Intrinsics K = square_intrinsics(4, 4.0);
    DepthImage d = constant_depth(4, 0.0);
    d(0, 0) = 9.0;
    d(1, 1) = 2.0;
    EXPECT_EQ(vm.integrate_frame(d, Pose::identity(), K).size(), 1u);
    EXPECT_THROW(vm.integrate_frame(constant_depth(5, 1.0), Pose::identity(), K), Error);
}

TEST(VoxelMap, NewVoxelsInFrustumMatchesIntegration) {
    const Intrinsics K = square_intrinsics(12, 10.0);
    VoxelMap vm(0.02);
    std::set<VoxelKey> cumulative;
    for (int i = 0; i < 5; ++i) {
        const Pose pose = look_at(Vec3(0.3 * i, -1.0, 1.0), Vec3(0.3 * i, 0.0, 0.0), Vec3(0, 0, 1));
        const DepthImage depth = constant_depth(12, 1.0 + 0.1 * i);
        const auto predicted = vm.new_voxels_in_frustum(depth, pose, K);
        std::set<VoxelKey> expected;
        for (int y = 0; y < 12; ++y) {
            for (int x = 0; x < 12; ++x) {
                const VoxelKey k = vm.key_of(pose * (depth(x, y) * pixel_ray(x, y, K)));
                if (!cumulative.count(k)) expected.insert(k);
            }
        }
        std::set<VoxelKey> got;
        for (const auto &h : predicted) got.insert(h.key);
        EXPECT_EQ(got, expected);
        EXPECT_EQ(got.size(), predicted.size());
        const auto fresh = vm.integrate_frame(depth, pose, K);
        ASSERT_EQ(fresh.size(), predicted.size());
        for (std::size_t j = 0; j < fresh.size(); ++j) {
            EXPECT_EQ(fresh[j].key, predicted[j].key);
            EXPECT_EQ(fresh[j].x, predicted[j].x);
            EXPECT_EQ(fresh[j].y, predicted[j].y);
        }
        cumulative.insert(expected.begin(), expected.end());
    }
}

TEST(VoxelMap, BackprojectMaskIsSortedUnique) {
    VoxelMap vm(0.5);
    const Intrinsics K = square_intrinsics(6, 6.0);
    Mask m(6, 6, 1, 1);
    m(0, 0) = 0;
    const auto keys = vm.backproject_mask(m, constant_depth(6, 1.0), Pose::identity(), K);
    EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
    EXPECT_EQ(std::adjacent_find(keys.begin(), keys.end()), keys.end());
    EXPECT_LT(keys.size(), 35u);
    EXPECT_THROW(vm.backproject_mask(Mask(5, 6), constant_depth(6, 1.0), Pose::identity(), K), Error);
}

TEST(VoxelMap, AssignmentProbability) {
    VoxelCell empty;
    EXPECT_EQ(assignment_probability(empty, 3), 0.0);
    VoxelMap vm;
    const std::vector<VoxelKey> k{{0, 0, 0}};
    vm.record_hits(k, 1);
    vm.record_hits(k, 1);
    vm.record_hits(k, 2);
    EXPECT_DOUBLE_EQ(vm.assignment_probability(k[0], 1), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(vm.assignment_probability(k[0], 2), 1.0 / 3.0);
    EXPECT_EQ(vm.assignment_probability(k[0], 7), 0.0);
    EXPECT_EQ(vm.assignment_probability({5, 5, 5}, 1), 0.0);
}

TEST(VoxelMap, CandidateInstances) {
    VoxelMap vm;
    EXPECT_TRUE(vm.candidate_instances(keys_along_x(3)).empty());
    const std::vector<VoxelKey> a{{0, 0, 0}}, b{{1, 0, 0}};
    vm.record_hits(a, 1);
    vm.record_hits(b, 2);
    EXPECT_EQ(vm.candidate_instances(keys_along_x(2)), (std::set<InstanceId>{1, 2}));
}

TEST(VoxelMap, CandidatesEqualBruteForceScan) {
    std::mt19937_64 rng(9);
    VoxelMap vm;
    std::map<VoxelKey, std::set<InstanceId>> oracle;
    for (int i = 0; i < 400; ++i) {
        const VoxelKey k{static_cast<int>(rng() % 10), static_cast<int>(rng() % 10), 0};
        const InstanceId id = static_cast<InstanceId>(rng() % 3); // never more than 3 ids: no eviction
        vm.record_hits(std::span<const VoxelKey>(&k, 1), id);
        oracle[k].insert(id);
    }
    std::vector<VoxelKey> query;
    std::set<InstanceId> expected;
    for (const auto &[k, ids] : oracle) {
        if (rng() % 2) continue;
        query.push_back(k);
        expected.insert(ids.begin(), ids.end());
    }
    EXPECT_EQ(vm.candidate_instances(query), expected);
}

TEST(VoxelMap, GeoSimilarity) {
    VoxelMap vm;
    EXPECT_THROW(vm.geo_similarity({}, 0), Error);
    const auto keys = keys_along_x(4);
    vm.record_hits(keys, 5);
    EXPECT_DOUBLE_EQ(vm.geo_similarity(keys, 5), 1.0);
    const auto half = keys_along_x(8);
    EXPECT_DOUBLE_EQ(vm.geo_similarity(half, 5), 0.5);
}

TEST(VoxelMap, GeoSimilarityMatchesBruteForceSum) {
    std::mt19937_64 rng(21);
    VoxelMap vm;
    const auto keys = keys_along_x(30);
    for (int i = 0; i < 500; ++i) {
        const VoxelKey k = keys[rng() % keys.size()];
        vm.record_hits(std::span<const VoxelKey>(&k, 1), static_cast<InstanceId>(rng() % 5));
    }
    for (InstanceId id = 0; id < 5; ++id) {
        double sum = 0.0;
        for (const auto &k : keys) {
            const VoxelCell *c = vm.find(k);
            if (!c || c->total == 0) continue;
            for (const auto &s : c->slots) {
                if (!s.empty() && s.id == id) sum += static_cast<double>(s.count) / c->total;
            }
        }
        const double g = vm.geo_similarity(keys, id);
        EXPECT_NEAR(g, sum / keys.size(), 1e-12);
        EXPECT_GE(g, 0.0);
        EXPECT_LE(g, 1.0);
    }
}

TEST(VoxelMap, RecordHitsInsertIncrementEvict) {
    VoxelMap vm;
    const std::vector<VoxelKey> k{{0, 0, 0}};
    vm.record_hits(k, 7);
    const VoxelCell *c = vm.find(k[0]);
    ASSERT_NE(c, nullptr);
    EXPECT_EQ(c->total, 1u);
    EXPECT_EQ(c->slots[0], (VoxelSlot{7, 1}));

    VoxelMap inc;
    VoxelCell cell;
    cell.slots[0] = {4, 2};
    cell.slots[1] = {6, 1};
    cell.total = 3;
    inc.insert_cell(k[0], cell);
    inc.record_hits(k, 4);
    EXPECT_EQ(inc.find(k[0])->slots[0], (VoxelSlot{4, 3}));
    EXPECT_EQ(inc.find(k[0])->total, 4u);

    VoxelMap full;
    VoxelCell f;
    f.slots = {VoxelSlot{1, 5}, VoxelSlot{2, 4}, VoxelSlot{3, 1}};
    f.total = 10;
    full.insert_cell(k[0], f);
    EXPECT_EQ(full.instance_voxel_count(3), 1u);
    full.record_hits(k, 9);
    const VoxelCell *after = full.find(k[0]);
    EXPECT_EQ(after->slots[0], (VoxelSlot{1, 5}));
    EXPECT_EQ(after->slots[1], (VoxelSlot{2, 4}));
    EXPECT_EQ(after->slots[2], (VoxelSlot{9, 1}));
    EXPECT_EQ(after->total, 11u);
    EXPECT_EQ(full.instance_voxel_count(3), 0u);
    EXPECT_EQ(full.instance_voxel_count(9), 1u);
}

TEST(VoxelMap, GaussianIndex) {
    VoxelMap vm;
    const std::vector<VoxelKey> keys{{0, 0, 0}, {1, 0, 0}};
    EXPECT_THROW(vm.register_gaussians(keys, std::vector<std::uint32_t>{1, 2}), Error);
    vm.mark_observed(keys[0]);
    vm.mark_observed(keys[1]);
    vm.register_gaussians(keys, std::vector<std::uint32_t>{10, 11});
    EXPECT_EQ(vm.gaussians_for(std::span<const VoxelKey>(keys.data(), 1)), (std::vector<std::uint32_t>{10}));
    EXPECT_EQ(vm.gaussians_for(keys), (std::vector<std::uint32_t>{10, 11}));
    const std::vector<VoxelKey> other{{4, 4, 4}};
    EXPECT_TRUE(vm.gaussians_for(other).empty());
    EXPECT_THROW(vm.register_gaussians(keys, std::vector<std::uint32_t>{1}), Error);
}

TEST(VoxelMap, GaussianIndexMatchesHashMapOracle) {
    std::mt19937_64 rng(4);
    VoxelMap vm;
    std::map<VoxelKey, std::set<std::uint32_t>> oracle;
    const auto all = keys_along_x(20);
    for (const auto &k : all) vm.mark_observed(k);
    for (std::uint32_t g = 0; g < 300; ++g) {
        const VoxelKey k = all[rng() % all.size()];
        vm.register_gaussians(std::span<const VoxelKey>(&k, 1), std::span<const std::uint32_t>(&g, 1));
        oracle[k].insert(g);
    }
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<VoxelKey> q;
        std::set<std::uint32_t> expected;
        for (const auto &k : all) {
            if (rng() % 3) continue;
            q.push_back(k);
            expected.insert(oracle[k].begin(), oracle[k].end());
        }
        const auto got = vm.gaussians_for(q);
        EXPECT_EQ(std::set<std::uint32_t>(got.begin(), got.end()), expected);
    }
}

TEST(VoxelMap, RemoveInstance) {
    VoxelMap vm;
    const std::vector<VoxelKey> k{{0, 0, 0}};
    vm.record_hits(k, 1);
    vm.record_hits(k, 1);
    vm.record_hits(k, 2);
    vm.register_gaussians(k, std::vector<std::uint32_t>{5});
    const VoxelMap before = vm;
    vm.remove_instance(42);
    EXPECT_EQ(vm, before);

    vm.remove_instance(1, std::vector<std::uint32_t>{5});
    const VoxelCell *c = vm.find(k[0]);
    EXPECT_EQ(c->total, 1u);
    EXPECT_EQ(c->slots[0], (VoxelSlot{2, 1}));
    EXPECT_TRUE(c->slots[1].empty());
    EXPECT_TRUE(c->gaussian_ids.empty());
    EXPECT_EQ(vm.instance_voxel_count(1), 0u);

    vm.remove_instance(2);
    EXPECT_EQ(vm.find(k[0])->total, 0u);
    EXPECT_TRUE(vm.candidate_instances(k).empty());
}

TEST(VoxelMap, RandomOperationSequencesKeepInvariants) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        VoxelMap vm;
        const auto all = keys_along_x(12);
        for (int op = 0; op < 400; ++op) {
            const int kind = static_cast<int>(rng() % 10);
            if (kind < 8) {
                std::vector<VoxelKey> keys;
                for (const auto &k : all) {
                    if (rng() % 3 == 0) keys.push_back(k);
                }
                vm.record_hits(keys, static_cast<InstanceId>(rng() % 6));
            } else {
                vm.remove_instance(static_cast<InstanceId>(rng() % 6));
            }
            for (InstanceId id = 0; id < 6; ++id) {
                std::size_t n = 0;
                for (const auto &[key, cell] : vm.cells()) n += cell.find(id) != nullptr;
                ASSERT_EQ(vm.instance_voxel_count(id), n);
                const double g = vm.geo_similarity(all, id);
                ASSERT_GE(g, 0.0);
                ASSERT_LE(g, 1.0);
            }
        }
        expect_cell_invariants(vm);
    }
}
