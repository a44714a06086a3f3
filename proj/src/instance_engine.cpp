// SPDX-License-Identifier: Apache-2.0
#include "gsmind/instance_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace gsmind {

double sem_similarity(std::span<const float> f, std::span<const float> F) {
    if (f.size() != F.size()) fail(Errc::ShapeMismatch, "feature dimensions differ");
    double dot = 0.0, nf = 0.0, nF = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        dot += static_cast<double>(f[i]) * F[i];
        nf += static_cast<double>(f[i]) * f[i];
        nF += static_cast<double>(F[i]) * F[i];
    }
    if (!(nf > 0.0) || !(nF > 0.0)) fail(Errc::ZeroFeature, "zero feature vector");
    return dot / (std::sqrt(nf) * std::sqrt(nF));
}

double mask_iou(const Mask &a, const Mask &b) {
    if (!a.same_shape(b.width(), b.height(), b.channels())) fail(Errc::ShapeMismatch, "mask shapes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a.data()[i] != 0, y = b.data()[i] != 0;
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double joint_score(double s_geo, double s_iou, double s_sem, const AssociationConfig &cfg) {
    return cfg.w_geo * s_geo + cfg.w_iou * s_iou + cfg.w_sem * s_sem;
}

AssociationOutcome associate(const GaussianMap &map, const InstanceObservation &obs, const DepthImage &depth,
                             const Pose &pose, const AssociationConfig &cfg) {
    AssociationOutcome out;
    out.label = obs.label;
    out.voxels = map.voxels.backproject_mask(obs.mask, depth, pose, map.intrinsics);
    if (out.voxels.empty()) fail(Errc::EmptyObservation, "no valid depth under mask");
    for (InstanceId id : map.voxels.candidate_instances(out.voxels)) {
        const InstanceRecord *rec = map.has_instance(id) ? &map.instance(id) : nullptr;
        if (!rec) continue;
        CandidateScore c;
        c.id = id;
        c.s_geo = map.voxels.geo_similarity(out.voxels, id);
        c.s_iou = mask_iou(render_instance_mask(map, id, pose, map.intrinsics), obs.mask);
        c.s_sem = sem_similarity(obs.feature, rec->feature);
        c.score = joint_score(c.s_geo, c.s_iou, c.s_sem, cfg);
        out.candidates.push_back(c);
    }
    // candidates arrive in ascending id order, so strict > keeps the lower id on ties
    for (const auto &c : out.candidates) {
        if (out.best.id == kNoInstance || c.score > out.best.score) out.best = c;
    }
    if (out.best.id != kNoInstance && out.best.score >= cfg.tau) {
        out.kind = AssociationOutcome::Kind::Matched;
        out.id = out.best.id;
    } else {
        out.kind = AssociationOutcome::Kind::New;
        out.id = map.next_instance_id;
    }
    return out;
}

void fuse(GaussianMap &map, const InstanceObservation &obs, InstanceId id, double score,
          std::span<const VoxelKey> voxels, const Pose &pose) {
    InstanceRecord &rec = map.instance(id);
    const std::size_t v_hat = map.voxel_count(id);
    if (v_hat == 0) fail(Errc::InconsistentRecord, "instance owns no voxels");
    if (obs.feature.size() != rec.feature.size()) fail(Errc::ShapeMismatch, "feature dimensions differ");
    const double w = static_cast<double>(voxels.size()) / static_cast<double>(v_hat) * score;
    const double total = rec.weight + w;
    for (std::size_t i = 0; i < rec.feature.size(); ++i) {
        rec.feature[i] = static_cast<float>((rec.feature[i] * rec.weight + obs.feature[i] * w) / total);
    }
    rec.weight = total;
    rec.views.push_back({obs.frame_id, pose, static_cast<std::uint32_t>(count_set(obs.mask))});
    map.voxels.record_hits(voxels, id);
}

InstanceId spawn_instance(GaussianMap &map, const InstanceObservation &obs, std::span<const VoxelKey> voxels,
                          const Pose &pose) {
    const InstanceId id = map.next_instance_id++;
    InstanceRecord rec;
    rec.id = id;
    rec.feature = obs.feature;
    rec.weight = 1.0;
    rec.views.push_back({obs.frame_id, pose, static_cast<std::uint32_t>(count_set(obs.mask))});
    map.instances.emplace(id, std::move(rec));
    map.voxels.record_hits(voxels, id);
    return id;
}

std::vector<AssociationOutcome> process_frame(GaussianMap &map, const FrameObservation &frame,
                                              const AssociationConfig &cfg) {
    std::vector<std::size_t> order(frame.instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> area(frame.instances.size());
    for (std::size_t i = 0; i < area.size(); ++i) area[i] = count_set(frame.instances[i].mask);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return area[a] > area[b]; });

    std::vector<AssociationOutcome> outcomes;
    outcomes.reserve(order.size());
    for (std::size_t idx : order) {
        const InstanceObservation &obs = frame.instances[idx];
        try {
            AssociationOutcome o = associate(map, obs, frame.depth, frame.pose, cfg);
            if (o.matched()) {
                fuse(map, obs, o.id, o.best.score, o.voxels, frame.pose);
            } else {
                o.id = spawn_instance(map, obs, o.voxels, frame.pose);
            }
            outcomes.push_back(std::move(o));
        } catch (const Error &e) {
            spdlog::debug("frame {} label {}: {}", frame.frame_id, obs.label, e.what());
            AssociationOutcome o;
            o.kind = AssociationOutcome::Kind::Failed;
            o.label = obs.label;
            o.error = e.code();
            outcomes.push_back(std::move(o));
        }
    }
    return outcomes;
}

} // namespace gsmind
