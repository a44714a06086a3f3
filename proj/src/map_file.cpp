// SPDX-License-Identifier: Apache-2.0
#include "gsmind/map_file.hpp"

#include <bit>
#include <cstring>

#include "gsmind/file_util.hpp"

namespace gsmind {

static_assert(std::endian::native == std::endian::little, "map files assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'S', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    template <typename T>
    void put(const T &v) {
        static_assert(std::is_trivially_copyable_v<T>);
        buf_.append(reinterpret_cast<const char *>(&v), sizeof(T));
    }
    void bytes(const void *p, std::size_t n) { buf_.append(static_cast<const char *>(p), n); }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view b) : b_(b) {}
    template <typename T>
    T get() {
        T v;
        need(sizeof(T));
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void bytes(void *dst, std::size_t n) {
        need(n);
        std::memcpy(dst, b_.data() + pos_, n);
        pos_ += n;
    }
    void need(std::size_t n) const {
        if (n > b_.size() - pos_) fail(Errc::TruncatedFile, "map file ended early");
    }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    std::string_view b_;
    std::size_t pos_ = 0;
};

void put_pose(Writer &w, const Pose &p) {
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) w.put(p.rotation(r, c));
    }
    for (int k = 0; k < 3; ++k) w.put(p.translation[k]);
}

Pose get_pose(Reader &r) {
    Pose p;
    for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 3; ++c) p.rotation(i, c) = r.get<double>();
    }
    for (int k = 0; k < 3; ++k) p.translation[k] = r.get<double>();
    return p;
}

// Guards element counts against the bytes actually left, so corrupt counts cannot
// trigger huge allocations.
std::size_t checked_count(Reader &r, std::uint64_t n, std::size_t elem) {
    if (elem != 0 && n > r.remaining() / elem) fail(Errc::TruncatedFile, "map file ended early");
    return static_cast<std::size_t>(n);
}

} // namespace

std::string encode_map(const GaussianMap &map) {
    Writer w;
    w.bytes(kMagic, 4);
    w.put(kVersion);
    const auto &K = map.intrinsics;
    w.put(K.fx);
    w.put(K.fy);
    w.put(K.cx);
    w.put(K.cy);
    w.put(static_cast<std::int32_t>(K.width));
    w.put(static_cast<std::int32_t>(K.height));
    w.put(map.feature_dim);
    w.put(map.next_instance_id);

    const auto &gs = map.gaussians;
    w.put(static_cast<std::uint64_t>(gs.size()));
    for (const auto &g : gs) w.bytes(g.center.data(), 3 * sizeof(float));
    for (const auto &g : gs) w.bytes(g.color.data(), 3 * sizeof(float));
    for (const auto &g : gs) w.bytes(g.log_scale.data(), 3 * sizeof(float));
    for (const auto &g : gs) w.bytes(g.rotation.data(), 4 * sizeof(float));
    for (const auto &g : gs) w.put(g.opacity_logit);
    for (const auto &g : gs) w.put(g.instance_id);

    w.put(map.voxels.resolution());
    w.put(map.voxels.max_depth());
    const auto keys = map.voxels.sorted_keys();
    w.put(static_cast<std::uint64_t>(keys.size()));
    for (const auto &k : keys) {
        const VoxelCell &c = *map.voxels.find(k);
        w.put(k.ix);
        w.put(k.iy);
        w.put(k.iz);
        w.put(c.total);
        for (const auto &s : c.slots) {
            w.put(s.id);
            w.put(s.count);
        }
        w.put(static_cast<std::uint32_t>(c.gaussian_ids.size()));
        w.bytes(c.gaussian_ids.data(), c.gaussian_ids.size() * sizeof(std::uint32_t));
    }

    w.put(static_cast<std::uint64_t>(map.instances.size()));
    for (const auto &[id, rec] : map.instances) {
        w.put(rec.id);
        w.put(rec.weight);
        w.put(static_cast<std::uint32_t>(rec.feature.size()));
        w.bytes(rec.feature.data(), rec.feature.size() * sizeof(float));
        w.put(static_cast<std::uint32_t>(rec.views.size()));
        for (const auto &v : rec.views) {
            w.put(v.frame_id);
            put_pose(w, v.pose);
            w.put(v.mask_pixels);
        }
    }
    return w.take();
}

GaussianMap decode_map(std::string_view bytes) {
    if (bytes.size() < 4) fail(Errc::TruncatedFile, "map file shorter than its magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(Errc::BadMagic, "not a GSM1 map file");
    Reader r(bytes.substr(4));
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) fail(Errc::BadMagic, "unsupported map version " + std::to_string(version));
    GaussianMap map;
    auto &K = map.intrinsics;
    K.fx = r.get<double>();
    K.fy = r.get<double>();
    K.cx = r.get<double>();
    K.cy = r.get<double>();
    K.width = r.get<std::int32_t>();
    K.height = r.get<std::int32_t>();
    map.feature_dim = r.get<std::uint32_t>();
    map.next_instance_id = r.get<std::uint32_t>();

    const std::size_t n = checked_count(r, r.get<std::uint64_t>(), 15 * sizeof(float) + sizeof(std::uint32_t));
    auto &gs = map.gaussians;
    gs.resize(n);
    for (auto &g : gs) r.bytes(g.center.data(), 3 * sizeof(float));
    for (auto &g : gs) r.bytes(g.color.data(), 3 * sizeof(float));
    for (auto &g : gs) r.bytes(g.log_scale.data(), 3 * sizeof(float));
    for (auto &g : gs) r.bytes(g.rotation.data(), 4 * sizeof(float));
    for (auto &g : gs) g.opacity_logit = r.get<float>();
    for (auto &g : gs) g.instance_id = r.get<std::uint32_t>();

    const double res = r.get<double>();
    const double max_depth = r.get<double>();
    try {
        map.voxels = VoxelMap(res, max_depth);
    } catch (const Error &e) {
        fail(Errc::BadShape, e.what());
    }
    const std::size_t cells = checked_count(r, r.get<std::uint64_t>(), 11 * sizeof(std::uint32_t));
    for (std::size_t i = 0; i < cells; ++i) {
        VoxelKey k;
        k.ix = r.get<std::int32_t>();
        k.iy = r.get<std::int32_t>();
        k.iz = r.get<std::int32_t>();
        VoxelCell c;
        c.total = r.get<std::uint32_t>();
        for (auto &s : c.slots) {
            s.id = r.get<std::uint32_t>();
            s.count = r.get<std::uint32_t>();
        }
        const std::size_t run = checked_count(r, r.get<std::uint32_t>(), sizeof(std::uint32_t));
        c.gaussian_ids.resize(run);
        r.bytes(c.gaussian_ids.data(), run * sizeof(std::uint32_t));
        map.voxels.insert_cell(k, std::move(c));
    }

    const std::size_t records = checked_count(r, r.get<std::uint64_t>(), 20);
    for (std::size_t i = 0; i < records; ++i) {
        InstanceRecord rec;
        rec.id = r.get<std::uint32_t>();
        rec.weight = r.get<double>();
        const std::size_t d = checked_count(r, r.get<std::uint32_t>(), sizeof(float));
        rec.feature.resize(d);
        r.bytes(rec.feature.data(), d * sizeof(float));
        const std::size_t views = checked_count(r, r.get<std::uint32_t>(), 8 + 12 * sizeof(double));
        rec.views.resize(views);
        for (auto &v : rec.views) {
            v.frame_id = r.get<std::uint32_t>();
            v.pose = get_pose(r);
            v.mask_pixels = r.get<std::uint32_t>();
        }
        const InstanceId id = rec.id;
        map.instances.emplace(id, std::move(rec));
    }
    if (r.remaining() != 0) fail(Errc::BadShape, "trailing bytes after the instance section");
    return map;
}

void save_map(const GaussianMap &map, const std::filesystem::path &path) { write_file_atomic(path, encode_map(map)); }

GaussianMap load_map(const std::filesystem::path &path) { return decode_map(read_file(path)); }

} // namespace gsmind
