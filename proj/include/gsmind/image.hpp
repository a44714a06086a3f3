// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gsmind/errors.hpp"

namespace gsmind {

/// Dense row-major image with interleaved channels.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels = 1, T fill = T{})
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {
        if (width < 0 || height < 0 || channels <= 0) {
            fail(Errc::InvalidArgument, "image dimensions must be nonnegative");
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T &operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    const T &operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T> &storage() noexcept { return data_; }
    const std::vector<T> &storage() const noexcept { return data_; }

    bool same_shape(int width, int height, int channels) const noexcept {
        return width_ == width && height_ == height && channels_ == channels;
    }
    template <typename U>
    bool same_extent(const Image<U> &other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    bool operator==(const Image &other) const = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<T> data_;
};

using ColorImage = Image<double>;        // 3 channels, values in [0,1]
using DepthImage = Image<double>;        // meters, 0 = invalid
using Mask = Image<std::uint8_t>;        // 0 / 1
using LabelImage = Image<std::uint32_t>; // 0 = background

inline std::size_t count_set(const Mask &m) {
    std::size_t n = 0;
    for (auto v : m.data()) n += v != 0;
    return n;
}

template <typename A, typename B>
void require_same_extent(const A &a, const B &b, const char *what) {
    if (!a.same_extent(b)) fail(Errc::ShapeMismatch, what);
}

} // namespace gsmind
