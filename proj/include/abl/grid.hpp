#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "abl/pixel.hpp"

namespace abl {

/// Row-major H×W storage.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(std::size_t height, std::size_t width, T init = T{})
        : height_(height), width_(width), data_(height * width, init) {}
    Grid(std::size_t height, std::size_t width, std::vector<T> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != height_ * width_) {
            throw std::invalid_argument("grid of " + std::to_string(height_) + "x" + std::to_string(width_) +
                                        " given " + std::to_string(data_.size()) + " cells");
        }
    }

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t size() const { return data_.size(); }

    bool in_bounds(Pixel p) const {
        return p.row >= 0 && p.col >= 0 && static_cast<std::size_t>(p.row) < height_ &&
               static_cast<std::size_t>(p.col) < width_;
    }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * width_ + c]; }
    T& operator[](Pixel p) { return (*this)(static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col)); }
    const T& operator[](Pixel p) const {
        return (*this)(static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col));
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

}  // namespace abl
