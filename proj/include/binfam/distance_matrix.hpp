#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace binfam {

// Dense symmetric distance matrix with zero diagonal.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}
    // Raw row-major constructor; validate() decides whether it is usable.
    DistanceMatrix(std::size_t n, std::vector<double> data) : n_(n), data_(std::move(data)) {
        if (data_.size() != n * n) throw std::invalid_argument("bad distance matrix payload");
    }

    std::size_t size() const { return n_; }
    double at(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
    void set(std::size_t i, std::size_t j, double v) {
        data_[i * n_ + j] = v;
        data_[j * n_ + i] = v;
    }

    void validate() const {
        for (std::size_t i = 0; i < n_; ++i) {
            if (at(i, i) != 0.0) throw std::invalid_argument("distance matrix diagonal not zero");
            for (std::size_t j = i + 1; j < n_; ++j) {
                if (at(i, j) < 0.0) throw std::invalid_argument("negative distance");
                if (std::abs(at(i, j) - at(j, i)) > 1e-12)
                    throw std::invalid_argument("asymmetric distance matrix");
            }
        }
    }

    template <typename Dist>
    static DistanceMatrix build(std::size_t n, Dist&& dist) {
        DistanceMatrix m(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, dist(i, j));
        return m;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

}  // namespace binfam
