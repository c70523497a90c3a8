#pragma once

#include "volterra/core.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace volterra {

/// Ordered time discretization 0 = t_0 < t_1 < ... < t_M = T.
class Grid {
public:
    Grid() : Grid(std::vector<double>{0.0, 1.0}) {}

    explicit Grid(std::vector<double> times) : times_(std::move(times)) {
        if (times_.size() < 2) throw DomainError("grid needs at least two points");
        if (times_.front() != 0.0) throw DomainError("grid must start at 0");
        for (std::size_t i = 1; i < times_.size(); ++i) {
            if (!(times_[i] > times_[i - 1])) throw DomainError("grid times must be strictly increasing");
        }
        widths_.resize(times_.size() - 1);
        for (std::size_t i = 0; i + 1 < times_.size(); ++i) widths_[i] = times_[i + 1] - times_[i];
    }

    static Grid uniform(std::size_t intervals, double horizon) {
        if (intervals == 0) throw DomainError("grid needs at least one interval");
        if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
        std::vector<double> t(intervals + 1);
        for (std::size_t i = 0; i <= intervals; ++i) t[i] = horizon * static_cast<double>(i) / static_cast<double>(intervals);
        t.back() = horizon;
        return Grid(std::move(t));
    }

    std::size_t size() const noexcept { return times_.size(); }
    std::size_t intervals() const noexcept { return widths_.size(); }
    double horizon() const noexcept { return times_.back(); }
    double operator[](std::size_t i) const { return times_[i]; }
    double width(std::size_t i) const { return widths_[i]; }
    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<double>& widths() const noexcept { return widths_; }

    bool contains(double t) const { return (t >= -kTimeEps) && (t <= horizon() + kTimeEps); }

    void require_in_range(double t) const {
        if (!std::isfinite(t) || !contains(t)) throw DomainError("time " + std::to_string(t) + " outside [0,T]");
    }

    /// Index of the node equal to t (within kTimeEps·max(1,T)), if any.
    std::optional<std::size_t> index_of(double t) const {
        const double tol = kTimeEps * std::max(1.0, horizon());
        auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
        if (it != times_.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - times_.begin());
        return std::nullopt;
    }

    std::size_t require_index(double t) const {
        auto i = index_of(t);
        if (!i) throw DomainError("time " + std::to_string(t) + " is not a grid node");
        return *i;
    }

    /// Largest node index i with t_i <= t (left-constant, cadlag lookup).
    std::size_t floor_index(double t) const {
        require_in_range(t);
        if (auto i = index_of(t)) return *i;
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        return static_cast<std::size_t>(it - times_.begin()) - 1;
    }

    bool operator==(const Grid& other) const { return times_ == other.times_; }

private:
    std::vector<double> times_;
    std::vector<double> widths_;
};

}  // namespace volterra
