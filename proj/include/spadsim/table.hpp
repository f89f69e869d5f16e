#pragma once

#include <utility>
#include <vector>

namespace spadsim {

/// Piecewise-linear function through (x, y) points with clamped extrapolation.
/// x must be strictly increasing. An empty table is allowed and means "not set";
/// callers decide the fallback.
class PiecewiseLinear {
public:
    using Point = std::pair<double, double>;

    PiecewiseLinear() = default;
    /// Throws std::invalid_argument unless x is strictly increasing.
    explicit PiecewiseLinear(std::vector<Point> points);

    static PiecewiseLinear constant(double y) { return PiecewiseLinear({{0.0, y}}); }

    bool empty() const { return points_.empty(); }
    const std::vector<Point>& points() const { return points_; }

    double operator()(double x) const;

    double min_y() const;
    double max_y() const;
    bool non_decreasing() const;

private:
    std::vector<Point> points_;
};

} // namespace spadsim
