#include "spadsim/table.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spadsim {

PiecewiseLinear::PiecewiseLinear(std::vector<Point> points) : points_(std::move(points))
{
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!std::isfinite(points_[i].first) || !std::isfinite(points_[i].second)) {
            throw std::invalid_argument(fmt::format("table point {} is not finite", i));
        }
        if (i > 0 && !(points_[i].first > points_[i - 1].first)) {
            throw std::invalid_argument(fmt::format("table x values must be strictly increasing (point {}: {} after {})", i,
                                                    points_[i].first, points_[i - 1].first));
        }
    }
}

double PiecewiseLinear::operator()(double x) const
{
    if (points_.empty()) return 0.0;
    if (x <= points_.front().first) return points_.front().second;
    if (x >= points_.back().first) return points_.back().second;
    const auto hi = std::upper_bound(points_.begin(), points_.end(), x,
                                     [](double v, const Point& p) { return v < p.first; });
    const auto lo = hi - 1;
    const double f = (x - lo->first) / (hi->first - lo->first);
    return lo->second + f * (hi->second - lo->second);
}

double PiecewiseLinear::min_y() const
{
    double m = points_.empty() ? 0.0 : points_.front().second;
    for (const auto& p : points_) m = std::min(m, p.second);
    return m;
}

double PiecewiseLinear::max_y() const
{
    double m = points_.empty() ? 0.0 : points_.front().second;
    for (const auto& p : points_) m = std::max(m, p.second);
    return m;
}

bool PiecewiseLinear::non_decreasing() const
{
    for (std::size_t i = 1; i < points_.size(); ++i) {
        if (points_[i].second < points_[i - 1].second) return false;
    }
    return true;
}

} // namespace spadsim
