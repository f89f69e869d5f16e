#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>

namespace spadsim {

/// Integer picoseconds. Used both for instants (since run start) and for durations.
class TimePs {
public:
    constexpr TimePs() = default;
    constexpr explicit TimePs(std::int64_t ps) : ps_(ps) {}

    constexpr std::int64_t ps() const { return ps_; }
    constexpr double ns() const { return static_cast<double>(ps_) * 1e-3; }
    constexpr double seconds() const { return static_cast<double>(ps_) * 1e-12; }

    static constexpr TimePs max() { return TimePs{std::numeric_limits<std::int64_t>::max()}; }
    static constexpr TimePs zero() { return TimePs{0}; }

    constexpr auto operator<=>(const TimePs&) const = default;

    constexpr TimePs& operator+=(TimePs o) { ps_ += o.ps_; return *this; }
    constexpr TimePs& operator-=(TimePs o) { ps_ -= o.ps_; return *this; }

    friend constexpr TimePs operator+(TimePs a, TimePs b) { return TimePs{a.ps_ + b.ps_}; }
    friend constexpr TimePs operator-(TimePs a, TimePs b) { return TimePs{a.ps_ - b.ps_}; }
    friend constexpr TimePs operator-(TimePs a) { return TimePs{-a.ps_}; }
    friend constexpr TimePs operator*(TimePs a, std::int64_t k) { return TimePs{a.ps_ * k}; }
    friend constexpr TimePs operator*(std::int64_t k, TimePs a) { return TimePs{a.ps_ * k}; }

private:
    std::int64_t ps_ = 0;
};

/// Nearest integer picosecond.
inline TimePs round_ps(double ps) { return TimePs{std::llround(ps)}; }
inline TimePs from_ns(double ns) { return round_ps(ns * 1e3); }
inline TimePs from_seconds(double s) { return round_ps(s * 1e12); }

namespace literals {
constexpr TimePs operator""_ps(unsigned long long v) { return TimePs{static_cast<std::int64_t>(v)}; }
constexpr TimePs operator""_ns(unsigned long long v) { return TimePs{static_cast<std::int64_t>(v) * 1000}; }
constexpr TimePs operator""_us(unsigned long long v) { return TimePs{static_cast<std::int64_t>(v) * 1000000}; }
constexpr TimePs operator""_ms(unsigned long long v) { return TimePs{static_cast<std::int64_t>(v) * 1000000000}; }
// Fractional nanoseconds, e.g. 29.1_ns. Rounded to the nearest picosecond.
constexpr TimePs operator""_ns(long double v)
{
    const long double ps = v * 1000.0L;
    return TimePs{static_cast<std::int64_t>(ps < 0 ? ps - 0.5L : ps + 0.5L)};
}
} // namespace literals

} // namespace spadsim
