#pragma once

#include <doctest.h>

#include <cmath>
#include <vector>

#include "scg/nn.hpp"

namespace testing {

template <typename T = double>
scg::Tensor<T> tensor(scg::Shape shape, std::vector<T> values, bool grad = false)
{
    return scg::Tensor<T>(std::move(shape), std::move(values), grad);
}

template <typename T = double>
scg::Tensor<T> random(scg::Rng& rng, scg::Shape shape, double lo = -1, double hi = 1, bool grad = false)
{
    scg::Tensor<T> t(std::move(shape), T(0), grad);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.values())
        v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
double max_abs_diff(const scg::Tensor<T>& a, const scg::Tensor<T>& b)
{
    REQUIRE(a.shape() == b.shape());
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <typename T>
double max_abs_diff(const scg::Tensor<T>& a, const std::vector<double>& b)
{
    REQUIRE(a.numel() == b.size());
    double m = 0;
    for (std::size_t i = 0; i < b.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

} // namespace testing
