// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/error.hpp"
#include "autoduct/rng.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace autoduct {

/// Sobol low-discrepancy sequence with the Joe-Kuo (new-joe-kuo-6.21201)
/// direction numbers, generated in Gray-code order with 32-bit precision.
///
/// The all-zero origin is skipped, so the first point is 0.5 in every
/// dimension. With a scramble seed every coordinate is XOR-ed with a random
/// 32-bit digital shift; unscrambled output is bit-reproducible.
class SobolSequence {
public:
    static constexpr std::size_t max_dimensions = 21;
    static constexpr std::uint64_t max_points = std::uint64_t{1} << 31;

    explicit SobolSequence(std::size_t dimensions, std::optional<std::uint64_t> scramble_seed = std::nullopt)
        : dims_(dimensions), state_(dimensions, 0), shift_(dimensions, 0), directions_(dimensions)
    {
        if (dimensions < 1 || dimensions > max_dimensions)
            throw Error(Errc::dimension_overflow,
                        "Sobol sequence supports 1.." + std::to_string(max_dimensions) + " dimensions");
        for (std::size_t d = 0; d < dims_; ++d)
            directions_[d] = direction_numbers(d);
        if (scramble_seed) {
            Rng rng(*scramble_seed);
            for (auto& s : shift_)
                s = static_cast<std::uint32_t>(rng.next() >> 32);
        }
    }

    [[nodiscard]] std::size_t dimensions() const noexcept { return dims_; }

    /// Next point in [0, 1)^d.
    std::vector<double> next()
    {
        if (index_ >= max_points)
            throw Error(Errc::dimension_overflow, "Sobol sequence exhausted at 2^31 points");
        // Gray-code step: flip the direction number of the lowest zero bit of the index.
        const std::uint64_t i = index_++;
        int c = 0;
        while ((i >> c) & 1u)
            ++c;
        std::vector<double> point(dims_);
        for (std::size_t d = 0; d < dims_; ++d) {
            state_[d] ^= directions_[d][static_cast<std::size_t>(c)];
            point[d] = static_cast<double>(state_[d] ^ shift_[d]) * 0x1.0p-32;
        }
        return point;
    }

    /// Returns the 32-bit direction numbers v_1..v_32 (left-aligned) for a dimension.
    static std::array<std::uint32_t, 32> direction_numbers(std::size_t dimension)
    {
        std::array<std::uint32_t, 32> v{};
        if (dimension == 0) {
            for (int k = 0; k < 32; ++k)
                v[static_cast<std::size_t>(k)] = std::uint32_t{1} << (31 - k);
            return v;
        }
        const auto& e = table()[dimension - 1];
        const int s = e.degree;
        for (int k = 0; k < s; ++k)
            v[static_cast<std::size_t>(k)] = e.m[static_cast<std::size_t>(k)] << (31 - k);
        for (int k = s; k < 32; ++k) {
            std::uint32_t value = v[static_cast<std::size_t>(k - s)] ^ (v[static_cast<std::size_t>(k - s)] >> s);
            for (int j = 1; j < s; ++j)
                if ((e.a >> (s - 1 - j)) & 1u)
                    value ^= v[static_cast<std::size_t>(k - j)];
            v[static_cast<std::size_t>(k)] = value;
        }
        return v;
    }

private:
    struct Entry {
        int degree;
        std::uint32_t a;
        std::array<std::uint32_t, 8> m;
    };

    // Dimensions 2..21 of new-joe-kuo-6.21201: degree s, coefficient a, initial m_i.
    static const std::array<Entry, max_dimensions - 1>& table()
    {
        static const std::array<Entry, max_dimensions - 1> entries{{
            {1, 0, {1}},
            {2, 1, {1, 3}},
            {3, 1, {1, 3, 1}},
            {3, 2, {1, 1, 1}},
            {4, 1, {1, 1, 3, 3}},
            {4, 4, {1, 3, 5, 13}},
            {5, 2, {1, 1, 5, 5, 17}},
            {5, 4, {1, 1, 5, 5, 5}},
            {5, 7, {1, 1, 7, 11, 19}},
            {5, 11, {1, 1, 5, 1, 1}},
            {5, 13, {1, 1, 1, 3, 11}},
            {5, 14, {1, 3, 5, 5, 31}},
            {6, 1, {1, 3, 3, 9, 7, 49}},
            {6, 13, {1, 1, 1, 15, 21, 21}},
            {6, 16, {1, 3, 1, 13, 27, 49}},
            {6, 19, {1, 1, 1, 15, 7, 5}},
            {6, 22, {1, 3, 1, 15, 13, 25}},
            {6, 25, {1, 1, 5, 5, 19, 61}},
            {7, 1, {1, 3, 7, 11, 23, 15, 103}},
            {7, 4, {1, 3, 7, 13, 13, 15, 69}},
        }};
        return entries;
    }

    std::size_t dims_;
    std::uint64_t index_ = 0;
    std::vector<std::uint32_t> state_;
    std::vector<std::uint32_t> shift_;
    std::vector<std::array<std::uint32_t, 32>> directions_;
};

/// First `n` points of a (possibly scrambled) Sobol sequence.
inline std::vector<std::vector<double>> sobol_points(std::size_t dimensions, std::uint64_t n,
                                                     std::optional<std::uint64_t> scramble_seed = std::nullopt)
{
    if (n > SobolSequence::max_points)
        throw Error(Errc::dimension_overflow, "requested more than 2^31 Sobol points");
    SobolSequence seq(dimensions, scramble_seed);
    std::vector<std::vector<double>> points;
    points.reserve(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i)
        points.push_back(seq.next());
    return points;
}

} // namespace autoduct
