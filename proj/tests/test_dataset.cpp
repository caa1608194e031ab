// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

#include <cstdlib>
#include <set>

using namespace autoduct;
using testing_support::TempDir;

namespace {

// Straight transcription of the public-domain xoshiro256** / splitmix64
// reference code, kept separate from the library implementation.
struct ReferenceXoshiro {
    std::uint64_t s[4];

    explicit ReferenceXoshiro(std::uint64_t seed)
    {
        std::uint64_t x = seed;
        for (auto& w : s) {
            std::uint64_t z = (x += 0x9e3779b97f4a7c15);
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9;
            z = (z ^ (z >> 27)) * 0x94d049bb133111eb;
            w = z ^ (z >> 31);
        }
    }

    static std::uint64_t rotl(const std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t next()
    {
        const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }
};

Dataset small_dataset(std::size_t n)
{
    Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(i);
        ds.points.push_back(DataPoint{1e-3 * (1 + v), 0.5 + v, 100 + v, 10 + v, -0.4 + 1e-4 * v, 1000 + v});
    }
    return ds;
}

} // namespace

TEST(Rng, MatchesReferenceGenerator)
{
    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xDEADBEEFULL}) {
        Rng rng(seed);
        ReferenceXoshiro ref(seed);
        for (int i = 0; i < 1000; ++i)
            ASSERT_EQ(rng.next(), ref.next()) << "seed " << seed << " draw " << i;
    }
}

TEST(Rng, SplitmixFirstOutputForZeroSeed)
{
    std::uint64_t state = 0;
    EXPECT_EQ(splitmix64(state), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, UniformStaysInHalfOpenUnitInterval)
{
    Rng rng(7);
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, NormalHasUnitMoments)
{
    Rng rng(3);
    const int n = 200000;
    double sum = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        ss += z * z;
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(ss / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, DerivedSeedsDiffer)
{
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 1000; ++s)
        seen.insert(derive_seed(5, s));
    EXPECT_EQ(seen.size(), 1000u);
}

TEST(Split, SizesFollowFloorRule)
{
    const auto s = split(small_dataset(1000), {}, 0);
    EXPECT_EQ(s.train.size(), 720u);
    EXPECT_EQ(s.validation.size(), 180u);
    EXPECT_EQ(s.test.size(), 100u);

    const auto odd = split(small_dataset(7), {0.5, 0.25, 0.25}, 1);
    EXPECT_EQ(odd.train.size(), 3u);
    EXPECT_EQ(odd.validation.size(), 1u);
    EXPECT_EQ(odd.test.size(), 3u);
}

TEST(Split, PartitionsTheDataset)
{
    const auto ds = small_dataset(517);
    for (std::uint64_t seed : {0ULL, 9ULL, 123ULL}) {
        const auto s = split(ds, {}, seed);
        std::multiset<DataPoint> all;
        for (const auto* part : {&s.train, &s.validation, &s.test})
            all.insert(part->points.begin(), part->points.end());
        EXPECT_EQ(all, std::multiset<DataPoint>(ds.points.begin(), ds.points.end()));
    }
}

TEST(Split, DeterministicPerSeed)
{
    const auto ds = small_dataset(300);
    EXPECT_EQ(split(ds, {}, 4).train.points, split(ds, {}, 4).train.points);
    EXPECT_NE(split(ds, {}, 4).train.points, split(ds, {}, 5).train.points);
}

TEST(Split, RejectsBadFractions)
{
    const auto ds = small_dataset(10);
    try {
        (void)split(ds, {0.5, 0.5, 0.5}, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::fraction_sum_invalid);
    }
    EXPECT_THROW((void)split(ds, {-0.1, 0.6, 0.5}, 0), Error);
}

TEST(Normalizer, TwoPointFixture)
{
    Dataset ds;
    ds.points.push_back(DataPoint{1, 1, 1, 1, 1, 1.0});
    ds.points.push_back(DataPoint{3, 3, 3, 3, 3, 3.0});
    const auto n = fit_normalizer(ds);
    for (std::size_t c = 0; c <= kFeatureCount; ++c) {
        EXPECT_EQ(n.shift[c], 2.0);
        EXPECT_EQ(n.scale[c], 1.0);
    }
    const auto z = n.apply({1, 3, 2, 1, 3});
    EXPECT_EQ(z[0], -1.0);
    EXPECT_EQ(z[1], 1.0);
    EXPECT_EQ(n.apply_target(3.0), 1.0);
}

TEST(Normalizer, RoundTripAndStandardizes)
{
    const auto ds = generate_synthetic({400, 1.0, 2, {}});
    const auto n = fit_normalizer(ds);
    std::array<double, kFeatureCount + 1> mean{}, sq{};
    for (const auto& p : ds.points) {
        const auto z = n.apply(p.inputs());
        const auto back = n.invert(z);
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            EXPECT_NEAR(back[f], p.inputs()[f], 1e-12 * std::max(1.0, std::abs(p.inputs()[f])));
            mean[f] += z[f];
            sq[f] += z[f] * z[f];
        }
        EXPECT_NEAR(n.invert_target(n.apply_target(*p.chf)), *p.chf, 1e-9);
    }
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        EXPECT_NEAR(mean[f] / 400.0, 0.0, 1e-12);
        EXPECT_NEAR(sq[f] / 400.0, 1.0, 1e-12);
    }
}

TEST(Normalizer, ConstantColumnIsDegenerate)
{
    auto ds = small_dataset(5);
    for (auto& p : ds.points)
        p.X = 0.25;
    try {
        (void)fit_normalizer(ds);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::degenerate_feature);
        EXPECT_EQ(e.detail(), "X");
    }
}

TEST(Normalizer, JsonRoundTrip)
{
    const auto n = fit_normalizer(small_dataset(20));
    EXPECT_EQ(normalizer_from_json(nlohmann::json::parse(to_json(n).dump())), n);
}

TEST(Csv, RoundTripIsBitExact)
{
    TempDir dir;
    const auto ds = generate_synthetic({250, 1.0, 8, {}});
    save_csv(ds, dir / "d.csv");
    const auto back = load_csv(dir / "d.csv");
    EXPECT_EQ(back.points, ds.points);
}

TEST(Csv, AnyColumnOrderAndExtraColumns)
{
    TempDir dir;
    testing_support::write_file(dir / "d.csv", "CHF,note,X,G,P,L,D\n1500,a,0.1,2000,9000,1.5,0.008\n");
    const auto ds = load_csv(dir / "d.csv");
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.points[0], (DataPoint{0.008, 1.5, 9000, 2000, 0.1, 1500.0}));
}

TEST(Csv, ErrorsCarryCodes)
{
    TempDir dir;
    auto code_of = [&](const std::string& text, bool require_target = true) {
        testing_support::write_file(dir / "x.csv", text);
        try {
            (void)load_csv(dir / "x.csv", require_target);
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::corrupt_state; // sentinel: nothing thrown
    };
    EXPECT_EQ(code_of("D,L,P,G,CHF\n1,2,3,4,5\n"), Errc::missing_column);
    EXPECT_EQ(code_of("D,L,P,G,X\n1,2,3,4,5\n"), Errc::missing_column);
    EXPECT_EQ(code_of("D,L,P,G,X,CHF\n1,2,nan,4,5,6\n"), Errc::non_finite_value);
    EXPECT_EQ(code_of("D,L,P,G,X,CHF\n1,2,abc,4,5,6\n"), Errc::non_finite_value);
    EXPECT_EQ(code_of(""), Errc::empty_file);
    EXPECT_EQ(code_of("D,L,P,G,X,CHF\n"), Errc::empty_file);
    EXPECT_EQ(code_of("D,L,P,G,X\n1,2,3,4,5\n", false), Errc::corrupt_state);
    try {
        (void)load_csv(dir / "missing.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::io_failure);
    }
}

TEST(Csv, InputOnlyDatasetHasNoTargets)
{
    TempDir dir;
    testing_support::write_file(dir / "g.csv", "D,L,P,G,X\n0.008,1,1000,500,0.2\n");
    const auto ds = load_csv(dir / "g.csv", false);
    EXPECT_FALSE(ds.has_targets());
    EXPECT_THROW((void)ds.targets(), Error);
}

TEST(Synthetic, StaysInsideEnvelope)
{
    const auto ds = generate_synthetic({3000, 1.0, 1, {}});
    EXPECT_EQ(validate_ranges(ds).violations(), 0u);
}

TEST(Synthetic, DeterministicPerSeed)
{
    EXPECT_EQ(generate_synthetic({100, 1.0, 4, {}}).points, generate_synthetic({100, 1.0, 4, {}}).points);
    EXPECT_NE(generate_synthetic({100, 1.0, 4, {}}).points, generate_synthetic({100, 1.0, 5, {}}).points);
}

TEST(Synthetic, NoiseIsCentredOnTheOracle)
{
    const auto ds = generate_synthetic({20000, 1.0, 17, {}});
    double sum = 0, ss = 0;
    for (const auto& p : ds.points) {
        const double z = (*p.chf - synthetic_oracle(p)) / synthetic_noise_std(p, 1.0);
        sum += z;
        ss += z * z;
    }
    const double n = static_cast<double>(ds.size());
    EXPECT_LT(std::abs(sum / n), 3.0 / std::sqrt(n));
    EXPECT_NEAR(ss / n, 1.0, 0.05);
}

TEST(Synthetic, NoiselessTargetsEqualTheOracle)
{
    for (const auto& p : generate_synthetic({50, 0.0, 3, {}}).points)
        EXPECT_EQ(*p.chf, synthetic_oracle(p));
}

TEST(Synthetic, OracleTrends)
{
    const DataPoint base{8e-3, 1.0, 7000, 2000, 0.2, {}};
    auto with = [&](Feature f, double v) {
        DataPoint p = base;
        p.set_feature(f, v);
        return synthetic_oracle(p);
    };
    EXPECT_GT(with(Feature::G, 3000), with(Feature::G, 2000));
    EXPECT_LT(with(Feature::X, 0.5), with(Feature::X, 0.2));
    EXPECT_LT(with(Feature::D, 12e-3), with(Feature::D, 8e-3));
    EXPECT_LT(with(Feature::L, 5.0), with(Feature::L, 1.0));
}

TEST(Ranges, CountsOutsideValues)
{
    Dataset ds;
    ds.points.push_back(DataPoint{8e-3, 1, 1000, 1000, 0.1, 2000.0});
    ds.points.push_back(DataPoint{20e-3, 1, 50, 1000, 0.1, 20000.0});
    const auto r = validate_ranges(ds);
    EXPECT_EQ(r.column("D").outside, 1u);
    EXPECT_EQ(r.column("P").outside, 1u);
    EXPECT_EQ(r.column("CHF").outside, 1u);
    EXPECT_EQ(r.violations(), 3u);
    EXPECT_EQ(r.column("P").min, 50.0);
    EXPECT_NE(r.to_text().find("total violations: 3"), std::string::npos);
}

TEST(Slices, ConstantsMatchSourceTableExactly)
{
    const auto specs = reference_slices();
    ASSERT_EQ(specs.size(), 8u);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& row = oracles::kSourceSlices[i];
        const char* cells[] = {row.D, row.L, row.P, row.G, row.X};
        const auto& spec = specs[i];
        EXPECT_EQ(spec.id, static_cast<int>(i + 1));
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            if (std::string(cells[f]) == "*") {
                EXPECT_EQ(spec.varying, static_cast<Feature>(f));
                continue;
            }
            EXPECT_EQ(spec.constants[f], oracles::parse_cell(cells[f], f == 0)) << "slice " << spec.id << " " << kFeatureNames[f];
        }
        const bool mm = spec.varying == Feature::D;
        EXPECT_EQ(spec.lo, oracles::parse_cell(row.lo, mm));
        EXPECT_EQ(spec.hi, oracles::parse_cell(row.hi, mm));
    }
}

TEST(Slices, GridEndpointsAreExact)
{
    for (const auto& spec : reference_slices(37)) {
        const auto grid = build_slice_grid(spec);
        ASSERT_EQ(grid.size(), 37u);
        EXPECT_EQ(grid.points.front().feature(spec.varying), spec.lo);
        EXPECT_EQ(grid.points.back().feature(spec.varying), spec.hi);
        double prev = -std::numeric_limits<double>::infinity();
        for (const auto& p : grid.points) {
            const double v = p.feature(spec.varying);
            EXPECT_GT(v, prev);
            prev = v;
            for (std::size_t f = 0; f < kFeatureCount; ++f)
                if (static_cast<Feature>(f) != spec.varying)
                    EXPECT_EQ(p.inputs()[f], spec.constants[f]);
        }
    }
}

TEST(Slices, JsonRoundTrip)
{
    const auto specs = reference_slices(11);
    TempDir dir;
    testing_support::write_file(dir / "s.json", slices_to_json(specs).dump(2));
    const auto back = load_slice_specs(dir / "s.json");
    ASSERT_EQ(back.size(), specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        EXPECT_EQ(back[i].constants, specs[i].constants);
        EXPECT_EQ(back[i].varying, specs[i].varying);
        EXPECT_EQ(back[i].lo, specs[i].lo);
        EXPECT_EQ(back[i].hi, specs[i].hi);
        EXPECT_EQ(back[i].points, 11u);
    }
}

TEST(Slices, MalformedSpecsRejected)
{
    auto j = to_json(reference_slices()[0]);
    j["constants"].erase("G");
    EXPECT_THROW((void)slice_from_json(j), Error);
    auto k = to_json(reference_slices()[0]);
    k["range"] = {5, 1};
    EXPECT_THROW((void)slice_from_json(k), Error);
    auto m = to_json(reference_slices()[0]);
    m["varying"] = "Q";
    EXPECT_THROW((void)slice_from_json(m), Error);
}
