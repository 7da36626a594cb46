#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "volseg/crf.hpp"

using namespace volseg;

namespace {

ProbabilityMap random_probs(Dims d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ProbabilityMap p = make_feature_map(2, d);
    const std::size_t n = d.count();
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 0.02 + 0.96 * ((rng() >> 11) * 0x1.0p-53);
        p.values[i] = a;
        p.values[n + i] = 1.0 - a;
    }
    return p;
}

Volume random_grey(Dims d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Volume v = make_volume(d, {1, 1, 1}, {0, 0, 0}, UnitTag::Grey);
    for (float& f : v.voxels) f = static_cast<float>(255.0 * ((rng() >> 11) * 0x1.0p-53));
    return v;
}

LabelMask argmax_labels(const ProbabilityMap& p) {
    LabelMask m = make_mask(p.dims);
    const std::size_t n = p.dims.count();
    for (std::size_t i = 0; i < n; ++i)
        m.labels[i] = p.values[n + i] > p.values[i] ? 1 : 0;
    return m;
}

// Matrix-form mean-field reference. Materializes the full pairwise matrix and
// applies the textbook Potts update q_i(c) ∝ exp(-u_i(c) - sum_j k_ij (1 -
// q_j(c))), stabilized per voxel. Written against the update equations, not
// the library code.
struct MeanFieldRef {
    std::vector<std::vector<double>> k;  // n x n
    std::vector<std::array<double, 2>> unary, q;
    std::size_t n;

    MeanFieldRef(const ProbabilityMap& probs, const Volume& inten, const CrfParams& p) {
        const Dims d = probs.dims;
        n = d.count();
        k.assign(n, std::vector<double>(n, 0.0));
        unary.resize(n);
        q.resize(n);
        std::vector<std::array<int, 3>> pos(n);
        std::size_t i = 0;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x, ++i) pos[i] = {x, y, z};
        for (i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double dx = pos[i][0] - pos[j][0];
                const double dy = pos[i][1] - pos[j][1];
                const double dz = pos[i][2] - pos[j][2];
                const double d2 = dx * dx + dy * dy + dz * dz;
                const double di = static_cast<double>(inten.voxels[i]) - inten.voxels[j];
                k[i][j] = p.w_smooth * std::exp(-d2 / (2.0 * p.theta_pos * p.theta_pos)) +
                          p.w_app * std::exp(-d2 / (2.0 * p.theta_pos * p.theta_pos) -
                                             di * di / (2.0 * p.theta_int * p.theta_int));
            }
        for (i = 0; i < n; ++i) {
            const double p0 = probs.values[i], p1 = probs.values[n + i];
            unary[i] = {-std::log(std::max(p0, 1e-12)), -std::log(std::max(p1, 1e-12))};
            q[i] = {p0 / (p0 + p1), p1 / (p0 + p1)};
        }
    }

    void iterate() {
        std::vector<std::array<double, 2>> next(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::array<double, 2> e;
            for (int c = 0; c < 2; ++c) {
                double pen = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    if (j != i) pen += k[i][j] * (1.0 - q[j][c]);
                e[c] = -unary[i][c] - pen;
            }
            const double mx = std::max(e[0], e[1]);
            const double s0 = std::exp(e[0] - mx), s1 = std::exp(e[1] - mx);
            next[i] = {s0 / (s0 + s1), s1 / (s0 + s1)};
        }
        q.swap(next);
    }
};

}  // namespace

TEST_CASE("zero pairwise weights reduce refinement to the unary argmax") {
    const Dims d{6, 5, 4};
    ProbabilityMap probs = random_probs(d, 1);
    Volume grey = random_grey(d, 2);
    CrfParams p;
    p.w_smooth = 0.0;
    p.w_app = 0.0;
    LabelMask got = crf_refine(probs, grey, p);
    LabelMask want = argmax_labels(probs);
    CHECK(got.labels == want.labels);
}

TEST_CASE("zero iterations return the unary argmax even with strong kernels") {
    const Dims d{4, 4, 4};
    ProbabilityMap probs = random_probs(d, 3);
    Volume grey = random_grey(d, 4);
    CrfParams p;
    p.w_smooth = 10.0;
    p.n_meanfield_iters = 0;
    CHECK(crf_refine(probs, grey, p).labels == argmax_labels(probs).labels);
}

TEST_CASE("marginals stay normalized after every iteration") {
    const Dims d{5, 5, 5};
    ProbabilityMap probs = random_probs(d, 5);
    Volume grey = random_grey(d, 6);
    CrfParams p;
    p.w_smooth = 1.5;
    p.theta_pos = 2.0;
    p.w_app = 1.0;
    p.theta_int = 30.0;
    std::vector<ProbabilityMap> trace;
    crf_refine(probs, grey, p, &trace);
    REQUIRE(trace.size() == 5);
    const std::size_t n = d.count();
    for (const ProbabilityMap& q : trace)
        for (std::size_t i = 0; i < n; ++i) {
            const double s = q.values[i] + q.values[n + i];
            CHECK(std::abs(s - 1.0) < 1e-6);
            CHECK(q.values[i] >= 0.0);
        }
}

TEST_CASE("an isolated false positive in a flat region flips to the majority") {
    const Dims d{8, 8, 8};
    const std::size_t n = d.count();
    ProbabilityMap probs = make_feature_map(2, d);
    for (std::size_t i = 0; i < n; ++i) {
        probs.values[i] = 0.9;
        probs.values[n + i] = 0.1;
    }
    const std::size_t center = voxel_index(d, 4, 4, 4);
    probs.values[center] = 0.05;
    probs.values[n + center] = 0.95;
    Volume grey = make_volume(d, {1, 1, 1}, {0, 0, 0}, UnitTag::Grey, 100.0f);

    CrfParams p;
    p.w_smooth = 2.0;
    p.theta_pos = 2.0;
    p.w_app = 0.0;
    LabelMask refined = crf_refine(probs, grey, p);
    for (std::size_t i = 0; i < n; ++i) CHECK(refined.labels[i] == 0);

    // same case through the independent matrix-form reference
    MeanFieldRef ref(probs, grey, p);
    for (int it = 0; it < p.n_meanfield_iters; ++it) ref.iterate();
    CHECK(ref.q[center][0] > 0.5);
}

TEST_CASE("library marginals track the matrix-form reference") {
    const Dims d{8, 8, 8};
    ProbabilityMap probs = random_probs(d, 7);
    Volume grey = random_grey(d, 8);
    CrfParams p;
    p.w_smooth = 0.7;
    p.theta_pos = 1.5;
    p.w_app = 0.9;
    p.theta_int = 20.0;

    std::vector<ProbabilityMap> trace;
    LabelMask got = crf_refine(probs, grey, p, &trace);

    MeanFieldRef ref(probs, grey, p);
    const std::size_t n = d.count();
    for (int it = 0; it < p.n_meanfield_iters; ++it) {
        ref.iterate();
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            worst = std::max(worst, std::abs(trace[it].values[i] - ref.q[i][0]));
            worst = std::max(worst, std::abs(trace[it].values[n + i] - ref.q[i][1]));
        }
        CHECK(worst < 1e-9);
    }
    for (std::size_t i = 0; i < n; ++i)
        CHECK(got.labels[i] == (ref.q[i][1] > ref.q[i][0] ? 1 : 0));
}

TEST_CASE("brute-force cap and parameter validation") {
    ProbabilityMap big = make_feature_map(2, {41, 40, 40}, 0.5);
    Volume grey = make_volume({41, 40, 40}, {1, 1, 1}, {0, 0, 0}, UnitTag::Grey);
    CHECK_THROWS_AS(crf_refine(big, grey, CrfParams{}), param_error);

    const Dims d{4, 4, 4};
    ProbabilityMap probs = random_probs(d, 9);
    Volume small = random_grey(d, 10);
    CrfParams p;
    p.w_smooth = -1.0;
    CHECK_THROWS_AS(crf_refine(probs, small, p), param_error);
    p = CrfParams{};
    p.theta_pos = 0.0;
    CHECK_THROWS_AS(crf_refine(probs, small, p), param_error);
    p = CrfParams{};
    p.n_meanfield_iters = -1;
    CHECK_THROWS_AS(crf_refine(probs, small, p), param_error);

    Volume off = random_grey({4, 4, 5}, 11);
    CHECK_THROWS_AS(crf_refine(probs, off, CrfParams{}), param_error);

    ProbabilityMap nege = random_probs(d, 12);
    nege.values[3] = -0.25;
    CHECK_THROWS_AS(crf_refine(nege, small, CrfParams{}), data_error);
}

TEST_CASE("blocked refinement equals stitched per-block refinement") {
    const Dims d{16, 16, 8};
    ProbabilityMap probs = random_probs(d, 13);
    Volume grey = random_grey(d, 14);
    CrfParams p;
    p.w_smooth = 1.2;
    p.theta_pos = 2.0;
    p.w_app = 0.8;
    p.theta_int = 25.0;

    LabelMask blocked = crf_refine_blocked(probs, grey, p, 8);

    const std::size_t n = d.count();
    LabelMask stitched = make_mask(d);
    for (int bz = 0; bz < 8; bz += 8)
        for (int by = 0; by < 16; by += 8)
            for (int bx = 0; bx < 16; bx += 8) {
                const Dims bd{8, 8, 8};
                ProbabilityMap bp = make_feature_map(2, bd);
                Volume bi = make_volume(bd, {1, 1, 1}, {0, 0, 0}, UnitTag::Grey);
                for (int z = 0; z < 8; ++z)
                    for (int y = 0; y < 8; ++y)
                        for (int x = 0; x < 8; ++x) {
                            const std::size_t src = voxel_index(d, bx + x, by + y, bz + z);
                            const std::size_t dst = voxel_index(bd, x, y, z);
                            bp.values[dst] = probs.values[src];
                            bp.values[bd.count() + dst] = probs.values[n + src];
                            bi.voxels[dst] = grey.voxels[src];
                        }
                LabelMask bl = crf_refine(bp, bi, p);
                for (int z = 0; z < 8; ++z)
                    for (int y = 0; y < 8; ++y)
                        for (int x = 0; x < 8; ++x)
                            stitched.at(bx + x, by + y, bz + z) = bl.at(x, y, z);
            }
    CHECK(blocked.labels == stitched.labels);

    // a block covering the whole volume degenerates to plain refinement
    const Dims sd{6, 6, 6};
    ProbabilityMap sp = random_probs(sd, 15);
    Volume sg = random_grey(sd, 16);
    CHECK(crf_refine_blocked(sp, sg, p, 32).labels == crf_refine(sp, sg, p).labels);

    CHECK_THROWS_AS(crf_refine_blocked(sp, sg, p, 0), param_error);
    CHECK_THROWS_AS(crf_refine_blocked(sp, sg, p, 41), param_error);
}

TEST_CASE("uneven volumes split into clipped edge blocks") {
    const Dims d{11, 7, 5};
    ProbabilityMap probs = random_probs(d, 17);
    Volume grey = random_grey(d, 18);
    CrfParams p;
    p.w_smooth = 0.5;
    p.theta_pos = 1.5;
    LabelMask a = crf_refine_blocked(probs, grey, p, 4);
    LabelMask b = crf_refine_blocked(probs, grey, p, 4);
    CHECK(a.labels == b.labels);
    CHECK(a.dims == d);
}
