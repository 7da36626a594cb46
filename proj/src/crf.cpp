#include "volseg/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace volseg {

namespace {
constexpr std::size_t kPairwiseCap = 40u * 40u * 40u;
constexpr double kProbFloor = 1e-12;
}  // namespace

void validate_crf_params(const CrfParams& p) {
    if (p.w_smooth < 0.0 || p.w_app < 0.0)
        throw param_error("crf: kernel weights must be >= 0");
    if (p.theta_pos <= 0.0 || p.theta_int <= 0.0)
        throw param_error("crf: bandwidths must be > 0");
    if (p.n_meanfield_iters < 0)
        throw param_error("crf: iteration count must be >= 0");
}

LabelMask crf_refine(const ProbabilityMap& probs, const Volume& intensity,
                     const CrfParams& p, std::vector<ProbabilityMap>* trace) {
    validate_crf_params(p);
    if (probs.channels < 2) throw param_error("crf: need at least 2 classes");
    if (!(probs.dims == intensity.dims))
        throw param_error("crf: probability and intensity dims differ");
    const Dims d = probs.dims;
    const std::size_t n = d.count();
    if (n > kPairwiseCap)
        throw param_error("crf: " + std::to_string(n) +
                          " voxels exceeds the brute-force cap of 40^3");
    for (double v : probs.values)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw data_error("crf: probabilities must be finite and >= 0");

    const int nc = probs.channels;

    // unary = -log p, and marginals initialized from the normalized input
    std::vector<double> unary(n * nc), q(n * nc);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int c = 0; c < nc; ++c) s += probs.values[c * n + i];
        if (s <= 0.0) throw data_error("crf: all-zero probability voxel");
        for (int c = 0; c < nc; ++c) {
            const double pv = probs.values[c * n + i];
            unary[i * nc + c] = -std::log(std::max(pv, kProbFloor));
            q[i * nc + c] = pv / s;
        }
    }

    // spatial kernel by offset; symmetric in each axis
    const int tx = 2 * d.nx - 1, ty = 2 * d.ny - 1, tz = 2 * d.nz - 1;
    std::vector<double> spatial(static_cast<std::size_t>(tx) * ty * tz);
    const double inv2tp = 1.0 / (2.0 * p.theta_pos * p.theta_pos);
    for (int dz = -(d.nz - 1); dz <= d.nz - 1; ++dz)
        for (int dy = -(d.ny - 1); dy <= d.ny - 1; ++dy)
            for (int dx = -(d.nx - 1); dx <= d.nx - 1; ++dx) {
                const double d2 = static_cast<double>(dx) * dx +
                                  static_cast<double>(dy) * dy +
                                  static_cast<double>(dz) * dz;
                spatial[(static_cast<std::size_t>(dz + d.nz - 1) * ty + (dy + d.ny - 1)) *
                            tx +
                        (dx + d.nx - 1)] = std::exp(-d2 * inv2tp);
            }

    std::vector<int> xs(n), ys(n), zs(n);
    {
        std::size_t i = 0;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x, ++i) {
                    xs[i] = x;
                    ys[i] = y;
                    zs[i] = z;
                }
    }

    const double inv2ti = 1.0 / (2.0 * p.theta_int * p.theta_int);
    std::vector<double> msg(n * nc), qnext(n * nc);
    for (int it = 0; it < p.n_meanfield_iters; ++it) {
        std::fill(msg.begin(), msg.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double ii = intensity.voxels[i];
            for (std::size_t j = i + 1; j < n; ++j) {
                const double sp =
                    spatial[(static_cast<std::size_t>(zs[i] - zs[j] + d.nz - 1) * ty +
                             (ys[i] - ys[j] + d.ny - 1)) *
                                tx +
                            (xs[i] - xs[j] + d.nx - 1)];
                const double di = ii - intensity.voxels[j];
                const double k =
                    sp * (p.w_smooth + p.w_app * std::exp(-di * di * inv2ti));
                for (int c = 0; c < nc; ++c) {
                    msg[i * nc + c] += k * q[j * nc + c];
                    msg[j * nc + c] += k * q[i * nc + c];
                }
            }
        }
        // Potts compatibility: being label c is penalized by the mass of
        // every other label, which after normalization is the same as being
        // rewarded by the mass of c itself.
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < nc; ++c) {
                qnext[i * nc + c] = -unary[i * nc + c] + msg[i * nc + c];
                mx = std::max(mx, qnext[i * nc + c]);
            }
            double s = 0.0;
            for (int c = 0; c < nc; ++c) {
                qnext[i * nc + c] = std::exp(qnext[i * nc + c] - mx);
                s += qnext[i * nc + c];
            }
            for (int c = 0; c < nc; ++c) qnext[i * nc + c] /= s;
        }
        q.swap(qnext);
        if (trace) {
            ProbabilityMap snap = make_feature_map(nc, d);
            for (std::size_t i = 0; i < n; ++i)
                for (int c = 0; c < nc; ++c) snap.values[c * n + i] = q[i * nc + c];
            trace->push_back(std::move(snap));
        }
    }

    LabelMask out = make_mask(d);
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        for (int c = 1; c < nc; ++c)
            if (q[i * nc + c] > q[i * nc + best]) best = c;
        out.labels[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

LabelMask crf_refine_blocked(const ProbabilityMap& probs, const Volume& intensity,
                             const CrfParams& p, int block_edge) {
    validate_crf_params(p);
    if (block_edge < 1) throw param_error("crf: block edge must be positive");
    if (static_cast<std::size_t>(block_edge) * block_edge * block_edge > kPairwiseCap)
        throw param_error("crf: block exceeds the brute-force cap");
    if (probs.channels < 2) throw param_error("crf: need at least 2 classes");
    if (!(probs.dims == intensity.dims))
        throw param_error("crf: probability and intensity dims differ");

    const Dims d = probs.dims;
    const std::size_t n = d.count();
    const int nc = probs.channels;
    LabelMask out = make_mask(d);
    for (int bz = 0; bz < d.nz; bz += block_edge)
        for (int by = 0; by < d.ny; by += block_edge)
            for (int bx = 0; bx < d.nx; bx += block_edge) {
                const Dims bd{std::min(block_edge, d.nx - bx),
                              std::min(block_edge, d.ny - by),
                              std::min(block_edge, d.nz - bz)};
                ProbabilityMap bp = make_feature_map(nc, bd);
                Volume bi = make_volume(bd, intensity.spacing, intensity.origin,
                                        intensity.unit_tag);
                const std::size_t bn = bd.count();
                for (int z = 0; z < bd.nz; ++z)
                    for (int y = 0; y < bd.ny; ++y)
                        for (int x = 0; x < bd.nx; ++x) {
                            const std::size_t src =
                                voxel_index(d, bx + x, by + y, bz + z);
                            const std::size_t dst = voxel_index(bd, x, y, z);
                            for (int c = 0; c < nc; ++c)
                                bp.values[c * bn + dst] = probs.values[c * n + src];
                            bi.voxels[dst] = intensity.voxels[src];
                        }
                LabelMask bl = crf_refine(bp, bi, p);
                for (int z = 0; z < bd.nz; ++z)
                    for (int y = 0; y < bd.ny; ++y)
                        for (int x = 0; x < bd.nx; ++x)
                            out.labels[voxel_index(d, bx + x, by + y, bz + z)] =
                                bl.labels[voxel_index(bd, x, y, z)];
            }
    return out;
}

}  // namespace volseg
