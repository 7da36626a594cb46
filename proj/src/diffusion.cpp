#include "volseg/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace volseg {
namespace {

// Derivative of the discrete image along one axis at position i (of n), with
// the values fetched through `get`. Central inside, one-sided at the ends,
// zero when the axis is degenerate.
template <typename Get>
double axis_derivative(const Get& get, int i, int n, double h) {
    if (n < 2) return 0.0;
    if (i == 0) return (get(1) - get(0)) / h;
    if (i == n - 1) return (get(n - 1) - get(n - 2)) / h;
    return (get(i + 1) - get(i - 1)) / (2.0 * h);
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& w : k) w /= sum;
    return k;
}

void smooth_axis(Volume& vol, const std::vector<double>& kernel, int axis) {
    const Dims d = vol.dims;
    const int radius = static_cast<int>(kernel.size() / 2);
    const int n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
    std::vector<float> line(static_cast<std::size_t>(n));
    if (axis == 0) {
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y) {
                for (int x = 0; x < n; ++x) line[x] = vol.at(x, y, z);
                for (int x = 0; x < n; ++x) {
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i)
                        acc += kernel[i + radius] * line[std::clamp(x + i, 0, n - 1)];
                    vol.at(x, y, z) = static_cast<float>(acc);
                }
            }
    } else if (axis == 1) {
        for (int z = 0; z < d.nz; ++z)
            for (int x = 0; x < d.nx; ++x) {
                for (int y = 0; y < n; ++y) line[y] = vol.at(x, y, z);
                for (int y = 0; y < n; ++y) {
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i)
                        acc += kernel[i + radius] * line[std::clamp(y + i, 0, n - 1)];
                    vol.at(x, y, z) = static_cast<float>(acc);
                }
            }
    } else {
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                for (int z = 0; z < n; ++z) line[z] = vol.at(x, y, z);
                for (int z = 0; z < n; ++z) {
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i)
                        acc += kernel[i + radius] * line[std::clamp(z + i, 0, n - 1)];
                    vol.at(x, y, z) = static_cast<float>(acc);
                }
            }
    }
}

}  // namespace

void validate_params(const DiffusionParams& p) {
    if (!(p.dt > 0.0 && p.dt <= 1.0 / 6.0))
        throw param_error("diffusion: dt must lie in (0, 1/6]");
    if (!(p.lambda_e > 0.0)) throw param_error("diffusion: lambda_e must be > 0");
    if (!(p.sigma_s >= 0.0)) throw param_error("diffusion: sigma_s must be >= 0");
    if (p.n_iters < 0) throw param_error("diffusion: n_iters must be >= 0");
    if (!(p.b > 0.0)) throw param_error("diffusion: b must be > 0");
}

Volume gaussian_smooth(const Volume& vol, double sigma) {
    if (sigma < 0.0) throw param_error("gaussian_smooth: sigma must be >= 0");
    Volume out = vol;
    if (sigma == 0.0) return out;
    const auto kernel = gaussian_kernel(sigma);
    smooth_axis(out, kernel, 0);
    smooth_axis(out, kernel, 1);
    smooth_axis(out, kernel, 2);
    return out;
}

VectorField gradient(const Volume& vol) {
    const Dims d = vol.dims;
    if (d.nx < 2 || d.ny < 2 || d.nz < 2)
        throw param_error("gradient: every dim must be >= 2");
    VectorField g{d, std::vector<Vec3>(d.count())};
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                auto gx = [&](int i) { return static_cast<double>(vol.at(i, y, z)); };
                auto gy = [&](int i) { return static_cast<double>(vol.at(x, i, z)); };
                auto gz = [&](int i) { return static_cast<double>(vol.at(x, y, i)); };
                g.at(x, y, z) = {axis_derivative(gx, x, d.nx, vol.spacing.x),
                                 axis_derivative(gy, y, d.ny, vol.spacing.y),
                                 axis_derivative(gz, z, d.nz, vol.spacing.z)};
            }
    return g;
}

std::array<double, 3> eed_eigenvalues(double grad_mag, const DiffusionParams& p) {
    if (grad_mag == 0.0) return {1.0, 1.0, 1.0};
    const double r = grad_mag / p.lambda_e;
    const double l1 = 1.0 - std::exp(-p.b / (r * r * r * r));
    return {l1, 1.0, 1.0};
}

TensorField assemble_tensor(const VectorField& g, const DiffusionParams& p) {
    TensorField D{g.dims, std::vector<Tensor6>(g.v.size())};
    for (std::size_t i = 0; i < g.v.size(); ++i) {
        const Vec3& gv = g.v[i];
        const double mag = std::sqrt(gv.x * gv.x + gv.y * gv.y + gv.z * gv.z);
        if (mag == 0.0) {
            D.t[i] = {1.0, 1.0, 1.0, 0.0, 0.0, 0.0};
            continue;
        }
        const double l1 = eed_eigenvalues(mag, p)[0];
        const double v1[3] = {gv.x / mag, gv.y / mag, gv.z / mag};

        // v2: cross v1 with the coordinate axis it is least aligned with
        int k = 0;
        if (std::abs(v1[1]) < std::abs(v1[k])) k = 1;
        if (std::abs(v1[2]) < std::abs(v1[k])) k = 2;
        double e[3] = {0, 0, 0};
        e[k] = 1.0;
        double v2[3] = {v1[1] * e[2] - v1[2] * e[1], v1[2] * e[0] - v1[0] * e[2],
                        v1[0] * e[1] - v1[1] * e[0]};
        const double n2 = std::sqrt(v2[0] * v2[0] + v2[1] * v2[1] + v2[2] * v2[2]);
        for (double& c : v2) c /= n2;
        const double v3[3] = {v1[1] * v2[2] - v1[2] * v2[1], v1[2] * v2[0] - v1[0] * v2[2],
                              v1[0] * v2[1] - v1[1] * v2[0]};

        Tensor6 t;
        t.xx = l1 * v1[0] * v1[0] + v2[0] * v2[0] + v3[0] * v3[0];
        t.yy = l1 * v1[1] * v1[1] + v2[1] * v2[1] + v3[1] * v3[1];
        t.zz = l1 * v1[2] * v1[2] + v2[2] * v2[2] + v3[2] * v3[2];
        t.xy = l1 * v1[0] * v1[1] + v2[0] * v2[1] + v3[0] * v3[1];
        t.xz = l1 * v1[0] * v1[2] + v2[0] * v2[2] + v3[0] * v3[2];
        t.yz = l1 * v1[1] * v1[2] + v2[1] * v2[2] + v3[1] * v3[2];
        D.t[i] = t;
    }
    return D;
}

// Flux-corrected divergence step. The axial (normal) part of D grad I alone
// gives nonnegative stencil weights, so the low-order update is a convex
// combination of neighbors whenever dt <= 1/6 (unit spacing) and cannot
// create new extrema. The mixed-derivative face fluxes are added back through
// a Zalesak limiter: each face flux is scaled so no voxel leaves the local
// [min, max] envelope. Fluxes stay antisymmetric per face, so the voxel sum
// telescopes and conservation is exact up to rounding.
Volume eed_step(const Volume& vol, const TensorField& D, double dt) {
    if (!(dt > 0.0 && dt <= 1.0 / 6.0))
        throw param_error("eed_step: dt must lie in (0, 1/6]");
    if (!(vol.dims == D.dims)) throw param_error("eed_step: tensor dims mismatch");

    const Dims d = vol.dims;
    const std::size_t n = d.count();
    const double h[3] = {vol.spacing.x, vol.spacing.y, vol.spacing.z};

    auto dx_at = [&](int x, int y, int z) {
        auto get = [&](int i) { return static_cast<double>(vol.at(i, y, z)); };
        return axis_derivative(get, x, d.nx, h[0]);
    };
    auto dy_at = [&](int x, int y, int z) {
        auto get = [&](int i) { return static_cast<double>(vol.at(x, i, z)); };
        return axis_derivative(get, y, d.ny, h[1]);
    };
    auto dz_at = [&](int x, int y, int z) {
        auto get = [&](int i) { return static_cast<double>(vol.at(x, y, i)); };
        return axis_derivative(get, z, d.nz, h[2]);
    };

    // Fluxes stored at the lower-index voxel of each face; boundary faces
    // (outside the volume) carry zero flux.
    std::vector<double> flo[3], fad[3];
    for (int a = 0; a < 3; ++a) {
        flo[a].assign(n, 0.0);
        fad[a].assign(n, 0.0);
    }

    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = voxel_index(d, x, y, z);
                const Tensor6& a = D.at(x, y, z);
                if (x + 1 < d.nx) {
                    const Tensor6& b = D.at(x + 1, y, z);
                    flo[0][i] = 0.5 * (a.xx + b.xx) *
                                (vol.at(x + 1, y, z) - vol.at(x, y, z)) / h[0];
                    fad[0][i] = 0.5 * (a.xy + b.xy) * 0.5 * (dy_at(x, y, z) + dy_at(x + 1, y, z)) +
                                0.5 * (a.xz + b.xz) * 0.5 * (dz_at(x, y, z) + dz_at(x + 1, y, z));
                }
                if (y + 1 < d.ny) {
                    const Tensor6& b = D.at(x, y + 1, z);
                    flo[1][i] = 0.5 * (a.yy + b.yy) *
                                (vol.at(x, y + 1, z) - vol.at(x, y, z)) / h[1];
                    fad[1][i] = 0.5 * (a.xy + b.xy) * 0.5 * (dx_at(x, y, z) + dx_at(x, y + 1, z)) +
                                0.5 * (a.yz + b.yz) * 0.5 * (dz_at(x, y, z) + dz_at(x, y + 1, z));
                }
                if (z + 1 < d.nz) {
                    const Tensor6& b = D.at(x, y, z + 1);
                    flo[2][i] = 0.5 * (a.zz + b.zz) *
                                (vol.at(x, y, z + 1) - vol.at(x, y, z)) / h[2];
                    fad[2][i] = 0.5 * (a.xz + b.xz) * 0.5 * (dx_at(x, y, z) + dx_at(x, y, z + 1)) +
                                0.5 * (a.yz + b.yz) * 0.5 * (dy_at(x, y, z) + dy_at(x, y, z + 1));
                }
            }

    auto divergence = [&](const std::vector<double>* f, std::vector<double>& out) {
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    const std::size_t i = voxel_index(d, x, y, z);
                    double acc = 0.0;
                    acc += ((x + 1 < d.nx ? f[0][i] : 0.0) -
                            (x > 0 ? f[0][voxel_index(d, x - 1, y, z)] : 0.0)) / h[0];
                    acc += ((y + 1 < d.ny ? f[1][i] : 0.0) -
                            (y > 0 ? f[1][voxel_index(d, x, y - 1, z)] : 0.0)) / h[1];
                    acc += ((z + 1 < d.nz ? f[2][i] : 0.0) -
                            (z > 0 ? f[2][voxel_index(d, x, y, z - 1)] : 0.0)) / h[2];
                    out[i] = acc;
                }
    };

    std::vector<double> low(n);
    divergence(flo, low);
    for (std::size_t i = 0; i < n; ++i) low[i] = vol.voxels[i] + dt * low[i];

    // Envelope per voxel: extremes of the original and low-order values over
    // the 6-neighborhood, then limiter factors per voxel and per face.
    std::vector<double> qplus(n), qminus(n), pplus(n, 0.0), pminus(n, 0.0);
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = voxel_index(d, x, y, z);
                double lo = std::min(static_cast<double>(vol.voxels[i]), low[i]);
                double hi = std::max(static_cast<double>(vol.voxels[i]), low[i]);
                const int nb[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z},
                                      {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
                for (const auto& c : nb) {
                    if (c[0] < 0 || c[0] >= d.nx || c[1] < 0 || c[1] >= d.ny || c[2] < 0 ||
                        c[2] >= d.nz)
                        continue;
                    const std::size_t j = voxel_index(d, c[0], c[1], c[2]);
                    lo = std::min({lo, static_cast<double>(vol.voxels[j]), low[j]});
                    hi = std::max({hi, static_cast<double>(vol.voxels[j]), low[j]});
                }
                qplus[i] = hi - low[i];
                qminus[i] = low[i] - lo;
            }

    // P: total antidiffusive inflow/outflow a voxel could receive.
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = voxel_index(d, x, y, z);
                const std::size_t lower[3] = {
                    x > 0 ? voxel_index(d, x - 1, y, z) : std::size_t(-1),
                    y > 0 ? voxel_index(d, x, y - 1, z) : std::size_t(-1),
                    z > 0 ? voxel_index(d, x, y, z - 1) : std::size_t(-1)};
                const bool has_upper[3] = {x + 1 < d.nx, y + 1 < d.ny, z + 1 < d.nz};
                for (int a = 0; a < 3; ++a) {
                    if (has_upper[a]) {  // face where this voxel is the lower side: +F/h
                        const double c = dt * fad[a][i] / h[a];
                        if (c > 0) pplus[i] += c; else pminus[i] -= c;
                    }
                    if (lower[a] != std::size_t(-1)) {  // face where this voxel is upper: -F/h
                        const double c = -dt * fad[a][lower[a]] / h[a];
                        if (c > 0) pplus[i] += c; else pminus[i] -= c;
                    }
                }
            }

    std::vector<double> rplus(n), rminus(n);
    for (std::size_t i = 0; i < n; ++i) {
        rplus[i] = pplus[i] > 0.0 ? std::min(1.0, qplus[i] / pplus[i]) : 1.0;
        rminus[i] = pminus[i] > 0.0 ? std::min(1.0, qminus[i] / pminus[i]) : 1.0;
    }

    // Scale each face flux by the tighter of the two adjacent constraints.
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = voxel_index(d, x, y, z);
                const std::size_t up[3] = {
                    x + 1 < d.nx ? voxel_index(d, x + 1, y, z) : std::size_t(-1),
                    y + 1 < d.ny ? voxel_index(d, x, y + 1, z) : std::size_t(-1),
                    z + 1 < d.nz ? voxel_index(d, x, y, z + 1) : std::size_t(-1)};
                for (int a = 0; a < 3; ++a) {
                    if (up[a] == std::size_t(-1)) continue;
                    const double f = fad[a][i];
                    // positive flux raises the lower voxel, drains the upper
                    const double alpha = f >= 0.0 ? std::min(rplus[i], rminus[up[a]])
                                                  : std::min(rminus[i], rplus[up[a]]);
                    fad[a][i] = alpha * f;
                }
            }

    std::vector<double> corr(n);
    divergence(fad, corr);
    Volume out = vol;
    for (std::size_t i = 0; i < n; ++i) {
        // rounding guard: the limiter bounds the exact value by the envelope,
        // so any excursion here is float noise, not transported mass
        const double v = std::clamp(low[i] + dt * corr[i], low[i] - qminus[i], low[i] + qplus[i]);
        out.voxels[i] = static_cast<float>(v);
    }
    return out;
}

Volume eed_filter(const Volume& vol, const DiffusionParams& p) {
    validate_params(p);
    Volume cur = vol;
    for (int it = 0; it < p.n_iters; ++it) {
        const Volume smoothed = gaussian_smooth(cur, p.sigma_s);
        const VectorField g = gradient(smoothed);
        const TensorField D = assemble_tensor(g, p);
        cur = eed_step(cur, D, p.dt);
    }
    return cur;
}

}  // namespace volseg
