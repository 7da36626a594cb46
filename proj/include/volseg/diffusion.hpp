#ifndef VOLSEG_DIFFUSION_HPP
#define VOLSEG_DIFFUSION_HPP

#include <array>
#include <vector>

#include "volseg/volume.hpp"

namespace volseg {

// Edge-enhancing diffusion. Smoothing happens freely along edges and is
// throttled across them; the tensor is rebuilt from the evolving image every
// iteration.
struct DiffusionParams {
    double sigma_s = 1.0;    // pre-smoothing scale, voxels
    double lambda_e = 10.0;  // contrast parameter, greyscale units
    double b = 3.315;        // diffusivity constant
    double dt = 0.15;        // explicit Euler step, must stay in (0, 1/6]
    int n_iters = 10;
};

// Throws param_error when a field is outside its legal range.
void validate_params(const DiffusionParams& p);

struct VectorField {
    Dims dims;
    std::vector<Vec3> v;

    Vec3& at(int x, int y, int z) { return v[voxel_index(dims, x, y, z)]; }
    const Vec3& at(int x, int y, int z) const { return v[voxel_index(dims, x, y, z)]; }
};

// Symmetric positive semi-definite 3x3 per voxel, eigenvalues in (0, 1].
struct Tensor6 {
    double xx = 0, yy = 0, zz = 0, xy = 0, xz = 0, yz = 0;
};

struct TensorField {
    Dims dims;
    std::vector<Tensor6> t;

    Tensor6& at(int x, int y, int z) { return t[voxel_index(dims, x, y, z)]; }
    const Tensor6& at(int x, int y, int z) const { return t[voxel_index(dims, x, y, z)]; }
};

// Separable Gaussian, kernel radius ceil(3*sigma), edge-clamped reads.
// sigma = 0 is the identity.
Volume gaussian_smooth(const Volume& vol, double sigma);

// Central differences inside, one-sided at the faces, scaled by 1/spacing.
VectorField gradient(const Volume& vol);

// lambda_1 gates diffusion across the gradient; the two tangential directions
// always diffuse freely.
std::array<double, 3> eed_eigenvalues(double grad_mag, const DiffusionParams& p);

TensorField assemble_tensor(const VectorField& g, const DiffusionParams& p);

// One explicit Euler step of dI/dt = div(D grad I), zero-flux boundaries.
Volume eed_step(const Volume& vol, const TensorField& D, double dt);

Volume eed_filter(const Volume& vol, const DiffusionParams& p);

}  // namespace volseg

#endif
