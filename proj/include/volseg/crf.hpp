#ifndef VOLSEG_CRF_HPP
#define VOLSEG_CRF_HPP

#include <vector>

#include "volseg/network.hpp"
#include "volseg/volume.hpp"

namespace volseg {

// Fully connected pairwise refinement of class probabilities. Pairwise
// strength between voxels i, j is
//   w_smooth * exp(-d2/2*theta_pos^2)
//   + w_app  * exp(-d2/2*theta_pos^2 - (Ii-Ij)^2/2*theta_int^2)
// with d2 the squared voxel-index distance and a Potts label compatibility.
struct CrfParams {
    double w_smooth = 1.0;
    double theta_pos = 3.0;
    double w_app = 1.0;
    double theta_int = 10.0;   // matches the greyscale intensity domain
    int n_meanfield_iters = 5;
};

void validate_crf_params(const CrfParams& p);

// Brute-force O(N^2) mean-field, so capped at 40^3 voxels; exactness over
// speed. Unary is -log of the (floored) input probability. When trace is
// given, the marginals after every iteration are appended to it.
LabelMask crf_refine(const ProbabilityMap& probs, const Volume& intensity,
                     const CrfParams& p,
                     std::vector<ProbabilityMap>* trace = nullptr);

// Runs crf_refine independently on edge-aligned blocks so whole volumes stay
// under the brute-force cap. Long-range coupling stops at block borders.
LabelMask crf_refine_blocked(const ProbabilityMap& probs, const Volume& intensity,
                             const CrfParams& p, int block_edge = 8);

}  // namespace volseg

#endif
