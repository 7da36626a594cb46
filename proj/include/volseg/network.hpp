#ifndef VOLSEG_NETWORK_HPP
#define VOLSEG_NETWORK_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "volseg/sampler.hpp"
#include "volseg/volume.hpp"

namespace volseg {

// Dense real-valued activation block. Spatial layout matches Volume
// ([z][y][x], x fastest) with a leading channel axis.
struct FeatureMap {
    int channels = 0;
    Dims dims;
    std::vector<double> values;

    std::size_t index(int c, int x, int y, int z) const {
        return ((static_cast<std::size_t>(c) * dims.nz + z) * dims.ny + y) * dims.nx + x;
    }
    double& at(int c, int x, int y, int z) { return values[index(c, x, y, z)]; }
    double at(int c, int x, int y, int z) const { return values[index(c, x, y, z)]; }
};

using ProbabilityMap = FeatureMap;

FeatureMap make_feature_map(int channels, Dims dims, double fill = 0.0);
FeatureMap feature_map_from_volume(const Volume& v);

// Weights are kept in 32-bit floats; all arithmetic on them runs in doubles.
struct ConvLayer {
    int c_in = 0;
    int c_out = 0;
    int k = 1;
    std::vector<float> w;  // (c_out, c_in, k, k, k), x fastest
    std::vector<float> b;  // (c_out)

    std::size_t w_index(int co, int ci, int kx, int ky, int kz) const {
        return (((static_cast<std::size_t>(co) * c_in + ci) * k + kz) * k + ky) * k + kx;
    }
};

struct ConvGrads {
    FeatureMap input;
    std::vector<double> w;
    std::vector<double> b;
};

FeatureMap conv3d_forward(const FeatureMap& in, const ConvLayer& layer);
ConvGrads conv3d_backward(const FeatureMap& in, const ConvLayer& layer,
                          const FeatureMap& upstream);

FeatureMap relu(const FeatureMap& x);
FeatureMap relu_backward(const FeatureMap& x, const FeatureMap& upstream);

struct XentResult {
    double loss = 0.0;
    FeatureMap grad;
};

// Voxelwise softmax followed by mean cross-entropy over the block.
XentResult softmax_xent(const FeatureMap& logits, const LabelMask& labels);

enum class JoinPolicy { NearestNeighbor };

struct NetConfig {
    std::array<int, 4> conv_channels{8, 8, 16, 16};
    int kernel_edge = 3;
    std::array<int, 2> fc_channels{32, 32};
    int n_classes = 2;
    int p_full = 25;
    int p_low = 19;
    JoinPolicy low_patch_upsample = JoinPolicy::NearestNeighbor;
};

void validate_config(const NetConfig& cfg);
int receptive_field(const NetConfig& cfg);

struct Network {
    NetConfig cfg;
    std::vector<ConvLayer> full_path;  // 4 conv layers
    std::vector<ConvLayer> low_path;   // 4 conv layers
    std::vector<ConvLayer> head;       // fc1, fc2, classifier (all 1x1x1)
};

Network build_network(const NetConfig& cfg, std::uint64_t seed = 0);

// Fixed enumeration order used by gradients and serialization:
// full_path[0..3], low_path[0..3], head[0..2].
std::vector<const ConvLayer*> layer_list(const Network& net);
std::vector<ConvLayer*> layer_list(Network& net);

struct ForwardCache {
    std::vector<FeatureMap> full_in, full_pre;
    std::vector<FeatureMap> low_in, low_pre;
    FeatureMap joined;
    std::vector<FeatureMap> head_in, head_pre;
    std::vector<std::array<int, 3>> low_lookup;  // per full-output voxel
    Dims out_dims;
    Dims low_feat_dims;
};

FeatureMap net_forward(const Network& net, const Volume& full_patch,
                       const Volume& low_patch, ForwardCache* cache = nullptr);
FeatureMap net_forward(const Network& net, const PatchPair& pair,
                       ForwardCache* cache = nullptr);

struct NetGrads {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;
};

NetGrads make_zero_grads(const Network& net);
void net_backward(const Network& net, const ForwardCache& cache,
                  const FeatureMap& grad_logits, NetGrads& acc);
void sgd_update(Network& net, const NetGrads& grads, double lr, double scale = 1.0);

// Plain SGD over the given batches; the seed drives per-epoch batch order.
// Returns the per-epoch mean loss trace.
std::vector<double> train(Network& net, const std::vector<std::vector<PatchPair>>& batches,
                          double lr, int epochs, std::uint64_t seed);

// Sliding-window dense inference over a preprocessed volume pair. Tiles
// partition the output grid; results are independent of tile_edge.
ProbabilityMap infer_dense(const Network& net, const Volume& full, const Volume& low,
                           int tile_edge = 24);

void save_network(const Network& net, const std::string& topo_path,
                  const std::string& weights_path);
Network load_network(const std::string& topo_path, const std::string& weights_path);

}  // namespace volseg

#endif
