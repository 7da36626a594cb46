#include "volseg/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include <json.hpp>

#include "volseg/hash.hpp"

namespace volseg {

static_assert(std::endian::native == std::endian::little,
              "weight payloads are little-endian; big-endian hosts unsupported");

FeatureMap make_feature_map(int channels, Dims dims, double fill) {
    if (channels < 1 || dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
        throw param_error("feature map dims must be positive");
    FeatureMap f;
    f.channels = channels;
    f.dims = dims;
    f.values.assign(static_cast<std::size_t>(channels) * dims.count(), fill);
    return f;
}

FeatureMap feature_map_from_volume(const Volume& v) {
    validate_volume(v);
    FeatureMap f = make_feature_map(1, v.dims);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) f.values[i] = v.voxels[i];
    return f;
}

FeatureMap conv3d_forward(const FeatureMap& in, const ConvLayer& layer) {
    if (layer.k < 1 || layer.k % 2 == 0)
        throw param_error("conv3d: kernel edge must be odd and positive");
    if (in.channels != layer.c_in)
        throw param_error("conv3d: input channels " + std::to_string(in.channels) +
                          ", layer expects " + std::to_string(layer.c_in));
    const int k = layer.k;
    if (in.dims.nx < k || in.dims.ny < k || in.dims.nz < k)
        throw param_error("conv3d: spatial dims below kernel edge");

    const Dims od{in.dims.nx - k + 1, in.dims.ny - k + 1, in.dims.nz - k + 1};
    FeatureMap out = make_feature_map(layer.c_out, od);
    const std::size_t w_per_out = static_cast<std::size_t>(layer.c_in) * k * k * k;
    for (int co = 0; co < layer.c_out; ++co) {
        const float* wbase = layer.w.data() + co * w_per_out;
        const double bias = layer.b[co];
        for (int oz = 0; oz < od.nz; ++oz)
            for (int oy = 0; oy < od.ny; ++oy)
                for (int ox = 0; ox < od.nx; ++ox) {
                    double acc = bias;
                    const float* wp = wbase;
                    for (int ci = 0; ci < layer.c_in; ++ci)
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky) {
                                const double* row =
                                    &in.values[in.index(ci, ox, oy + ky, oz + kz)];
                                for (int kx = 0; kx < k; ++kx)
                                    acc += static_cast<double>(wp[kx]) * row[kx];
                                wp += k;
                            }
                    out.at(co, ox, oy, oz) = acc;
                }
    }
    return out;
}

ConvGrads conv3d_backward(const FeatureMap& in, const ConvLayer& layer,
                          const FeatureMap& upstream) {
    const int k = layer.k;
    const Dims od{in.dims.nx - k + 1, in.dims.ny - k + 1, in.dims.nz - k + 1};
    if (in.channels != layer.c_in || in.dims.nx < k || in.dims.ny < k || in.dims.nz < k)
        throw param_error("conv3d_backward: input inconsistent with layer");
    if (upstream.channels != layer.c_out || !(upstream.dims == od))
        throw param_error("conv3d_backward: upstream shape mismatch");

    ConvGrads g;
    g.input = make_feature_map(layer.c_in, in.dims);
    g.w.assign(layer.w.size(), 0.0);
    g.b.assign(layer.b.size(), 0.0);
    const std::size_t w_per_out = static_cast<std::size_t>(layer.c_in) * k * k * k;
    for (int co = 0; co < layer.c_out; ++co) {
        const float* wbase = layer.w.data() + co * w_per_out;
        double* gwbase = g.w.data() + co * w_per_out;
        for (int oz = 0; oz < od.nz; ++oz)
            for (int oy = 0; oy < od.ny; ++oy)
                for (int ox = 0; ox < od.nx; ++ox) {
                    const double up = upstream.at(co, ox, oy, oz);
                    g.b[co] += up;
                    if (up == 0.0) continue;
                    const float* wp = wbase;
                    double* gwp = gwbase;
                    for (int ci = 0; ci < layer.c_in; ++ci)
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky) {
                                const std::size_t base =
                                    in.index(ci, ox, oy + ky, oz + kz);
                                const double* row = &in.values[base];
                                double* grow = &g.input.values[base];
                                for (int kx = 0; kx < k; ++kx) {
                                    grow[kx] += static_cast<double>(wp[kx]) * up;
                                    gwp[kx] += row[kx] * up;
                                }
                                wp += k;
                                gwp += k;
                            }
                }
    }
    return g;
}

FeatureMap relu(const FeatureMap& x) {
    FeatureMap y = x;
    for (double& v : y.values) v = v > 0.0 ? v : 0.0;
    return y;
}

FeatureMap relu_backward(const FeatureMap& x, const FeatureMap& upstream) {
    if (x.channels != upstream.channels || !(x.dims == upstream.dims))
        throw param_error("relu_backward: shape mismatch");
    FeatureMap g = upstream;
    for (std::size_t i = 0; i < g.values.size(); ++i)
        if (x.values[i] <= 0.0) g.values[i] = 0.0;
    return g;
}

XentResult softmax_xent(const FeatureMap& logits, const LabelMask& labels) {
    if (!(logits.dims == labels.dims))
        throw param_error("softmax_xent: logits and labels have different dims");
    if (logits.channels < 2) throw param_error("softmax_xent: need at least 2 classes");

    const int nc = logits.channels;
    const std::size_t n = logits.dims.count();
    XentResult r;
    r.grad = make_feature_map(nc, logits.dims);
    double total = 0.0;
    std::vector<double> l(nc);
    for (int z = 0; z < logits.dims.nz; ++z)
        for (int y = 0; y < logits.dims.ny; ++y)
            for (int x = 0; x < logits.dims.nx; ++x) {
                const int lab = labels.at(x, y, z);
                if (lab >= nc)
                    throw data_error("softmax_xent: label " + std::to_string(lab) +
                                     " outside " + std::to_string(nc) + " classes");
                double m = logits.at(0, x, y, z);
                for (int c = 1; c < nc; ++c) m = std::max(m, logits.at(c, x, y, z));
                double s = 0.0;
                for (int c = 0; c < nc; ++c) {
                    l[c] = std::exp(logits.at(c, x, y, z) - m);
                    s += l[c];
                }
                total += std::log(s) - (logits.at(lab, x, y, z) - m);
                for (int c = 0; c < nc; ++c) {
                    double p = l[c] / s;
                    r.grad.at(c, x, y, z) = (p - (c == lab ? 1.0 : 0.0)) / n;
                }
            }
    r.loss = total / n;
    return r;
}

int receptive_field(const NetConfig& cfg) { return 1 + 4 * (cfg.kernel_edge - 1); }

void validate_config(const NetConfig& cfg) {
    if (cfg.kernel_edge < 1 || cfg.kernel_edge % 2 == 0)
        throw param_error("kernel edge must be odd and positive");
    for (int c : cfg.conv_channels)
        if (c < 1) throw param_error("conv channel counts must be >= 1");
    for (int c : cfg.fc_channels)
        if (c < 1) throw param_error("fc channel counts must be >= 1");
    if (cfg.n_classes < 2) throw param_error("need at least 2 classes");
    if (cfg.p_full < 1 || cfg.p_full % 2 == 0 || cfg.p_low < 1 || cfg.p_low % 2 == 0)
        throw param_error("patch edges must be odd and positive");
    const int rf = receptive_field(cfg);
    if (cfg.p_full < rf || cfg.p_low < rf)
        throw param_error("patch edge below receptive field " + std::to_string(rf));
}

namespace {

// Box-Muller on explicit mt19937_64 draws; std::normal_distribution is
// implementation-defined, which would break cross-platform reproducibility.
double gaussian_draw(std::mt19937_64& rng) {
    double u1 = 1.0 - (rng() >> 11) * 0x1.0p-53;  // (0, 1]
    double u2 = (rng() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

ConvLayer init_layer(int c_in, int c_out, int k, std::mt19937_64& rng) {
    ConvLayer L;
    L.c_in = c_in;
    L.c_out = c_out;
    L.k = k;
    L.w.resize(static_cast<std::size_t>(c_out) * c_in * k * k * k);
    L.b.assign(c_out, 0.0f);
    const double sd = std::sqrt(2.0 / (static_cast<double>(c_in) * k * k * k));
    for (float& wv : L.w) wv = static_cast<float>(gaussian_draw(rng) * sd);
    return L;
}

}  // namespace

Network build_network(const NetConfig& cfg, std::uint64_t seed) {
    validate_config(cfg);
    Network net;
    net.cfg = cfg;
    std::mt19937_64 rng(seed);
    const int k = cfg.kernel_edge;
    int cin = 1;
    for (int i = 0; i < 4; ++i) {
        net.full_path.push_back(init_layer(cin, cfg.conv_channels[i], k, rng));
        cin = cfg.conv_channels[i];
    }
    cin = 1;
    for (int i = 0; i < 4; ++i) {
        net.low_path.push_back(init_layer(cin, cfg.conv_channels[i], k, rng));
        cin = cfg.conv_channels[i];
    }
    const int joined = 2 * cfg.conv_channels[3];
    net.head.push_back(init_layer(joined, cfg.fc_channels[0], 1, rng));
    net.head.push_back(init_layer(cfg.fc_channels[0], cfg.fc_channels[1], 1, rng));
    net.head.push_back(init_layer(cfg.fc_channels[1], cfg.n_classes, 1, rng));
    return net;
}

std::vector<const ConvLayer*> layer_list(const Network& net) {
    std::vector<const ConvLayer*> ls;
    for (const auto& l : net.full_path) ls.push_back(&l);
    for (const auto& l : net.low_path) ls.push_back(&l);
    for (const auto& l : net.head) ls.push_back(&l);
    return ls;
}

std::vector<ConvLayer*> layer_list(Network& net) {
    std::vector<ConvLayer*> ls;
    for (auto& l : net.full_path) ls.push_back(&l);
    for (auto& l : net.low_path) ls.push_back(&l);
    for (auto& l : net.head) ls.push_back(&l);
    return ls;
}

FeatureMap net_forward(const Network& net, const Volume& full_patch,
                       const Volume& low_patch, ForwardCache* cache) {
    const int rf = receptive_field(net.cfg);
    const int m = (rf - 1) / 2;
    auto below = [rf](const Dims& d) { return d.nx < rf || d.ny < rf || d.nz < rf; };
    if (below(full_patch.dims) || below(low_patch.dims))
        throw param_error("patch edge below receptive field " + std::to_string(rf));

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c = ForwardCache{};

    FeatureMap x = feature_map_from_volume(full_patch);
    for (const auto& L : net.full_path) {
        c.full_in.push_back(std::move(x));
        FeatureMap pre = conv3d_forward(c.full_in.back(), L);
        x = relu(pre);
        c.full_pre.push_back(std::move(pre));
    }
    const FeatureMap ffeat = std::move(x);

    FeatureMap y = feature_map_from_volume(low_patch);
    for (const auto& L : net.low_path) {
        c.low_in.push_back(std::move(y));
        FeatureMap pre = conv3d_forward(c.low_in.back(), L);
        y = relu(pre);
        c.low_pre.push_back(std::move(pre));
    }
    const FeatureMap lfeat = std::move(y);

    const Dims od = ffeat.dims;
    c.out_dims = od;
    c.low_feat_dims = lfeat.dims;
    const int cf = ffeat.channels;
    const int cl = lfeat.channels;

    // Nearest low-resolution feature through world coordinates; a feature cell
    // at index l sits over low voxel l + m.
    FeatureMap joined = make_feature_map(cf + cl, od);
    c.low_lookup.resize(od.count());
    for (int oz = 0; oz < od.nz; ++oz)
        for (int oy = 0; oy < od.ny; ++oy)
            for (int ox = 0; ox < od.nx; ++ox) {
                const Vec3 w = full_patch.world(ox + m, oy + m, oz + m);
                auto near = [m](double wc, double o, double s, int n) {
                    long l = std::lround((wc - o) / s) - m;
                    return static_cast<int>(std::clamp(l, 0l, static_cast<long>(n - 1)));
                };
                const int lx = near(w.x, low_patch.origin.x, low_patch.spacing.x, lfeat.dims.nx);
                const int ly = near(w.y, low_patch.origin.y, low_patch.spacing.y, lfeat.dims.ny);
                const int lz = near(w.z, low_patch.origin.z, low_patch.spacing.z, lfeat.dims.nz);
                c.low_lookup[voxel_index(od, ox, oy, oz)] = {lx, ly, lz};
                for (int ch = 0; ch < cf; ++ch)
                    joined.at(ch, ox, oy, oz) = ffeat.at(ch, ox, oy, oz);
                for (int ch = 0; ch < cl; ++ch)
                    joined.at(cf + ch, ox, oy, oz) = lfeat.at(ch, lx, ly, lz);
            }
    c.joined = joined;

    FeatureMap h = std::move(joined);
    for (std::size_t i = 0; i < net.head.size(); ++i) {
        c.head_in.push_back(std::move(h));
        FeatureMap pre = conv3d_forward(c.head_in.back(), net.head[i]);
        h = (i + 1 < net.head.size()) ? relu(pre) : pre;
        c.head_pre.push_back(std::move(pre));
    }
    return h;
}

FeatureMap net_forward(const Network& net, const PatchPair& pair, ForwardCache* cache) {
    return net_forward(net, pair.full_patch, pair.low_patch, cache);
}

NetGrads make_zero_grads(const Network& net) {
    NetGrads g;
    for (const ConvLayer* L : layer_list(net)) {
        g.w.emplace_back(L->w.size(), 0.0);
        g.b.emplace_back(L->b.size(), 0.0);
    }
    return g;
}

void net_backward(const Network& net, const ForwardCache& cache,
                  const FeatureMap& grad_logits, NetGrads& acc) {
    const std::size_t nf = net.full_path.size();
    auto add = [&acc](std::size_t idx, const ConvGrads& cg) {
        for (std::size_t j = 0; j < cg.w.size(); ++j) acc.w[idx][j] += cg.w[j];
        for (std::size_t j = 0; j < cg.b.size(); ++j) acc.b[idx][j] += cg.b[j];
    };

    FeatureMap g = grad_logits;
    for (int i = static_cast<int>(net.head.size()) - 1; i >= 0; --i) {
        FeatureMap gpre = (i + 1 < static_cast<int>(net.head.size()))
                              ? relu_backward(cache.head_pre[i], g)
                              : std::move(g);
        ConvGrads cg = conv3d_backward(cache.head_in[i], net.head[i], gpre);
        add(2 * nf + i, cg);
        g = std::move(cg.input);
    }

    const int cf = net.full_path.back().c_out;
    const int cl = net.low_path.back().c_out;
    const Dims od = cache.out_dims;
    FeatureMap gfull = make_feature_map(cf, od);
    FeatureMap glow = make_feature_map(cl, cache.low_feat_dims);
    for (int oz = 0; oz < od.nz; ++oz)
        for (int oy = 0; oy < od.ny; ++oy)
            for (int ox = 0; ox < od.nx; ++ox) {
                for (int ch = 0; ch < cf; ++ch)
                    gfull.at(ch, ox, oy, oz) = g.at(ch, ox, oy, oz);
                const auto [lx, ly, lz] = cache.low_lookup[voxel_index(od, ox, oy, oz)];
                for (int ch = 0; ch < cl; ++ch)
                    glow.at(ch, lx, ly, lz) += g.at(cf + ch, ox, oy, oz);
            }

    g = std::move(gfull);
    for (int i = static_cast<int>(nf) - 1; i >= 0; --i) {
        FeatureMap gpre = relu_backward(cache.full_pre[i], g);
        ConvGrads cg = conv3d_backward(cache.full_in[i], net.full_path[i], gpre);
        add(i, cg);
        g = std::move(cg.input);
    }
    g = std::move(glow);
    for (int i = static_cast<int>(nf) - 1; i >= 0; --i) {
        FeatureMap gpre = relu_backward(cache.low_pre[i], g);
        ConvGrads cg = conv3d_backward(cache.low_in[i], net.low_path[i], gpre);
        add(nf + i, cg);
        g = std::move(cg.input);
    }
}

void sgd_update(Network& net, const NetGrads& grads, double lr, double scale) {
    auto layers = layer_list(net);
    if (grads.w.size() != layers.size())
        throw param_error("sgd_update: gradient/layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        ConvLayer* L = layers[i];
        if (grads.w[i].size() != L->w.size() || grads.b[i].size() != L->b.size())
            throw param_error("sgd_update: gradient shape mismatch");
        for (std::size_t j = 0; j < L->w.size(); ++j)
            L->w[j] = static_cast<float>(L->w[j] - lr * scale * grads.w[i][j]);
        for (std::size_t j = 0; j < L->b.size(); ++j)
            L->b[j] = static_cast<float>(L->b[j] - lr * scale * grads.b[i][j]);
    }
}

std::vector<double> train(Network& net, const std::vector<std::vector<PatchPair>>& batches,
                          double lr, int epochs, std::uint64_t seed) {
    if (batches.empty()) throw param_error("train: need at least one batch");
    for (const auto& b : batches)
        if (b.empty()) throw param_error("train: empty batch");
    if (lr < 0.0) throw param_error("train: negative learning rate");
    if (epochs < 0) throw param_error("train: negative epoch count");

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(batches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> trace;
    trace.reserve(epochs);
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[rng() % (i + 1)]);
        double epoch_loss = 0.0;
        for (std::size_t idx : order) {
            const auto& batch = batches[idx];
            NetGrads g = make_zero_grads(net);
            double batch_loss = 0.0;
            for (const PatchPair& pair : batch) {
                ForwardCache cache;
                FeatureMap logits = net_forward(net, pair, &cache);
                XentResult xr = softmax_xent(logits, pair.label_patch);
                batch_loss += xr.loss;
                net_backward(net, cache, xr.grad, g);
            }
            batch_loss /= batch.size();
            if (!std::isfinite(batch_loss))
                throw divergence_error("non-finite loss at epoch " + std::to_string(e));
            sgd_update(net, g, lr, 1.0 / batch.size());
            epoch_loss += batch_loss;
        }
        trace.push_back(epoch_loss / batches.size());
    }
    return trace;
}

ProbabilityMap infer_dense(const Network& net, const Volume& full, const Volume& low,
                           int tile_edge) {
    validate_volume(full);
    validate_volume(low);
    if (tile_edge < 1) throw param_error("tile edge must be positive");
    const int rf = receptive_field(net.cfg);
    const int m = (rf - 1) / 2;
    auto below = [rf](const Dims& d) { return d.nx < rf || d.ny < rf || d.nz < rf; };
    if (below(full.dims) || below(low.dims))
        throw param_error("volume edge below receptive field " + std::to_string(rf));

    // Low-pathway features for the whole low volume, computed once. Per-voxel
    // lookups against this grid are what make tiling seam-free: a tile never
    // sees a partially recomputed low feature.
    FeatureMap lf = feature_map_from_volume(low);
    for (const auto& L : net.low_path) lf = relu(conv3d_forward(lf, L));

    const int nc = net.cfg.n_classes;
    const int cf = net.full_path.back().c_out;
    const int cl = net.low_path.back().c_out;
    ProbabilityMap probs = make_feature_map(nc, full.dims);

    auto near = [m](double wc, double o, double s, int n) {
        long l = std::lround((wc - o) / s) - m;
        return static_cast<int>(std::clamp(l, 0l, static_cast<long>(n - 1)));
    };

    std::vector<double> joined(cf + cl), h1, h2, logits(nc), p(nc);
    for (int tz = 0; tz < full.dims.nz; tz += tile_edge)
        for (int ty = 0; ty < full.dims.ny; ty += tile_edge)
            for (int tx = 0; tx < full.dims.nx; tx += tile_edge) {
                const int ex = std::min(tx + tile_edge, full.dims.nx);
                const int ey = std::min(ty + tile_edge, full.dims.ny);
                const int ez = std::min(tz + tile_edge, full.dims.nz);
                const Dims bd{ex - tx + 2 * m, ey - ty + 2 * m, ez - tz + 2 * m};
                FeatureMap block = make_feature_map(1, bd);
                for (int z = 0; z < bd.nz; ++z)
                    for (int y = 0; y < bd.ny; ++y)
                        for (int x = 0; x < bd.nx; ++x)
                            block.at(0, x, y, z) =
                                full.at_clamped(tx - m + x, ty - m + y, tz - m + z);
                for (const auto& L : net.full_path) block = relu(conv3d_forward(block, L));

                for (int vz = tz; vz < ez; ++vz)
                    for (int vy = ty; vy < ey; ++vy)
                        for (int vx = tx; vx < ex; ++vx) {
                            const Vec3 w = full.world(vx, vy, vz);
                            const int lx = near(w.x, low.origin.x, low.spacing.x, lf.dims.nx);
                            const int ly = near(w.y, low.origin.y, low.spacing.y, lf.dims.ny);
                            const int lz = near(w.z, low.origin.z, low.spacing.z, lf.dims.nz);
                            for (int ch = 0; ch < cf; ++ch)
                                joined[ch] = block.at(ch, vx - tx, vy - ty, vz - tz);
                            for (int ch = 0; ch < cl; ++ch)
                                joined[cf + ch] = lf.at(ch, lx, ly, lz);

                            const std::vector<double>* in = &joined;
                            for (std::size_t li = 0; li < net.head.size(); ++li) {
                                const ConvLayer& L = net.head[li];
                                std::vector<double>& out =
                                    li == 0 ? h1 : (li == 1 ? h2 : logits);
                                out.assign(L.c_out, 0.0);
                                for (int co = 0; co < L.c_out; ++co) {
                                    double acc = L.b[co];
                                    const float* wp =
                                        L.w.data() + static_cast<std::size_t>(co) * L.c_in;
                                    for (int ci = 0; ci < L.c_in; ++ci)
                                        acc += static_cast<double>(wp[ci]) * (*in)[ci];
                                    out[co] =
                                        (li + 1 < net.head.size() && acc < 0.0) ? 0.0 : acc;
                                }
                                in = &out;
                            }

                            double mx = logits[0];
                            for (int c = 1; c < nc; ++c) mx = std::max(mx, logits[c]);
                            double s = 0.0;
                            for (int c = 0; c < nc; ++c) {
                                p[c] = std::exp(logits[c] - mx);
                                s += p[c];
                            }
                            for (int c = 0; c < nc; ++c)
                                probs.at(c, vx, vy, vz) = p[c] / s;
                        }
            }
    return probs;
}

void save_network(const Network& net, const std::string& topo_path,
                  const std::string& weights_path) {
    validate_config(net.cfg);
    std::vector<float> payload;
    nlohmann::json jl = nlohmann::json::array();
    for (const ConvLayer* L : layer_list(net)) {
        jl.push_back({{"c_in", L->c_in}, {"c_out", L->c_out}, {"k", L->k}});
        payload.insert(payload.end(), L->w.begin(), L->w.end());
        payload.insert(payload.end(), L->b.begin(), L->b.end());
    }
    const std::uint64_t h =
        fnv1a64(payload.data(), payload.size() * sizeof(float));

    nlohmann::json j;
    j["format"] = "volseg-net-v1";
    j["config"] = {{"conv_channels", net.cfg.conv_channels},
                   {"kernel_edge", net.cfg.kernel_edge},
                   {"fc_channels", net.cfg.fc_channels},
                   {"n_classes", net.cfg.n_classes},
                   {"p_full", net.cfg.p_full},
                   {"p_low", net.cfg.p_low},
                   {"join", "nearest"}};
    j["layers"] = jl;
    j["weight_count"] = payload.size();
    j["weights_hash"] = hash_hex(h);

    std::ofstream wf(weights_path, std::ios::binary);
    if (!wf) throw data_error("cannot write " + weights_path);
    wf.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!wf) throw data_error("short write to " + weights_path);
    wf.close();

    std::ofstream tf(topo_path);
    if (!tf) throw data_error("cannot write " + topo_path);
    tf << j.dump(2) << "\n";
    if (!tf) throw data_error("short write to " + topo_path);
}

Network load_network(const std::string& topo_path, const std::string& weights_path) {
    std::ifstream tf(topo_path);
    if (!tf) throw data_error("cannot open " + topo_path);
    nlohmann::json j;
    try {
        tf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("bad topology file " + topo_path + ": " + e.what());
    }

    NetConfig cfg;
    try {
        if (j.at("format") != "volseg-net-v1")
            throw data_error("unknown format in " + topo_path);
        cfg.conv_channels = j.at("config").at("conv_channels");
        cfg.kernel_edge = j.at("config").at("kernel_edge");
        cfg.fc_channels = j.at("config").at("fc_channels");
        cfg.n_classes = j.at("config").at("n_classes");
        cfg.p_full = j.at("config").at("p_full");
        cfg.p_low = j.at("config").at("p_low");
    } catch (const nlohmann::json::exception& e) {
        throw data_error("bad topology file " + topo_path + ": " + e.what());
    }
    validate_config(cfg);

    Network net = build_network(cfg, 0);
    auto layers = layer_list(net);
    const auto& jl = j.at("layers");
    if (jl.size() != layers.size())
        throw data_error("topology lists " + std::to_string(jl.size()) + " layers, expected " +
                         std::to_string(layers.size()));
    std::size_t expected = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const int c_in = jl[i].at("c_in"), c_out = jl[i].at("c_out"), k = jl[i].at("k");
        if (c_in != layers[i]->c_in || c_out != layers[i]->c_out || k != layers[i]->k)
            throw data_error("layer " + std::to_string(i) + " shape disagrees with config");
        expected += layers[i]->w.size() + layers[i]->b.size();
    }
    if (j.at("weight_count") != expected)
        throw data_error("weight count disagrees with topology");

    std::ifstream wf(weights_path, std::ios::binary);
    if (!wf) throw data_error("cannot open " + weights_path);
    std::vector<float> payload(expected);
    wf.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(expected * sizeof(float)));
    if (static_cast<std::size_t>(wf.gcount()) != expected * sizeof(float))
        throw data_error(weights_path + " smaller than topology demands");
    char extra;
    if (wf.read(&extra, 1))
        throw data_error(weights_path + " larger than topology demands");

    const std::uint64_t h = fnv1a64(payload.data(), payload.size() * sizeof(float));
    if (std::string(j.at("weights_hash")) != hash_hex(h))
        throw data_error("weight payload does not match topology hash");

    std::size_t off = 0;
    for (ConvLayer* L : layers) {
        std::copy_n(payload.begin() + off, L->w.size(), L->w.begin());
        off += L->w.size();
        std::copy_n(payload.begin() + off, L->b.size(), L->b.begin());
        off += L->b.size();
    }
    return net;
}

}  // namespace volseg
