#pragma once

// Compact depthwise-separable CNN over log-mel features, with hand-written backward pass.
//
// Layout per sample is channel-major [C][mel][time]. Network:
//   stem 3x3 conv (mel stride configurable) -> norm -> ReLU
//   N x { depthwise 3x3 (time stride) -> norm -> ReLU -> pointwise 1x1 -> norm -> ReLU }
//   mean over mel -> 1x1 head to 9 channels -> logistic
// "norm" is a per-channel affine normalization whose statistics come from the current sample.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecgcode/dsp.hpp"
#include "ecgcode/error.hpp"
#include "ecgcode/grid_codec.hpp"
#include "ecgcode/signal_io.hpp"

namespace ecgcode::nn {

inline constexpr std::size_t kHeadChannels = 3 * kNumClasses; // (confidence, start, end) per class
inline constexpr double kNormEps = 1e-5;

struct BlockSpec {
    std::size_t channels = 0;
    std::size_t time_stride = 1;
    bool operator==(const BlockSpec&) const = default;
};

struct ModelConfig {
    std::size_t n_leads = 12;
    std::size_t n_mel = 48;
    std::size_t n_frames = 200;
    std::size_t n_intervals = 200;
    std::size_t stem_channels = 16;
    std::size_t stem_mel_stride = 2;
    std::vector<BlockSpec> blocks = {{16, 1}, {32, 1}, {32, 1}, {32, 1}};
    std::uint64_t seed = 0;

    bool operator==(const ModelConfig&) const = default;

    void validate() const {
        if (n_leads < 1 || n_mel < 1 || n_frames < 1 || n_intervals < 1)
            throw ValidationError("model: dimensions must be >= 1");
        if (stem_channels < 1 || stem_mel_stride < 1) throw ValidationError("model: stem channels/stride must be >= 1");
        std::size_t stride = 1;
        for (const auto& b : blocks) {
            if (b.channels < 1 || b.time_stride < 1) throw ValidationError("model: block channels/stride must be >= 1");
            stride *= b.time_stride;
        }
        if (n_frames % n_intervals != 0 || stride != n_frames / n_intervals)
            throw ValidationError("model: product of time strides (" + std::to_string(stride) +
                                  ") must equal n_frames / n_intervals (" + std::to_string(n_frames) + "/" +
                                  std::to_string(n_intervals) + ")");
    }

    std::size_t final_channels() const { return blocks.empty() ? stem_channels : blocks.back().channels; }

    /// Closed-form parameter count.
    std::size_t parameter_count() const {
        std::size_t n = n_leads * stem_channels * 9 + 2 * stem_channels;
        std::size_t cin = stem_channels;
        for (const auto& b : blocks) {
            n += cin * 9 + 2 * cin + b.channels * cin + 2 * b.channels;
            cin = b.channels;
        }
        return n + kHeadChannels * cin + kHeadChannels;
    }

    /// 1 lead, 8 mel bins, 8 frames, 2 intervals.
    static ModelConfig tiny() {
        ModelConfig c;
        c.n_leads = 1;
        c.n_mel = 8;
        c.n_frames = 8;
        c.n_intervals = 2;
        c.stem_channels = 4;
        c.blocks = {{4, 1}, {8, 2}, {8, 1}, {8, 2}};
        return c;
    }
};

inline void to_json(nlohmann::json& j, const BlockSpec& b) {
    j = nlohmann::json{{"channels", b.channels}, {"time_stride", b.time_stride}};
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"n_leads", c.n_leads},         {"n_mel", c.n_mel},
                       {"n_frames", c.n_frames},       {"n_intervals", c.n_intervals},
                       {"stem_channels", c.stem_channels}, {"stem_mel_stride", c.stem_mel_stride},
                       {"blocks", c.blocks},           {"seed", c.seed}};
}

/// Offsets of each named parameter group inside the flat vector.
struct ParamLayout {
    struct Norm {
        std::size_t gamma, beta;
    };
    struct Block {
        std::size_t dw_kernel;
        Norm dw_norm;
        std::size_t pw_kernel;
        Norm pw_norm;
    };
    std::size_t stem_kernel = 0;
    Norm stem_norm{};
    std::vector<Block> blocks;
    std::size_t head_weight = 0;
    std::size_t head_bias = 0;
    std::size_t total = 0;

    explicit ParamLayout(const ModelConfig& c) {
        std::size_t off = 0;
        auto take = [&](std::size_t n) {
            std::size_t o = off;
            off += n;
            return o;
        };
        stem_kernel = take(c.n_leads * c.stem_channels * 9);
        stem_norm = {take(c.stem_channels), take(c.stem_channels)};
        std::size_t cin = c.stem_channels;
        for (const auto& b : c.blocks) {
            Block bl;
            bl.dw_kernel = take(cin * 9);
            bl.dw_norm = {take(cin), take(cin)};
            bl.pw_kernel = take(b.channels * cin);
            bl.pw_norm = {take(b.channels), take(b.channels)};
            blocks.push_back(bl);
            cin = b.channels;
        }
        head_weight = take(kHeadChannels * cin);
        head_bias = take(kHeadChannels);
        total = off;
    }
};

template <class T>
struct ModelParams {
    ModelConfig config;
    std::vector<T> values;

    bool operator==(const ModelParams&) const = default;
};

/// Fan-in scaled uniform initialization, deterministic in config.seed.
template <class T>
ModelParams<T> build_model(const ModelConfig& config) {
    config.validate();
    const ParamLayout lay(config);
    ModelParams<T> p{config, std::vector<T>(lay.total, T(0))};
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto fill = [&](std::size_t off, std::size_t n, double bound) {
        for (std::size_t i = 0; i < n; ++i) p.values[off + i] = static_cast<T>(bound * u(rng));
    };
    auto ones = [&](std::size_t off, std::size_t n) { std::fill_n(p.values.begin() + off, n, T(1)); };

    fill(lay.stem_kernel, config.n_leads * config.stem_channels * 9, std::sqrt(6.0 / (config.n_leads * 9.0)));
    ones(lay.stem_norm.gamma, config.stem_channels);
    std::size_t cin = config.stem_channels;
    for (std::size_t b = 0; b < config.blocks.size(); ++b) {
        const auto& bl = lay.blocks[b];
        const std::size_t cout = config.blocks[b].channels;
        fill(bl.dw_kernel, cin * 9, std::sqrt(6.0 / 9.0));
        ones(bl.dw_norm.gamma, cin);
        fill(bl.pw_kernel, cout * cin, std::sqrt(6.0 / static_cast<double>(cin)));
        ones(bl.pw_norm.gamma, cout);
        cin = cout;
    }
    fill(lay.head_weight, kHeadChannels * cin, 1.0 / std::sqrt(static_cast<double>(cin)));
    return p;
}

// ---------------------------------------------------------------------------
// Tensors and layer kernels

template <class T>
struct Tensor {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<T> data;

    void resize(std::size_t c_, std::size_t h_, std::size_t w_) {
        c = c_;
        h = h_;
        w = w_;
        data.assign(c * h * w, T(0));
    }
    std::size_t plane() const { return h * w; }
    T* channel(std::size_t i) { return data.data() + i * plane(); }
    const T* channel(std::size_t i) const { return data.data() + i * plane(); }
};

namespace detail {

inline std::size_t strided_len(std::size_t n, std::size_t stride) { return (n + stride - 1) / stride; }

// Output columns `ow` for which ow*sw + kw - 1 lies in [0, W).
inline void tap_range(std::size_t W, std::size_t Wo, std::size_t sw, std::size_t kw, std::size_t& lo, std::size_t& hi) {
    lo = kw == 0 ? 1 : 0;
    const std::int64_t top = (static_cast<std::int64_t>(W) - static_cast<std::int64_t>(kw)) / static_cast<std::int64_t>(sw);
    hi = static_cast<std::int64_t>(W) < static_cast<std::int64_t>(kw) ? 0
                                                                       : std::min<std::size_t>(Wo, static_cast<std::size_t>(top) + 1);
}

/// 3x3 convolution, padding 1. Depthwise: kernel [C][3][3]; dense: [Co][Ci][3][3].
template <class T>
void conv3x3_forward(const Tensor<T>& in, const T* kernel, bool depthwise, std::size_t cout, std::size_t sh,
                     std::size_t sw, Tensor<T>& out) {
    const std::size_t H = in.h, W = in.w, Ho = strided_len(H, sh), Wo = strided_len(W, sw);
    out.resize(cout, Ho, Wo);
    for (std::size_t co = 0; co < cout; ++co) {
        const std::size_t ci_begin = depthwise ? co : 0, ci_end = depthwise ? co + 1 : in.c;
        for (std::size_t ci = ci_begin; ci < ci_end; ++ci) {
            const T* k = depthwise ? kernel + co * 9 : kernel + (co * in.c + ci) * 9;
            for (std::size_t kh = 0; kh < 3; ++kh) {
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    const std::int64_t ih = static_cast<std::int64_t>(oh * sh + kh) - 1;
                    if (ih < 0 || ih >= static_cast<std::int64_t>(H)) continue;
                    const T* irow = in.channel(ci) + static_cast<std::size_t>(ih) * W;
                    T* orow = out.channel(co) + oh * Wo;
                    for (std::size_t kw = 0; kw < 3; ++kw) {
                        const T kv = k[kh * 3 + kw];
                        std::size_t lo, hi;
                        tap_range(W, Wo, sw, kw, lo, hi);
                        if (sw == 1) {
                            const T* src = irow + kw - 1;
                            for (std::size_t ow = lo; ow < hi; ++ow) orow[ow] += kv * src[ow];
                        } else {
                            for (std::size_t ow = lo; ow < hi; ++ow) orow[ow] += kv * irow[ow * sw + kw - 1];
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates into d_in and d_kernel.
template <class T>
void conv3x3_backward(const Tensor<T>& in, const T* kernel, bool depthwise, std::size_t sh, std::size_t sw,
                      const Tensor<T>& d_out, Tensor<T>* d_in, T* d_kernel) {
    const std::size_t H = in.h, W = in.w, Ho = d_out.h, Wo = d_out.w;
    for (std::size_t co = 0; co < d_out.c; ++co) {
        const std::size_t ci_begin = depthwise ? co : 0, ci_end = depthwise ? co + 1 : in.c;
        for (std::size_t ci = ci_begin; ci < ci_end; ++ci) {
            const std::size_t koff = depthwise ? co * 9 : (co * in.c + ci) * 9;
            const T* k = kernel + koff;
            T* dk = d_kernel + koff;
            for (std::size_t kh = 0; kh < 3; ++kh) {
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    const std::int64_t ih = static_cast<std::int64_t>(oh * sh + kh) - 1;
                    if (ih < 0 || ih >= static_cast<std::int64_t>(H)) continue;
                    const T* irow = in.channel(ci) + static_cast<std::size_t>(ih) * W;
                    T* direw = d_in ? d_in->channel(ci) + static_cast<std::size_t>(ih) * W : nullptr;
                    const T* grow = d_out.channel(co) + oh * Wo;
                    for (std::size_t kw = 0; kw < 3; ++kw) {
                        const T kv = k[kh * 3 + kw];
                        std::size_t lo, hi;
                        tap_range(W, Wo, sw, kw, lo, hi);
                        T acc = 0;
                        if (sw == 1) {
                            const T* src = irow + kw - 1;
                            for (std::size_t ow = lo; ow < hi; ++ow) acc += grow[ow] * src[ow];
                            if (direw) {
                                T* dst = direw + kw - 1;
                                for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] += kv * grow[ow];
                            }
                        } else {
                            for (std::size_t ow = lo; ow < hi; ++ow) acc += grow[ow] * irow[ow * sw + kw - 1];
                            if (direw)
                                for (std::size_t ow = lo; ow < hi; ++ow) direw[ow * sw + kw - 1] += kv * grow[ow];
                        }
                        dk[kh * 3 + kw] += acc;
                    }
                }
            }
        }
    }
}

template <class T>
void pointwise_forward(const Tensor<T>& in, const T* weight, std::size_t cout, Tensor<T>& out) {
    out.resize(cout, in.h, in.w);
    const std::size_t P = in.plane();
    for (std::size_t co = 0; co < cout; ++co) {
        T* o = out.channel(co);
        for (std::size_t ci = 0; ci < in.c; ++ci) {
            const T w = weight[co * in.c + ci];
            const T* x = in.channel(ci);
            for (std::size_t p = 0; p < P; ++p) o[p] += w * x[p];
        }
    }
}

template <class T>
void pointwise_backward(const Tensor<T>& in, const T* weight, const Tensor<T>& d_out, Tensor<T>& d_in, T* d_weight) {
    const std::size_t P = in.plane();
    for (std::size_t co = 0; co < d_out.c; ++co) {
        const T* g = d_out.channel(co);
        for (std::size_t ci = 0; ci < in.c; ++ci) {
            const T w = weight[co * in.c + ci];
            const T* x = in.channel(ci);
            T* dx = d_in.channel(ci);
            T acc = 0;
            for (std::size_t p = 0; p < P; ++p) {
                acc += g[p] * x[p];
                dx[p] += w * g[p];
            }
            d_weight[co * in.c + ci] += acc;
        }
    }
}

/// Cached state of one norm + ReLU stage.
template <class T>
struct NormCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
};

/// y = relu(gamma * (x - mean) / sqrt(var + eps) + beta), statistics per channel over the plane.
template <class T>
void norm_relu_forward(const Tensor<T>& x, const T* gamma, const T* beta, NormCache<T>& cache, Tensor<T>& y) {
    const std::size_t P = x.plane();
    cache.xhat.resize(x.c, x.h, x.w);
    cache.inv_std.assign(x.c, T(0));
    y.resize(x.c, x.h, x.w);
    for (std::size_t ch = 0; ch < x.c; ++ch) {
        const T* xp = x.channel(ch);
        double mean = 0;
        for (std::size_t p = 0; p < P; ++p) mean += xp[p];
        mean /= static_cast<double>(P);
        double var = 0;
        for (std::size_t p = 0; p < P; ++p) var += (xp[p] - mean) * (xp[p] - mean);
        var /= static_cast<double>(P);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + kNormEps));
        const T m = static_cast<T>(mean);
        cache.inv_std[ch] = inv;
        T* xh = cache.xhat.channel(ch);
        T* yp = y.channel(ch);
        const T g = gamma[ch], b = beta[ch];
        for (std::size_t p = 0; p < P; ++p) {
            xh[p] = (xp[p] - m) * inv;
            const T v = g * xh[p] + b;
            yp[p] = v > T(0) ? v : T(0);
        }
    }
}

/// `dy` is overwritten with the ReLU-masked gradient; result written to dx (assigned, not accumulated).
template <class T>
void norm_relu_backward(const NormCache<T>& cache, const Tensor<T>& y, const T* gamma, Tensor<T>& dy, Tensor<T>& dx,
                        T* d_gamma, T* d_beta) {
    const std::size_t P = y.plane();
    dx.resize(y.c, y.h, y.w);
    for (std::size_t ch = 0; ch < y.c; ++ch) {
        const T* yp = y.channel(ch);
        const T* xh = cache.xhat.channel(ch);
        T* g = dy.channel(ch);
        double sum_g = 0, sum_gx = 0;
        for (std::size_t p = 0; p < P; ++p) {
            if (!(yp[p] > T(0))) g[p] = T(0);
            sum_g += g[p];
            sum_gx += g[p] * xh[p];
        }
        d_beta[ch] += static_cast<T>(sum_g);
        d_gamma[ch] += static_cast<T>(sum_gx);
        const T mg = static_cast<T>(sum_g / static_cast<double>(P));
        const T mgx = static_cast<T>(sum_gx / static_cast<double>(P));
        const T scale = gamma[ch] * cache.inv_std[ch];
        T* d = dx.channel(ch);
        for (std::size_t p = 0; p < P; ++p) d[p] = scale * (g[p] - mg - xh[p] * mgx);
    }
}

inline double logistic(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Keeps a logistic output strictly inside (0,1) after rounding.
inline double open_unit(double s) {
    return std::clamp(s, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

} // namespace detail

/// Everything the backward pass needs from one forward pass. Reused across samples.
template <class T>
struct Workspace {
    struct BlockCache {
        Tensor<T> dw_conv, dw_out, pw_conv, pw_out;
        detail::NormCache<T> dw_norm, pw_norm;
    };
    Tensor<T> input;
    Tensor<T> stem_conv, stem_out;
    detail::NormCache<T> stem_norm;
    std::vector<BlockCache> blocks;
    std::vector<T> pooled;   // [C][intervals]
    std::vector<double> out; // [9][intervals], logistic outputs
    // Backward scratch.
    Tensor<T> g_a, g_b;
};

template <class T>
void load_input(const ModelConfig& cfg, const dsp::FeatureTensor& f, Tensor<T>& input) {
    if (f.leads != cfg.n_leads || f.mel != cfg.n_mel || f.frames != cfg.n_frames)
        throw ValidationError("forward: feature shape " + std::to_string(f.leads) + "x" + std::to_string(f.mel) + "x" +
                              std::to_string(f.frames) + " does not match model " + std::to_string(cfg.n_leads) + "x" +
                              std::to_string(cfg.n_mel) + "x" + std::to_string(cfg.n_frames));
    input.c = f.leads;
    input.h = f.mel;
    input.w = f.frames;
    input.data.assign(f.values.begin(), f.values.end());
}

/// Forward pass filling `ws`; returns the prediction grid.
template <class T>
grid::PredictionGrid forward(const ModelParams<T>& params, const dsp::FeatureTensor& features, Workspace<T>& ws) {
    const ModelConfig& cfg = params.config;
    const ParamLayout lay(cfg);
    if (params.values.size() != lay.total) throw ValidationError("forward: parameter vector has wrong size");
    const T* p = params.values.data();

    load_input(cfg, features, ws.input);
    detail::conv3x3_forward(ws.input, p + lay.stem_kernel, false, cfg.stem_channels, cfg.stem_mel_stride, 1,
                            ws.stem_conv);
    detail::norm_relu_forward(ws.stem_conv, p + lay.stem_norm.gamma, p + lay.stem_norm.beta, ws.stem_norm, ws.stem_out);

    ws.blocks.resize(cfg.blocks.size());
    const Tensor<T>* x = &ws.stem_out;
    for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
        auto& bc = ws.blocks[b];
        const auto& bl = lay.blocks[b];
        detail::conv3x3_forward(*x, p + bl.dw_kernel, true, x->c, 1, cfg.blocks[b].time_stride, bc.dw_conv);
        detail::norm_relu_forward(bc.dw_conv, p + bl.dw_norm.gamma, p + bl.dw_norm.beta, bc.dw_norm, bc.dw_out);
        detail::pointwise_forward(bc.dw_out, p + bl.pw_kernel, cfg.blocks[b].channels, bc.pw_conv);
        detail::norm_relu_forward(bc.pw_conv, p + bl.pw_norm.gamma, p + bl.pw_norm.beta, bc.pw_norm, bc.pw_out);
        x = &bc.pw_out;
    }

    const std::size_t C = x->c, H = x->h, I = x->w;
    if (I != cfg.n_intervals) throw ValidationError("forward: time axis did not reduce to n_intervals");
    ws.pooled.assign(C * I, T(0));
    for (std::size_t ch = 0; ch < C; ++ch) {
        for (std::size_t hh = 0; hh < H; ++hh) {
            const T* row = x->channel(ch) + hh * I;
            for (std::size_t i = 0; i < I; ++i) ws.pooled[ch * I + i] += row[i];
        }
        for (std::size_t i = 0; i < I; ++i) ws.pooled[ch * I + i] /= static_cast<T>(H);
    }

    ws.out.assign(kHeadChannels * I, 0.0);
    const T* hw = p + lay.head_weight;
    const T* hb = p + lay.head_bias;
    grid::PredictionGrid g(I);
    for (std::size_t k = 0; k < kHeadChannels; ++k) {
        for (std::size_t i = 0; i < I; ++i) {
            T z = hb[k];
            for (std::size_t ch = 0; ch < C; ++ch) z += hw[k * C + ch] * ws.pooled[ch * I + i];
            ws.out[k * I + i] = detail::logistic(static_cast<double>(z));
        }
    }
    for (std::size_t i = 0; i < I; ++i) {
        for (WaveClass c : kWaveClasses) {
            const std::size_t k = 3 * static_cast<std::size_t>(class_index(c));
            g.at(i, c) = {detail::open_unit(ws.out[k * I + i]), detail::open_unit(ws.out[(k + 1) * I + i]),
                          detail::open_unit(ws.out[(k + 2) * I + i])};
        }
    }
    return g;
}

template <class T>
grid::PredictionGrid forward(const ModelParams<T>& params, const dsp::FeatureTensor& features) {
    Workspace<T> ws;
    return forward(params, features, ws);
}

/// Backpropagate d loss / d grid outputs through the cached forward pass; accumulates into `grad`.
template <class T>
void backward(const ModelParams<T>& params, Workspace<T>& ws, std::span<const grid::GridCell> d_grid,
              std::vector<T>& grad) {
    const ModelConfig& cfg = params.config;
    const ParamLayout lay(cfg);
    if (grad.size() != lay.total) grad.assign(lay.total, T(0));
    const T* p = params.values.data();
    T* gp = grad.data();

    const Tensor<T>& last = cfg.blocks.empty() ? ws.stem_out : ws.blocks.back().pw_out;
    const std::size_t C = last.c, H = last.h, I = last.w;

    // Logistic + head.
    std::vector<T> dz(kHeadChannels * I);
    for (std::size_t i = 0; i < I; ++i) {
        for (WaveClass c : kWaveClasses) {
            const std::size_t k = 3 * static_cast<std::size_t>(class_index(c));
            const auto& d = d_grid[i * kNumClasses + class_index(c)];
            const double comps[3] = {d.confidence, d.start_frac, d.end_frac};
            for (std::size_t j = 0; j < 3; ++j) {
                const double s = ws.out[(k + j) * I + i];
                dz[(k + j) * I + i] = static_cast<T>(comps[j] * s * (1.0 - s));
            }
        }
    }
    std::vector<T> d_pooled(C * I, T(0));
    const T* hw = p + lay.head_weight;
    for (std::size_t k = 0; k < kHeadChannels; ++k) {
        for (std::size_t i = 0; i < I; ++i) {
            const T g = dz[k * I + i];
            if (g == T(0)) continue;
            gp[lay.head_bias + k] += g;
            for (std::size_t ch = 0; ch < C; ++ch) {
                gp[lay.head_weight + k * C + ch] += g * ws.pooled[ch * I + i];
                d_pooled[ch * I + i] += g * hw[k * C + ch];
            }
        }
    }

    // Mean over mel.
    Tensor<T>& dy = ws.g_a;
    Tensor<T>& dx = ws.g_b;
    dy.resize(C, H, I);
    for (std::size_t ch = 0; ch < C; ++ch)
        for (std::size_t hh = 0; hh < H; ++hh)
            for (std::size_t i = 0; i < I; ++i) dy.channel(ch)[hh * I + i] = d_pooled[ch * I + i] / static_cast<T>(H);

    for (std::size_t b = cfg.blocks.size(); b-- > 0;) {
        auto& bc = ws.blocks[b];
        const auto& bl = lay.blocks[b];
        const Tensor<T>& block_in = b == 0 ? ws.stem_out : ws.blocks[b - 1].pw_out;
        detail::norm_relu_backward(bc.pw_norm, bc.pw_out, p + bl.pw_norm.gamma, dy, dx, gp + bl.pw_norm.gamma,
                                   gp + bl.pw_norm.beta);
        // dx: grad wrt pw_conv. Next: grad wrt dw_out into dy.
        dy.resize(bc.dw_out.c, bc.dw_out.h, bc.dw_out.w);
        detail::pointwise_backward(bc.dw_out, p + bl.pw_kernel, dx, dy, gp + bl.pw_kernel);
        detail::norm_relu_backward(bc.dw_norm, bc.dw_out, p + bl.dw_norm.gamma, dy, dx, gp + bl.dw_norm.gamma,
                                   gp + bl.dw_norm.beta);
        dy.resize(block_in.c, block_in.h, block_in.w);
        detail::conv3x3_backward(block_in, p + bl.dw_kernel, true, 1, cfg.blocks[b].time_stride, dx, &dy,
                                 gp + bl.dw_kernel);
    }

    detail::norm_relu_backward(ws.stem_norm, ws.stem_out, p + lay.stem_norm.gamma, dy, dx, gp + lay.stem_norm.gamma,
                               gp + lay.stem_norm.beta);
    detail::conv3x3_backward<T>(ws.input, p + lay.stem_kernel, false, cfg.stem_mel_stride, 1, dx, nullptr,
                                gp + lay.stem_kernel);
}

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/manifest.json + <dir>/params.bin (float32 LE)

struct CheckpointInfo {
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    std::string id;
};

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> keys = {"n_leads", "n_mel", "n_frames", "n_intervals", "stem_channels",
                                                  "stem_mel_stride", "blocks", "seed"};
    if (!j.is_object()) throw ValidationError("model config must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
            throw ValidationError("model config: unknown key '" + it.key() + "'");
    ModelConfig c;
    try {
        if (j.contains("n_leads")) c.n_leads = j.at("n_leads").get<std::size_t>();
        if (j.contains("n_mel")) c.n_mel = j.at("n_mel").get<std::size_t>();
        if (j.contains("n_frames")) c.n_frames = j.at("n_frames").get<std::size_t>();
        if (j.contains("n_intervals")) c.n_intervals = j.at("n_intervals").get<std::size_t>();
        if (j.contains("stem_channels")) c.stem_channels = j.at("stem_channels").get<std::size_t>();
        if (j.contains("stem_mel_stride")) c.stem_mel_stride = j.at("stem_mel_stride").get<std::size_t>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("blocks")) {
            c.blocks.clear();
            for (const auto& b : j.at("blocks")) {
                for (auto it = b.begin(); it != b.end(); ++it)
                    if (it.key() != "channels" && it.key() != "time_stride")
                        throw ValidationError("model block: unknown key '" + it.key() + "'");
                c.blocks.push_back({b.at("channels").get<std::size_t>(), b.at("time_stride").get<std::size_t>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

template <class T>
void save_checkpoint(const ModelParams<T>& params, const fs::path& dir, const CheckpointInfo& info = {}) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create checkpoint directory '" + dir.string() + "'");
    std::vector<float> values(params.values.begin(), params.values.end());
    nlohmann::json m = {{"format", "ecgcode-checkpoint"},
                        {"version", 1},
                        {"config", params.config},
                        {"seed", info.seed},
                        {"epoch", info.epoch},
                        {"id", info.id},
                        {"n_params", values.size()}};
    ecgcode::detail::write_atomic(dir / "params.bin", ecgcode::detail::encode_f32_le(values));
    ecgcode::detail::write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

template <class T>
ModelParams<T> load_checkpoint(const fs::path& dir, const ModelConfig* expected = nullptr,
                               CheckpointInfo* info = nullptr) {
    const fs::path mp = dir / "manifest.json", bp = dir / "params.bin";
    if (!fs::exists(mp) || !fs::exists(bp)) throw IoError("checkpoint '" + dir.string() + "' is incomplete");
    const auto m = ecgcode::detail::parse_json_file(mp);
    if (!m.is_object() || m.value("format", "") != "ecgcode-checkpoint")
        throw ValidationError("'" + mp.string() + "' is not a checkpoint manifest");
    ModelConfig cfg = model_config_from_json(m.at("config"));
    if (expected && !(*expected == cfg))
        throw ValidationError("checkpoint config does not match the requested model config");
    const auto values = ecgcode::detail::decode_f32_le(ecgcode::detail::read_text(bp));
    if (values.size() != cfg.parameter_count() || m.value("n_params", std::size_t{0}) != values.size())
        throw ValidationError("checkpoint parameter count does not match its config");
    for (float v : values)
        if (!std::isfinite(v)) throw ValidationError("checkpoint holds non-finite parameters");
    if (info) {
        info->seed = m.value("seed", std::uint64_t{0});
        info->epoch = m.value("epoch", std::size_t{0});
        info->id = m.value("id", std::string{});
    }
    return ModelParams<T>{cfg, std::vector<T>(values.begin(), values.end())};
}

template <class To, class From>
ModelParams<To> cast_params(const ModelParams<From>& p) {
    return ModelParams<To>{p.config, std::vector<To>(p.values.begin(), p.values.end())};
}

} // namespace ecgcode::nn
