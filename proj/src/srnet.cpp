#include "pat/srnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "pat/kernels.hpp"
#include "pat/rng.hpp"

namespace pat {

namespace {

struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
    double* plane(int nn, int ch) {
        return v.data() + (static_cast<std::size_t>(nn) * c + ch) * plane_size();
    }
    const double* plane(int nn, int ch) const {
        return v.data() + (static_cast<std::size_t>(nn) * c + ch) * plane_size();
    }
};

Tensor4 conv_fwd(const Tensor4& x, const ConvParams& p) {
    Tensor4 y(x.n, p.out_ch, x.h, x.w);
    kernels::conv3x3_forward_omp(x.n, p.in_ch, p.out_ch, x.h, x.w, x.v.data(),
                                 p.kernel.data(), p.bias.data(), y.v.data());
    return y;
}

Tensor4 conv_bwd_data(const Tensor4& gy, const ConvParams& p) {
    Tensor4 gx(gy.n, p.in_ch, gy.h, gy.w);
    kernels::conv3x3_backward_data_omp(gy.n, p.in_ch, p.out_ch, gy.h, gy.w, gy.v.data(),
                                       p.kernel.data(), gx.v.data());
    return gx;
}

void conv_bwd_weights(const Tensor4& x, const Tensor4& gy, const ConvParams& p,
                      ConvParams& grad) {
    kernels::conv3x3_backward_weights_omp(x.n, p.in_ch, p.out_ch, x.h, x.w, x.v.data(),
                                          gy.v.data(), grad.kernel.data(), grad.bias.data());
}

void relu_inplace(Tensor4& t) {
    const std::size_t count = t.v.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(count); ++k)
        t.v[k] = t.v[k] > 0.0 ? t.v[k] : 0.0;
}

// dpre = dpost where the activation output is positive
void relu_mask(const Tensor4& post, Tensor4& d) {
    const std::size_t count = d.v.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(count); ++k)
        if (!(post.v[k] > 0.0)) d.v[k] = 0.0;
}

void bn_forward_train(const Tensor4& x, const BatchNormParams& bn, Tensor4& y, Tensor4& xhat,
                      std::vector<double>& mean, std::vector<double>& var,
                      std::vector<double>& invstd) {
    y = Tensor4(x.n, x.c, x.h, x.w);
    xhat = Tensor4(x.n, x.c, x.h, x.w);
    mean.assign(x.c, 0.0);
    var.assign(x.c, 0.0);
    invstd.assign(x.c, 0.0);
    const double m = static_cast<double>(x.n) * x.h * x.w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < x.c; ++ch) {
        double s = 0.0;
        for (int nn = 0; nn < x.n; ++nn) {
            const double* p = x.plane(nn, ch);
            for (std::size_t k = 0; k < x.plane_size(); ++k) s += p[k];
        }
        const double mu = s / m;
        double sv = 0.0;
        for (int nn = 0; nn < x.n; ++nn) {
            const double* p = x.plane(nn, ch);
            for (std::size_t k = 0; k < x.plane_size(); ++k) {
                const double d = p[k] - mu;
                sv += d * d;
            }
        }
        const double variance = sv / m;  // population variance
        const double is = 1.0 / std::sqrt(variance + bn.eps);
        mean[ch] = mu;
        var[ch] = variance;
        invstd[ch] = is;
        const double g = bn.gamma[ch], b = bn.beta[ch];
        for (int nn = 0; nn < x.n; ++nn) {
            const double* p = x.plane(nn, ch);
            double* ph = xhat.plane(nn, ch);
            double* po = y.plane(nn, ch);
            for (std::size_t k = 0; k < x.plane_size(); ++k) {
                ph[k] = (p[k] - mu) * is;
                po[k] = g * ph[k] + b;
            }
        }
    }
}

void bn_forward_infer(const Tensor4& x, const BatchNormParams& bn, Tensor4& y) {
    y = Tensor4(x.n, x.c, x.h, x.w);
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < x.c; ++ch) {
        const double is = 1.0 / std::sqrt(bn.running_var[ch] + bn.eps);
        const double mu = bn.running_mean[ch];
        const double g = bn.gamma[ch], b = bn.beta[ch];
        for (int nn = 0; nn < x.n; ++nn) {
            const double* p = x.plane(nn, ch);
            double* po = y.plane(nn, ch);
            for (std::size_t k = 0; k < x.plane_size(); ++k)
                po[k] = g * (p[k] - mu) * is + b;
        }
    }
}

// Exact gradients through the batch statistics.
void bn_backward(const Tensor4& dy, const Tensor4& xhat, const std::vector<double>& invstd,
                 const BatchNormParams& bn, Tensor4& dx, std::vector<double>& dgamma,
                 std::vector<double>& dbeta) {
    dx = Tensor4(dy.n, dy.c, dy.h, dy.w);
    dgamma.assign(dy.c, 0.0);
    dbeta.assign(dy.c, 0.0);
    const double m = static_cast<double>(dy.n) * dy.h * dy.w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < dy.c; ++ch) {
        double sum_dy = 0.0, sum_dyx = 0.0;
        for (int nn = 0; nn < dy.n; ++nn) {
            const double* pd = dy.plane(nn, ch);
            const double* ph = xhat.plane(nn, ch);
            for (std::size_t k = 0; k < dy.plane_size(); ++k) {
                sum_dy += pd[k];
                sum_dyx += pd[k] * ph[k];
            }
        }
        dgamma[ch] = sum_dyx;
        dbeta[ch] = sum_dy;
        const double gis = bn.gamma[ch] * invstd[ch];
        const double a = sum_dy / m, b = sum_dyx / m;
        for (int nn = 0; nn < dy.n; ++nn) {
            const double* pd = dy.plane(nn, ch);
            const double* ph = xhat.plane(nn, ch);
            double* px = dx.plane(nn, ch);
            for (std::size_t k = 0; k < dy.plane_size(); ++k)
                px[k] = gis * (pd[k] - a - ph[k] * b);
        }
    }
}

Tensor4 concat3(const Tensor4& a, const Tensor4& b, const Tensor4& c) {
    Tensor4 z(a.n, a.c + b.c + c.c, a.h, a.w);
#pragma omp parallel for schedule(static)
    for (int nn = 0; nn < a.n; ++nn) {
        std::memcpy(z.plane(nn, 0), a.plane(nn, 0), sizeof(double) * a.c * a.plane_size());
        std::memcpy(z.plane(nn, a.c), b.plane(nn, 0), sizeof(double) * b.c * b.plane_size());
        std::memcpy(z.plane(nn, a.c + b.c), c.plane(nn, 0), sizeof(double) * c.c * c.plane_size());
    }
    return z;
}

Tensor4 slice_channels(const Tensor4& z, int first, int count) {
    Tensor4 out(z.n, count, z.h, z.w);
#pragma omp parallel for schedule(static)
    for (int nn = 0; nn < z.n; ++nn)
        std::memcpy(out.plane(nn, 0), z.plane(nn, first), sizeof(double) * count * z.plane_size());
    return out;
}

Tensor4 batch_to_tensor(const std::vector<ScalarField2D>& fields) {
    const GridSpec& g = fields.front().grid;
    Tensor4 t(static_cast<int>(fields.size()), 1, g.ny, g.nx);
    for (std::size_t nn = 0; nn < fields.size(); ++nn)
        std::memcpy(t.plane(static_cast<int>(nn), 0), fields[nn].values.data(),
                    sizeof(double) * t.plane_size());
    return t;
}

std::vector<ScalarField2D> tensor_to_batch(const Tensor4& t, const GridSpec& g) {
    std::vector<ScalarField2D> out(t.n, ScalarField2D(g));
    for (int nn = 0; nn < t.n; ++nn)
        std::memcpy(out[nn].values.data(), t.plane(nn, 0), sizeof(double) * t.plane_size());
    return out;
}

struct ForwardCache {
    Tensor4 in[3];            // branch inputs (speed channel already scaled)
    Tensor4 e1[3], e2[3];     // post-ReLU extraction activations
    Tensor4 z0, z0_hat, z1;   // concat, normalized, post-BN
    std::vector<double> fuse_mean, fuse_var, fuse_invstd;
    Tensor4 f1, f2;           // post-ReLU fusion activations
    struct HeadCache {
        Tensor4 h1, h_hat, h2;  // conv1 out, normalized, post-BN
        std::vector<double> mean, var, invstd;
        Tensor4 out;            // post-ReLU output
    } head[2];
    Tensor4 skip[2];          // raw skip inputs (p0, c)
};

void check_inputs(const std::vector<ScalarField2D>& p0_k,
                  const std::vector<ScalarField2D>& neg_grad,
                  const std::vector<ScalarField2D>& c_k, NetMode mode) {
    if (p0_k.empty() || p0_k.size() != neg_grad.size() || p0_k.size() != c_k.size())
        throw DataError("input batches must be non-empty and equally sized");
    const GridSpec& g = p0_k.front().grid;
    for (const auto* batch : {&p0_k, &neg_grad, &c_k})
        for (const auto& f : *batch)
            if (!(f.grid == g)) throw DataError("input fields must share one grid");
    if (mode == NetMode::train && p0_k.size() < 2)
        throw DataError("training-mode batch must be >= 2: singleton batch statistics "
                        "are degenerate");
}

// Full forward pass; cache and stats are filled when requested.
void forward_impl(const std::vector<ScalarField2D>& p0_k,
                  const std::vector<ScalarField2D>& neg_grad,
                  const std::vector<ScalarField2D>& c_k, const SRNetParams& params,
                  NetMode mode, ForwardCache& cc, SrnetBatchStats* stats_out) {
    check_inputs(p0_k, neg_grad, c_k, mode);

    cc.in[0] = batch_to_tensor(p0_k);
    cc.in[1] = batch_to_tensor(neg_grad);
    cc.in[2] = batch_to_tensor(c_k);
    cc.skip[0] = cc.in[0];
    cc.skip[1] = cc.in[2];
    if (params.c_scale != 1.0)
        for (double& v : cc.in[2].v) v /= params.c_scale;

    for (int b = 0; b < 3; ++b) {
        cc.e1[b] = conv_fwd(cc.in[b], params.extract[b][0]);
        relu_inplace(cc.e1[b]);
        cc.e2[b] = conv_fwd(cc.e1[b], params.extract[b][1]);
        relu_inplace(cc.e2[b]);
    }
    cc.z0 = concat3(cc.e2[0], cc.e2[1], cc.e2[2]);

    if (mode == NetMode::train) {
        bn_forward_train(cc.z0, params.fuse_bn, cc.z1, cc.z0_hat, cc.fuse_mean, cc.fuse_var,
                         cc.fuse_invstd);
    } else {
        bn_forward_infer(cc.z0, params.fuse_bn, cc.z1);
    }

    cc.f1 = conv_fwd(cc.z1, params.fuse1);
    relu_inplace(cc.f1);
    cc.f2 = conv_fwd(cc.f1, params.fuse2);
    relu_inplace(cc.f2);

    const SRNetParams::Head* heads[2] = {&params.head_p0, &params.head_c};
    for (int hh = 0; hh < 2; ++hh) {
        auto& h = cc.head[hh];
        h.h1 = conv_fwd(cc.f2, heads[hh]->conv1);
        if (mode == NetMode::train)
            bn_forward_train(h.h1, heads[hh]->bn, h.h2, h.h_hat, h.mean, h.var, h.invstd);
        else
            bn_forward_infer(h.h1, heads[hh]->bn, h.h2);
        h.out = conv_fwd(h.h2, heads[hh]->conv2);
        const std::size_t count = h.out.v.size();
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(count); ++k) {
            const double z = h.out.v[k] + cc.skip[hh].v[k];
            h.out.v[k] = z > 0.0 ? z : 0.0;
        }
    }

    if (stats_out && mode == NetMode::train) {
        stats_out->fuse = BnBatchStats{cc.fuse_mean, cc.fuse_var};
        stats_out->head_p0 = BnBatchStats{cc.head[0].mean, cc.head[0].var};
        stats_out->head_c = BnBatchStats{cc.head[1].mean, cc.head[1].var};
    }
}

}  // namespace

ConvParams make_conv(int in_ch, int out_ch) {
    ConvParams p;
    p.in_ch = in_ch;
    p.out_ch = out_ch;
    p.kernel.assign(static_cast<std::size_t>(out_ch) * in_ch * 9, 0.0);
    p.bias.assign(out_ch, 0.0);
    return p;
}

BatchNormParams make_batch_norm(int channels) {
    BatchNormParams bn;
    bn.channels = channels;
    bn.gamma.assign(channels, 1.0);
    bn.beta.assign(channels, 0.0);
    bn.running_mean.assign(channels, 0.0);
    bn.running_var.assign(channels, 1.0);
    return bn;
}

SRNetParams make_zero_srnet_params() {
    SRNetParams p;
    for (int b = 0; b < 3; ++b) {
        p.extract[b][0] = make_conv(1, 32);
        p.extract[b][1] = make_conv(32, 32);
    }
    p.fuse_bn = make_batch_norm(96);
    p.fuse1 = make_conv(96, 64);
    p.fuse2 = make_conv(64, 32);
    for (SRNetParams::Head* h : {&p.head_p0, &p.head_c}) {
        h->conv1 = make_conv(32, 16);
        h->bn = make_batch_norm(16);
        h->conv2 = make_conv(16, 1);
    }
    return p;
}

SRNetParams make_srnet_params(std::uint64_t seed) {
    SRNetParams p = make_zero_srnet_params();
    std::mt19937_64 rng(seed);
    for (TensorEntry& e : trainable_tensors(p)) {
        if (e.name.find("kernel") == std::string::npos) continue;  // biases, gamma, beta stay
        const std::size_t fan_in = e.dims[1] * e.dims[2] * e.dims[3];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& v : *e.data) v = rng_uniform(rng, -bound, bound);
    }
    return p;
}

std::vector<TensorEntry> all_tensors(SRNetParams& p) {
    std::vector<TensorEntry> out;
    auto conv = [&](const std::string& name, ConvParams& c) {
        out.push_back({name + ".kernel", &c.kernel,
                       {static_cast<std::size_t>(c.out_ch), static_cast<std::size_t>(c.in_ch), 3, 3}});
        out.push_back({name + ".bias", &c.bias, {static_cast<std::size_t>(c.out_ch)}});
    };
    auto bn = [&](const std::string& name, BatchNormParams& b, bool with_running) {
        const std::size_t ch = static_cast<std::size_t>(b.channels);
        out.push_back({name + ".gamma", &b.gamma, {ch}});
        out.push_back({name + ".beta", &b.beta, {ch}});
        if (with_running) {
            out.push_back({name + ".running_mean", &b.running_mean, {ch}});
            out.push_back({name + ".running_var", &b.running_var, {ch}});
        }
    };
    for (int br = 0; br < 3; ++br)
        for (int l = 0; l < 2; ++l)
            conv("extract" + std::to_string(br) + ".conv" + std::to_string(l), p.extract[br][l]);
    bn("fuse_bn", p.fuse_bn, true);
    conv("fuse.conv0", p.fuse1);
    conv("fuse.conv1", p.fuse2);
    conv("head_p0.conv0", p.head_p0.conv1);
    bn("head_p0.bn", p.head_p0.bn, true);
    conv("head_p0.conv1", p.head_p0.conv2);
    conv("head_c.conv0", p.head_c.conv1);
    bn("head_c.bn", p.head_c.bn, true);
    conv("head_c.conv1", p.head_c.conv2);
    return out;
}

std::vector<TensorEntry> trainable_tensors(SRNetParams& p) {
    std::vector<TensorEntry> out;
    for (TensorEntry& e : all_tensors(p))
        if (e.name.find("running_") == std::string::npos) out.push_back(e);
    return out;
}

void update_running_stats(SRNetParams& params, const SrnetBatchStats& stats) {
    auto fold = [](BatchNormParams& bn, const BnBatchStats& s) {
        for (int ch = 0; ch < bn.channels; ++ch) {
            bn.running_mean[ch] = bn.momentum * bn.running_mean[ch] + (1.0 - bn.momentum) * s.mean[ch];
            bn.running_var[ch] = bn.momentum * bn.running_var[ch] + (1.0 - bn.momentum) * s.var[ch];
        }
    };
    fold(params.fuse_bn, stats.fuse);
    fold(params.head_p0.bn, stats.head_p0);
    fold(params.head_c.bn, stats.head_c);
}

std::pair<std::vector<ScalarField2D>, std::vector<ScalarField2D>> srnet_forward(
    const std::vector<ScalarField2D>& p0_k, const std::vector<ScalarField2D>& neg_grad,
    const std::vector<ScalarField2D>& c_k, const SRNetParams& params, NetMode mode,
    SrnetBatchStats* stats_out) {
    ForwardCache cc;
    forward_impl(p0_k, neg_grad, c_k, params, mode, cc, stats_out);
    const GridSpec& g = p0_k.front().grid;
    return {tensor_to_batch(cc.head[0].out, g), tensor_to_batch(cc.head[1].out, g)};
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw DataError("learning rate must be positive");
    if (!(beta1 > 0.0) || !(beta1 < 1.0) || !(beta2 > 0.0) || !(beta2 < 1.0))
        throw DataError("Adam betas must lie in (0,1)");
    if (!(adam_eps > 0.0)) throw DataError("adam_eps must be positive");
    if (batch_size < 2) throw DataError("batch size must be >= 2 for batch normalization");
    if (epochs < 1) throw DataError("epochs must be >= 1");
    if (!(c_scale > 0.0)) throw DataError("c_scale must be positive");
}

double srnet_loss(const std::vector<ScalarField2D>& pred_p0,
                  const std::vector<ScalarField2D>& pred_c,
                  const std::vector<ScalarField2D>& true_p0,
                  const std::vector<ScalarField2D>& true_c, const TrainConfig& cfg) {
    if (pred_p0.size() != true_p0.size() || pred_c.size() != true_c.size() ||
        pred_p0.size() != pred_c.size() || pred_p0.empty())
        throw DataError("loss batches must be non-empty and equally sized");
    double sp = 0.0, sc = 0.0;
    std::size_t count = 0;
    for (std::size_t nn = 0; nn < pred_p0.size(); ++nn) {
        if (!(pred_p0[nn].grid == true_p0[nn].grid) || !(pred_c[nn].grid == true_c[nn].grid))
            throw DataError("loss field grids do not match");
        for (std::size_t k = 0; k < pred_p0[nn].values.size(); ++k)
            sp += std::abs(pred_p0[nn].values[k] - true_p0[nn].values[k]);
        for (std::size_t k = 0; k < pred_c[nn].values.size(); ++k)
            sc += std::abs(pred_c[nn].values[k] - true_c[nn].values[k]);
        count += pred_p0[nn].values.size();
    }
    return sp / static_cast<double>(count) + cfg.c_loss_weight * sc / static_cast<double>(count);
}

BackwardResult srnet_backward(const std::vector<ScalarField2D>& p0_k,
                              const std::vector<ScalarField2D>& neg_grad,
                              const std::vector<ScalarField2D>& c_k,
                              const std::vector<ScalarField2D>& true_p0,
                              const std::vector<ScalarField2D>& true_c,
                              const SRNetParams& params, const TrainConfig& cfg) {
    ForwardCache cc;
    BackwardResult res;
    res.grads = make_zero_srnet_params();
    res.grads.c_scale = params.c_scale;
    forward_impl(p0_k, neg_grad, c_k, params, NetMode::train, cc, &res.stats);

    const GridSpec& g = p0_k.front().grid;
    const auto pred_p0 = tensor_to_batch(cc.head[0].out, g);
    const auto pred_c = tensor_to_batch(cc.head[1].out, g);
    res.loss = srnet_loss(pred_p0, pred_c, true_p0, true_c, cfg);

    const double denom = static_cast<double>(cc.in[0].v.size());  // batch * pixels
    const Tensor4 t_p0 = batch_to_tensor(true_p0);
    const Tensor4 t_c = batch_to_tensor(true_c);

    const SRNetParams::Head* heads[2] = {&params.head_p0, &params.head_c};
    SRNetParams::Head* ghead[2] = {&res.grads.head_p0, &res.grads.head_c};
    const Tensor4* targets[2] = {&t_p0, &t_c};
    const double scale[2] = {1.0 / denom, cfg.c_loss_weight / denom};

    Tensor4 d_f2(cc.f2.n, cc.f2.c, cc.f2.h, cc.f2.w);
    for (int hh = 0; hh < 2; ++hh) {
        const auto& h = cc.head[hh];
        // L1 subgradient through the final ReLU (0 at ties)
        Tensor4 d_out(h.out.n, 1, h.out.h, h.out.w);
        for (std::size_t k = 0; k < d_out.v.size(); ++k) {
            const double diff = h.out.v[k] - targets[hh]->v[k];
            double dv = diff > 0.0 ? scale[hh] : (diff < 0.0 ? -scale[hh] : 0.0);
            if (!(h.out.v[k] > 0.0)) dv = 0.0;
            d_out.v[k] = dv;
        }
        conv_bwd_weights(h.h2, d_out, heads[hh]->conv2, ghead[hh]->conv2);
        Tensor4 d_h2 = conv_bwd_data(d_out, heads[hh]->conv2);
        Tensor4 d_h1;
        bn_backward(d_h2, h.h_hat, h.invstd, heads[hh]->bn, d_h1, ghead[hh]->bn.gamma,
                    ghead[hh]->bn.beta);
        conv_bwd_weights(cc.f2, d_h1, heads[hh]->conv1, ghead[hh]->conv1);
        Tensor4 part = conv_bwd_data(d_h1, heads[hh]->conv1);
        for (std::size_t k = 0; k < d_f2.v.size(); ++k) d_f2.v[k] += part.v[k];
    }

    relu_mask(cc.f2, d_f2);
    conv_bwd_weights(cc.f1, d_f2, params.fuse2, res.grads.fuse2);
    Tensor4 d_f1 = conv_bwd_data(d_f2, params.fuse2);
    relu_mask(cc.f1, d_f1);
    conv_bwd_weights(cc.z1, d_f1, params.fuse1, res.grads.fuse1);
    Tensor4 d_z1 = conv_bwd_data(d_f1, params.fuse1);

    Tensor4 d_z0;
    bn_backward(d_z1, cc.z0_hat, cc.fuse_invstd, params.fuse_bn, d_z0, res.grads.fuse_bn.gamma,
                res.grads.fuse_bn.beta);

    for (int b = 0; b < 3; ++b) {
        Tensor4 d_e2 = slice_channels(d_z0, 32 * b, 32);
        relu_mask(cc.e2[b], d_e2);
        conv_bwd_weights(cc.e1[b], d_e2, params.extract[b][1], res.grads.extract[b][1]);
        Tensor4 d_e1 = conv_bwd_data(d_e2, params.extract[b][1]);
        relu_mask(cc.e1[b], d_e1);
        conv_bwd_weights(cc.in[b], d_e1, params.extract[b][0], res.grads.extract[b][0]);
    }
    return res;
}

AdamState make_adam_state(const SRNetParams& params) {
    AdamState s;
    s.m = make_zero_srnet_params();
    s.v = make_zero_srnet_params();
    s.m.c_scale = params.c_scale;
    s.v.c_scale = params.c_scale;
    return s;
}

void adam_step(SRNetParams& params, SRNetGrads& grads, AdamState& state, int t,
               const TrainConfig& cfg) {
    if (t < 1) throw DataError("Adam step count starts at 1");
    auto tp = trainable_tensors(params);
    auto tg = trainable_tensors(grads);
    auto tm = trainable_tensors(state.m);
    auto tv = trainable_tensors(state.v);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t e = 0; e < tp.size(); ++e) {
        std::vector<double>& p = *tp[e].data;
        const std::vector<double>& gr = *tg[e].data;
        std::vector<double>& m = *tm[e].data;
        std::vector<double>& v = *tv[e].data;
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(p.size()); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gr[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gr[k] * gr[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

StageInputs compute_stage_inputs(const SensorData& g, const std::vector<SRNetParams>& prior,
                                 const SimConfig& sim, const SensorArray& sensors) {
    ScalarField2D p0(sim.grid, 0.0);
    ScalarField2D c(sim.grid, kBackgroundC);
    const ScalarField2D rho(sim.grid, 1.0);
    auto floored = [&](const ScalarField2D& speed) {
        ScalarField2D out = speed;
        for (double& v : out.values) v = std::max(v, 1.0);
        return out;
    };
    ScalarField2D neg(sim.grid, 0.0);
    for (std::size_t stage = 0; stage <= prior.size(); ++stage) {
        ForwardOperator op = make_forward_operator(Medium{floored(c), rho}, sensors, sim);
        ScalarField2D gp = grad_p0(op, p0, g);
        neg = ScalarField2D(sim.grid);
        for (std::size_t k = 0; k < gp.values.size(); ++k) neg.values[k] = -gp.values[k];
        if (stage == prior.size()) break;
        auto [p0v, cv] = srnet_forward({p0}, {neg}, {c}, prior[stage], NetMode::infer);
        p0 = std::move(p0v.front());
        c = std::move(cv.front());
    }
    return StageInputs{std::move(p0), std::move(neg), std::move(c)};
}

SRNetParams train_stage(int k, const DatasetManifest& dataset, const StageWeights& prior_stages,
                        const TrainConfig& cfg, std::uint64_t seed, EpochLog* log) {
    cfg.validate();
    if (k < 0 || prior_stages.k_max() < k)
        throw DataError("stage " + std::to_string(k) + " needs " + std::to_string(k) +
                        " trained prior stages, got " + std::to_string(prior_stages.k_max()));
    const std::vector<SRNetParams> prior(prior_stages.stages.begin(),
                                         prior_stages.stages.begin() + k);

    std::vector<const DatasetEntry*> train;
    for (const auto& e : dataset.entries)
        if (e.is_train) train.push_back(&e);
    if (train.empty()) throw DataError("dataset has no training samples");

    const SensorArray sensors = sensor_layout(dataset.sim.grid);
    namespace fs = std::filesystem;

    const int count = static_cast<int>(train.size());
    std::vector<StageInputs> inputs(count);
    std::vector<ScalarField2D> truth_p0(count), truth_c(count);
    std::string first_error;
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < count; ++s) {
        try {
            const fs::path dir = fs::path(dataset.root) / train[s]->dir;
            ScalarField2D p0t = read_field((dir / "p0.patf").string());
            ScalarField2D ct = read_field((dir / "c.patf").string());
            p0t.grid.dx = dataset.sim.grid.dx;
            ct.grid.dx = dataset.sim.grid.dx;
            const SensorData g =
                sensor_data_from_field(read_field((dir / "g.patf").string()), dataset.sim.dt);
            inputs[s] = compute_stage_inputs(g, prior, dataset.sim, sensors);
            truth_p0[s] = std::move(p0t);
            truth_c[s] = std::move(ct);
        } catch (const std::exception& ex) {
#pragma omp critical
            if (first_error.empty())
                first_error = "sample " + std::to_string(train[s]->index) + ": " + ex.what();
        }
    }
    if (!first_error.empty()) throw DataError("stage input generation failed: " + first_error);

    SRNetParams params = make_srnet_params(seed);
    params.c_scale = cfg.c_scale;
    AdamState adam = make_adam_state(params);
    std::mt19937_64 shuffler(seed ^ 0x9E3779B97F4A7C15ull);

    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    int t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng_shuffle(order, shuffler);
        double epoch_loss = 0.0;
        std::size_t epoch_n = 0;
        for (int first = 0; first < count;) {
            int last = std::min(first + cfg.batch_size, count);
            if (count - last == 1) last = count;  // avoid a trailing singleton batch
            std::vector<ScalarField2D> bp, bg, bc, tp, tc;
            for (int s = first; s < last; ++s) {
                bp.push_back(inputs[order[s]].p0);
                bg.push_back(inputs[order[s]].neg_grad);
                bc.push_back(inputs[order[s]].c);
                tp.push_back(truth_p0[order[s]]);
                tc.push_back(truth_c[order[s]]);
            }
            BackwardResult res = srnet_backward(bp, bg, bc, tp, tc, params, cfg);
            adam_step(params, res.grads, adam, ++t, cfg);
            update_running_stats(params, res.stats);
            epoch_loss += res.loss * static_cast<double>(last - first);
            epoch_n += static_cast<std::size_t>(last - first);
            first = last;
        }
        if (log) log->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_n));
    }
    return params;
}

DlResult reconstruct_dl(const SensorData& g, const StageWeights& weights, const SimConfig& sim,
                        const SensorArray& sensors) {
    if (weights.k_max() < 1) throw DataError("no stages loaded");
    DlResult res;
    res.p0 = ScalarField2D(sim.grid, 0.0);
    res.c = ScalarField2D(sim.grid, kBackgroundC);
    const ScalarField2D rho(sim.grid, 1.0);
    for (int k = 0; k < weights.k_max(); ++k) {
        ScalarField2D floored = res.c;
        for (double& v : floored.values) v = std::max(v, 1.0);
        ForwardOperator op = make_forward_operator(Medium{floored, rho}, sensors, sim);
        ScalarField2D gp = grad_p0(op, res.p0, g);
        ScalarField2D neg(sim.grid);
        for (std::size_t i = 0; i < gp.values.size(); ++i) neg.values[i] = -gp.values[i];
        auto [p0v, cv] = srnet_forward({res.p0}, {neg}, {res.c}, weights.stages[k], NetMode::infer);
        res.p0 = std::move(p0v.front());
        res.c = std::move(cv.front());
        res.iterates.emplace_back(res.p0, res.c);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Weights files

namespace {

constexpr std::uint8_t kWeightsMagic[4] = {0x50, 0x41, 0x54, 0x57};  // "PATW"

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}
std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[k]) << (8 * k);
    return v;
}
std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(p[k]) << (8 * k);
    return v;
}

}  // namespace

void write_stage_weights(const std::string& path, const SRNetParams& params) {
    std::ostringstream header;
    header.precision(17);
    header << "branches = 3\n"
           << "extract_ch = 32 32\n"
           << "fuse_ch = 64 32\n"
           << "head_ch = 16 1\n"
           << "bn_momentum = " << params.fuse_bn.momentum << "\n"
           << "bn_eps = " << params.fuse_bn.eps << "\n"
           << "c_scale = " << params.c_scale << "\n";
    const std::string htext = header.str();

    auto entries = all_tensors(const_cast<SRNetParams&>(params));
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kWeightsMagic, kWeightsMagic + 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(htext.size()));
    out.insert(out.end(), htext.begin(), htext.end());
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const TensorEntry& e : entries) {
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
        for (std::size_t d : e.dims) put_u64(out, d);
        for (double v : *e.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write failed: " + path);
}

SRNetParams read_stage_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > bytes.size()) throw DataError("truncated weights file: " + path);
    };
    need(12);
    if (std::memcmp(bytes.data(), kWeightsMagic, 4) != 0)
        throw DataError("bad magic: not a PATW weights file");
    if (get_u32(bytes.data() + 4) != 1) throw DataError("unsupported weights version");
    const std::uint32_t hlen = get_u32(bytes.data() + 8);
    pos = 12;
    need(hlen);
    const std::string htext(bytes.begin() + pos, bytes.begin() + pos + hlen);
    pos += hlen;

    std::map<std::string, std::string> kv;
    {
        std::istringstream ss(htext);
        std::string line;
        while (std::getline(ss, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                const auto b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
    }

    SRNetParams params = make_zero_srnet_params();
    if (kv.count("c_scale")) params.c_scale = std::stod(kv["c_scale"]);
    const double momentum = kv.count("bn_momentum") ? std::stod(kv["bn_momentum"]) : 0.9;
    const double eps = kv.count("bn_eps") ? std::stod(kv["bn_eps"]) : 1e-5;
    for (BatchNormParams* bn : {&params.fuse_bn, &params.head_p0.bn, &params.head_c.bn}) {
        bn->momentum = momentum;
        bn->eps = eps;
    }

    need(4);
    const std::uint32_t n_records = get_u32(bytes.data() + pos);
    pos += 4;

    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>> records;
    for (std::uint32_t r = 0; r < n_records; ++r) {
        need(4);
        const std::uint32_t nlen = get_u32(bytes.data() + pos);
        pos += 4;
        need(nlen);
        const std::string name(bytes.begin() + pos, bytes.begin() + pos + nlen);
        pos += nlen;
        need(4);
        const std::uint32_t ndim = get_u32(bytes.data() + pos);
        pos += 4;
        std::vector<std::size_t> dims(ndim);
        std::size_t total = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            need(8);
            dims[d] = static_cast<std::size_t>(get_u64(bytes.data() + pos));
            pos += 8;
            total *= dims[d];
        }
        need(total * 8);
        std::vector<double> payload(total);
        for (std::size_t k = 0; k < total; ++k, pos += 8)
            payload[k] = std::bit_cast<double>(get_u64(bytes.data() + pos));
        records[name] = {std::move(dims), std::move(payload)};
    }

    for (TensorEntry& e : all_tensors(params)) {
        auto it = records.find(e.name);
        if (it == records.end()) throw DataError("weights file missing record: " + e.name);
        if (it->second.first != e.dims) throw DataError("record dims mismatch: " + e.name);
        *e.data = it->second.second;
    }
    return params;
}

void write_stage_manifest(const std::string& dir, const StageWeights& weights) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / "weights-manifest.txt", std::ios::trunc);
    if (!out) throw DataError("cannot write weights manifest in " + dir);
    out << "k_max = " << weights.k_max() << "\n";
    for (int k = 0; k < weights.k_max(); ++k) {
        const std::string fname = "stage_" + std::to_string(k) + ".patw";
        write_stage_weights((fs::path(dir) / fname).string(), weights.stages[k]);
        out << "stage " << k << " " << fname << "\n";
    }
}

StageWeights load_stage_weights(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "weights-manifest.txt");
    if (!in) throw DataError("cannot open weights manifest in " + dir);
    StageWeights w;
    std::string line;
    int k_max = -1;
    std::map<int, std::string> files;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "k_max") {
            std::string eq;
            ss >> eq >> k_max;
        } else if (tag == "stage") {
            int k;
            std::string fname;
            ss >> k >> fname;
            if (!ss) throw DataError("bad stage line in weights manifest: " + line);
            files[k] = fname;
        }
    }
    if (k_max < 1 || static_cast<int>(files.size()) != k_max)
        throw DataError("weights manifest lists " + std::to_string(files.size()) +
                        " stages, expected " + std::to_string(k_max));
    for (int k = 0; k < k_max; ++k) {
        auto it = files.find(k);
        if (it == files.end()) throw DataError("weights manifest missing stage " + std::to_string(k));
        w.stages.push_back(read_stage_weights((fs::path(dir) / it->second).string()));
    }
    return w;
}

}  // namespace pat
