#include "usr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace usr::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

TensorPtr make_node(Shape shape, std::vector<TensorPtr> parents) {
    auto t = Tensor::zeros(std::move(shape));
    for (const auto& p : parents) {
        if (p && p->requires_grad) {
            t->requires_grad = true;
            break;
        }
    }
    t->parents = std::move(parents);
    return t;
}

void require(bool cond, const char* msg) {
    if (!cond) throw DimensionError(msg);
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

TensorPtr conv2d(const TensorPtr& input, const TensorPtr& weight, const TensorPtr& bias,
                 int padding, int stride) {
    require(input->shape.size() == 3, "conv2d: input must be C_in x H x W");
    require(weight->shape.size() == 4, "conv2d: weight must be C_out x C_in x k x k");
    const int c_in = input->shape[0], h = input->shape[1], w = input->shape[2];
    const int c_out = weight->shape[0], k = weight->shape[2];
    require(weight->shape[1] == c_in, "conv2d: weight C_in mismatch");
    require(weight->shape[3] == k && k % 2 == 1, "conv2d: kernel must be square with odd size");
    require(bias->shape.size() == 1 && bias->shape[0] == c_out, "conv2d: bias size mismatch");
    if (padding < 0 || stride < 1) throw ParameterError("conv2d: bad padding/stride");
    require(h + 2 * padding >= k && w + 2 * padding >= k, "conv2d: kernel larger than padded input");
    check_finite(*input, "conv2d input");
    check_finite(*weight, "conv2d weight");

    const int h_out = (h + 2 * padding - k) / stride + 1;
    const int w_out = (w + 2 * padding - k) / stride + 1;

    auto out = make_node({c_out, h_out, w_out}, {input, weight, bias});
    const double* in = input->data.data();
    const double* wt = weight->data.data();
    double* od = out->data.data();

    for (int co = 0; co < c_out; ++co) {
        const double b = bias->data[co];
        double* out_ch = od + static_cast<std::int64_t>(co) * h_out * w_out;
        std::fill(out_ch, out_ch + static_cast<std::int64_t>(h_out) * w_out, b);
        for (int ci = 0; ci < c_in; ++ci) {
            const double* in_ch = in + static_cast<std::int64_t>(ci) * h * w;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wt[((static_cast<std::int64_t>(co) * c_in + ci) * k + ky) * k + kx];
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < h_out; ++oy) {
                        const int iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= h) continue;
                        const double* in_row = in_ch + static_cast<std::int64_t>(iy) * w;
                        double* out_row = out_ch + static_cast<std::int64_t>(oy) * w_out;
                        if (stride == 1) {
                            const int off = kx - padding;
                            const int x0 = std::max(0, -off);
                            const int x1 = std::min(w_out, w - off);
                            for (int ox = x0; ox < x1; ++ox) out_row[ox] += wv * in_row[ox + off];
                        } else {
                            for (int ox = 0; ox < w_out; ++ox) {
                                const int ix = ox * stride + kx - padding;
                                if (ix >= 0 && ix < w) out_row[ox] += wv * in_row[ix];
                            }
                        }
                    }
                }
            }
        }
    }

    Tensor* o = out.get();
    Tensor* ip = input.get();
    Tensor* wp = weight.get();
    Tensor* bp = bias.get();
    out->backward_fn = [o, ip, wp, bp, c_in, c_out, h, w, h_out, w_out, k, padding, stride]() {
        const double* gout = o->grad.data();
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (int co = 0; co < c_out; ++co) {
                double s = 0.0;
                const double* g_ch = gout + static_cast<std::int64_t>(co) * h_out * w_out;
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(h_out) * w_out; ++i) s += g_ch[i];
                bp->grad[co] += s;
            }
        }
        if (wp->requires_grad) {
            wp->ensure_grad();
            for (int co = 0; co < c_out; ++co) {
                const double* g_ch = gout + static_cast<std::int64_t>(co) * h_out * w_out;
                for (int ci = 0; ci < c_in; ++ci) {
                    const double* in_ch = ip->data.data() + static_cast<std::int64_t>(ci) * h * w;
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            double s = 0.0;
                            for (int oy = 0; oy < h_out; ++oy) {
                                const int iy = oy * stride + ky - padding;
                                if (iy < 0 || iy >= h) continue;
                                const double* in_row = in_ch + static_cast<std::int64_t>(iy) * w;
                                const double* g_row = g_ch + static_cast<std::int64_t>(oy) * w_out;
                                if (stride == 1) {
                                    const int off = kx - padding;
                                    const int x0 = std::max(0, -off);
                                    const int x1 = std::min(w_out, w - off);
                                    for (int ox = x0; ox < x1; ++ox) s += g_row[ox] * in_row[ox + off];
                                } else {
                                    for (int ox = 0; ox < w_out; ++ox) {
                                        const int ix = ox * stride + kx - padding;
                                        if (ix >= 0 && ix < w) s += g_row[ox] * in_row[ix];
                                    }
                                }
                            }
                            wp->grad[((static_cast<std::int64_t>(co) * c_in + ci) * k + ky) * k + kx] += s;
                        }
                    }
                }
            }
        }
        if (ip->requires_grad) {
            ip->ensure_grad();
            for (int co = 0; co < c_out; ++co) {
                const double* g_ch = gout + static_cast<std::int64_t>(co) * h_out * w_out;
                for (int ci = 0; ci < c_in; ++ci) {
                    double* gin_ch = ip->grad.data() + static_cast<std::int64_t>(ci) * h * w;
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const double wv =
                                wp->data[((static_cast<std::int64_t>(co) * c_in + ci) * k + ky) * k + kx];
                            if (wv == 0.0) continue;
                            for (int oy = 0; oy < h_out; ++oy) {
                                const int iy = oy * stride + ky - padding;
                                if (iy < 0 || iy >= h) continue;
                                double* gin_row = gin_ch + static_cast<std::int64_t>(iy) * w;
                                const double* g_row = g_ch + static_cast<std::int64_t>(oy) * w_out;
                                if (stride == 1) {
                                    const int off = kx - padding;
                                    const int x0 = std::max(0, -off);
                                    const int x1 = std::min(w_out, w - off);
                                    for (int ox = x0; ox < x1; ++ox) gin_row[ox + off] += wv * g_row[ox];
                                } else {
                                    for (int ox = 0; ox < w_out; ++ox) {
                                        const int ix = ox * stride + kx - padding;
                                        if (ix >= 0 && ix < w) gin_row[ix] += wv * g_row[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    return out;
}

TensorPtr depthwise_dynamic_conv(const TensorPtr& feat, const TensorPtr& kernels) {
    require(feat->shape.size() == 3, "depthwise_dynamic_conv: feat must be C x H x W");
    require(kernels->shape.size() == 3, "depthwise_dynamic_conv: kernels must be C x h x w");
    const int c = feat->shape[0], h = feat->shape[1], w = feat->shape[2];
    const int kh = kernels->shape[1], kw = kernels->shape[2];
    require(kernels->shape[0] == c, "depthwise_dynamic_conv: channel count mismatch");
    require(kh % 2 == 1 && kw % 2 == 1, "depthwise_dynamic_conv: kernel dims must be odd");
    const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;

    auto out = make_node({c, h, w}, {feat, kernels});
    for (int ci = 0; ci < c; ++ci) {
        const double* f_ch = feat->data.data() + static_cast<std::int64_t>(ci) * h * w;
        const double* u_ch = kernels->data.data() + static_cast<std::int64_t>(ci) * kh * kw;
        double* o_ch = out->data.data() + static_cast<std::int64_t>(ci) * h * w;
        for (int m = 0; m < kh; ++m) {
            for (int n = 0; n < kw; ++n) {
                const double uv = u_ch[m * kw + n];
                if (uv == 0.0) continue;
                const int dy = m - ph, dx = n - pw;
                const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                for (int y = y0; y < y1; ++y) {
                    const double* f_row = f_ch + static_cast<std::int64_t>(y + dy) * w + dx;
                    double* o_row = o_ch + static_cast<std::int64_t>(y) * w;
                    for (int x = x0; x < x1; ++x) o_row[x] += uv * f_row[x];
                }
            }
        }
    }

    Tensor* o = out.get();
    Tensor* fp = feat.get();
    Tensor* up = kernels.get();
    out->backward_fn = [o, fp, up, c, h, w, kh, kw, ph, pw]() {
        const double* gout = o->grad.data();
        for (int ci = 0; ci < c; ++ci) {
            const double* g_ch = gout + static_cast<std::int64_t>(ci) * h * w;
            const double* f_ch = fp->data.data() + static_cast<std::int64_t>(ci) * h * w;
            const double* u_ch = up->data.data() + static_cast<std::int64_t>(ci) * kh * kw;
            for (int m = 0; m < kh; ++m) {
                for (int n = 0; n < kw; ++n) {
                    const int dy = m - ph, dx = n - pw;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    if (up->requires_grad) {
                        up->ensure_grad();
                        double s = 0.0;
                        for (int y = y0; y < y1; ++y) {
                            const double* f_row = f_ch + static_cast<std::int64_t>(y + dy) * w + dx;
                            const double* g_row = g_ch + static_cast<std::int64_t>(y) * w;
                            for (int x = x0; x < x1; ++x) s += g_row[x] * f_row[x];
                        }
                        up->grad[(static_cast<std::int64_t>(ci) * kh + m) * kw + n] += s;
                    }
                    if (fp->requires_grad) {
                        fp->ensure_grad();
                        const double uv = u_ch[m * kw + n];
                        if (uv == 0.0) continue;
                        double* gf_ch = fp->grad.data() + static_cast<std::int64_t>(ci) * h * w;
                        for (int y = y0; y < y1; ++y) {
                            double* gf_row = gf_ch + static_cast<std::int64_t>(y + dy) * w + dx;
                            const double* g_row = g_ch + static_cast<std::int64_t>(y) * w;
                            for (int x = x0; x < x1; ++x) gf_row[x] += uv * g_row[x];
                        }
                    }
                }
            }
        }
    };
    return out;
}

TensorPtr pixel_shuffle(const TensorPtr& x, int r) {
    require(x->shape.size() == 3, "pixel_shuffle: input must be C x H x W");
    if (r < 1) throw ParameterError("pixel_shuffle: r must be >= 1");
    const int c_in = x->shape[0], h = x->shape[1], w = x->shape[2];
    require(c_in % (r * r) == 0, "pixel_shuffle: channels not divisible by r^2");
    const int c = c_in / (r * r);

    auto out = make_node({c, h * r, w * r}, {x});
    const int hr = h * r, wr = w * r;
    for (int co = 0; co < c; ++co) {
        for (int dy = 0; dy < r; ++dy) {
            for (int dx = 0; dx < r; ++dx) {
                const int ci = co * r * r + dy * r + dx;
                const double* in_ch = x->data.data() + static_cast<std::int64_t>(ci) * h * w;
                for (int y = 0; y < h; ++y) {
                    double* out_row =
                        out->data.data() + (static_cast<std::int64_t>(co) * hr + y * r + dy) * wr + dx;
                    const double* in_row = in_ch + static_cast<std::int64_t>(y) * w;
                    for (int xx = 0; xx < w; ++xx) out_row[static_cast<std::int64_t>(xx) * r] = in_row[xx];
                }
            }
        }
    }

    Tensor* o = out.get();
    Tensor* xp = x.get();
    out->backward_fn = [o, xp, c, h, w, r, hr, wr]() {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (int co = 0; co < c; ++co) {
            for (int dy = 0; dy < r; ++dy) {
                for (int dx = 0; dx < r; ++dx) {
                    const int ci = co * r * r + dy * r + dx;
                    double* gin_ch = xp->grad.data() + static_cast<std::int64_t>(ci) * h * w;
                    for (int y = 0; y < h; ++y) {
                        const double* g_row =
                            o->grad.data() + (static_cast<std::int64_t>(co) * hr + y * r + dy) * wr + dx;
                        double* gin_row = gin_ch + static_cast<std::int64_t>(y) * w;
                        for (int xx = 0; xx < w; ++xx) gin_row[xx] += g_row[static_cast<std::int64_t>(xx) * r];
                    }
                }
            }
        }
    };
    return out;
}

TensorPtr pixel_unshuffle(const TensorPtr& x, int r) {
    require(x->shape.size() == 3, "pixel_unshuffle: input must be C x H x W");
    if (r < 1) throw ParameterError("pixel_unshuffle: r must be >= 1");
    const int c = x->shape[0], hr = x->shape[1], wr = x->shape[2];
    require(hr % r == 0 && wr % r == 0, "pixel_unshuffle: dims not divisible by r");
    const int h = hr / r, w = wr / r;

    auto out = make_node({c * r * r, h, w}, {x});
    for (int co = 0; co < c; ++co) {
        for (int dy = 0; dy < r; ++dy) {
            for (int dx = 0; dx < r; ++dx) {
                const int ci = co * r * r + dy * r + dx;
                double* out_ch = out->data.data() + static_cast<std::int64_t>(ci) * h * w;
                for (int y = 0; y < h; ++y) {
                    const double* in_row =
                        x->data.data() + (static_cast<std::int64_t>(co) * hr + y * r + dy) * wr + dx;
                    double* out_row = out_ch + static_cast<std::int64_t>(y) * w;
                    for (int xx = 0; xx < w; ++xx) out_row[xx] = in_row[static_cast<std::int64_t>(xx) * r];
                }
            }
        }
    }

    Tensor* o = out.get();
    Tensor* xp = x.get();
    out->backward_fn = [o, xp, c, h, w, r, hr, wr]() {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (int co = 0; co < c; ++co) {
            for (int dy = 0; dy < r; ++dy) {
                for (int dx = 0; dx < r; ++dx) {
                    const int ci = co * r * r + dy * r + dx;
                    const double* g_ch = o->grad.data() + static_cast<std::int64_t>(ci) * h * w;
                    for (int y = 0; y < h; ++y) {
                        double* gin_row =
                            xp->grad.data() + (static_cast<std::int64_t>(co) * hr + y * r + dy) * wr + dx;
                        const double* g_row = g_ch + static_cast<std::int64_t>(y) * w;
                        for (int xx = 0; xx < w; ++xx) gin_row[static_cast<std::int64_t>(xx) * r] += g_row[xx];
                    }
                }
            }
        }
    };
    return out;
}

TensorPtr window_msa(const TensorPtr& feat, const WmsaParams& p, int window, int heads,
                     std::vector<double>* attention_out) {
    require(feat->shape.size() == 3, "window_msa: input must be C x H x W");
    const int c = feat->shape[0], h = feat->shape[1], w = feat->shape[2];
    require(window >= 1 && h % window == 0 && w % window == 0,
            "window_msa: spatial dims not divisible by window");
    require(heads >= 1 && c % heads == 0, "window_msa: channels not divisible by heads");
    for (const TensorPtr& m : {p.wq, p.wk, p.wv, p.wo})
        require(m->shape.size() == 2 && m->shape[0] == c && m->shape[1] == c,
                "window_msa: projection weights must be C x C");
    for (const TensorPtr& b : {p.bq, p.bk, p.bv, p.bo})
        require(b->shape.size() == 1 && b->shape[0] == c, "window_msa: projection bias must be C");

    const int nwy = h / window, nwx = w / window;
    const int nwin = nwy * nwx;
    const int len = window * window;
    const int dh = c / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const std::int64_t tok = static_cast<std::int64_t>(nwin) * len * c;
    auto xs = std::make_shared<std::vector<double>>(tok);
    auto qs = std::make_shared<std::vector<double>>(tok);
    auto ks = std::make_shared<std::vector<double>>(tok);
    auto vs = std::make_shared<std::vector<double>>(tok);
    auto os = std::make_shared<std::vector<double>>(tok);
    auto at = std::make_shared<std::vector<double>>(static_cast<std::int64_t>(nwin) * heads * len * len);

    // token layout: (window, position, channel)
    auto gather = [&](const double* src, std::vector<double>& dst) {
        for (int wy = 0; wy < nwy; ++wy)
            for (int wx = 0; wx < nwx; ++wx) {
                const int win = wy * nwx + wx;
                for (int py = 0; py < window; ++py)
                    for (int px = 0; px < window; ++px) {
                        const int j = py * window + px;
                        const int gy = wy * window + py, gx = wx * window + px;
                        for (int ci = 0; ci < c; ++ci)
                            dst[(static_cast<std::int64_t>(win) * len + j) * c + ci] =
                                src[(static_cast<std::int64_t>(ci) * h + gy) * w + gx];
                    }
            }
    };
    auto project = [&](const std::vector<double>& src, const TensorPtr& wt, const TensorPtr& bt,
                       std::vector<double>& dst) {
        const double* wm = wt->data.data();
        for (std::int64_t t = 0; t < static_cast<std::int64_t>(nwin) * len; ++t) {
            const double* xv = src.data() + t * c;
            double* yv = dst.data() + t * c;
            for (int co = 0; co < c; ++co) {
                double s = bt->data[co];
                const double* row = wm + static_cast<std::int64_t>(co) * c;
                for (int ci = 0; ci < c; ++ci) s += row[ci] * xv[ci];
                yv[co] = s;
            }
        }
    };

    gather(feat->data.data(), *xs);
    project(*xs, p.wq, p.bq, *qs);
    project(*xs, p.wk, p.bk, *ks);
    project(*xs, p.wv, p.bv, *vs);

    for (int win = 0; win < nwin; ++win) {
        const std::int64_t base = static_cast<std::int64_t>(win) * len * c;
        for (int hd = 0; hd < heads; ++hd) {
            const int f0 = hd * dh;
            double* a_rows = at->data() + (static_cast<std::int64_t>(win) * heads + hd) * len * len;
            for (int j = 0; j < len; ++j) {
                const double* qv = qs->data() + base + static_cast<std::int64_t>(j) * c + f0;
                double* arow = a_rows + static_cast<std::int64_t>(j) * len;
                double mx = -1e300;
                for (int kk = 0; kk < len; ++kk) {
                    const double* kv = ks->data() + base + static_cast<std::int64_t>(kk) * c + f0;
                    double s = 0.0;
                    for (int f = 0; f < dh; ++f) s += qv[f] * kv[f];
                    arow[kk] = s * att_scale;
                    mx = std::max(mx, arow[kk]);
                }
                double denom = 0.0;
                for (int kk = 0; kk < len; ++kk) {
                    arow[kk] = std::exp(arow[kk] - mx);
                    denom += arow[kk];
                }
                for (int kk = 0; kk < len; ++kk) arow[kk] /= denom;
                double* ov = os->data() + base + static_cast<std::int64_t>(j) * c + f0;
                for (int f = 0; f < dh; ++f) ov[f] = 0.0;
                for (int kk = 0; kk < len; ++kk) {
                    const double a = arow[kk];
                    const double* vv = vs->data() + base + static_cast<std::int64_t>(kk) * c + f0;
                    for (int f = 0; f < dh; ++f) ov[f] += a * vv[f];
                }
            }
        }
    }
    if (attention_out) *attention_out = *at;

    auto ys = std::make_shared<std::vector<double>>(tok);
    project(*os, p.wo, p.bo, *ys);

    auto out = make_node({c, h, w}, {feat, p.wq, p.bq, p.wk, p.bk, p.wv, p.bv, p.wo, p.bo});
    for (int wy = 0; wy < nwy; ++wy)
        for (int wx = 0; wx < nwx; ++wx) {
            const int win = wy * nwx + wx;
            for (int py = 0; py < window; ++py)
                for (int px = 0; px < window; ++px) {
                    const int j = py * window + px;
                    const int gy = wy * window + py, gx = wx * window + px;
                    for (int ci = 0; ci < c; ++ci)
                        out->data[(static_cast<std::int64_t>(ci) * h + gy) * w + gx] =
                            (*ys)[(static_cast<std::int64_t>(win) * len + j) * c + ci];
                }
        }

    Tensor* o = out.get();
    Tensor* fp = feat.get();
    WmsaParams pp = p;  // shared_ptrs keep the parameter tensors alive
    out->backward_fn = [o, fp, pp, xs, qs, ks, vs, os, at, c, h, w, window, heads, nwy, nwx, nwin,
                        len, dh, att_scale]() {
        const std::int64_t tokens = static_cast<std::int64_t>(nwin) * len;
        std::vector<double> dy(tokens * c);
        for (int wy = 0; wy < nwy; ++wy)
            for (int wx = 0; wx < nwx; ++wx) {
                const int win = wy * nwx + wx;
                for (int py = 0; py < window; ++py)
                    for (int px = 0; px < window; ++px) {
                        const int j = py * window + px;
                        const int gy = wy * window + py, gx = wx * window + px;
                        for (int ci = 0; ci < c; ++ci)
                            dy[(static_cast<std::int64_t>(win) * len + j) * c + ci] =
                                o->grad[(static_cast<std::int64_t>(ci) * h + gy) * w + gx];
                    }
            }

        auto back_project = [&](const std::vector<double>& dout, const std::vector<double>& src,
                                const TensorPtr& wt, const TensorPtr& bt, std::vector<double>& dsrc) {
            if (wt->requires_grad) {
                wt->ensure_grad();
                bt->ensure_grad();
                for (std::int64_t t = 0; t < tokens; ++t) {
                    const double* dv = dout.data() + t * c;
                    const double* xv = src.data() + t * c;
                    for (int co = 0; co < c; ++co) {
                        const double g = dv[co];
                        if (g == 0.0) continue;
                        double* wrow = wt->grad.data() + static_cast<std::int64_t>(co) * c;
                        for (int ci = 0; ci < c; ++ci) wrow[ci] += g * xv[ci];
                        bt->grad[co] += g;
                    }
                }
            }
            const double* wm = wt->data.data();
            for (std::int64_t t = 0; t < tokens; ++t) {
                const double* dv = dout.data() + t * c;
                double* dx = dsrc.data() + t * c;
                for (int co = 0; co < c; ++co) {
                    const double g = dv[co];
                    if (g == 0.0) continue;
                    const double* wrow = wm + static_cast<std::int64_t>(co) * c;
                    for (int ci = 0; ci < c; ++ci) dx[ci] += g * wrow[ci];
                }
            }
        };

        std::vector<double> dO(tokens * c, 0.0);
        back_project(dy, *os, pp.wo, pp.bo, dO);

        std::vector<double> dQ(tokens * c, 0.0), dK(tokens * c, 0.0), dV(tokens * c, 0.0);
        std::vector<double> da(len), ds(len);
        for (int win = 0; win < nwin; ++win) {
            const std::int64_t base = static_cast<std::int64_t>(win) * len * c;
            for (int hd = 0; hd < heads; ++hd) {
                const int f0 = hd * dh;
                const double* a_rows = at->data() + (static_cast<std::int64_t>(win) * heads + hd) * len * len;
                for (int j = 0; j < len; ++j) {
                    const double* dov = dO.data() + base + static_cast<std::int64_t>(j) * c + f0;
                    const double* arow = a_rows + static_cast<std::int64_t>(j) * len;
                    double dot = 0.0;
                    for (int kk = 0; kk < len; ++kk) {
                        const double* vv = vs->data() + base + static_cast<std::int64_t>(kk) * c + f0;
                        double s = 0.0;
                        for (int f = 0; f < dh; ++f) s += dov[f] * vv[f];
                        da[kk] = s;
                        dot += s * arow[kk];
                        double* dvv = dV.data() + base + static_cast<std::int64_t>(kk) * c + f0;
                        const double a = arow[kk];
                        for (int f = 0; f < dh; ++f) dvv[f] += a * dov[f];
                    }
                    for (int kk = 0; kk < len; ++kk) ds[kk] = arow[kk] * (da[kk] - dot);
                    double* dqv = dQ.data() + base + static_cast<std::int64_t>(j) * c + f0;
                    const double* qv = qs->data() + base + static_cast<std::int64_t>(j) * c + f0;
                    for (int kk = 0; kk < len; ++kk) {
                        const double g = ds[kk] * att_scale;
                        if (g == 0.0) continue;
                        const double* kv = ks->data() + base + static_cast<std::int64_t>(kk) * c + f0;
                        double* dkv = dK.data() + base + static_cast<std::int64_t>(kk) * c + f0;
                        for (int f = 0; f < dh; ++f) {
                            dqv[f] += g * kv[f];
                            dkv[f] += g * qv[f];
                        }
                    }
                }
            }
        }

        std::vector<double> dX(tokens * c, 0.0);
        back_project(dQ, *xs, pp.wq, pp.bq, dX);
        back_project(dK, *xs, pp.wk, pp.bk, dX);
        back_project(dV, *xs, pp.wv, pp.bv, dX);

        if (fp->requires_grad) {
            fp->ensure_grad();
            for (int wy = 0; wy < nwy; ++wy)
                for (int wx = 0; wx < nwx; ++wx) {
                    const int win = wy * nwx + wx;
                    for (int py = 0; py < window; ++py)
                        for (int px = 0; px < window; ++px) {
                            const int j = py * window + px;
                            const int gy = wy * window + py, gx = wx * window + px;
                            for (int ci = 0; ci < c; ++ci)
                                fp->grad[(static_cast<std::int64_t>(ci) * h + gy) * w + gx] +=
                                    dX[(static_cast<std::int64_t>(win) * len + j) * c + ci];
                        }
                }
        }
    };
    return out;
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta) {
    int feats = 0;
    std::int64_t positions = 0;
    std::int64_t fstride = 0;  // stride between consecutive features at one position
    if (x->shape.size() == 3) {
        feats = x->shape[0];
        positions = static_cast<std::int64_t>(x->shape[1]) * x->shape[2];
        fstride = positions;
    } else if (x->shape.size() == 1) {
        feats = x->shape[0];
        positions = 1;
        fstride = 1;
    } else {
        throw DimensionError("layer_norm: input must be 1-D or C x H x W");
    }
    require(feats >= 1, "layer_norm: empty feature dim");
    require(gamma->shape.size() == 1 && gamma->shape[0] == feats, "layer_norm: gamma size mismatch");
    require(beta->shape.size() == 1 && beta->shape[0] == feats, "layer_norm: beta size mismatch");

    auto out = make_node(x->shape, {x, gamma, beta});
    auto xhat = std::make_shared<std::vector<double>>(x->data.size());
    auto inv_std = std::make_shared<std::vector<double>>(positions);

    for (std::int64_t pos = 0; pos < positions; ++pos) {
        double mean = 0.0;
        for (int f = 0; f < feats; ++f) mean += x->data[f * fstride + pos];
        mean /= feats;
        double var = 0.0;
        for (int f = 0; f < feats; ++f) {
            const double d = x->data[f * fstride + pos] - mean;
            var += d * d;
        }
        var /= feats;
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_std)[pos] = is;
        for (int f = 0; f < feats; ++f) {
            const double xh = (x->data[f * fstride + pos] - mean) * is;
            (*xhat)[f * fstride + pos] = xh;
            out->data[f * fstride + pos] = gamma->data[f] * xh + beta->data[f];
        }
    }

    Tensor* o = out.get();
    Tensor* xp = x.get();
    Tensor* gp = gamma.get();
    Tensor* bp = beta.get();
    out->backward_fn = [o, xp, gp, bp, xhat, inv_std, feats, positions, fstride]() {
        if (gp->requires_grad) {
            gp->ensure_grad();
            bp->ensure_grad();
            for (int f = 0; f < feats; ++f) {
                double sg = 0.0, sb = 0.0;
                for (std::int64_t pos = 0; pos < positions; ++pos) {
                    const double g = o->grad[f * fstride + pos];
                    sg += g * (*xhat)[f * fstride + pos];
                    sb += g;
                }
                gp->grad[f] += sg;
                bp->grad[f] += sb;
            }
        }
        if (xp->requires_grad) {
            xp->ensure_grad();
            for (std::int64_t pos = 0; pos < positions; ++pos) {
                double sum1 = 0.0, sum2 = 0.0;
                for (int f = 0; f < feats; ++f) {
                    const double dxh = o->grad[f * fstride + pos] * gp->data[f];
                    sum1 += dxh;
                    sum2 += dxh * (*xhat)[f * fstride + pos];
                }
                const double is = (*inv_std)[pos];
                for (int f = 0; f < feats; ++f) {
                    const double dxh = o->grad[f * fstride + pos] * gp->data[f];
                    const double xh = (*xhat)[f * fstride + pos];
                    xp->grad[f * fstride + pos] += is * (dxh - (sum1 + xh * sum2) / feats);
                }
            }
        }
    };
    return out;
}

TensorPtr activation(Activation kind, const TensorPtr& x, double slope) {
    if (kind == Activation::leaky_relu && (slope <= 0.0 || slope >= 1.0))
        throw ParameterError("leaky_relu: slope must be in (0,1)");

    auto out = make_node(x->shape, {x});
    const std::int64_t n = x->size();
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = x->data[i];
        switch (kind) {
            case Activation::relu: out->data[i] = v > 0.0 ? v : 0.0; break;
            case Activation::leaky_relu: out->data[i] = v > 0.0 ? v : slope * v; break;
            case Activation::sigmoid: out->data[i] = stable_sigmoid(v); break;
            case Activation::gelu:
                out->data[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
                break;
        }
    }

    Tensor* o = out.get();
    Tensor* xp = x.get();
    out->backward_fn = [o, xp, kind, slope, n]() {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
            const double v = xp->data[i];
            double d = 0.0;
            switch (kind) {
                case Activation::relu: d = v > 0.0 ? 1.0 : 0.0; break;
                case Activation::leaky_relu: d = v > 0.0 ? 1.0 : slope; break;
                case Activation::sigmoid: {
                    const double s = o->data[i];
                    d = s * (1.0 - s);
                    break;
                }
                case Activation::gelu:
                    d = 0.5 * (1.0 + std::erf(v * M_SQRT1_2)) +
                        v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
                    break;
            }
            xp->grad[i] += d * o->grad[i];
        }
    };
    return out;
}

TensorPtr global_avg_pool(const TensorPtr& feat) {
    require(feat->shape.size() == 3, "global_avg_pool: input must be C x H x W");
    const int c = feat->shape[0];
    const std::int64_t hw = static_cast<std::int64_t>(feat->shape[1]) * feat->shape[2];
    auto out = make_node({c}, {feat});
    for (int ci = 0; ci < c; ++ci) {
        double s = 0.0;
        const double* p = feat->data.data() + ci * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
        out->data[ci] = s / static_cast<double>(hw);
    }
    Tensor* o = out.get();
    Tensor* fp = feat.get();
    out->backward_fn = [o, fp, c, hw]() {
        if (!fp->requires_grad) return;
        fp->ensure_grad();
        for (int ci = 0; ci < c; ++ci) {
            const double g = o->grad[ci] / static_cast<double>(hw);
            double* gp = fp->grad.data() + ci * hw;
            for (std::int64_t i = 0; i < hw; ++i) gp[i] += g;
        }
    };
    return out;
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias) {
    require(x->shape.size() == 1, "linear: input must be a vector");
    require(weight->shape.size() == 2, "linear: weight must be out x in");
    const int in = x->shape[0], outn = weight->shape[0];
    require(weight->shape[1] == in, "linear: weight in-dim mismatch");
    require(bias->shape.size() == 1 && bias->shape[0] == outn, "linear: bias size mismatch");

    auto out = make_node({outn}, {x, weight, bias});
    for (int oi = 0; oi < outn; ++oi) {
        double s = bias->data[oi];
        const double* row = weight->data.data() + static_cast<std::int64_t>(oi) * in;
        for (int ii = 0; ii < in; ++ii) s += row[ii] * x->data[ii];
        out->data[oi] = s;
    }
    Tensor* o = out.get();
    Tensor* xp = x.get();
    Tensor* wp = weight.get();
    Tensor* bp = bias.get();
    out->backward_fn = [o, xp, wp, bp, in, outn]() {
        for (int oi = 0; oi < outn; ++oi) {
            const double g = o->grad[oi];
            if (g == 0.0) continue;
            if (wp->requires_grad) {
                wp->ensure_grad();
                double* wrow = wp->grad.data() + static_cast<std::int64_t>(oi) * in;
                for (int ii = 0; ii < in; ++ii) wrow[ii] += g * xp->data[ii];
            }
            if (bp->requires_grad) {
                bp->ensure_grad();
                bp->grad[oi] += g;
            }
            if (xp->requires_grad) {
                xp->ensure_grad();
                const double* wrow = wp->data.data() + static_cast<std::int64_t>(oi) * in;
                for (int ii = 0; ii < in; ++ii) xp->grad[ii] += g * wrow[ii];
            }
        }
    };
    return out;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape, "add: shape mismatch");
    auto out = make_node(a->shape, {a, b});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
    Tensor* o = out.get();
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    out->backward_fn = [o, ap, bp, n]() {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) ap->grad[i] += o->grad[i];
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) bp->grad[i] += o->grad[i];
        }
    };
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape, "sub: shape mismatch");
    auto out = make_node(a->shape, {a, b});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
    Tensor* o = out.get();
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    out->backward_fn = [o, ap, bp, n]() {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) ap->grad[i] += o->grad[i];
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) bp->grad[i] -= o->grad[i];
        }
    };
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape, "mul: shape mismatch");
    auto out = make_node(a->shape, {a, b});
    const std::int64_t n = a->size();
    for (std::int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
    Tensor* o = out.get();
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    out->backward_fn = [o, ap, bp, n]() {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) ap->grad[i] += bp->data[i] * o->grad[i];
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) bp->grad[i] += ap->data[i] * o->grad[i];
        }
    };
    return out;
}

TensorPtr sum_all(const TensorPtr& x) {
    auto out = make_node({1}, {x});
    double s = 0.0;
    for (double v : x->data) s += v;
    out->data[0] = s;
    Tensor* o = out.get();
    Tensor* xp = x.get();
    const std::int64_t n = x->size();
    out->backward_fn = [o, xp, n]() {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        const double g = o->grad[0];
        for (std::int64_t i = 0; i < n; ++i) xp->grad[i] += g;
    };
    return out;
}

TensorPtr scale(const TensorPtr& x, double c) {
    auto out = make_node(x->shape, {x});
    const std::int64_t n = x->size();
    for (std::int64_t i = 0; i < n; ++i) out->data[i] = c * x->data[i];
    Tensor* o = out.get();
    Tensor* xp = x.get();
    out->backward_fn = [o, xp, c, n]() {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) xp->grad[i] += c * o->grad[i];
    };
    return out;
}

TensorPtr scale_by(const TensorPtr& x, const TensorPtr& s) {
    require(s->size() == 1, "scale_by: scale must be a 1-element tensor");
    auto out = make_node(x->shape, {x, s});
    const std::int64_t n = x->size();
    const double c = s->data[0];
    for (std::int64_t i = 0; i < n; ++i) out->data[i] = c * x->data[i];
    Tensor* o = out.get();
    Tensor* xp = x.get();
    Tensor* sp = s.get();
    out->backward_fn = [o, xp, sp, n]() {
        if (xp->requires_grad) {
            xp->ensure_grad();
            const double c = sp->data[0];
            for (std::int64_t i = 0; i < n; ++i) xp->grad[i] += c * o->grad[i];
        }
        if (sp->requires_grad) {
            sp->ensure_grad();
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) acc += xp->data[i] * o->grad[i];
            sp->grad[0] += acc;
        }
    };
    return out;
}

TensorPtr channel_scale(const TensorPtr& feat, const TensorPtr& gates) {
    require(feat->shape.size() == 3, "channel_scale: feat must be C x H x W");
    const int c = feat->shape[0];
    require(gates->shape.size() == 1 && gates->shape[0] == c, "channel_scale: gate size mismatch");
    const std::int64_t hw = static_cast<std::int64_t>(feat->shape[1]) * feat->shape[2];

    auto out = make_node(feat->shape, {feat, gates});
    for (int ci = 0; ci < c; ++ci) {
        const double g = gates->data[ci];
        const double* f = feat->data.data() + ci * hw;
        double* oo = out->data.data() + ci * hw;
        for (std::int64_t i = 0; i < hw; ++i) oo[i] = g * f[i];
    }
    Tensor* o = out.get();
    Tensor* fp = feat.get();
    Tensor* gp = gates.get();
    out->backward_fn = [o, fp, gp, c, hw]() {
        for (int ci = 0; ci < c; ++ci) {
            const double* gout = o->grad.data() + ci * hw;
            if (fp->requires_grad) {
                fp->ensure_grad();
                const double g = gp->data[ci];
                double* gf = fp->grad.data() + ci * hw;
                for (std::int64_t i = 0; i < hw; ++i) gf[i] += g * gout[i];
            }
            if (gp->requires_grad) {
                gp->ensure_grad();
                const double* f = fp->data.data() + ci * hw;
                double acc = 0.0;
                for (std::int64_t i = 0; i < hw; ++i) acc += f[i] * gout[i];
                gp->grad[ci] += acc;
            }
        }
    };
    return out;
}

TensorPtr concat(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape.size() == 1 && b->shape.size() == 1, "concat: 1-D tensors only");
    const std::int64_t na = a->size(), nb = b->size();
    auto out = make_node({static_cast<int>(na + nb)}, {a, b});
    std::copy(a->data.begin(), a->data.end(), out->data.begin());
    std::copy(b->data.begin(), b->data.end(), out->data.begin() + na);
    Tensor* o = out.get();
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    out->backward_fn = [o, ap, bp, na, nb]() {
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (std::int64_t i = 0; i < na; ++i) ap->grad[i] += o->grad[i];
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::int64_t i = 0; i < nb; ++i) bp->grad[i] += o->grad[na + i];
        }
    };
    return out;
}

TensorPtr slice(const TensorPtr& x, std::int64_t start, std::int64_t len) {
    require(x->shape.size() == 1, "slice: 1-D tensors only");
    require(start >= 0 && len >= 1 && start + len <= x->size(), "slice: out of range");
    auto out = make_node({static_cast<int>(len)}, {x});
    std::copy(x->data.begin() + start, x->data.begin() + start + len, out->data.begin());
    Tensor* o = out.get();
    Tensor* xp = x.get();
    out->backward_fn = [o, xp, start, len]() {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (std::int64_t i = 0; i < len; ++i) xp->grad[start + i] += o->grad[i];
    };
    return out;
}

TensorPtr reshape(const TensorPtr& x, Shape shape) {
    require(shape_size(shape) == x->size(), "reshape: element count mismatch");
    auto out = make_node(std::move(shape), {x});
    out->data = x->data;
    Tensor* o = out.get();
    Tensor* xp = x.get();
    const std::int64_t n = x->size();
    out->backward_fn = [o, xp, n]() {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) xp->grad[i] += o->grad[i];
    };
    return out;
}

TensorPtr clamp(const TensorPtr& x, double lo, double hi) {
    if (!(lo <= hi)) throw ParameterError("clamp: lo > hi");
    auto out = make_node(x->shape, {x});
    const std::int64_t n = x->size();
    for (std::int64_t i = 0; i < n; ++i) out->data[i] = std::min(hi, std::max(lo, x->data[i]));
    Tensor* o = out.get();
    Tensor* xp = x.get();
    out->backward_fn = [o, xp, lo, hi, n]() {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
            const double v = xp->data[i];
            if (v > lo && v < hi) xp->grad[i] += o->grad[i];
        }
    };
    return out;
}

TensorPtr gaussian_reparam(const TensorPtr& mu, const TensorPtr& logvar, const TensorPtr& z) {
    require(mu->shape == logvar->shape && mu->shape == z->shape, "gaussian_reparam: shape mismatch");
    auto out = make_node(mu->shape, {mu, logvar, z});
    const std::int64_t n = mu->size();
    for (std::int64_t i = 0; i < n; ++i)
        out->data[i] = mu->data[i] + std::exp(0.5 * logvar->data[i]) * z->data[i];
    Tensor* o = out.get();
    Tensor* mp = mu.get();
    Tensor* lp = logvar.get();
    Tensor* zp = z.get();
    out->backward_fn = [o, mp, lp, zp, n]() {
        if (mp->requires_grad) {
            mp->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) mp->grad[i] += o->grad[i];
        }
        if (lp->requires_grad) {
            lp->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
                lp->grad[i] += o->grad[i] * 0.5 * std::exp(0.5 * lp->data[i]) * zp->data[i];
        }
    };
    return out;
}

TensorPtr sum_abs_diff(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape, "sum_abs_diff: shape mismatch");
    auto out = make_node({1}, {a, b});
    const std::int64_t n = a->size();
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += std::abs(a->data[i] - b->data[i]);
    out->data[0] = s;
    Tensor* o = out.get();
    Tensor* ap = a.get();
    Tensor* bp = b.get();
    out->backward_fn = [o, ap, bp, n]() {
        const double g = o->grad[0];
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = ap->data[i] - bp->data[i];
            const double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (ap->requires_grad) {
                ap->ensure_grad();
                ap->grad[i] += g * sg;
            }
            if (bp->requires_grad) {
                bp->ensure_grad();
                bp->grad[i] -= g * sg;
            }
        }
    };
    return out;
}

TensorPtr reconstruction_loss(LossKind kind, const TensorPtr& pred, const TensorPtr& target) {
    require(pred->shape == target->shape, "reconstruction_loss: shape mismatch");
    auto out = make_node({1}, {pred, target});
    const std::int64_t n = pred->size();
    double s = 0.0;
    if (kind == LossKind::mse) {
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = pred->data[i] - target->data[i];
            s += d * d;
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) s += std::abs(pred->data[i] - target->data[i]);
    }
    out->data[0] = s / static_cast<double>(n);

    Tensor* o = out.get();
    Tensor* pp = pred.get();
    Tensor* tp = target.get();
    out->backward_fn = [o, pp, tp, kind, n]() {
        const double g = o->grad[0] / static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = pp->data[i] - tp->data[i];
            double dd;
            if (kind == LossKind::mse)
                dd = 2.0 * d;
            else
                dd = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (pp->requires_grad) {
                pp->ensure_grad();
                pp->grad[i] += g * dd;
            }
            if (tp->requires_grad) {
                tp->ensure_grad();
                tp->grad[i] -= g * dd;
            }
        }
    };
    return out;
}

}  // namespace usr::nn
