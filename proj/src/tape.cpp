#include "gradmorph/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gradmorph/errors.hpp"

namespace gradmorph {

const Tensor& Value::tensor() const { return tape->value(*this); }
const std::vector<int>& Value::shape() const { return tape->value(*this).shape; }

// ---------------------------------------------------------------------------
// plumbing
// ---------------------------------------------------------------------------

int TapeGraph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& TapeGraph::grad_buf(int i) {
    Node& n = at(i);
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

void TapeGraph::check_mine(Value v, const char* op) const {
    if (v.tape != this || v.node < 0 || v.node >= node_count())
        throw ContractViolation(std::string(op) + ": value does not belong to this tape");
}

const Tensor& TapeGraph::value(Value v) const {
    check_mine(v, "value");
    return at(v.node).value;
}

Value TapeGraph::leaf(Tensor t) {
    Node n;
    n.op = "leaf";
    n.value = std::move(t);
    n.needs_grad = true;
    const int id = push(std::move(n));
    leaves_.push_back(id);
    return {this, id};
}

Value TapeGraph::constant(Tensor t) {
    Node n;
    n.op = "constant";
    n.value = std::move(t);
    n.needs_grad = false;
    return {this, push(std::move(n))};
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    int ci, h, w, co, kh, kw, ph, pw, ho, wo;
};

ConvDims conv_dims(const Tensor& in, const Tensor& k, const Tensor& b, Padding pad) {
    if (in.rank() != 3 || k.rank() != 4 || b.rank() != 1)
        throw ContractViolation("conv2d: expected input rank 3, kernel rank 4, bias rank 1; got " +
                                in.shape_str() + ", " + k.shape_str() + ", " + b.shape_str());
    ConvDims d{};
    d.ci = in.dim(0);
    d.h = in.dim(1);
    d.w = in.dim(2);
    d.co = k.dim(0);
    d.kh = k.dim(2);
    d.kw = k.dim(3);
    if (k.dim(1) != d.ci)
        throw ContractViolation("conv2d: kernel input channels " + std::to_string(k.dim(1)) +
                                " != image channels " + std::to_string(d.ci));
    if (b.dim(0) != d.co)
        throw ContractViolation("conv2d: bias length " + std::to_string(b.dim(0)) +
                                " != output channels " + std::to_string(d.co));
    if (pad == Padding::Same) {
        if (d.kh % 2 == 0 || d.kw % 2 == 0)
            throw ContractViolation("conv2d: same padding requires odd kernel dims, got " + k.shape_str());
        d.ph = (d.kh - 1) / 2;
        d.pw = (d.kw - 1) / 2;
        d.ho = d.h;
        d.wo = d.w;
    } else {
        d.ph = 0;
        d.pw = 0;
        d.ho = d.h - d.kh + 1;
        d.wo = d.w - d.kw + 1;
        if (d.ho < 1 || d.wo < 1)
            throw ContractViolation("conv2d: kernel " + k.shape_str() + " larger than input " + in.shape_str());
    }
    return d;
}

Tensor conv2d_forward(const Tensor& in, const Tensor& k, const Tensor& b, const ConvDims& d) {
    Tensor out({d.co, d.ho, d.wo});
    const double* __restrict kp = k.ptr();
    const double* __restrict ip = in.ptr();
    double* __restrict op = out.ptr();
    for (int o = 0; o < d.co; ++o) {
        double* __restrict oc = op + static_cast<std::size_t>(o) * d.ho * d.wo;
        const double bo = b[o];
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.ho) * d.wo; ++i) oc[i] = bo;
        for (int i = 0; i < d.ci; ++i) {
            const double* __restrict ic = ip + static_cast<std::size_t>(i) * d.h * d.w;
            for (int ky = 0; ky < d.kh; ++ky) {
                const int dy = ky - d.ph;
                const int y0 = std::max(0, -dy), y1 = std::min(d.ho, d.h - dy);
                for (int kx = 0; kx < d.kw; ++kx) {
                    const int dx = kx - d.pw;
                    const int x0 = std::max(0, -dx), x1 = std::min(d.wo, d.w - dx);
                    const double wv = kp[((static_cast<std::size_t>(o) * d.ci + i) * d.kh + ky) * d.kw + kx];
                    if (wv == 0.0) continue;
                    for (int y = y0; y < y1; ++y) {
                        double* __restrict orow = oc + static_cast<std::size_t>(y) * d.wo;
                        const double* __restrict irow = ic + static_cast<std::size_t>(y + dy) * d.w + dx;
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

void conv2d_backward_input(const Tensor& gout, const Tensor& k, const ConvDims& d, Tensor& gin) {
    const double* __restrict kp = k.ptr();
    const double* __restrict gp = gout.ptr();
    double* __restrict inp = gin.ptr();
    for (int i = 0; i < d.ci; ++i) {
        double* __restrict ic = inp + static_cast<std::size_t>(i) * d.h * d.w;
        for (int o = 0; o < d.co; ++o) {
            const double* __restrict gc = gp + static_cast<std::size_t>(o) * d.ho * d.wo;
            for (int ky = 0; ky < d.kh; ++ky) {
                const int dy = ky - d.ph;
                const int y0 = std::max(0, -dy), y1 = std::min(d.ho, d.h - dy);
                for (int kx = 0; kx < d.kw; ++kx) {
                    const int dx = kx - d.pw;
                    const int x0 = std::max(0, -dx), x1 = std::min(d.wo, d.w - dx);
                    const double wv = kp[((static_cast<std::size_t>(o) * d.ci + i) * d.kh + ky) * d.kw + kx];
                    if (wv == 0.0) continue;
                    for (int y = y0; y < y1; ++y) {
                        const double* __restrict grow = gc + static_cast<std::size_t>(y) * d.wo;
                        double* __restrict irow = ic + static_cast<std::size_t>(y + dy) * d.w + dx;
                        for (int x = x0; x < x1; ++x) irow[x] += wv * grow[x];
                    }
                }
            }
        }
    }
}

void conv2d_backward_kernel(const Tensor& gout, const Tensor& in, const ConvDims& d, Tensor& gk) {
    const double* __restrict gp = gout.ptr();
    const double* __restrict ip = in.ptr();
    double* __restrict kp = gk.ptr();
    for (int o = 0; o < d.co; ++o) {
        const double* __restrict gc = gp + static_cast<std::size_t>(o) * d.ho * d.wo;
        for (int i = 0; i < d.ci; ++i) {
            const double* __restrict ic = ip + static_cast<std::size_t>(i) * d.h * d.w;
            for (int ky = 0; ky < d.kh; ++ky) {
                const int dy = ky - d.ph;
                const int y0 = std::max(0, -dy), y1 = std::min(d.ho, d.h - dy);
                for (int kx = 0; kx < d.kw; ++kx) {
                    const int dx = kx - d.pw;
                    const int x0 = std::max(0, -dx), x1 = std::min(d.wo, d.w - dx);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* __restrict grow = gc + static_cast<std::size_t>(y) * d.wo;
                        const double* __restrict irow = ic + static_cast<std::size_t>(y + dy) * d.w + dx;
                        for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
                    }
                    kp[((static_cast<std::size_t>(o) * d.ci + i) * d.kh + ky) * d.kw + kx] += acc;
                }
            }
        }
    }
}

void conv2d_backward_bias(const Tensor& gout, const ConvDims& d, Tensor& gb) {
    for (int o = 0; o < d.co; ++o) {
        const double* gc = gout.ptr() + static_cast<std::size_t>(o) * d.ho * d.wo;
        double acc = 0.0;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.ho) * d.wo; ++i) acc += gc[i];
        gb[o] += acc;
    }
}

// Summed-area table with one-row/col zero border: sat[(y)*(w+1)+x] holds the
// sum over rows [0,y) and cols [0,x).
void build_sat(const double* img, int h, int w, std::vector<double>& sat) {
    sat.assign(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double rowsum = 0.0;
        const double* row = img + static_cast<std::size_t>(y) * w;
        const double* up = sat.data() + static_cast<std::size_t>(y) * (w + 1);
        double* cur = sat.data() + static_cast<std::size_t>(y + 1) * (w + 1);
        for (int x = 0; x < w; ++x) {
            rowsum += row[x];
            cur[x + 1] = up[x + 1] + rowsum;
        }
    }
}

inline double sat_box(const std::vector<double>& sat, int w1, int y0, int y1, int x0, int x1) {
    // inclusive box [y0,y1] x [x0,x1]
    const auto s = [&](int y, int x) { return sat[static_cast<std::size_t>(y) * w1 + x]; };
    return s(y1 + 1, x1 + 1) - s(y0, x1 + 1) - s(y1 + 1, x0) + s(y0, x0);
}

}  // namespace

Value TapeGraph::conv2d(Value input, Value kernel, Value bias, Padding pad) {
    check_mine(input, "conv2d");
    check_mine(kernel, "conv2d");
    check_mine(bias, "conv2d");
    const ConvDims d = conv_dims(at(input.node).value, at(kernel.node).value, at(bias.node).value, pad);

    Node n;
    n.op = "conv2d";
    n.parents = {input.node, kernel.node, bias.node};
    n.value = conv2d_forward(at(input.node).value, at(kernel.node).value, at(bias.node).value, d);
    n.needs_grad = at(input.node).needs_grad || at(kernel.node).needs_grad || at(bias.node).needs_grad;
    n.backprop = [d](TapeGraph& g, const Node& self) {
        const int pin = self.parents[0], pk = self.parents[1], pb = self.parents[2];
        if (g.at(pin).needs_grad) conv2d_backward_input(self.grad, g.at(pk).value, d, g.grad_buf(pin));
        if (g.at(pk).needs_grad) conv2d_backward_kernel(self.grad, g.at(pin).value, d, g.grad_buf(pk));
        if (g.at(pb).needs_grad) conv2d_backward_bias(self.grad, d, g.grad_buf(pb));
    };
    return {this, push(std::move(n))};
}

// ---------------------------------------------------------------------------
// pooling / resampling / concat
// ---------------------------------------------------------------------------

Value TapeGraph::maxpool2d(Value input) {
    check_mine(input, "maxpool2d");
    const Tensor& in = at(input.node).value;
    if (in.rank() != 3) throw ContractViolation("maxpool2d: expected rank-3 input, got " + in.shape_str());
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw ContractViolation("maxpool2d: spatial dims must be even, got " + in.shape_str());

    Tensor out({c, h / 2, w / 2});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.size()));
    std::int64_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; y += 2) {
            for (int x = 0; x < w; x += 2) {
                // scan in flat order so ties pick the lowest flat index
                std::int64_t best = (static_cast<std::int64_t>(ch) * h + y) * w + x;
                double bv = in[best];
                const int dys[3][2] = {{0, 1}, {1, 0}, {1, 1}};
                for (const auto& dd : dys) {
                    const std::int64_t idx = (static_cast<std::int64_t>(ch) * h + y + dd[0]) * w + x + dd[1];
                    if (in[idx] > bv) {
                        bv = in[idx];
                        best = idx;
                    }
                }
                out[oi] = bv;
                argmax[static_cast<std::size_t>(oi)] = best;
                ++oi;
            }
        }
    }

    Node n;
    n.op = "maxpool2d";
    n.parents = {input.node};
    n.value = std::move(out);
    n.needs_grad = at(input.node).needs_grad;
    n.backprop = [argmax = std::move(argmax)](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gin = g.grad_buf(p);
        for (std::size_t i = 0; i < argmax.size(); ++i) gin[argmax[i]] += self.grad[static_cast<std::int64_t>(i)];
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::upsample_nearest(Value input) {
    check_mine(input, "upsample_nearest");
    const Tensor& in = at(input.node).value;
    if (in.rank() != 3) throw ContractViolation("upsample_nearest: expected rank-3 input, got " + in.shape_str());
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);

    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y) {
            const double* irow = in.ptr() + (static_cast<std::size_t>(ch) * h + y / 2) * w;
            double* orow = out.ptr() + (static_cast<std::size_t>(ch) * 2 * h + y) * 2 * w;
            for (int x = 0; x < 2 * w; ++x) orow[x] = irow[x / 2];
        }

    Node n;
    n.op = "upsample_nearest";
    n.parents = {input.node};
    n.value = std::move(out);
    n.needs_grad = at(input.node).needs_grad;
    n.backprop = [c, h, w](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gin = g.grad_buf(p);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < 2 * h; ++y) {
                double* irow = gin.ptr() + (static_cast<std::size_t>(ch) * h + y / 2) * w;
                const double* grow = self.grad.ptr() + (static_cast<std::size_t>(ch) * 2 * h + y) * 2 * w;
                for (int x = 0; x < 2 * w; ++x) irow[x / 2] += grow[x];
            }
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::concat_channels(Value a, Value b) {
    check_mine(a, "concat_channels");
    check_mine(b, "concat_channels");
    const Tensor& ta = at(a.node).value;
    const Tensor& tb = at(b.node).value;
    if (ta.rank() != 3 || tb.rank() != 3 || ta.dim(1) != tb.dim(1) || ta.dim(2) != tb.dim(2))
        throw ContractViolation("concat_channels: spatial dims must match, got " + ta.shape_str() + " vs " +
                                tb.shape_str());
    const int c1 = ta.dim(0), c2 = tb.dim(0), h = ta.dim(1), w = ta.dim(2);

    Tensor out({c1 + c2, h, w});
    std::memcpy(out.ptr(), ta.ptr(), sizeof(double) * static_cast<std::size_t>(ta.size()));
    std::memcpy(out.ptr() + ta.size(), tb.ptr(), sizeof(double) * static_cast<std::size_t>(tb.size()));

    Node n;
    n.op = "concat_channels";
    n.parents = {a.node, b.node};
    n.value = std::move(out);
    n.needs_grad = at(a.node).needs_grad || at(b.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int pa = self.parents[0], pb = self.parents[1];
        const std::int64_t na = g.at(pa).value.size();
        const std::int64_t nb = g.at(pb).value.size();
        if (g.at(pa).needs_grad) {
            Tensor& ga = g.grad_buf(pa);
            for (std::int64_t i = 0; i < na; ++i) ga[i] += self.grad[i];
        }
        if (g.at(pb).needs_grad) {
            Tensor& gb = g.grad_buf(pb);
            for (std::int64_t i = 0; i < nb; ++i) gb[i] += self.grad[na + i];
        }
    };
    return {this, push(std::move(n))};
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

Value TapeGraph::relu(Value x) {
    check_mine(x, "relu");
    const Tensor& in = at(x.node).value;
    Tensor out(in.shape);
    for (std::int64_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;

    Node n;
    n.op = "relu";
    n.parents = {x.node};
    n.value = std::move(out);
    n.needs_grad = at(x.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        const Tensor& in = g.at(p).value;
        Tensor& gin = g.grad_buf(p);
        for (std::int64_t i = 0; i < in.size(); ++i)
            if (in[i] > 0.0) gin[i] += self.grad[i];
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::sigmoid(Value x) {
    check_mine(x, "sigmoid");
    const Tensor& in = at(x.node).value;
    Tensor out(in.shape);
    for (std::int64_t i = 0; i < in.size(); ++i) {
        const double v = in[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }

    Node n;
    n.op = "sigmoid";
    n.parents = {x.node};
    n.value = std::move(out);
    n.needs_grad = at(x.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gin = g.grad_buf(p);
        for (std::int64_t i = 0; i < self.value.size(); ++i) {
            const double s = self.value[i];
            gin[i] += self.grad[i] * s * (1.0 - s);
        }
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::linear(Value x) {
    check_mine(x, "linear");
    Node n;
    n.op = "linear";
    n.parents = {x.node};
    n.value = at(x.node).value;
    n.needs_grad = at(x.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gin = g.grad_buf(p);
        for (std::int64_t i = 0; i < self.grad.size(); ++i) gin[i] += self.grad[i];
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::softmax_channels(Value logits) {
    check_mine(logits, "softmax_channels");
    const Tensor& in = at(logits.node).value;
    if (in.rank() != 3) throw ContractViolation("softmax_channels: expected rank-3 logits, got " + in.shape_str());
    const int l = in.dim(0), h = in.dim(1), w = in.dim(2);
    if (l < 2) throw ContractViolation("softmax_channels: need at least 2 channels, got " + in.shape_str());
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;

    Tensor out(in.shape);
    for (std::int64_t p = 0; p < plane; ++p) {
        double m = in[p];
        for (int c = 1; c < l; ++c) m = std::max(m, in[c * plane + p]);
        double z = 0.0;
        for (int c = 0; c < l; ++c) {
            const double e = std::exp(in[c * plane + p] - m);
            out[c * plane + p] = e;
            z += e;
        }
        for (int c = 0; c < l; ++c) out[c * plane + p] /= z;
    }

    Node n;
    n.op = "softmax_channels";
    n.parents = {logits.node};
    n.value = std::move(out);
    n.needs_grad = at(logits.node).needs_grad;
    n.backprop = [l, plane](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gin = g.grad_buf(p);
        for (std::int64_t px = 0; px < plane; ++px) {
            double dot = 0.0;
            for (int c = 0; c < l; ++c) dot += self.grad[c * plane + px] * self.value[c * plane + px];
            for (int c = 0; c < l; ++c) {
                const double s = self.value[c * plane + px];
                gin[c * plane + px] += s * (self.grad[c * plane + px] - dot);
            }
        }
    };
    return {this, push(std::move(n))};
}

// ---------------------------------------------------------------------------
// elementwise / reductions
// ---------------------------------------------------------------------------

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ContractViolation(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}
}  // namespace

Value TapeGraph::add(Value a, Value b) {
    check_mine(a, "add");
    check_mine(b, "add");
    const Tensor& ta = at(a.node).value;
    const Tensor& tb = at(b.node).value;
    require_same_shape(ta, tb, "add");
    Tensor out(ta.shape);
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] + tb[i];

    Node n;
    n.op = "add";
    n.parents = {a.node, b.node};
    n.value = std::move(out);
    n.needs_grad = at(a.node).needs_grad || at(b.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        for (int side = 0; side < 2; ++side) {
            const int p = self.parents[static_cast<std::size_t>(side)];
            if (!g.at(p).needs_grad) continue;
            Tensor& gp = g.grad_buf(p);
            for (std::int64_t i = 0; i < self.grad.size(); ++i) gp[i] += self.grad[i];
        }
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::sub(Value a, Value b) {
    check_mine(a, "sub");
    check_mine(b, "sub");
    const Tensor& ta = at(a.node).value;
    const Tensor& tb = at(b.node).value;
    require_same_shape(ta, tb, "sub");
    Tensor out(ta.shape);
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] - tb[i];

    Node n;
    n.op = "sub";
    n.parents = {a.node, b.node};
    n.value = std::move(out);
    n.needs_grad = at(a.node).needs_grad || at(b.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int pa = self.parents[0], pb = self.parents[1];
        if (g.at(pa).needs_grad) {
            Tensor& ga = g.grad_buf(pa);
            for (std::int64_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
        }
        if (g.at(pb).needs_grad) {
            Tensor& gb = g.grad_buf(pb);
            for (std::int64_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i];
        }
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::mul(Value a, Value b) {
    check_mine(a, "mul");
    check_mine(b, "mul");
    const Tensor& ta = at(a.node).value;
    const Tensor& tb = at(b.node).value;
    require_same_shape(ta, tb, "mul");
    Tensor out(ta.shape);
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] * tb[i];

    Node n;
    n.op = "mul";
    n.parents = {a.node, b.node};
    n.value = std::move(out);
    n.needs_grad = at(a.node).needs_grad || at(b.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int pa = self.parents[0], pb = self.parents[1];
        if (g.at(pa).needs_grad) {
            Tensor& ga = g.grad_buf(pa);
            const Tensor& vb = g.at(pb).value;
            for (std::int64_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * vb[i];
        }
        if (g.at(pb).needs_grad) {
            Tensor& gb = g.grad_buf(pb);
            const Tensor& va = g.at(pa).value;
            for (std::int64_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * va[i];
        }
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::div(Value a, Value b) {
    check_mine(a, "div");
    check_mine(b, "div");
    const Tensor& ta = at(a.node).value;
    const Tensor& tb = at(b.node).value;
    require_same_shape(ta, tb, "div");
    Tensor out(ta.shape);
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] / tb[i];

    Node n;
    n.op = "div";
    n.parents = {a.node, b.node};
    n.value = std::move(out);
    n.needs_grad = at(a.node).needs_grad || at(b.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int pa = self.parents[0], pb = self.parents[1];
        const Tensor& va = g.at(pa).value;
        const Tensor& vb = g.at(pb).value;
        if (g.at(pa).needs_grad) {
            Tensor& ga = g.grad_buf(pa);
            for (std::int64_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] / vb[i];
        }
        if (g.at(pb).needs_grad) {
            Tensor& gb = g.grad_buf(pb);
            for (std::int64_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i] * va[i] / (vb[i] * vb[i]);
        }
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::add_scalar(Value a, double c) {
    check_mine(a, "add_scalar");
    const Tensor& ta = at(a.node).value;
    Tensor out(ta.shape);
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] + c;

    Node n;
    n.op = "add_scalar";
    n.parents = {a.node};
    n.value = std::move(out);
    n.needs_grad = at(a.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gp = g.grad_buf(p);
        for (std::int64_t i = 0; i < self.grad.size(); ++i) gp[i] += self.grad[i];
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::mul_scalar(Value a, double c) {
    check_mine(a, "mul_scalar");
    const Tensor& ta = at(a.node).value;
    Tensor out(ta.shape);
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] * c;

    Node n;
    n.op = "mul_scalar";
    n.parents = {a.node};
    n.value = std::move(out);
    n.needs_grad = at(a.node).needs_grad;
    n.backprop = [c](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gp = g.grad_buf(p);
        for (std::int64_t i = 0; i < self.grad.size(); ++i) gp[i] += self.grad[i] * c;
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::abs(Value a) {
    check_mine(a, "abs");
    const Tensor& ta = at(a.node).value;
    Tensor out(ta.shape);
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = std::fabs(ta[i]);

    Node n;
    n.op = "abs";
    n.parents = {a.node};
    n.value = std::move(out);
    n.needs_grad = at(a.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        const Tensor& in = g.at(p).value;
        Tensor& gp = g.grad_buf(p);
        for (std::int64_t i = 0; i < self.grad.size(); ++i) {
            if (in[i] > 0.0)
                gp[i] += self.grad[i];
            else if (in[i] < 0.0)
                gp[i] -= self.grad[i];
            // subgradient 0 at exactly 0
        }
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::sum(Value a) {
    check_mine(a, "sum");
    const Tensor& ta = at(a.node).value;
    double acc = 0.0;
    for (std::int64_t i = 0; i < ta.size(); ++i) acc += ta[i];

    Node n;
    n.op = "sum";
    n.parents = {a.node};
    n.value = Tensor::scalar(acc);
    n.needs_grad = at(a.node).needs_grad;
    n.backprop = [](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gp = g.grad_buf(p);
        const double gv = self.grad[0];
        for (std::int64_t i = 0; i < gp.size(); ++i) gp[i] += gv;
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::mean(Value a) {
    check_mine(a, "mean");
    const Tensor& ta = at(a.node).value;
    double acc = 0.0;
    for (std::int64_t i = 0; i < ta.size(); ++i) acc += ta[i];
    const double inv_n = 1.0 / static_cast<double>(ta.size());

    Node n;
    n.op = "mean";
    n.parents = {a.node};
    n.value = Tensor::scalar(acc * inv_n);
    n.needs_grad = at(a.node).needs_grad;
    n.backprop = [inv_n](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gp = g.grad_buf(p);
        const double gv = self.grad[0] * inv_n;
        for (std::int64_t i = 0; i < gp.size(); ++i) gp[i] += gv;
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::window_mean(Value a, int w) {
    check_mine(a, "window_mean");
    const Tensor& in = at(a.node).value;
    if (in.rank() != 3) throw ContractViolation("window_mean: expected rank-3 input, got " + in.shape_str());
    if (w < 2) throw ContractViolation("window_mean: window must be >= 2, got " + std::to_string(w));
    const int c = in.dim(0), h = in.dim(1), wd = in.dim(2);
    if (h < w || wd < w)
        throw ContractViolation("window_mean: image " + in.shape_str() + " smaller than window " + std::to_string(w));
    const int ho = h - w + 1, wo = wd - w + 1;
    const double inv = 1.0 / (static_cast<double>(w) * w);

    Tensor out({c, ho, wo});
    std::vector<double> sat;
    for (int ch = 0; ch < c; ++ch) {
        build_sat(in.ptr() + static_cast<std::size_t>(ch) * h * wd, h, wd, sat);
        double* oc = out.ptr() + static_cast<std::size_t>(ch) * ho * wo;
        for (int y = 0; y < ho; ++y)
            for (int x = 0; x < wo; ++x)
                oc[static_cast<std::size_t>(y) * wo + x] = sat_box(sat, wd + 1, y, y + w - 1, x, x + w - 1) * inv;
    }

    Node n;
    n.op = "window_mean";
    n.parents = {a.node};
    n.value = std::move(out);
    n.needs_grad = at(a.node).needs_grad;
    n.backprop = [c, h, wd, ho, wo, w, inv](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gin = g.grad_buf(p);
        std::vector<double> gsat;
        for (int ch = 0; ch < c; ++ch) {
            build_sat(self.grad.ptr() + static_cast<std::size_t>(ch) * ho * wo, ho, wo, gsat);
            double* ic = gin.ptr() + static_cast<std::size_t>(ch) * h * wd;
            for (int y = 0; y < h; ++y) {
                const int y0 = std::max(0, y - w + 1), y1 = std::min(ho - 1, y);
                if (y0 > y1) continue;
                for (int x = 0; x < wd; ++x) {
                    const int x0 = std::max(0, x - w + 1), x1 = std::min(wo - 1, x);
                    if (x0 > x1) continue;
                    ic[static_cast<std::size_t>(y) * wd + x] += sat_box(gsat, wo + 1, y0, y1, x0, x1) * inv;
                }
            }
        }
    };
    return {this, push(std::move(n))};
}

// ---------------------------------------------------------------------------
// task-specific scalar heads
// ---------------------------------------------------------------------------

namespace {
void check_labels(const Tensor& logits, const LabelMap& m, const char* op, const char* which) {
    if (logits.rank() != 3)
        throw ContractViolation(std::string(op) + ": expected rank-3 logits, got " + logits.shape_str());
    if (m.height != logits.dim(1) || m.width != logits.dim(2))
        throw ContractViolation(std::string(op) + ": " + which + " map " + std::to_string(m.height) + "x" +
                                std::to_string(m.width) + " does not match logits " + logits.shape_str());
    const int l = logits.dim(0);
    for (int lab : m.labels)
        if (lab < 0 || lab >= l)
            throw ContractViolation(std::string(op) + ": " + which + " label " + std::to_string(lab) +
                                    " out of range [0," + std::to_string(l) + ")");
}
}  // namespace

Value TapeGraph::label_gap_sum(Value logits, const LabelMap& pred, const LabelMap& gt) {
    check_mine(logits, "label_gap_sum");
    const Tensor& lg = at(logits.node).value;
    check_labels(lg, pred, "label_gap_sum", "pred");
    check_labels(lg, gt, "label_gap_sum", "gt");
    const std::int64_t plane = static_cast<std::int64_t>(lg.dim(1)) * lg.dim(2);

    double acc = 0.0;
    for (std::int64_t p = 0; p < plane; ++p)
        acc += lg[pred.labels[static_cast<std::size_t>(p)] * plane + p] -
               lg[gt.labels[static_cast<std::size_t>(p)] * plane + p];

    Node n;
    n.op = "label_gap_sum";
    n.parents = {logits.node};
    n.value = Tensor::scalar(acc);
    n.needs_grad = at(logits.node).needs_grad;
    n.backprop = [pred, gt, plane](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gl = g.grad_buf(p);
        const double gv = self.grad[0];
        for (std::int64_t px = 0; px < plane; ++px) {
            const int lp = pred.labels[static_cast<std::size_t>(px)];
            const int lg_ = gt.labels[static_cast<std::size_t>(px)];
            if (lp == lg_) continue;
            gl[lp * plane + px] += gv;
            gl[lg_ * plane + px] -= gv;
        }
    };
    return {this, push(std::move(n))};
}

Value TapeGraph::softmax_cross_entropy(Value logits, const LabelMap& labels) {
    check_mine(logits, "softmax_cross_entropy");
    const Tensor& lg = at(logits.node).value;
    check_labels(lg, labels, "softmax_cross_entropy", "label");
    const int l = lg.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(lg.dim(1)) * lg.dim(2);

    Tensor probs(lg.shape);
    double loss = 0.0;
    for (std::int64_t p = 0; p < plane; ++p) {
        double m = lg[p];
        for (int c = 1; c < l; ++c) m = std::max(m, lg[c * plane + p]);
        double z = 0.0;
        for (int c = 0; c < l; ++c) {
            const double e = std::exp(lg[c * plane + p] - m);
            probs[c * plane + p] = e;
            z += e;
        }
        for (int c = 0; c < l; ++c) probs[c * plane + p] /= z;
        loss += m + std::log(z) - lg[labels.labels[static_cast<std::size_t>(p)] * plane + p];
    }
    loss /= static_cast<double>(plane);

    Node n;
    n.op = "softmax_cross_entropy";
    n.parents = {logits.node};
    n.value = Tensor::scalar(loss);
    n.needs_grad = at(logits.node).needs_grad;
    n.backprop = [labels, probs = std::move(probs), l, plane](TapeGraph& g, const Node& self) {
        const int p = self.parents[0];
        if (!g.at(p).needs_grad) return;
        Tensor& gl = g.grad_buf(p);
        const double gv = self.grad[0] / static_cast<double>(plane);
        for (std::int64_t px = 0; px < plane; ++px) {
            const int lab = labels.labels[static_cast<std::size_t>(px)];
            for (int c = 0; c < l; ++c)
                gl[c * plane + px] += gv * (probs[c * plane + px] - (c == lab ? 1.0 : 0.0));
        }
    };
    return {this, push(std::move(n))};
}

// ---------------------------------------------------------------------------
// reverse pass
// ---------------------------------------------------------------------------

std::map<int, Tensor> TapeGraph::backward(Value root) {
    check_mine(root, "backward");
    if (at(root.node).value.size() != 1)
        throw ContractViolation("backward: root must be scalar, got shape " + at(root.node).value.shape_str());

    for (Node& n : nodes_) n.grad = Tensor();
    grad_buf(root.node)[0] = 1.0;

    for (int i = root.node; i >= 0; --i) {
        Node& n = at(i);
        if (n.grad.data.empty() || !n.needs_grad || !n.backprop) continue;
        n.backprop(*this, n);
    }

    std::map<int, Tensor> out;
    for (int leaf : leaves_) out.emplace(leaf, gradient({this, leaf}));
    return out;
}

Tensor TapeGraph::gradient(Value v) const {
    check_mine(v, "gradient");
    const Node& n = at(v.node);
    if (n.grad.data.empty()) return Tensor::zeros(n.value.shape);
    return n.grad;
}

}  // namespace gradmorph
