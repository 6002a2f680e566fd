#include "revsci/conv3d.hpp"

#include <string>

namespace revsci {

namespace {

using Idx = std::ptrdiff_t;

void check_axis(Idx out, const char* axis) {
    if (out < 1) {
        throw ShapeError(std::string("conv3d: non-positive output extent on axis ") + axis);
    }
}

// Valid output range [lo, hi) so that o * s - p + k stays inside [0, in).
void valid_range(Idx out, Idx in, Idx stride, Idx pad, Idx k, Idx& lo, Idx& hi) {
    // o >= ceil((p - k) / s)
    const Idx num = pad - k;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    // o <= floor((in - 1 + p - k) / s)
    const Idx top = in - 1 + pad - k;
    hi = top < 0 ? 0 : top / stride + 1;
    lo = std::max<Idx>(lo, 0);
    hi = std::min(hi, out);
    if (hi < lo) hi = lo;
}

template <typename T>
void check_weights(const Tensor<T>& weights, const Conv3dSpec& spec) {
    if (weights.rank() != 5) throw ShapeError("conv3d: weights must be rank 5, got " + weights.shape_string());
    if (weights.dim(0) != spec.out_channels) throw ShapeError("conv3d: weights axis 0 (out channels) is " + std::to_string(weights.dim(0)) + ", spec says " + std::to_string(spec.out_channels));
    if (weights.dim(1) != spec.in_channels) throw ShapeError("conv3d: weights axis 1 (in channels) is " + std::to_string(weights.dim(1)) + ", spec says " + std::to_string(spec.in_channels));
    for (int a = 0; a < 3; ++a) {
        if (weights.dim(static_cast<std::size_t>(2 + a)) != spec.kernel[static_cast<std::size_t>(a)]) {
            throw ShapeError("conv3d: weights kernel extent mismatch on axis " + std::to_string(2 + a));
        }
    }
}

template <typename T>
void check_input(const Tensor<T>& input, std::size_t channels, const char* what) {
    if (input.rank() != 4) throw ShapeError(std::string("conv3d: ") + what + " must be rank 4 [C,T,H,W], got " + input.shape_string());
    if (input.dim(0) != channels) {
        throw ShapeError(std::string("conv3d: ") + what + " channel axis is " + std::to_string(input.dim(0)) + ", expected " + std::to_string(channels));
    }
}

} // namespace

Extents3 Conv3dSpec::output_extents(const Extents3& in) const {
    Extents3 out{};
    const char* axes[3] = {"t", "h", "w"};
    for (std::size_t a = 0; a < 3; ++a) {
        const Idx e = (static_cast<Idx>(in[a]) + 2 * static_cast<Idx>(padding[a]) -
                       static_cast<Idx>(kernel[a])) / static_cast<Idx>(stride[a]) + 1;
        check_axis(e, axes[a]);
        out[a] = static_cast<std::size_t>(e);
    }
    return out;
}

Extents3 Conv3dSpec::transposed_extents(const Extents3& in, const Offsets3& output_padding) const {
    Extents3 out{};
    const char* axes[3] = {"t", "h", "w"};
    for (std::size_t a = 0; a < 3; ++a) {
        if (output_padding[a] >= stride[a]) {
            throw ShapeError(std::string("conv3d: output padding must be below stride on axis ") + axes[a]);
        }
        const Idx e = (static_cast<Idx>(in[a]) - 1) * static_cast<Idx>(stride[a]) -
                      2 * static_cast<Idx>(padding[a]) + static_cast<Idx>(kernel[a]) +
                      static_cast<Idx>(output_padding[a]);
        check_axis(e, axes[a]);
        out[a] = static_cast<std::size_t>(e);
    }
    return out;
}

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         const Conv3dSpec& spec) {
    check_input(input, spec.in_channels, "input");
    check_weights(weights, spec);
    if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != spec.out_channels)) {
        throw ShapeError("conv3d: bias extent mismatch, expected [" + std::to_string(spec.out_channels) + "]");
    }

    const Idx Ci = static_cast<Idx>(spec.in_channels), Co = static_cast<Idx>(spec.out_channels);
    const Idx Ti = static_cast<Idx>(input.dim(1)), Hi = static_cast<Idx>(input.dim(2)), Wi = static_cast<Idx>(input.dim(3));
    const Extents3 oe = spec.output_extents({input.dim(1), input.dim(2), input.dim(3)});
    const Idx To = static_cast<Idx>(oe[0]), Ho = static_cast<Idx>(oe[1]), Wo = static_cast<Idx>(oe[2]);
    const Idx kt = static_cast<Idx>(spec.kernel[0]), kh = static_cast<Idx>(spec.kernel[1]), kw = static_cast<Idx>(spec.kernel[2]);
    const Idx st = static_cast<Idx>(spec.stride[0]), sh = static_cast<Idx>(spec.stride[1]), sw = static_cast<Idx>(spec.stride[2]);
    const Idx pt = static_cast<Idx>(spec.padding[0]), ph = static_cast<Idx>(spec.padding[1]), pw = static_cast<Idx>(spec.padding[2]);

    Tensor<T> out({spec.out_channels, oe[0], oe[1], oe[2]});
    const T* in = input.data();
    const T* w = weights.data();
    T* o = out.data();

    for (Idx co = 0; co < Co; ++co) {
        const T b = bias.empty() ? T(0) : bias[static_cast<std::size_t>(co)];
        for (Idx to = 0; to < To; ++to) {
            for (Idx ho = 0; ho < Ho; ++ho) {
                T* orow = o + ((co * To + to) * Ho + ho) * Wo;
                for (Idx wo = 0; wo < Wo; ++wo) orow[wo] = b;
                for (Idx ci = 0; ci < Ci; ++ci) {
                    for (Idx dt = 0; dt < kt; ++dt) {
                        const Idx ti = to * st - pt + dt;
                        if (ti < 0 || ti >= Ti) continue;
                        for (Idx dh = 0; dh < kh; ++dh) {
                            const Idx hi = ho * sh - ph + dh;
                            if (hi < 0 || hi >= Hi) continue;
                            const T* irow = in + ((ci * Ti + ti) * Hi + hi) * Wi;
                            const T* wrow = w + (((co * Ci + ci) * kt + dt) * kh + dh) * kw;
                            for (Idx dw = 0; dw < kw; ++dw) {
                                Idx lo, hi2;
                                valid_range(Wo, Wi, sw, pw, dw, lo, hi2);
                                const T wgt = wrow[dw];
                                const T* ip = irow - pw + dw;
                                if (sw == 1) {
                                    for (Idx wo = lo; wo < hi2; ++wo) orow[wo] += wgt * ip[wo];
                                } else {
                                    for (Idx wo = lo; wo < hi2; ++wo) orow[wo] += wgt * ip[wo * sw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> conv3d_backward_data(const Tensor<T>& grad_out, const Tensor<T>& weights,
                               const Conv3dSpec& spec, const Extents3& input_extents) {
    check_input(grad_out, spec.out_channels, "grad_out");
    check_weights(weights, spec);
    const Extents3 expect = spec.output_extents(input_extents);
    for (std::size_t a = 0; a < 3; ++a) {
        if (grad_out.dim(a + 1) != expect[a]) {
            throw ShapeError("conv3d: grad_out extent mismatch on axis " + std::to_string(a + 1) +
                             " for input extents " + Tensor<T>::shape_string({input_extents[0], input_extents[1], input_extents[2]}));
        }
    }

    const Idx Ci = static_cast<Idx>(spec.in_channels), Co = static_cast<Idx>(spec.out_channels);
    const Idx Ti = static_cast<Idx>(input_extents[0]), Hi = static_cast<Idx>(input_extents[1]), Wi = static_cast<Idx>(input_extents[2]);
    const Idx To = static_cast<Idx>(grad_out.dim(1)), Ho = static_cast<Idx>(grad_out.dim(2)), Wo = static_cast<Idx>(grad_out.dim(3));
    const Idx kt = static_cast<Idx>(spec.kernel[0]), kh = static_cast<Idx>(spec.kernel[1]), kw = static_cast<Idx>(spec.kernel[2]);
    const Idx st = static_cast<Idx>(spec.stride[0]), sh = static_cast<Idx>(spec.stride[1]), sw = static_cast<Idx>(spec.stride[2]);
    const Idx pt = static_cast<Idx>(spec.padding[0]), ph = static_cast<Idx>(spec.padding[1]), pw = static_cast<Idx>(spec.padding[2]);

    Tensor<T> grad_in({spec.in_channels, input_extents[0], input_extents[1], input_extents[2]});
    const T* go = grad_out.data();
    const T* w = weights.data();
    T* gi = grad_in.data();

    // Scatter per input channel: every write lands in the ci-owned slice with
    // a fixed accumulation order, so the result is bit-deterministic.
    for (Idx ci = 0; ci < Ci; ++ci) {
        for (Idx co = 0; co < Co; ++co) {
            for (Idx dt = 0; dt < kt; ++dt) {
                Idx tlo, thi;
                valid_range(To, Ti, st, pt, dt, tlo, thi);
                for (Idx dh = 0; dh < kh; ++dh) {
                    Idx hlo, hhi;
                    valid_range(Ho, Hi, sh, ph, dh, hlo, hhi);
                    const T* wrow = w + (((co * Ci + ci) * kt + dt) * kh + dh) * kw;
                    for (Idx to = tlo; to < thi; ++to) {
                        const Idx ti = to * st - pt + dt;
                        for (Idx ho = hlo; ho < hhi; ++ho) {
                            const Idx hi = ho * sh - ph + dh;
                            const T* gorow = go + ((co * To + to) * Ho + ho) * Wo;
                            T* girow = gi + ((ci * Ti + ti) * Hi + hi) * Wi;
                            for (Idx dw = 0; dw < kw; ++dw) {
                                Idx wlo, whi;
                                valid_range(Wo, Wi, sw, pw, dw, wlo, whi);
                                const T wgt = wrow[dw];
                                T* gp = girow - pw + dw;
                                if (sw == 1) {
                                    for (Idx wo = wlo; wo < whi; ++wo) gp[wo] += wgt * gorow[wo];
                                } else {
                                    for (Idx wo = wlo; wo < whi; ++wo) gp[wo * sw] += wgt * gorow[wo];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv3d_backward_weights(const Tensor<T>& grad_out,
                                                        const Tensor<T>& input,
                                                        const Conv3dSpec& spec) {
    check_input(grad_out, spec.out_channels, "grad_out");
    check_input(input, spec.in_channels, "input");
    const Extents3 expect = spec.output_extents({input.dim(1), input.dim(2), input.dim(3)});
    for (std::size_t a = 0; a < 3; ++a) {
        if (grad_out.dim(a + 1) != expect[a]) {
            throw ShapeError("conv3d: grad_out extent mismatch on axis " + std::to_string(a + 1));
        }
    }

    const Idx Ci = static_cast<Idx>(spec.in_channels), Co = static_cast<Idx>(spec.out_channels);
    const Idx Ti = static_cast<Idx>(input.dim(1)), Hi = static_cast<Idx>(input.dim(2)), Wi = static_cast<Idx>(input.dim(3));
    const Idx To = static_cast<Idx>(grad_out.dim(1)), Ho = static_cast<Idx>(grad_out.dim(2)), Wo = static_cast<Idx>(grad_out.dim(3));
    const Idx kt = static_cast<Idx>(spec.kernel[0]), kh = static_cast<Idx>(spec.kernel[1]), kw = static_cast<Idx>(spec.kernel[2]);
    const Idx st = static_cast<Idx>(spec.stride[0]), sh = static_cast<Idx>(spec.stride[1]), sw = static_cast<Idx>(spec.stride[2]);
    const Idx pt = static_cast<Idx>(spec.padding[0]), ph = static_cast<Idx>(spec.padding[1]), pw = static_cast<Idx>(spec.padding[2]);

    Tensor<T> grad_w({spec.out_channels, spec.in_channels, spec.kernel[0], spec.kernel[1], spec.kernel[2]});
    Tensor<T> grad_b({spec.out_channels});
    const T* go = grad_out.data();
    const T* in = input.data();
    T* gw = grad_w.data();
    T* gb = grad_b.data();

    for (Idx co = 0; co < Co; ++co) {
        T bsum = T(0);
        const T* goc = go + co * To * Ho * Wo;
        for (Idx i = 0; i < To * Ho * Wo; ++i) bsum += goc[i];
        gb[co] = bsum;
        for (Idx ci = 0; ci < Ci; ++ci) {
            for (Idx dt = 0; dt < kt; ++dt) {
                Idx tlo, thi;
                valid_range(To, Ti, st, pt, dt, tlo, thi);
                for (Idx dh = 0; dh < kh; ++dh) {
                    Idx hlo, hhi;
                    valid_range(Ho, Hi, sh, ph, dh, hlo, hhi);
                    T* gwrow = gw + (((co * Ci + ci) * kt + dt) * kh + dh) * kw;
                    for (Idx dw = 0; dw < kw; ++dw) {
                        Idx wlo, whi;
                        valid_range(Wo, Wi, sw, pw, dw, wlo, whi);
                        T acc = T(0);
                        for (Idx to = tlo; to < thi; ++to) {
                            const Idx ti = to * st - pt + dt;
                            for (Idx ho = hlo; ho < hhi; ++ho) {
                                const Idx hi = ho * sh - ph + dh;
                                const T* gorow = go + ((co * To + to) * Ho + ho) * Wo;
                                const T* irow = in + ((ci * Ti + ti) * Hi + hi) * Wi - pw + dw;
                                if (sw == 1) {
                                    for (Idx wo = wlo; wo < whi; ++wo) acc += gorow[wo] * irow[wo];
                                } else {
                                    for (Idx wo = wlo; wo < whi; ++wo) acc += gorow[wo] * irow[wo * sw];
                                }
                            }
                        }
                        gwrow[dw] = acc;
                    }
                }
            }
        }
    }
    return {std::move(grad_w), std::move(grad_b)};
}

template <typename T>
Tensor<T> conv3d_transposed_forward(const Tensor<T>& input, const Tensor<T>& weights,
                                    const Tensor<T>& bias, const Conv3dSpec& spec,
                                    const Offsets3& output_padding) {
    check_input(input, spec.out_channels, "input");
    if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != spec.in_channels)) {
        throw ShapeError("conv3d: transposed bias extent mismatch, expected [" + std::to_string(spec.in_channels) + "]");
    }
    const Extents3 oe = spec.transposed_extents({input.dim(1), input.dim(2), input.dim(3)}, output_padding);
    Tensor<T> out = conv3d_backward_data(input, weights, spec, oe);
    if (!bias.empty()) {
        const std::size_t inner = oe[0] * oe[1] * oe[2];
        T* o = out.data();
        for (std::size_t c = 0; c < spec.in_channels; ++c) {
            const T b = bias[c];
            for (std::size_t i = 0; i < inner; ++i) o[c * inner + i] += b;
        }
    }
    return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    if (!(slope > T(0) && slope < T(1))) throw ValueError("leaky_relu: slope must lie in (0,1)");
    Tensor<T> y(x.shape());
    const T* xp = x.data();
    T* yp = y.data();
    for (std::size_t i = 0; i < x.numel(); ++i) yp[i] = xp[i] >= T(0) ? xp[i] : slope * xp[i];
    return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& pre, const Tensor<T>& grad_out, T slope) {
    if (!pre.same_shape(grad_out)) throw ShapeError("leaky_relu_backward: shape mismatch");
    Tensor<T> g(pre.shape());
    const T* zp = pre.data();
    const T* gp = grad_out.data();
    T* op = g.data();
    for (std::size_t i = 0; i < pre.numel(); ++i) op[i] = zp[i] >= T(0) ? gp[i] : slope * gp[i];
    return g;
}

template <typename T>
Tensor<T> sum_per_channel(const Tensor<T>& t) {
    if (t.rank() != 4) throw ShapeError("sum_per_channel: expected rank 4, got " + t.shape_string());
    Tensor<T> r({t.dim(0)});
    const std::size_t inner = t.dim(1) * t.dim(2) * t.dim(3);
    const T* p = t.data();
    for (std::size_t c = 0; c < t.dim(0); ++c) {
        T acc = T(0);
        for (std::size_t i = 0; i < inner; ++i) acc += p[c * inner + i];
        r[c] = acc;
    }
    return r;
}

#define REVSCI_INSTANTIATE(T)                                                                          \
    template Tensor<T> conv3d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                         const Conv3dSpec&);                                          \
    template Tensor<T> conv3d_backward_data<T>(const Tensor<T>&, const Tensor<T>&, const Conv3dSpec&, \
                                               const Extents3&);                                      \
    template std::pair<Tensor<T>, Tensor<T>> conv3d_backward_weights<T>(                              \
        const Tensor<T>&, const Tensor<T>&, const Conv3dSpec&);                                       \
    template Tensor<T> conv3d_transposed_forward<T>(const Tensor<T>&, const Tensor<T>&,               \
                                                    const Tensor<T>&, const Conv3dSpec&,              \
                                                    const Offsets3&);                                 \
    template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                            \
    template Tensor<T> leaky_relu_backward<T>(const Tensor<T>&, const Tensor<T>&, T);                 \
    template Tensor<T> sum_per_channel<T>(const Tensor<T>&);

REVSCI_INSTANTIATE(float)
REVSCI_INSTANTIATE(double)
#undef REVSCI_INSTANTIATE

} // namespace revsci
