#include "msnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace msnn {

namespace {

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) {
        T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace

template <typename T>
typename Graph<T>::NodeId Graph<T>::push(Tensor<T> value,
                                         std::function<void(Graph&, NodeId)> backprop) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backprop), nullptr});
    return nodes_.size() - 1;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::input(Tensor<T> value) {
    value.validate_finite("graph input");
    return push(std::move(value), nullptr);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::param(const ParamPtr<T>& p) {
    NodeId id = push(p->value, nullptr);
    nodes_[id].bound_param = p;
    return id;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::conv3d(NodeId input, NodeId weight, NodeId bias,
                                           std::size_t stride) {
    const Tensor<T>& x = nodes_[input].value;
    const Tensor<T>& w = nodes_[weight].value;
    const Tensor<T>& b = nodes_[bias].value;
    if (x.rank() != 4)
        throw shape_error("conv3d: input must be rank 4 [C,D,H,W], got " + x.shape_string());
    if (w.rank() != 5)
        throw shape_error("conv3d: weight must be rank 5 [Cout,Cin,kD,kH,kW], got " +
                          w.shape_string());
    if (stride < 1) throw shape_error("conv3d: stride must be >= 1");
    const std::size_t ci = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t co = w.shape[0], kd = w.shape[2], kh = w.shape[3], kw = w.shape[4];
    if (w.shape[1] != ci)
        throw shape_error("conv3d: weight expects " + std::to_string(w.shape[1]) +
                          " input channels, input has " + std::to_string(ci) +
                          " (axis C_in)");
    if (b.rank() != 1 || b.shape[0] != co)
        throw shape_error("conv3d: bias must be [C_out] = [" + std::to_string(co) + "]");
    if (kd > D) throw shape_error("conv3d: kernel depth " + std::to_string(kd) +
                                  " exceeds input depth " + std::to_string(D) + " (axis D)");
    if (kh > H) throw shape_error("conv3d: kernel height " + std::to_string(kh) +
                                  " exceeds input height " + std::to_string(H) + " (axis H)");
    if (kw > W) throw shape_error("conv3d: kernel width " + std::to_string(kw) +
                                  " exceeds input width " + std::to_string(W) + " (axis W)");

    const std::size_t od = (D - kd) / stride + 1;
    const std::size_t oh = (H - kh) / stride + 1;
    const std::size_t ow = (W - kw) / stride + 1;

    Tensor<T> out({co, od, oh, ow});
    const T* xv = x.values.data();
    const T* wv = w.values.data();
    T* ov = out.values.data();
    // input strides
    const std::size_t xsd = H * W, xsc = D * H * W;
    // weight strides
    const std::size_t wsh = kw, wsd = kh * kw, wsc = kd * kh * kw, wso = ci * kd * kh * kw;

    for (std::size_t c = 0; c < co; ++c) {
        const T bias_c = b.values[c];
        for (std::size_t z = 0; z < od; ++z)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xo = 0; xo < ow; ++xo) {
                    T acc = bias_c;
                    const std::size_t iz = z * stride, iy = y * stride, ix = xo * stride;
                    for (std::size_t ic = 0; ic < ci; ++ic) {
                        const T* xp = xv + ic * xsc + iz * xsd + iy * W + ix;
                        const T* wp = wv + c * wso + ic * wsc;
                        for (std::size_t dz = 0; dz < kd; ++dz)
                            for (std::size_t dy = 0; dy < kh; ++dy) {
                                const T* xr = xp + dz * xsd + dy * W;
                                const T* wr = wp + dz * wsd + dy * wsh;
                                for (std::size_t dx = 0; dx < kw; ++dx)
                                    acc += xr[dx] * wr[dx];
                            }
                    }
                    ov[((c * od + z) * oh + y) * ow + xo] = acc;
                }
    }

    auto back = [input, weight, bias, stride, ci, D, H, W, co, kd, kh, kw, od, oh,
                 ow](Graph& g, NodeId self) {
        const std::vector<T>& go = g.grad_buf(self);
        const Tensor<T>& x = g.nodes_[input].value;
        const Tensor<T>& w = g.nodes_[weight].value;
        std::vector<T>& gx = g.grad_buf(input);
        std::vector<T>& gw = g.grad_buf(weight);
        std::vector<T>& gb = g.grad_buf(bias);
        const std::size_t xsd = H * W, xsc = D * H * W;
        const std::size_t wsh = kw, wsd = kh * kw, wsc = kd * kh * kw, wso = ci * kd * kh * kw;
        for (std::size_t c = 0; c < co; ++c)
            for (std::size_t z = 0; z < od; ++z)
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t xo = 0; xo < ow; ++xo) {
                        const T up = go[((c * od + z) * oh + y) * ow + xo];
                        if (up == T(0)) continue;
                        gb[c] += up;
                        const std::size_t iz = z * stride, iy = y * stride, ix = xo * stride;
                        for (std::size_t ic = 0; ic < ci; ++ic) {
                            const T* xp = x.values.data() + ic * xsc + iz * xsd + iy * W + ix;
                            const T* wp = w.values.data() + c * wso + ic * wsc;
                            T* gxp = gx.data() + ic * xsc + iz * xsd + iy * W + ix;
                            T* gwp = gw.data() + c * wso + ic * wsc;
                            for (std::size_t dz = 0; dz < kd; ++dz)
                                for (std::size_t dy = 0; dy < kh; ++dy) {
                                    const T* xr = xp + dz * xsd + dy * W;
                                    const T* wr = wp + dz * wsd + dy * wsh;
                                    T* gxr = gxp + dz * xsd + dy * W;
                                    T* gwr = gwp + dz * wsd + dy * wsh;
                                    for (std::size_t dx = 0; dx < kw; ++dx) {
                                        gxr[dx] += up * wr[dx];
                                        gwr[dx] += up * xr[dx];
                                    }
                                }
                        }
                    }
    };
    return push(std::move(out), back);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::avgpool3d(NodeId input, std::size_t window) {
    const Tensor<T>& x = nodes_[input].value;
    if (x.rank() != 4)
        throw shape_error("avgpool3d: input must be rank 4 [C,D,H,W], got " + x.shape_string());
    if (window < 1) throw shape_error("avgpool3d: window must be >= 1");
    const std::size_t C = x.shape[0], D = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (window > D || window > H || window > W)
        throw shape_error("avgpool3d: window " + std::to_string(window) +
                          " larger than spatial extents " + x.shape_string());
    const std::size_t od = D / window, oh = H / window, ow = W / window;
    const T inv = T(1) / static_cast<T>(window * window * window);

    Tensor<T> out({C, od, oh, ow});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t z = 0; z < od; ++z)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xo = 0; xo < ow; ++xo) {
                    T acc = T(0);
                    for (std::size_t dz = 0; dz < window; ++dz)
                        for (std::size_t dy = 0; dy < window; ++dy)
                            for (std::size_t dx = 0; dx < window; ++dx)
                                acc += x.values[((c * D + z * window + dz) * H + y * window + dy) * W +
                                                xo * window + dx];
                    out.values[((c * od + z) * oh + y) * ow + xo] = acc * inv;
                }

    auto back = [input, window, C, D, H, W, od, oh, ow, inv](Graph& g, NodeId self) {
        const std::vector<T>& go = g.grad_buf(self);
        std::vector<T>& gx = g.grad_buf(input);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t z = 0; z < od; ++z)
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t xo = 0; xo < ow; ++xo) {
                        const T up = go[((c * od + z) * oh + y) * ow + xo] * inv;
                        for (std::size_t dz = 0; dz < window; ++dz)
                            for (std::size_t dy = 0; dy < window; ++dy)
                                for (std::size_t dx = 0; dx < window; ++dx)
                                    gx[((c * D + z * window + dz) * H + y * window + dy) * W +
                                       xo * window + dx] += up;
                    }
    };
    return push(std::move(out), back);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::dense(NodeId input, NodeId weight, NodeId bias) {
    const Tensor<T>& x = nodes_[input].value;
    const Tensor<T>& w = nodes_[weight].value;
    const Tensor<T>& b = nodes_[bias].value;
    if (x.rank() != 1)
        throw shape_error("dense: input must be rank 1, got " + x.shape_string());
    if (w.rank() != 2)
        throw shape_error("dense: weight must be rank 2 [m,n], got " + w.shape_string());
    const std::size_t m = w.shape[0], n = w.shape[1];
    if (x.shape[0] != n)
        throw shape_error("dense: input length " + std::to_string(x.shape[0]) +
                          " does not match weight columns " + std::to_string(n));
    if (b.rank() != 1 || b.shape[0] != m)
        throw shape_error("dense: bias must be [" + std::to_string(m) + "]");

    Tensor<T> out({m});
    for (std::size_t i = 0; i < m; ++i) {
        T acc = b.values[i];
        const T* wr = w.values.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += wr[j] * x.values[j];
        out.values[i] = acc;
    }

    auto back = [input, weight, bias, m, n](Graph& g, NodeId self) {
        const std::vector<T>& go = g.grad_buf(self);
        const Tensor<T>& x = g.nodes_[input].value;
        const Tensor<T>& w = g.nodes_[weight].value;
        std::vector<T>& gx = g.grad_buf(input);
        std::vector<T>& gw = g.grad_buf(weight);
        std::vector<T>& gb = g.grad_buf(bias);
        for (std::size_t i = 0; i < m; ++i) {
            const T up = go[i];
            gb[i] += up;
            const T* wr = w.values.data() + i * n;
            T* gwr = gw.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                gx[j] += up * wr[j];
                gwr[j] += up * x.values[j];
            }
        }
    };
    return push(std::move(out), back);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::subtract(NodeId a, NodeId b) {
    const Tensor<T>& ta = nodes_[a].value;
    const Tensor<T>& tb = nodes_[b].value;
    if (!ta.same_shape(tb))
        throw shape_error("subtract: shape mismatch " + ta.shape_string() + " vs " +
                          tb.shape_string());
    Tensor<T> out(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) out.values[i] = ta.values[i] - tb.values[i];

    auto back = [a, b](Graph& g, NodeId self) {
        const std::vector<T>& go = g.grad_buf(self);
        std::vector<T>& ga = g.grad_buf(a);
        std::vector<T>& gb = g.grad_buf(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i];
            gb[i] -= go[i];
        }
    };
    return push(std::move(out), back);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw shape_error("concat: empty part list");
    std::size_t total = 0;
    for (NodeId p : parts) {
        const Tensor<T>& t = nodes_[p].value;
        if (t.rank() != 1)
            throw shape_error("concat: parts must be rank 1, got " + t.shape_string());
        total += t.shape[0];
    }
    Tensor<T> out({total});
    std::size_t off = 0;
    for (NodeId p : parts) {
        const Tensor<T>& t = nodes_[p].value;
        std::copy(t.values.begin(), t.values.end(), out.values.begin() + off);
        off += t.numel();
    }

    auto back = [parts](Graph& g, NodeId self) {
        const std::vector<T>& go = g.grad_buf(self);
        std::size_t off = 0;
        for (NodeId p : parts) {
            std::vector<T>& gp = g.grad_buf(p);
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[off + i];
            off += gp.size();
        }
    };
    return push(std::move(out), back);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::activation(NodeId input, Activation kind) {
    const Tensor<T>& x = nodes_[input].value;
    Tensor<T> out(x.shape);
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < x.numel(); ++i)
            out.values[i] = x.values[i] > T(0) ? x.values[i] : T(0);
    } else {
        for (std::size_t i = 0; i < x.numel(); ++i) out.values[i] = stable_sigmoid(x.values[i]);
    }

    auto back = [input, kind](Graph& g, NodeId self) {
        const std::vector<T>& go = g.grad_buf(self);
        const Tensor<T>& x = g.nodes_[input].value;
        const Tensor<T>& y = g.nodes_[self].value;
        std::vector<T>& gx = g.grad_buf(input);
        if (kind == Activation::relu) {
            for (std::size_t i = 0; i < go.size(); ++i)
                if (x.values[i] > T(0)) gx[i] += go[i];
        } else {
            for (std::size_t i = 0; i < go.size(); ++i)
                gx[i] += go[i] * y.values[i] * (T(1) - y.values[i]);
        }
    };
    return push(std::move(out), back);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::dropout(NodeId input, double rate, Mode mode, Rng& rng) {
    if (rate < 0.0 || rate > 1.0) throw config_error("dropout: rate must be in [0,1]");
    const Tensor<T>& x = nodes_[input].value;

    if (mode == Mode::eval || rate == 0.0) {
        Tensor<T> out = x;
        auto back = [input](Graph& g, NodeId self) {
            const std::vector<T>& go = g.grad_buf(self);
            std::vector<T>& gx = g.grad_buf(input);
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        };
        return push(std::move(out), back);
    }

    if (rate == 1.0) {
        // all entries dropped; gradient is identically zero
        Tensor<T> out(x.shape);
        auto back = [](Graph&, NodeId) {};
        return push(std::move(out), back);
    }

    const T scale = T(1.0 / (1.0 - rate));
    std::vector<std::uint8_t> mask(x.numel());
    Tensor<T> out(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        mask[i] = rng.uniform() >= rate ? 1 : 0;
        out.values[i] = mask[i] ? x.values[i] * scale : T(0);
    }

    auto back = [input, scale, mask = std::move(mask)](Graph& g, NodeId self) {
        const std::vector<T>& go = g.grad_buf(self);
        std::vector<T>& gx = g.grad_buf(input);
        for (std::size_t i = 0; i < go.size(); ++i)
            if (mask[i]) gx[i] += go[i] * scale;
    };
    return push(std::move(out), back);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::bce_loss(NodeId prediction, int target) {
    const Tensor<T>& p = nodes_[prediction].value;
    if (p.numel() != 1)
        throw shape_error("bce_loss: prediction must be a single value, got " + p.shape_string());
    if (target != 0 && target != 1) throw config_error("bce_loss: target must be 0 or 1");

    const T eps = T(1e-7);
    const T raw = p.values[0];
    const T pc = std::min(std::max(raw, eps), T(1) - eps);
    const T y = static_cast<T>(target);
    Tensor<T> out =
        Tensor<T>::scalar(-(y * std::log(pc) + (T(1) - y) * std::log(T(1) - pc)));

    const bool clamped = raw < eps || raw > T(1) - eps;
    auto back = [prediction, pc, y, clamped](Graph& g, NodeId self) {
        if (clamped) return;
        const T up = g.grad_buf(self)[0];
        g.grad_buf(prediction)[0] += up * (pc - y) / (pc * (T(1) - pc));
    };
    return push(std::move(out), back);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::sum(NodeId input) {
    const Tensor<T>& x = nodes_[input].value;
    T acc = T(0);
    for (const T& v : x.values) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);

    auto back = [input](Graph& g, NodeId self) {
        const T up = g.grad_buf(self)[0];
        std::vector<T>& gx = g.grad_buf(input);
        for (T& v : gx) v += up;
    };
    return push(std::move(out), back);
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::flatten(NodeId input) {
    const Tensor<T>& x = nodes_[input].value;
    Tensor<T> out({x.numel()}, x.values);

    auto back = [input](Graph& g, NodeId self) {
        const std::vector<T>& go = g.grad_buf(self);
        std::vector<T>& gx = g.grad_buf(input);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    };
    return push(std::move(out), back);
}

template <typename T>
void Graph<T>::backward(NodeId loss, T seed) {
    if (nodes_[loss].value.numel() != 1)
        throw shape_error("backward: loss must be scalar, got " +
                          nodes_[loss].value.shape_string());
    for (NodeId i = 0; i <= loss; ++i)
        nodes_[i].grad.assign(nodes_[i].value.numel(), T(0));
    nodes_[loss].grad[0] = seed;

    for (NodeId i = loss + 1; i-- > 0;) {
        if (nodes_[i].backprop) nodes_[i].backprop(*this, i);
    }

    for (NodeId i = 0; i <= loss; ++i) {
        if (!nodes_[i].bound_param) continue;
        auto& p = *nodes_[i].bound_param;
        for (std::size_t k = 0; k < p.grad.numel(); ++k) p.grad.values[k] += nodes_[i].grad[k];
        p.grad_touched = true;
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace msnn
