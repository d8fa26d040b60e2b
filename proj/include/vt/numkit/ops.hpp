#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vt/numkit/tensor.hpp"

namespace vt::numkit {

namespace detail {

// Reduction with four independent accumulators; vectorizes without relaxing
// FP ordering and evaluates in the same order every run.
template <class T>
inline T dot_span(const T* a, const T* b, int n) {
    T a0{}, a1{}, a2{}, a3{};
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 += a[i] * b[i];
        a1 += a[i + 1] * b[i + 1];
        a2 += a[i + 2] * b[i + 2];
        a3 += a[i + 3] * b[i + 3];
    }
    T acc = (a0 + a1) + (a2 + a3);
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <class T>
inline void axpy_span(T* y, T alpha, const T* x, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
Tensor<T> make_op(std::vector<T> value, std::vector<int> shape,
                  std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backprop) {
    bool req = false;
    for (auto& p : parents) req = req || p.requires_grad();
    auto out = Tensor<T>::from_data(std::move(value), std::move(shape), false);
    if (req) {
        auto& node = *out.node_ptr();
        node.requires_grad = true;
        node.parents.reserve(parents.size());
        for (auto& p : parents) node.parents.push_back(p.node_ptr());
        node.backprop = std::move(backprop);
    }
    return out;
}

// Valid output index range [lo, hi) such that 0 <= o*stride + off < limit.
inline std::pair<int, int> conv_range(int off, int stride, int limit, int count) {
    int lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    int hi = 0;
    if (limit - 1 - off >= 0) hi = std::min(count, (limit - 1 - off) / stride + 1);
    return {lo, hi < lo ? lo : hi};
}

}  // namespace detail

// out[b,o] = sum_i x[b,i] * w[i,o] + bias[o]
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    const auto& bs = bias.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0]) {
        throw DimensionError("linear: input " + shape_str(xs) + " incompatible with weight " +
                             shape_str(ws));
    }
    if (bs.size() != 1 || bs[0] != ws[1]) {
        throw DimensionError("linear: bias " + shape_str(bs) + " incompatible with weight " +
                             shape_str(ws));
    }
    const int B = xs[0], I = xs[1], O = ws[1];
    std::vector<T> y(static_cast<std::size_t>(B) * O);
    const T* xp = x.data().data();
    const T* wp = w.data().data();
    const T* bp = bias.data().data();
    for (int b = 0; b < B; ++b) {
        T* yrow = y.data() + static_cast<std::size_t>(b) * O;
        for (int o = 0; o < O; ++o) yrow[o] = bp[o];
        const T* xrow = xp + static_cast<std::size_t>(b) * I;
        for (int i = 0; i < I; ++i) {
            detail::axpy_span(yrow, xrow[i], wp + static_cast<std::size_t>(i) * O, O);
        }
    }
    return detail::make_op<T>(
        std::move(y), {B, O}, {x, w, bias}, [B, I, O](detail::Node<T>& out) {
            auto& xn = *out.parents[0];
            auto& wn = *out.parents[1];
            auto& bn = *out.parents[2];
            const T* gy = out.grad.data();
            if (xn.requires_grad) {
                xn.ensure_grad();
                for (int b = 0; b < B; ++b) {
                    const T* gyrow = gy + static_cast<std::size_t>(b) * O;
                    T* gxrow = xn.grad.data() + static_cast<std::size_t>(b) * I;
                    for (int i = 0; i < I; ++i) {
                        gxrow[i] += detail::dot_span(gyrow, wn.value.data() + static_cast<std::size_t>(i) * O, O);
                    }
                }
            }
            if (wn.requires_grad) {
                wn.ensure_grad();
                for (int b = 0; b < B; ++b) {
                    const T* gyrow = gy + static_cast<std::size_t>(b) * O;
                    const T* xrow = xn.value.data() + static_cast<std::size_t>(b) * I;
                    for (int i = 0; i < I; ++i) {
                        detail::axpy_span(wn.grad.data() + static_cast<std::size_t>(i) * O, xrow[i], gyrow, O);
                    }
                }
            }
            if (bn.requires_grad) {
                bn.ensure_grad();
                for (int b = 0; b < B; ++b) {
                    const T* gyrow = gy + static_cast<std::size_t>(b) * O;
                    for (int o = 0; o < O; ++o) bn.grad[static_cast<std::size_t>(o)] += gyrow[o];
                }
            }
        });
}

// Cross-correlation of x [B,C,H,W] with kernels [F,C,kh,kw].
// H' = floor((H + 2*pad - kh)/stride) + 1, likewise W'.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, int stride = 1, int pad = 0) {
    const auto& xs = x.shape();
    const auto& ks = kernel.shape();
    if (xs.size() != 4 || ks.size() != 4 || xs[1] != ks[1]) {
        throw DimensionError("conv2d: input " + shape_str(xs) + " incompatible with kernel " +
                             shape_str(ks));
    }
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (pad < 0) throw ValueError("conv2d: pad must be >= 0, got " + std::to_string(pad));
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int F = ks[0], KH = ks[2], KW = ks[3];
    if (KH > H + 2 * pad || KW > W + 2 * pad) {
        throw DimensionError("conv2d: kernel " + shape_str(ks) + " larger than padded input " +
                             shape_str(xs) + " with pad " + std::to_string(pad));
    }
    const int HO = (H + 2 * pad - KH) / stride + 1;
    const int WO = (W + 2 * pad - KW) / stride + 1;

    std::vector<T> y(static_cast<std::size_t>(B) * F * HO * WO, T{});
    const T* xp = x.data().data();
    const T* kp = kernel.data().data();
    for (int b = 0; b < B; ++b) {
        for (int f = 0; f < F; ++f) {
            T* yplane = y.data() + (static_cast<std::size_t>(b) * F + f) * HO * WO;
            for (int c = 0; c < C; ++c) {
                const T* xplane = xp + (static_cast<std::size_t>(b) * C + c) * H * W;
                const T* kplane = kp + (static_cast<std::size_t>(f) * C + c) * KH * KW;
                for (int kh = 0; kh < KH; ++kh) {
                    const int hoff = kh - pad;
                    auto [ho_lo, ho_hi] = detail::conv_range(hoff, stride, H, HO);
                    for (int kw = 0; kw < KW; ++kw) {
                        const T kv = kplane[kh * KW + kw];
                        const int woff = kw - pad;
                        auto [wo_lo, wo_hi] = detail::conv_range(woff, stride, W, WO);
                        if (wo_hi <= wo_lo) continue;
                        for (int ho = ho_lo; ho < ho_hi; ++ho) {
                            const T* xrow = xplane + (ho * stride + hoff) * W;
                            T* yrow = yplane + ho * WO;
                            if (stride == 1) {
                                detail::axpy_span(yrow + wo_lo, kv, xrow + wo_lo + woff, wo_hi - wo_lo);
                            } else {
                                for (int wo = wo_lo; wo < wo_hi; ++wo) {
                                    yrow[wo] += kv * xrow[wo * stride + woff];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    return detail::make_op<T>(
        std::move(y), {B, F, HO, WO}, {x, kernel},
        [B, C, H, W, F, KH, KW, HO, WO, stride, pad](detail::Node<T>& out) {
            auto& xn = *out.parents[0];
            auto& kn = *out.parents[1];
            const T* gy = out.grad.data();
            if (xn.requires_grad) {
                xn.ensure_grad();
                for (int b = 0; b < B; ++b) {
                    for (int f = 0; f < F; ++f) {
                        const T* gplane = gy + (static_cast<std::size_t>(b) * F + f) * HO * WO;
                        for (int c = 0; c < C; ++c) {
                            T* gxplane = xn.grad.data() + (static_cast<std::size_t>(b) * C + c) * H * W;
                            const T* kplane = kn.value.data() + (static_cast<std::size_t>(f) * C + c) * KH * KW;
                            for (int kh = 0; kh < KH; ++kh) {
                                const int hoff = kh - pad;
                                auto [ho_lo, ho_hi] = detail::conv_range(hoff, stride, H, HO);
                                for (int kw = 0; kw < KW; ++kw) {
                                    const T kv = kplane[kh * KW + kw];
                                    const int woff = kw - pad;
                                    auto [wo_lo, wo_hi] = detail::conv_range(woff, stride, W, WO);
                                    if (wo_hi <= wo_lo) continue;
                                    for (int ho = ho_lo; ho < ho_hi; ++ho) {
                                        T* gxrow = gxplane + (ho * stride + hoff) * W;
                                        const T* grow = gplane + ho * WO;
                                        if (stride == 1) {
                                            detail::axpy_span(gxrow + wo_lo + woff, kv, grow + wo_lo, wo_hi - wo_lo);
                                        } else {
                                            for (int wo = wo_lo; wo < wo_hi; ++wo) {
                                                gxrow[wo * stride + woff] += kv * grow[wo];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (kn.requires_grad) {
                kn.ensure_grad();
                for (int b = 0; b < B; ++b) {
                    for (int f = 0; f < F; ++f) {
                        const T* gplane = gy + (static_cast<std::size_t>(b) * F + f) * HO * WO;
                        for (int c = 0; c < C; ++c) {
                            const T* xplane = xn.value.data() + (static_cast<std::size_t>(b) * C + c) * H * W;
                            T* gkplane = kn.grad.data() + (static_cast<std::size_t>(f) * C + c) * KH * KW;
                            for (int kh = 0; kh < KH; ++kh) {
                                const int hoff = kh - pad;
                                auto [ho_lo, ho_hi] = detail::conv_range(hoff, stride, H, HO);
                                for (int kw = 0; kw < KW; ++kw) {
                                    const int woff = kw - pad;
                                    auto [wo_lo, wo_hi] = detail::conv_range(woff, stride, W, WO);
                                    if (wo_hi <= wo_lo) continue;
                                    T acc{};
                                    for (int ho = ho_lo; ho < ho_hi; ++ho) {
                                        const T* xrow = xplane + (ho * stride + hoff) * W;
                                        const T* grow = gplane + ho * WO;
                                        if (stride == 1) {
                                            acc += detail::dot_span(grow + wo_lo, xrow + wo_lo + woff, wo_hi - wo_lo);
                                        } else {
                                            for (int wo = wo_lo; wo < wo_hi; ++wo) {
                                                acc += grow[wo] * xrow[wo * stride + woff];
                                            }
                                        }
                                    }
                                    gkplane[kh * KW + kw] += acc;
                                }
                            }
                        }
                    }
                }
            }
        });
}

// Per-channel bias add on NCHW maps.
template <class T>
Tensor<T> bias_nchw(const Tensor<T>& x, const Tensor<T>& bias) {
    const auto& xs = x.shape();
    const auto& bs = bias.shape();
    if (xs.size() != 4 || bs.size() != 1 || bs[0] != xs[1]) {
        throw DimensionError("bias_nchw: input " + shape_str(xs) + " incompatible with bias " +
                             shape_str(bs));
    }
    const int B = xs[0], C = xs[1], HW = xs[2] * xs[3];
    std::vector<T> y = x.data();
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            T* row = y.data() + (static_cast<std::size_t>(b) * C + c) * HW;
            const T bv = bias.data()[static_cast<std::size_t>(c)];
            for (int i = 0; i < HW; ++i) row[i] += bv;
        }
    }
    return detail::make_op<T>(std::move(y), xs, {x, bias}, [B, C, HW](detail::Node<T>& out) {
        auto& xn = *out.parents[0];
        auto& bn = *out.parents[1];
        if (xn.requires_grad) xn.accum_grad(out.grad.data(), out.grad.size());
        if (bn.requires_grad) {
            bn.ensure_grad();
            for (int b = 0; b < B; ++b) {
                for (int c = 0; c < C; ++c) {
                    const T* row = out.grad.data() + (static_cast<std::size_t>(b) * C + c) * HW;
                    T acc{};
                    for (int i = 0; i < HW; ++i) acc += row[i];
                    bn.grad[static_cast<std::size_t>(c)] += acc;
                }
            }
        }
    });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> y = x.data();
    for (auto& v : y) v = v > T{} ? v : T{};
    return detail::make_op<T>(std::move(y), x.shape(), {x}, [](detail::Node<T>& out) {
        auto& xn = *out.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            if (xn.value[i] > T{}) xn.grad[i] += out.grad[i];
        }
    });
}

// 2x2 max pooling, stride 2, floor semantics on odd dims. Gradient routes to
// the first maximum in scan order within each window.
template <class T>
Tensor<T> maxpool2(const Tensor<T>& x) {
    const auto& xs = x.shape();
    if (xs.size() != 4) throw DimensionError("maxpool2: expected [B,C,H,W], got " + shape_str(xs));
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int HO = H / 2, WO = W / 2;
    if (HO == 0 || WO == 0) {
        throw DimensionError("maxpool2: spatial dims too small in " + shape_str(xs));
    }
    std::vector<T> y(static_cast<std::size_t>(B) * C * HO * WO);
    std::vector<std::int32_t> argmax(y.size());
    const T* xp = x.data().data();
    for (int bc = 0; bc < B * C; ++bc) {
        const T* xplane = xp + static_cast<std::size_t>(bc) * H * W;
        T* yplane = y.data() + static_cast<std::size_t>(bc) * HO * WO;
        std::int32_t* aplane = argmax.data() + static_cast<std::size_t>(bc) * HO * WO;
        for (int ho = 0; ho < HO; ++ho) {
            for (int wo = 0; wo < WO; ++wo) {
                const int base = (2 * ho) * W + 2 * wo;
                int best = base;
                T bv = xplane[base];
                const int cand[3] = {base + 1, base + W, base + W + 1};
                for (int k = 0; k < 3; ++k) {
                    if (xplane[cand[k]] > bv) {
                        bv = xplane[cand[k]];
                        best = cand[k];
                    }
                }
                yplane[ho * WO + wo] = bv;
                aplane[ho * WO + wo] = best;
            }
        }
    }
    return detail::make_op<T>(std::move(y), {B, C, HO, WO}, {x},
                              [argmax = std::move(argmax), H, W, HO, WO](detail::Node<T>& out) {
                                  auto& xn = *out.parents[0];
                                  if (!xn.requires_grad) return;
                                  xn.ensure_grad();
                                  const std::size_t planes = out.grad.size() / (static_cast<std::size_t>(HO) * WO);
                                  for (std::size_t bc = 0; bc < planes; ++bc) {
                                      const T* grow = out.grad.data() + bc * HO * WO;
                                      T* gx = xn.grad.data() + bc * H * W;
                                      const std::int32_t* arow = argmax.data() + bc * HO * WO;
                                      for (int i = 0; i < HO * WO; ++i) gx[arow[i]] += grow[i];
                                  }
                              });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> new_shape) {
    if (detail::shape_numel(new_shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(new_shape));
    }
    return detail::make_op<T>(std::vector<T>(x.data()), std::move(new_shape), {x},
                              [](detail::Node<T>& out) {
                                  auto& xn = *out.parents[0];
                                  if (xn.requires_grad) xn.accum_grad(out.grad.data(), out.grad.size());
                              });
}

template <class T>
Tensor<T> flatten(const Tensor<T>& x) {
    const auto& xs = x.shape();
    if (xs.empty()) throw DimensionError("flatten: undefined shape");
    int rest = 1;
    for (std::size_t i = 1; i < xs.size(); ++i) rest *= xs[i];
    return reshape(x, {xs[0], rest});
}

// [B,M] ++ [B,N] -> [B,M+N]
template <class T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() != 2 || bs.size() != 2 || as[0] != bs[0]) {
        throw DimensionError("concat_cols: " + shape_str(as) + " vs " + shape_str(bs));
    }
    const int B = as[0], M = as[1], N = bs[1];
    std::vector<T> y(static_cast<std::size_t>(B) * (M + N));
    for (int i = 0; i < B; ++i) {
        std::copy_n(a.data().data() + static_cast<std::size_t>(i) * M, M,
                    y.data() + static_cast<std::size_t>(i) * (M + N));
        std::copy_n(b.data().data() + static_cast<std::size_t>(i) * N, N,
                    y.data() + static_cast<std::size_t>(i) * (M + N) + M);
    }
    return detail::make_op<T>(std::move(y), {B, M + N}, {a, b}, [B, M, N](detail::Node<T>& out) {
        auto& an = *out.parents[0];
        auto& bn = *out.parents[1];
        if (an.requires_grad) {
            an.ensure_grad();
            for (int i = 0; i < B; ++i) {
                const T* g = out.grad.data() + static_cast<std::size_t>(i) * (M + N);
                T* ga = an.grad.data() + static_cast<std::size_t>(i) * M;
                for (int j = 0; j < M; ++j) ga[j] += g[j];
            }
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            for (int i = 0; i < B; ++i) {
                const T* g = out.grad.data() + static_cast<std::size_t>(i) * (M + N) + M;
                T* gb = bn.grad.data() + static_cast<std::size_t>(i) * N;
                for (int j = 0; j < N; ++j) gb[j] += g[j];
            }
        }
    });
}

// Mean over the batch of -x[label] + log(sum_j exp(x[j])), computed with
// max subtraction; the naive form overflows for large logits.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    const auto& ls = logits.shape();
    if (ls.size() != 2) throw DimensionError("cross_entropy: expected [B,C], got " + shape_str(ls));
    const int B = ls[0], C = ls[1];
    if (static_cast<int>(labels.size()) != B) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                             std::to_string(B));
    }
    for (int b = 0; b < B; ++b) {
        if (labels[b] < 0 || labels[b] >= C) {
            throw ValueError("cross_entropy: label " + std::to_string(labels[b]) +
                             " out of range [0, " + std::to_string(C) + ")");
        }
    }
    const T* xp = logits.data().data();
    double total = 0.0;
    for (int b = 0; b < B; ++b) {
        const T* row = xp + static_cast<std::size_t>(b) * C;
        double m = row[0];
        for (int j = 1; j < C; ++j) m = std::max(m, static_cast<double>(row[j]));
        double z = 0.0;
        for (int j = 0; j < C; ++j) z += std::exp(static_cast<double>(row[j]) - m);
        total += -static_cast<double>(row[labels[b]]) + m + std::log(z);
    }
    const T loss = static_cast<T>(total / B);
    return detail::make_op<T>({loss}, {1}, {logits}, [labels, B, C](detail::Node<T>& out) {
        auto& xn = *out.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        const T gscale = out.grad[0] / static_cast<T>(B);
        for (int b = 0; b < B; ++b) {
            const T* row = xn.value.data() + static_cast<std::size_t>(b) * C;
            T* grow = xn.grad.data() + static_cast<std::size_t>(b) * C;
            double m = row[0];
            for (int j = 1; j < C; ++j) m = std::max(m, static_cast<double>(row[j]));
            double z = 0.0;
            for (int j = 0; j < C; ++j) z += std::exp(static_cast<double>(row[j]) - m);
            for (int j = 0; j < C; ++j) {
                double p = std::exp(static_cast<double>(row[j]) - m) / z;
                grow[j] += gscale * static_cast<T>(p - (j == labels[b] ? 1.0 : 0.0));
            }
        }
    });
}

// Mean of (x_n - y_n)^2; gradient 2(x - y)/B toward x.
template <class T>
Tensor<T> mse(const Tensor<T>& x, const Tensor<T>& y) {
    if (x.shape() != y.shape()) {
        throw DimensionError("mse: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    }
    const std::size_t n = x.data().size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(x.data()[i]) - static_cast<double>(y.data()[i]);
        total += d * d;
    }
    const T loss = static_cast<T>(total / static_cast<double>(n));
    return detail::make_op<T>({loss}, {1}, {x, y}, [n](detail::Node<T>& out) {
        auto& xn = *out.parents[0];
        auto& yn = *out.parents[1];
        const T scale = out.grad[0] * T(2) / static_cast<T>(n);
        if (xn.requires_grad) {
            xn.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) xn.grad[i] += scale * (xn.value[i] - yn.value[i]);
        }
        if (yn.requires_grad) {
            yn.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) yn.grad[i] -= scale * (xn.value[i] - yn.value[i]);
        }
    });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    double total = 0.0;
    for (const T& v : x.data()) total += static_cast<double>(v);
    return detail::make_op<T>({static_cast<T>(total)}, {1}, {x}, [](detail::Node<T>& out) {
        auto& xn = *out.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        for (auto& g : xn.grad) g += out.grad[0];
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, double c) {
    std::vector<T> y = x.data();
    const T cv = static_cast<T>(c);
    for (auto& v : y) v *= cv;
    return detail::make_op<T>(std::move(y), x.shape(), {x}, [cv](detail::Node<T>& out) {
        auto& xn = *out.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) xn.grad[i] += cv * out.grad[i];
    });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<T> y = a.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.data()[i];
    return detail::make_op<T>(std::move(y), a.shape(), {a, b}, [](detail::Node<T>& out) {
        auto& an = *out.parents[0];
        auto& bn = *out.parents[1];
        if (an.requires_grad) an.accum_grad(out.grad.data(), out.grad.size());
        if (bn.requires_grad) bn.accum_grad(out.grad.data(), out.grad.size());
    });
}

}  // namespace vt::numkit
