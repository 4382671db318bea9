#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace salfuse {

std::string Shape::str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> new_node(const Shape& shape) {
    auto node = std::make_shared<TensorNode>();
    node->shape = shape;
    node->values.assign(static_cast<std::size_t>(shape.numel()), 0.0);
    node->grad.assign(static_cast<std::size_t>(shape.numel()), 0.0);
    return node;
}

bool any_requires_grad(const std::vector<Tensor>& parents) {
    for (const auto& p : parents) {
        if (p.requires_grad()) return true;
    }
    return false;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_op_node(const Shape& shape, std::vector<Tensor> parents,
                    std::function<void(const TensorNode&)> backprop) {
    auto node = new_node(shape);
    if (g_grad_enabled && any_requires_grad(parents)) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    auto node = new_node(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    Tensor t = zeros(shape, requires_grad);
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
}

Tensor Tensor::from_values(const Shape& shape, std::vector<double> values,
                           bool requires_grad) {
    if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
        throw Error::usage("from_values: got " + std::to_string(values.size()) +
                           " values for shape " + shape.str());
    }
    Tensor t = zeros(shape, requires_grad);
    t.values() = std::move(values);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return full(Shape{1, 1, 1, 1}, value, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw Error::usage("item() requires a 1-element tensor, shape is " + shape().str());
    }
    return values()[0];
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
    const Shape in = input.shape();
    const Shape ks = kernel.shape();
    if (ks.c != in.c) {
        throw Error::config("conv2d: kernel channels do not match input, input " +
                            in.str() + " vs kernel " + ks.str());
    }
    if (bias.shape() != Shape{1, ks.n, 1, 1}) {
        throw Error::config("conv2d: bias shape " + bias.shape().str() +
                            " does not match kernel output channels " + std::to_string(ks.n));
    }
    if (stride < 1) throw Error::config("conv2d: stride must be positive");
    if (padding < 0) throw Error::config("conv2d: padding must be non-negative");
    const int num_h = in.h + 2 * padding - ks.h;
    const int num_w = in.w + 2 * padding - ks.w;
    if (num_h < 0 || num_w < 0 || num_h % stride != 0 || num_w % stride != 0) {
        throw Error::config("conv2d: output extent is not a positive integer for input " +
                            in.str() + ", kernel " + ks.str() + ", stride " +
                            std::to_string(stride) + ", padding " + std::to_string(padding));
    }
    const int oh = num_h / stride + 1;
    const int ow = num_w / stride + 1;
    const Shape out_shape{in.n, ks.n, oh, ow};

    Tensor out = make_op_node(
        out_shape, {input, kernel, bias},
        [input, kernel, bias, stride, padding](const TensorNode& node) {
            const Shape in_s = input.shape();
            const Shape k_s = kernel.shape();
            const Shape o_s = node.shape;
            const double* go = node.grad.data();
            const double* iv = input.values().data();
            const double* kv = kernel.values().data();
            double* gin = input.requires_grad() ? input.grad().data() : nullptr;
            double* gker = kernel.requires_grad() ? kernel.grad().data() : nullptr;
            double* gbias = bias.requires_grad() ? bias.grad().data() : nullptr;

            for (int b = 0; b < o_s.n; ++b) {
                for (int oc = 0; oc < o_s.c; ++oc) {
                    const double* go_map = go + (static_cast<std::int64_t>(b) * o_s.c + oc) * o_s.h * o_s.w;
                    if (gbias) {
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < static_cast<std::int64_t>(o_s.h) * o_s.w; ++i) acc += go_map[i];
                        gbias[oc] += acc;
                    }
                    for (int ic = 0; ic < in_s.c; ++ic) {
                        const double* in_map = iv + (static_cast<std::int64_t>(b) * in_s.c + ic) * in_s.h * in_s.w;
                        double* gin_map = gin ? gin + (static_cast<std::int64_t>(b) * in_s.c + ic) * in_s.h * in_s.w : nullptr;
                        for (int kh = 0; kh < k_s.h; ++kh) {
                            for (int kw = 0; kw < k_s.w; ++kw) {
                                const std::int64_t kidx =
                                    ((static_cast<std::int64_t>(oc) * k_s.c + ic) * k_s.h + kh) * k_s.w + kw;
                                const double wval = kv[kidx];
                                double wgrad = 0.0;
                                for (int r = 0; r < o_s.h; ++r) {
                                    const int ih = r * stride + kh - padding;
                                    if (ih < 0 || ih >= in_s.h) continue;
                                    const double* in_row = in_map + static_cast<std::int64_t>(ih) * in_s.w;
                                    double* gin_row = gin_map ? gin_map + static_cast<std::int64_t>(ih) * in_s.w : nullptr;
                                    const double* go_row = go_map + static_cast<std::int64_t>(r) * o_s.w;
                                    for (int cpos = 0; cpos < o_s.w; ++cpos) {
                                        const int iw = cpos * stride + kw - padding;
                                        if (iw < 0 || iw >= in_s.w) continue;
                                        const double g = go_row[cpos];
                                        wgrad += g * in_row[iw];
                                        if (gin_row) gin_row[iw] += g * wval;
                                    }
                                }
                                if (gker) gker[kidx] += wgrad;
                            }
                        }
                    }
                }
            }
        });

    const double* iv = input.values().data();
    const double* kv = kernel.values().data();
    const double* bv = bias.values().data();
    double* ov = out.values().data();
    for (int b = 0; b < out_shape.n; ++b) {
        for (int oc = 0; oc < out_shape.c; ++oc) {
            double* out_map = ov + (static_cast<std::int64_t>(b) * out_shape.c + oc) * oh * ow;
            const double bias_v = bv[oc];
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i) out_map[i] = bias_v;
            for (int ic = 0; ic < in.c; ++ic) {
                const double* in_map = iv + (static_cast<std::int64_t>(b) * in.c + ic) * in.h * in.w;
                for (int kh = 0; kh < ks.h; ++kh) {
                    for (int kw = 0; kw < ks.w; ++kw) {
                        const double wval =
                            kv[((static_cast<std::int64_t>(oc) * ks.c + ic) * ks.h + kh) * ks.w + kw];
                        if (wval == 0.0) continue;
                        for (int r = 0; r < oh; ++r) {
                            const int ih = r * stride + kh - padding;
                            if (ih < 0 || ih >= in.h) continue;
                            const double* in_row = in_map + static_cast<std::int64_t>(ih) * in.w;
                            double* out_row = out_map + static_cast<std::int64_t>(r) * ow;
                            // valid ow range for this kw: 0 <= c*stride + kw - padding < W
                            int c_lo = 0;
                            int c_hi = ow - 1;
                            if (stride == 1) {
                                c_lo = std::max(0, padding - kw);
                                c_hi = std::min(ow - 1, in.w - 1 + padding - kw);
                                const int shift = kw - padding;
                                for (int cpos = c_lo; cpos <= c_hi; ++cpos) {
                                    out_row[cpos] += wval * in_row[cpos + shift];
                                }
                            } else {
                                for (int cpos = c_lo; cpos <= c_hi; ++cpos) {
                                    const int iw = cpos * stride + kw - padding;
                                    if (iw < 0 || iw >= in.w) continue;
                                    out_row[cpos] += wval * in_row[iw];
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

// ---------------------------------------------------------------------------
// maxpool2d
// ---------------------------------------------------------------------------

Tensor maxpool2d(const Tensor& input) {
    const Shape in = input.shape();
    if (in.h % 2 != 0 || in.w % 2 != 0) {
        throw Error::config("maxpool2d: spatial extents must be even, got " + in.str());
    }
    const Shape out_shape{in.n, in.c, in.h / 2, in.w / 2};

    // Row-major argmax per window, frozen at forward time for the backward pass.
    auto argmax = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(out_shape.numel()));

    Tensor out = make_op_node(out_shape, {input},
                              [input, argmax](const TensorNode& node) {
                                  double* gin = input.grad().data();
                                  const double* go = node.grad.data();
                                  for (std::size_t i = 0; i < argmax->size(); ++i) {
                                      gin[(*argmax)[i]] += go[i];
                                  }
                              });

    const double* iv = input.values().data();
    double* ov = out.values().data();
    std::int64_t oi = 0;
    for (int b = 0; b < in.n; ++b) {
        for (int c = 0; c < in.c; ++c) {
            const std::int64_t base = (static_cast<std::int64_t>(b) * in.c + c) * in.h * in.w;
            for (int r = 0; r < out_shape.h; ++r) {
                for (int q = 0; q < out_shape.w; ++q) {
                    const std::int64_t i00 = base + static_cast<std::int64_t>(2 * r) * in.w + 2 * q;
                    const std::int64_t cand[4] = {i00, i00 + 1, i00 + in.w, i00 + in.w + 1};
                    std::int64_t best = cand[0];
                    double best_v = iv[cand[0]];
                    for (int k = 1; k < 4; ++k) {
                        if (iv[cand[k]] > best_v) {  // strict: first occurrence wins ties
                            best_v = iv[cand[k]];
                            best = cand[k];
                        }
                    }
                    ov[oi] = best_v;
                    (*argmax)[static_cast<std::size_t>(oi)] = best;
                    ++oi;
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& input) {
    Tensor out = make_op_node(input.shape(), {input},
                              [input](const TensorNode& node) {
                                  double* gin = input.grad().data();
                                  const double* go = node.grad.data();
                                  const double* v = input.values().data();
                                  for (std::size_t i = 0; i < node.grad.size(); ++i) {
                                      if (v[i] > 0.0) gin[i] += go[i];
                                  }
                              });
    const double* iv = input.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < out.values().size(); ++i) ov[i] = iv[i] > 0.0 ? iv[i] : 0.0;
    return out;
}

Tensor sigmoid(const Tensor& input) {
    // The backward pass reads the forward output straight from the node, so
    // the closure never has to capture its own tensor.
    Tensor out = make_op_node(input.shape(), {input},
                              [input](const TensorNode& node) {
                                  double* gin = input.grad().data();
                                  const double* go = node.grad.data();
                                  const double* s = node.values.data();
                                  for (std::size_t i = 0; i < node.grad.size(); ++i) {
                                      gin[i] += go[i] * s[i] * (1.0 - s[i]);
                                  }
                              });
    const double* iv = input.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < out.values().size(); ++i) {
        double x = iv[i];
        double s;
        if (x >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            s = e / (1.0 + e);
        }
        // keep the output strictly inside (0,1) even for extreme inputs
        if (s >= 1.0) s = 1.0 - std::numeric_limits<double>::epsilon();
        if (s <= 0.0) s = std::numeric_limits<double>::min();
        ov[i] = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// upsample_bilinear
// ---------------------------------------------------------------------------

namespace {

// Half-pixel source mapping: src = (dst + 0.5)/factor - 0.5, edges clamped.
struct Interp {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

Interp make_interp(int out_extent, int in_extent, int factor) {
    Interp ip;
    ip.lo.resize(out_extent);
    ip.hi.resize(out_extent);
    ip.frac.resize(out_extent);
    for (int o = 0; o < out_extent; ++o) {
        double src = (o + 0.5) / factor - 0.5;
        if (src < 0.0) src = 0.0;
        const double max_src = static_cast<double>(in_extent - 1);
        if (src > max_src) src = max_src;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in_extent - 1) lo = in_extent - 1;
        ip.lo[o] = lo;
        ip.hi[o] = std::min(lo + 1, in_extent - 1);
        ip.frac[o] = src - lo;
    }
    return ip;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& input, int factor) {
    if (factor < 1) {
        throw Error::config("upsample_bilinear: factor must be >= 1, got " + std::to_string(factor));
    }
    const Shape in = input.shape();
    const Shape out_shape{in.n, in.c, in.h * factor, in.w * factor};
    auto rows = std::make_shared<Interp>(make_interp(out_shape.h, in.h, factor));
    auto cols = std::make_shared<Interp>(make_interp(out_shape.w, in.w, factor));

    Tensor out = make_op_node(
        out_shape, {input},
        [input, rows, cols](const TensorNode& node) {
            const Shape in_s = input.shape();
            const Shape o_s = node.shape;
            double* gin = input.grad().data();
            const double* go = node.grad.data();
            const std::int64_t maps = static_cast<std::int64_t>(in_s.n) * in_s.c;
            for (std::int64_t m = 0; m < maps; ++m) {
                double* gin_map = gin + m * in_s.h * in_s.w;
                const double* go_map = go + m * o_s.h * o_s.w;
                for (int r = 0; r < o_s.h; ++r) {
                    const int r0 = rows->lo[r], r1 = rows->hi[r];
                    const double fr = rows->frac[r];
                    for (int q = 0; q < o_s.w; ++q) {
                        const int c0 = cols->lo[q], c1 = cols->hi[q];
                        const double fc = cols->frac[q];
                        const double g = go_map[static_cast<std::int64_t>(r) * o_s.w + q];
                        gin_map[static_cast<std::int64_t>(r0) * in_s.w + c0] += g * (1 - fr) * (1 - fc);
                        gin_map[static_cast<std::int64_t>(r0) * in_s.w + c1] += g * (1 - fr) * fc;
                        gin_map[static_cast<std::int64_t>(r1) * in_s.w + c0] += g * fr * (1 - fc);
                        gin_map[static_cast<std::int64_t>(r1) * in_s.w + c1] += g * fr * fc;
                    }
                }
            }
        });

    const double* iv = input.values().data();
    double* ov = out.values().data();
    const std::int64_t maps = static_cast<std::int64_t>(in.n) * in.c;
    for (std::int64_t m = 0; m < maps; ++m) {
        const double* in_map = iv + m * in.h * in.w;
        double* out_map = ov + m * static_cast<std::int64_t>(out_shape.h) * out_shape.w;
        for (int r = 0; r < out_shape.h; ++r) {
            const int r0 = rows->lo[r], r1 = rows->hi[r];
            const double fr = rows->frac[r];
            const double* row0 = in_map + static_cast<std::int64_t>(r0) * in.w;
            const double* row1 = in_map + static_cast<std::int64_t>(r1) * in.w;
            double* out_row = out_map + static_cast<std::int64_t>(r) * out_shape.w;
            for (int q = 0; q < out_shape.w; ++q) {
                const int c0 = cols->lo[q], c1 = cols->hi[q];
                const double fc = cols->frac[q];
                const double top = row0[c0] * (1 - fc) + row0[c1] * fc;
                const double bot = row1[c0] * (1 - fc) + row1[c1] * fc;
                out_row[q] = top * (1 - fr) + bot * fr;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// concat_channels
// ---------------------------------------------------------------------------

Tensor concat_channels(const std::vector<Tensor>& inputs) {
    if (inputs.empty()) throw Error::config("concat_channels: needs at least one input");
    if (inputs.size() == 1) return inputs[0];
    const Shape first = inputs[0].shape();
    int total_c = 0;
    for (const auto& t : inputs) {
        const Shape s = t.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw Error::config("concat_channels: extents mismatch, " + first.str() +
                                " vs " + s.str());
        }
        total_c += s.c;
    }
    const Shape out_shape{first.n, total_c, first.h, first.w};

    Tensor out = make_op_node(
        out_shape, inputs,
        [inputs](const TensorNode& node) {
            const Shape o_s = node.shape;
            const std::int64_t hw = static_cast<std::int64_t>(o_s.h) * o_s.w;
            for (int b = 0; b < o_s.n; ++b) {
                std::int64_t c_off = 0;
                for (const auto& t : inputs) {
                    const int tc = t.shape().c;
                    if (t.requires_grad()) {
                        double* gin = t.grad().data() + static_cast<std::int64_t>(b) * tc * hw;
                        const double* go = node.grad.data() +
                                           (static_cast<std::int64_t>(b) * o_s.c + c_off) * hw;
                        for (std::int64_t i = 0; i < tc * hw; ++i) gin[i] += go[i];
                    }
                    c_off += tc;
                }
            }
        });

    double* ov = out.values().data();
    const std::int64_t hw = static_cast<std::int64_t>(first.h) * first.w;
    for (int b = 0; b < first.n; ++b) {
        std::int64_t c_off = 0;
        for (const auto& t : inputs) {
            const int tc = t.shape().c;
            const double* iv = t.values().data() + static_cast<std::int64_t>(b) * tc * hw;
            std::copy(iv, iv + tc * hw,
                      ov + (static_cast<std::int64_t>(b) * total_c + c_off) * hw);
            c_off += tc;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// elementwise combiners
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) {
        throw Error::config("add: shape mismatch, " + a.shape().str() + " vs " + b.shape().str());
    }
    Tensor out = make_op_node(a.shape(), {a, b},
                              [a, b](const TensorNode& node) {
                                  const double* go = node.grad.data();
                                  if (a.requires_grad()) {
                                      double* ga = a.grad().data();
                                      for (std::size_t i = 0; i < node.grad.size(); ++i) ga[i] += go[i];
                                  }
                                  if (b.requires_grad()) {
                                      double* gb = b.grad().data();
                                      for (std::size_t i = 0; i < node.grad.size(); ++i) gb[i] += go[i];
                                  }
                              });
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < out.values().size(); ++i) ov[i] = av[i] + bv[i];
    return out;
}

Tensor scale(const Tensor& map, const Tensor& weight) {
    if (weight.numel() != 1) {
        throw Error::usage("scale: weight must be a 1-element tensor, shape is " +
                           weight.shape().str());
    }
    Tensor out = make_op_node(map.shape(), {map, weight},
                              [map, weight](const TensorNode& node) {
                                  const double* go = node.grad.data();
                                  const double w = weight.values()[0];
                                  if (map.requires_grad()) {
                                      double* gm = map.grad().data();
                                      for (std::size_t i = 0; i < node.grad.size(); ++i) gm[i] += go[i] * w;
                                  }
                                  if (weight.requires_grad()) {
                                      const double* mv = map.values().data();
                                      double acc = 0.0;
                                      for (std::size_t i = 0; i < node.grad.size(); ++i) acc += go[i] * mv[i];
                                      weight.grad()[0] += acc;
                                  }
                              });
    const double w = weight.values()[0];
    const double* mv = map.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < out.values().size(); ++i) ov[i] = mv[i] * w;
    return out;
}

Tensor clamp(const Tensor& input, double lo, double hi) {
    if (!(lo < hi)) throw Error::usage("clamp: lo must be < hi");
    Tensor out = make_op_node(input.shape(), {input},
                              [input, lo, hi](const TensorNode& node) {
                                  double* gin = input.grad().data();
                                  const double* go = node.grad.data();
                                  const double* v = input.values().data();
                                  for (std::size_t i = 0; i < node.grad.size(); ++i) {
                                      if (v[i] >= lo && v[i] <= hi) gin[i] += go[i];
                                  }
                              });
    const double* iv = input.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < out.values().size(); ++i) {
        ov[i] = std::min(hi, std::max(lo, iv[i]));
    }
    return out;
}

Tensor sum(const Tensor& input) {
    Tensor out = make_op_node(Shape{1, 1, 1, 1}, {input},
                              [input](const TensorNode& node) {
                                  double* gin = input.grad().data();
                                  const double g = node.grad[0];
                                  for (std::size_t i = 0; i < input.values().size(); ++i) gin[i] += g;
                              });
    double acc = 0.0;
    for (double v : input.values()) acc += v;
    out.values()[0] = acc;
    return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Tensor l2_loss(const Tensor& x, const Tensor& y) {
    if (!(x.shape() == y.shape())) {
        throw Error::config("l2_loss: shape mismatch, " + x.shape().str() + " vs " +
                            y.shape().str());
    }
    Tensor out = make_op_node(Shape{1, 1, 1, 1}, {x, y},
                              [x, y](const TensorNode& node) {
                                  const double g = node.grad[0];
                                  const double* xv = x.values().data();
                                  const double* yv = y.values().data();
                                  if (x.requires_grad()) {
                                      double* gx = x.grad().data();
                                      for (std::size_t i = 0; i < x.values().size(); ++i) {
                                          gx[i] += 2.0 * (xv[i] - yv[i]) * g;
                                      }
                                  }
                                  if (y.requires_grad()) {
                                      double* gy = y.grad().data();
                                      for (std::size_t i = 0; i < y.values().size(); ++i) {
                                          gy[i] -= 2.0 * (xv[i] - yv[i]) * g;
                                      }
                                  }
                              });
    const double* xv = x.values().data();
    const double* yv = y.values().data();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.values().size(); ++i) {
        const double d = xv[i] - yv[i];
        acc += d * d;
    }
    out.values()[0] = acc;
    return out;
}

Tensor cross_entropy(const Tensor& pred, const Tensor& target) {
    if (!(pred.shape() == target.shape())) {
        throw Error::config("cross_entropy: shape mismatch, " + pred.shape().str() + " vs " +
                            target.shape().str());
    }
    for (double t : target.values()) {
        if (t != 0.0 && t != 1.0) {
            throw Error::usage("cross_entropy: target must be binary, found " + std::to_string(t));
        }
    }
    const double inv_n = 1.0 / static_cast<double>(pred.numel());
    Tensor out = make_op_node(Shape{1, 1, 1, 1}, {pred, target},
                              [pred, target, inv_n](const TensorNode& node) {
                                  if (!pred.requires_grad()) return;
                                  const double g = node.grad[0] * inv_n;
                                  const double* pv = pred.values().data();
                                  const double* tv = target.values().data();
                                  double* gp = pred.grad().data();
                                  for (std::size_t i = 0; i < pred.values().size(); ++i) {
                                      gp[i] += g * (pv[i] - tv[i]) / (pv[i] * (1.0 - pv[i]));
                                  }
                              });
    const double* pv = pred.values().data();
    const double* tv = target.values().data();
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.values().size(); ++i) {
        acc -= tv[i] * std::log(pv[i]) + (1.0 - tv[i]) * std::log(1.0 - pv[i]);
    }
    out.values()[0] = acc * inv_n;
    return out;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.valid()) throw Error::usage("backward: empty tensor");
    if (loss.numel() != 1) {
        throw Error::usage("backward: loss must be scalar, shape is " + loss.shape().str());
    }
    loss.grad()[0] += 1.0;
    if (!loss.requires_grad()) return;

    // Post-order DFS gives a topological order; reversed, every node's grad is
    // complete before its backprop runs.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;

    struct Frame {
        const Tensor* t;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({&loss, 0});
    seen.insert(loss.node());
    while (!stack.empty()) {
        Frame& f = stack.back();
        TensorNode* n = f.t->node();
        if (f.next_parent < n->parents.size()) {
            const Tensor& p = n->parents[f.next_parent++];
            if (p.requires_grad() && seen.insert(p.node()).second) {
                stack.push_back({&p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// parameters + SGD
// ---------------------------------------------------------------------------

Parameter* ParameterStore::create(const std::string& name, const Shape& shape) {
    if (find(name) != nullptr) {
        throw Error::config("parameter name already registered: " + name);
    }
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->tensor = Tensor::zeros(shape, /*requires_grad=*/true);
    p->momentum.assign(static_cast<std::size_t>(shape.numel()), 0.0);
    order_.push_back(std::move(p));
    return order_.back().get();
}

Parameter* ParameterStore::find(const std::string& name) {
    for (auto& p : order_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
    for (const auto& p : order_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

std::vector<Parameter*> ParameterStore::all() {
    std::vector<Parameter*> out;
    out.reserve(order_.size());
    for (auto& p : order_) out.push_back(p.get());
    return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
    std::vector<const Parameter*> out;
    out.reserve(order_.size());
    for (const auto& p : order_) out.push_back(p.get());
    return out;
}

void ParameterStore::zero_grad() {
    for (auto& p : order_) p->tensor.zero_grad();
}

void init_conv_kernel(Parameter* kernel, Rng& rng) {
    const Shape s = kernel->tensor.shape();
    const double fan_in = static_cast<double>(s.c) * s.h * s.w;
    const double bound = 1.0 / std::sqrt(fan_in);
    for (double& v : kernel->tensor.values()) v = rng.uniform(-bound, bound);
}

void sgd_step(const std::vector<Parameter*>& params, double lr, double momentum) {
    if (lr < 0.0) throw Error::usage("sgd_step: learning rate must be non-negative");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw Error::usage("sgd_step: momentum must be in [0, 1)");
    }
    for (Parameter* p : params) {
        const std::vector<double>& g = p->tensor.grad();
        for (double gv : g) {
            if (!std::isfinite(gv)) {
                throw Error::training("non-finite gradient in parameter " + p->name);
            }
        }
        std::vector<double>& v = p->tensor.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            p->momentum[i] = momentum * p->momentum[i] + g[i];
            v[i] -= lr * p->momentum[i];
        }
        p->tensor.zero_grad();
    }
}

}  // namespace salfuse
