#include <cmath>
#include <numbers>

#include "canon/kernels.hpp"
#include "canon/tensor.hpp"

namespace canon {

namespace {

using Node = Tensor::Node;

std::shared_ptr<Node> make_node(std::vector<long> shape, const char* op,
                                std::initializer_list<Tensor> parents) {
    auto n = std::make_shared<Node>();
    n->data.assign(std::size_t(numel(shape)), 0.0);
    n->shape = std::move(shape);
    n->op = op;
    if (grad_enabled()) {
        bool rg = false;
        for (const Tensor& p : parents) rg = rg || p.requires_grad();
        if (rg) {
            n->requires_grad = true;
            for (const Tensor& p : parents) n->parents.push_back(p.node());
        }
    }
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch");
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": rank-2 tensor required");
}

// Rows/cols view of a rank-1 or rank-2 tensor (rank-1 treated as one row).
std::pair<long, long> as_rows(const Tensor& t, const char* op) {
    if (t.rank() == 1) return {1, t.dim(0)};
    if (t.rank() == 2) return {t.dim(0), t.dim(1)};
    throw DimensionError(std::string(op) + ": rank-1 or rank-2 tensor required");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto n = make_node(a.shape(), "add", {a, b});
    kern::active().vadd(n->data.data(), a.data().data(), b.data().data(), n->size());
    if (n->requires_grad) {
        n->backward_fn = [](Node& out) {
            for (int i = 0; i < 2; ++i) {
                Node& p = *out.parents[std::size_t(i)];
                if (p.requires_grad)
                    kern::active().axpy(p.grad.data(), 1.0, out.grad.data(), out.size());
            }
        };
    }
    return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto n = make_node(a.shape(), "sub", {a, b});
    kern::active().vsub(n->data.data(), a.data().data(), b.data().data(), n->size());
    if (n->requires_grad) {
        n->backward_fn = [](Node& out) {
            Node& pa = *out.parents[0];
            Node& pb = *out.parents[1];
            if (pa.requires_grad)
                kern::active().axpy(pa.grad.data(), 1.0, out.grad.data(), out.size());
            if (pb.requires_grad)
                kern::active().axpy(pb.grad.data(), -1.0, out.grad.data(), out.size());
        };
    }
    return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto n = make_node(a.shape(), "mul", {a, b});
    kern::active().vmul(n->data.data(), a.data().data(), b.data().data(), n->size());
    if (n->requires_grad) {
        n->backward_fn = [](Node& out) {
            Node& pa = *out.parents[0];
            Node& pb = *out.parents[1];
            if (pa.requires_grad)
                for (std::size_t i = 0; i < out.size(); ++i)
                    pa.grad[i] += out.grad[i] * pb.data[i];
            if (pb.requires_grad)
                for (std::size_t i = 0; i < out.size(); ++i)
                    pb.grad[i] += out.grad[i] * pa.data[i];
        };
    }
    return Tensor(n);
}

Tensor scale(const Tensor& a, double c) {
    auto n = make_node(a.shape(), "scale", {a});
    n->data = std::vector<double>(a.data().begin(), a.data().end());
    kern::active().scale(n->data.data(), c, n->size());
    if (n->requires_grad) {
        n->backward_fn = [c](Node& out) {
            Node& p = *out.parents[0];
            if (p.requires_grad)
                kern::active().axpy(p.grad.data(), c, out.grad.data(), out.size());
        };
    }
    return Tensor(n);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor vexp(const Tensor& a) {
    auto n = make_node(a.shape(), "exp", {a});
    for (std::size_t i = 0; i < n->size(); ++i) n->data[i] = std::exp(a.data()[i]);
    if (n->requires_grad) {
        n->backward_fn = [](Node& out) {
            Node& p = *out.parents[0];
            if (p.requires_grad)
                for (std::size_t i = 0; i < out.size(); ++i)
                    p.grad[i] += out.grad[i] * out.data[i];
        };
    }
    return Tensor(n);
}

Tensor vabs(const Tensor& a) {
    auto n = make_node(a.shape(), "abs", {a});
    for (std::size_t i = 0; i < n->size(); ++i) n->data[i] = std::abs(a.data()[i]);
    if (n->requires_grad) {
        n->backward_fn = [](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double x = p.data[i];
                const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                p.grad[i] += out.grad[i] * s;
            }
        };
    }
    return Tensor(n);
}

Tensor vtanh(const Tensor& a) {
    auto n = make_node(a.shape(), "tanh", {a});
    for (std::size_t i = 0; i < n->size(); ++i) n->data[i] = std::tanh(a.data()[i]);
    if (n->requires_grad) {
        n->backward_fn = [](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            for (std::size_t i = 0; i < out.size(); ++i)
                p.grad[i] += out.grad[i] * (1.0 - out.data[i] * out.data[i]);
        };
    }
    return Tensor(n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0)) throw DimensionError("matmul: inner extents disagree");
    const long rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
    auto n = make_node({rows, cols}, "matmul", {a, b});
    const auto& k = kern::active();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (long i = 0; i < rows; ++i) {
        double* out_row = n->data.data() + i * cols;
        const double* a_row = pa + i * inner;
        for (long kk = 0; kk < inner; ++kk)
            k.axpy(out_row, a_row[kk], pb + kk * cols, std::size_t(cols));
    }
    if (n->requires_grad) {
        n->backward_fn = [rows, inner, cols](Node& out) {
            Node& pa_ = *out.parents[0];
            Node& pb_ = *out.parents[1];
            const auto& kb = kern::active();
            if (pa_.requires_grad) {
                // dA[i][kk] = dot(g_i, B_kk)
                for (long i = 0; i < rows; ++i) {
                    const double* g_row = out.grad.data() + i * cols;
                    double* da_row = pa_.grad.data() + i * inner;
                    for (long kk = 0; kk < inner; ++kk)
                        da_row[kk] += kb.dot(g_row, pb_.data.data() + kk * cols, std::size_t(cols));
                }
            }
            if (pb_.requires_grad) {
                // dB[kk] += a[i][kk] * g_i
                for (long i = 0; i < rows; ++i) {
                    const double* g_row = out.grad.data() + i * cols;
                    const double* a_row = pa_.data.data() + i * inner;
                    for (long kk = 0; kk < inner; ++kk)
                        kb.axpy(pb_.grad.data() + kk * cols, a_row[kk], g_row, std::size_t(cols));
                }
            }
        };
    }
    return Tensor(n);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    if (a.dim(1) != b.dim(1)) throw DimensionError("matmul_nt: inner extents disagree");
    const long rows = a.dim(0), inner = a.dim(1), cols = b.dim(0);
    auto n = make_node({rows, cols}, "matmul_nt", {a, b});
    const auto& k = kern::active();
    for (long i = 0; i < rows; ++i) {
        const double* a_row = a.data().data() + i * inner;
        double* out_row = n->data.data() + i * cols;
        for (long j = 0; j < cols; ++j)
            out_row[j] = k.dot(a_row, b.data().data() + j * inner, std::size_t(inner));
    }
    if (n->requires_grad) {
        n->backward_fn = [rows, inner, cols](Node& out) {
            Node& pa_ = *out.parents[0];
            Node& pb_ = *out.parents[1];
            const auto& kb = kern::active();
            for (long i = 0; i < rows; ++i) {
                const double* g_row = out.grad.data() + i * cols;
                for (long j = 0; j < cols; ++j) {
                    const double g = g_row[j];
                    if (g == 0.0) continue;
                    if (pa_.requires_grad)
                        kb.axpy(pa_.grad.data() + i * inner, g,
                                pb_.data.data() + j * inner, std::size_t(inner));
                    if (pb_.requires_grad)
                        kb.axpy(pb_.grad.data() + j * inner, g,
                                pa_.data.data() + i * inner, std::size_t(inner));
                }
            }
        };
    }
    return Tensor(n);
}

Tensor add_bias(const Tensor& mat, const Tensor& bias) {
    require_rank2(mat, "add_bias");
    if (bias.rank() != 1 || bias.dim(0) != mat.dim(1))
        throw DimensionError("add_bias: bias length must equal column count");
    const long rows = mat.dim(0), cols = mat.dim(1);
    auto n = make_node({rows, cols}, "add_bias", {mat, bias});
    for (long i = 0; i < rows; ++i)
        kern::active().vadd(n->data.data() + i * cols, mat.data().data() + i * cols,
                            bias.data().data(), std::size_t(cols));
    if (n->requires_grad) {
        n->backward_fn = [rows, cols](Node& out) {
            Node& pm = *out.parents[0];
            Node& pb = *out.parents[1];
            if (pm.requires_grad)
                kern::active().axpy(pm.grad.data(), 1.0, out.grad.data(), out.size());
            if (pb.requires_grad)
                for (long i = 0; i < rows; ++i)
                    kern::active().axpy(pb.grad.data(), 1.0, out.grad.data() + i * cols,
                                        std::size_t(cols));
        };
    }
    return Tensor(n);
}

Tensor gather_rows(const Tensor& table, const std::vector<long>& ids) {
    require_rank2(table, "gather_rows");
    const long nrows = table.dim(0), d = table.dim(1);
    for (long id : ids)
        if (id < 0 || id >= nrows) throw IndexError("gather_rows: row index out of range");
    auto n = make_node({long(ids.size()), d}, "gather_rows", {table});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data().data() + ids[i] * d, d, n->data.data() + long(i) * d);
    if (n->requires_grad) {
        n->backward_fn = [ids, d](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            for (std::size_t i = 0; i < ids.size(); ++i)
                kern::active().axpy(p.grad.data() + ids[i] * d, 1.0,
                                    out.grad.data() + long(i) * d, std::size_t(d));
        };
    }
    return Tensor(n);
}

Tensor overlay_rows(const Tensor& base, const Tensor& delta, const std::vector<long>& rows) {
    require_rank2(base, "overlay_rows");
    require_rank2(delta, "overlay_rows");
    if (delta.dim(1) != base.dim(1))
        throw DimensionError("overlay_rows: column counts disagree");
    if (long(rows.size()) != delta.dim(0))
        throw DimensionError("overlay_rows: one row index per delta row required");
    const long d = base.dim(1);
    for (long r : rows)
        if (r < 0 || r >= base.dim(0)) throw IndexError("overlay_rows: row index out of range");
    auto n = make_node(base.shape(), "overlay_rows", {delta});
    std::copy(base.data().begin(), base.data().end(), n->data.begin());
    for (std::size_t i = 0; i < rows.size(); ++i)
        kern::active().axpy(n->data.data() + rows[i] * d, 1.0,
                            delta.data().data() + long(i) * d, std::size_t(d));
    if (n->requires_grad) {
        n->backward_fn = [rows, d](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            for (std::size_t i = 0; i < rows.size(); ++i)
                kern::active().axpy(p.grad.data() + long(i) * d, 1.0,
                                    out.grad.data() + rows[i] * d, std::size_t(d));
        };
    }
    return Tensor(n);
}

Tensor prefix_softmax(const Tensor& mat, const std::vector<long>& prefix) {
    require_rank2(mat, "prefix_softmax");
    const long rows = mat.dim(0), cols = mat.dim(1);
    if (long(prefix.size()) != rows)
        throw DimensionError("prefix_softmax: one prefix length per row required");
    for (long L : prefix)
        if (L < 1 || L > cols) throw DimensionError("prefix_softmax: prefix length out of range");
    auto n = make_node({rows, cols}, "prefix_softmax", {mat});
    const auto& k = kern::active();
    for (long i = 0; i < rows; ++i) {
        const long L = prefix[i];
        const double* x = mat.data().data() + i * cols;
        double* out = n->data.data() + i * cols;
        const double m = k.max(x, std::size_t(L));
        double z = 0.0;
        for (long j = 0; j < L; ++j) {
            out[j] = std::exp(x[j] - m);
            z += out[j];
        }
        k.scale(out, 1.0 / z, std::size_t(L));
    }
    if (n->requires_grad) {
        n->backward_fn = [prefix, cols](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            const auto& kb = kern::active();
            for (std::size_t i = 0; i < prefix.size(); ++i) {
                const long L = prefix[i];
                const double* s = out.data.data() + long(i) * cols;
                const double* g = out.grad.data() + long(i) * cols;
                double* dx = p.grad.data() + long(i) * cols;
                const double inner = kb.dot(s, g, std::size_t(L));
                for (long j = 0; j < L; ++j) dx[j] += s[j] * (g[j] - inner);
            }
        };
    }
    return Tensor(n);
}

Tensor log_softmax(const Tensor& x) {
    auto [rows, cols] = as_rows(x, "log_softmax");
    auto n = make_node(x.shape(), "log_softmax", {x});
    const auto& k = kern::active();
    for (long i = 0; i < rows; ++i) {
        const double* xi = x.data().data() + i * cols;
        double* out = n->data.data() + i * cols;
        const double m = k.max(xi, std::size_t(cols));
        double z = 0.0;
        for (long j = 0; j < cols; ++j) z += std::exp(xi[j] - m);
        const double lse = m + std::log(z);
        for (long j = 0; j < cols; ++j) out[j] = xi[j] - lse;
    }
    if (n->requires_grad) {
        n->backward_fn = [rows, cols](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            for (long i = 0; i < rows; ++i) {
                const double* lp = out.data.data() + i * cols;
                const double* g = out.grad.data() + i * cols;
                double* dx = p.grad.data() + i * cols;
                const double gs = kern::active().sum(g, std::size_t(cols));
                for (long j = 0; j < cols; ++j) dx[j] += g[j] - std::exp(lp[j]) * gs;
            }
        };
    }
    return Tensor(n);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_rank2(x, "layer_norm");
    const long rows = x.dim(0), d = x.dim(1);
    if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
        throw DimensionError("layer_norm: gain/bias length must equal feature dim");
    auto n = make_node({rows, d}, "layer_norm", {x, gain, bias});
    std::vector<double> xhat(std::size_t(rows * d), 0.0);
    std::vector<double> istd(std::size_t(rows), 0.0);
    const auto& k = kern::active();
    for (long i = 0; i < rows; ++i) {
        const double* xi = x.data().data() + i * d;
        const double mu = k.sum(xi, std::size_t(d)) / double(d);
        double var = 0.0;
        for (long j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= double(d);
        const double is = 1.0 / std::sqrt(var + eps);
        istd[std::size_t(i)] = is;
        double* xh = xhat.data() + i * d;
        double* out = n->data.data() + i * d;
        for (long j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mu) * is;
            out[j] = gain.data()[std::size_t(j)] * xh[j] + bias.data()[std::size_t(j)];
        }
    }
    if (n->requires_grad) {
        n->backward_fn = [rows, d, xhat = std::move(xhat), istd = std::move(istd)](Node& out) {
            Node& px = *out.parents[0];
            Node& pg = *out.parents[1];
            Node& pb = *out.parents[2];
            for (long i = 0; i < rows; ++i) {
                const double* g = out.grad.data() + i * d;
                const double* xh = xhat.data() + i * d;
                if (pg.requires_grad)
                    for (long j = 0; j < d; ++j) pg.grad[std::size_t(j)] += g[j] * xh[j];
                if (pb.requires_grad)
                    for (long j = 0; j < d; ++j) pb.grad[std::size_t(j)] += g[j];
                if (px.requires_grad) {
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (long j = 0; j < d; ++j) {
                        const double dxh = g[j] * pg.data[std::size_t(j)];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh[j];
                    }
                    mean_dxh /= double(d);
                    mean_dxh_xh /= double(d);
                    double* dx = px.grad.data() + i * d;
                    const double is = istd[std::size_t(i)];
                    for (long j = 0; j < d; ++j) {
                        const double dxh = g[j] * pg.data[std::size_t(j)];
                        dx[j] += is * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
            }
        };
    }
    return Tensor(n);
}

Tensor gelu(const Tensor& x) {
    auto n = make_node(x.shape(), "gelu", {x});
    const double c = std::sqrt(2.0 / std::numbers::pi);
    for (std::size_t i = 0; i < n->size(); ++i) {
        const double v = x.data()[i];
        const double u = c * (v + 0.044715 * v * v * v);
        n->data[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    if (n->requires_grad) {
        n->backward_fn = [c](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double v = p.data[i];
                const double u = c * (v + 0.044715 * v * v * v);
                const double t = std::tanh(u);
                const double du = c * (1.0 + 3.0 * 0.044715 * v * v);
                p.grad[i] += out.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
            }
        };
    }
    return Tensor(n);
}

Tensor col_slice(const Tensor& x, long c0, long c1) {
    require_rank2(x, "col_slice");
    if (c0 < 0 || c1 > x.dim(1) || c0 >= c1) throw IndexError("col_slice: bad column range");
    const long rows = x.dim(0), cols = x.dim(1), w = c1 - c0;
    auto n = make_node({rows, w}, "col_slice", {x});
    for (long i = 0; i < rows; ++i)
        std::copy_n(x.data().data() + i * cols + c0, w, n->data.data() + i * w);
    if (n->requires_grad) {
        n->backward_fn = [rows, cols, c0, w](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            for (long i = 0; i < rows; ++i)
                kern::active().axpy(p.grad.data() + i * cols + c0, 1.0,
                                    out.grad.data() + i * w, std::size_t(w));
        };
    }
    return Tensor(n);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    const long rows = parts[0].dim(0);
    long cols = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.dim(0) != rows) throw DimensionError("concat_cols: row counts disagree");
        cols += p.dim(1);
    }
    auto n = std::make_shared<Node>();
    n->shape = {rows, cols};
    n->data.assign(std::size_t(rows * cols), 0.0);
    n->op = "concat_cols";
    if (grad_enabled()) {
        bool rg = false;
        for (const Tensor& p : parts) rg = rg || p.requires_grad();
        if (rg) {
            n->requires_grad = true;
            for (const Tensor& p : parts) n->parents.push_back(p.node());
        }
    }
    long off = 0;
    std::vector<long> widths;
    for (const Tensor& p : parts) {
        const long w = p.dim(1);
        widths.push_back(w);
        for (long i = 0; i < rows; ++i)
            std::copy_n(p.data().data() + i * w, w, n->data.data() + i * cols + off);
        off += w;
    }
    if (n->requires_grad) {
        n->backward_fn = [rows, cols, widths](Node& out) {
            long o = 0;
            for (std::size_t pi = 0; pi < widths.size(); ++pi) {
                Node& p = *out.parents[pi];
                const long w = widths[pi];
                if (p.requires_grad)
                    for (long i = 0; i < rows; ++i)
                        kern::active().axpy(p.grad.data() + i * w, 1.0,
                                            out.grad.data() + i * cols + o, std::size_t(w));
                o += w;
            }
        };
    }
    return Tensor(n);
}

Tensor permute_cols(const Tensor& x, const std::vector<long>& perm) {
    require_rank2(x, "permute_cols");
    const long rows = x.dim(0), cols = x.dim(1);
    if (long(perm.size()) != cols) throw DimensionError("permute_cols: permutation size mismatch");
    std::vector<bool> seen(std::size_t(cols), false);
    for (long p : perm) {
        if (p < 0 || p >= cols || seen[std::size_t(p)])
            throw IndexError("permute_cols: not a permutation");
        seen[std::size_t(p)] = true;
    }
    auto n = make_node({rows, cols}, "permute_cols", {x});
    for (long i = 0; i < rows; ++i) {
        const double* xi = x.data().data() + i * cols;
        double* out = n->data.data() + i * cols;
        for (long j = 0; j < cols; ++j) out[j] = xi[perm[std::size_t(j)]];
    }
    if (n->requires_grad) {
        n->backward_fn = [rows, cols, perm](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            for (long i = 0; i < rows; ++i) {
                const double* g = out.grad.data() + i * cols;
                double* dx = p.grad.data() + i * cols;
                for (long j = 0; j < cols; ++j) dx[perm[std::size_t(j)]] += g[j];
            }
        };
    }
    return Tensor(n);
}

Tensor pick_sum(const Tensor& mat, const std::vector<std::pair<long, long>>& cells) {
    require_rank2(mat, "pick_sum");
    const long rows = mat.dim(0), cols = mat.dim(1);
    for (auto [r, c] : cells)
        if (r < 0 || r >= rows || c < 0 || c >= cols)
            throw IndexError("pick_sum: cell out of range");
    auto n = make_node({}, "pick_sum", {mat});
    double s = 0.0;
    for (auto [r, c] : cells) s += mat.data()[std::size_t(r * cols + c)];
    n->data[0] = s;
    if (n->requires_grad) {
        n->backward_fn = [cells, cols](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            for (auto [r, c] : cells) p.grad[std::size_t(r * cols + c)] += out.grad[0];
        };
    }
    return Tensor(n);
}

Tensor sum_all(const Tensor& x) {
    auto n = make_node({}, "sum_all", {x});
    n->data[0] = kern::active().sum(x.data().data(), x.size());
    if (n->requires_grad) {
        n->backward_fn = [](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            const double g = out.grad[0];
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
        };
    }
    return Tensor(n);
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / double(x.size())); }

Tensor softmax_cross_entropy(const Tensor& logits, long target) {
    if (logits.rank() != 1) throw DimensionError("softmax_cross_entropy: rank-1 logits required");
    const long v = logits.dim(0);
    if (target < 0 || target >= v) throw IndexError("softmax_cross_entropy: target out of range");
    auto n = make_node({}, "softmax_cross_entropy", {logits});
    const double* x = logits.data().data();
    const double m = kern::active().max(x, std::size_t(v));
    double z = 0.0;
    for (long j = 0; j < v; ++j) z += std::exp(x[j] - m);
    const double lse = m + std::log(z);
    n->data[0] = lse - x[target];
    if (n->requires_grad) {
        n->backward_fn = [v, target, m, lse](Node& out) {
            Node& p = *out.parents[0];
            if (!p.requires_grad) return;
            (void)m;
            const double g = out.grad[0];
            for (long j = 0; j < v; ++j) {
                double sj = std::exp(p.data[std::size_t(j)] - lse);
                p.grad[std::size_t(j)] += g * (sj - (j == target ? 1.0 : 0.0));
            }
        };
    }
    return Tensor(n);
}

}  // namespace canon
