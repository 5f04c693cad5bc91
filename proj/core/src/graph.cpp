#include "clipin/graph.hpp"

#include <cmath>
#include <numbers>

#include "clipin/error.hpp"
#include "clipin/positional.hpp"

namespace clipin {

namespace {

// c[m,n] = a[m,k] * b[k,n]
Tensor matmul_val(const Tensor& a, const Tensor& b) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw ConfigError("matmul: inner dimensions differ");
    Tensor c({m, n});
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) c(i, j) += av * b(p, j);
        }
    }
    return c;
}

// da[m,k] += dc[m,n] * b[k,n]^T
void matmul_acc_da(Tensor& da, const Tensor& dc, const Tensor& b) {
    const int m = dc.rows(), n = dc.cols(), k = b.rows();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += dc(i, j) * b(p, j);
            da(i, p) += s;
        }
    }
}

// db[k,n] += a[m,k]^T * dc[m,n]
void matmul_acc_db(Tensor& db, const Tensor& a, const Tensor& dc) {
    const int m = a.rows(), k = a.cols(), n = dc.cols();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) db(p, j) += av * dc(i, j);
        }
    }
}

double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)); }
double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

Graph::Id Graph::push(Tensor value, bool needs, std::function<void(Graph&)> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs;
    if (needs) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::leaf(Tensor t, bool needs_grad) {
    return push(std::move(t), needs_grad, {});
}

Graph::Id Graph::leaf_ref(const Tensor* t, bool needs_grad) {
    Node n;
    n.external = t;
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

const Tensor& Graph::value(Id id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
}

Tensor Graph::grad(Id id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad.empty()) return n.grad;
    Tensor zeros(value(id).shape());
    return zeros;
}

bool Graph::needs_grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

Tensor& Graph::grad_buf(Id id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor(value(id).shape());
    return n.grad;
}

void Graph::add_to_grad(Id id, const Tensor& t) {
    if (!needs_grad(id)) return;
    Tensor& g = grad_buf(id);
    auto dst = g.data();
    auto src = t.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Id root) {
    if (value(root).size() != 1) throw ConfigError("backward: root must be scalar");
    backward(root, Tensor::scalar(1.0));
}

void Graph::backward(Id root, const Tensor& seed) {
    if (!seed.same_shape(value(root)))
        throw ConfigError("backward: seed gradient shape mismatch");
    add_to_grad(root, seed);
    for (Id id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.back && !n.grad.empty()) n.back(*this);
    }
}

Graph::Id Graph::rows_lookup(Id table, const std::vector<int>& row_ids) {
    const Tensor& t = value(table);
    const int d = t.cols();
    const int n = static_cast<int>(row_ids.size());
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        const int r = row_ids[static_cast<std::size_t>(i)];
        if (r < 0 || r >= t.rows()) throw ConfigError("rows_lookup: row index out of range");
        for (int c = 0; c < d; ++c) out(i, c) = t(r, c);
    }
    const bool needs = needs_grad(table);
    const Id self = static_cast<Id>(nodes_.size());
    auto ids = row_ids;
    return push(std::move(out), needs, [self, table, ids](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        Tensor& gt = g.grad_buf(table);
        const int d = go.cols();
        for (int i = 0; i < go.rows(); ++i) {
            const int r = ids[static_cast<std::size_t>(i)];
            for (int c = 0; c < d; ++c) gt(r, c) += go(i, c);
        }
    });
}

Graph::Id Graph::matmul(Id a, Id b) {
    Tensor out = matmul_val(value(a), value(b));
    const bool needs = needs_grad(a) || needs_grad(b);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, a, b](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        if (g.needs_grad(a)) matmul_acc_da(g.grad_buf(a), go, g.value(b));
        if (g.needs_grad(b)) matmul_acc_db(g.grad_buf(b), g.value(a), go);
    });
}

Graph::Id Graph::add(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw ConfigError("add: shape mismatch");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    const bool needs = needs_grad(a) || needs_grad(b);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, a, b](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        g.add_to_grad(a, go);
        g.add_to_grad(b, go);
    });
}

Graph::Id Graph::add_rowvec(Id m, Id v) {
    const Tensor& mv = value(m);
    const Tensor& vv = value(v);
    if (vv.ndim() != 1 || vv.cols() != mv.cols()) throw ConfigError("add_rowvec: width mismatch");
    Tensor out(mv.shape());
    for (int i = 0; i < mv.rows(); ++i)
        for (int j = 0; j < mv.cols(); ++j) out(i, j) = mv(i, j) + vv[static_cast<std::size_t>(j)];
    const bool needs = needs_grad(m) || needs_grad(v);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, m, v](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        g.add_to_grad(m, go);
        if (g.needs_grad(v)) {
            Tensor& gv = g.grad_buf(v);
            for (int i = 0; i < go.rows(); ++i)
                for (int j = 0; j < go.cols(); ++j) gv[static_cast<std::size_t>(j)] += go(i, j);
        }
    });
}

Graph::Id Graph::scale(Id a, double c) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    const bool needs = needs_grad(a);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, a, c](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
    });
}

Graph::Id Graph::transpose(Id a) {
    const Tensor& av = value(a);
    Tensor out({av.cols(), av.rows()});
    for (int i = 0; i < av.rows(); ++i)
        for (int j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
    const bool needs = needs_grad(a);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, a](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (int i = 0; i < go.rows(); ++i)
            for (int j = 0; j < go.cols(); ++j) ga(j, i) += go(i, j);
    });
}

Graph::Id Graph::slice_cols(Id a, int start, int count) {
    const Tensor& av = value(a);
    if (start < 0 || count < 1 || start + count > av.cols())
        throw ConfigError("slice_cols: range out of bounds");
    Tensor out({av.rows(), count});
    for (int i = 0; i < av.rows(); ++i)
        for (int j = 0; j < count; ++j) out(i, j) = av(i, start + j);
    const bool needs = needs_grad(a);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, a, start](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (int i = 0; i < go.rows(); ++i)
            for (int j = 0; j < go.cols(); ++j) ga(i, start + j) += go(i, j);
    });
}

Graph::Id Graph::concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw ConfigError("concat_cols: no inputs");
    const int rows = value(parts[0]).rows();
    int width = 0;
    bool needs = false;
    for (Id p : parts) {
        if (value(p).rows() != rows) throw ConfigError("concat_cols: row count mismatch");
        width += value(p).cols();
        needs = needs || needs_grad(p);
    }
    Tensor out({rows, width});
    int off = 0;
    for (Id p : parts) {
        const Tensor& pv = value(p);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
        off += pv.cols();
    }
    const Id self = static_cast<Id>(nodes_.size());
    auto ps = parts;
    return push(std::move(out), needs, [self, ps](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        int off = 0;
        for (Id p : ps) {
            const int w = g.value(p).cols();
            if (g.needs_grad(p)) {
                Tensor& gp = g.grad_buf(p);
                for (int i = 0; i < go.rows(); ++i)
                    for (int j = 0; j < w; ++j) gp(i, j) += go(i, off + j);
            }
            off += w;
        }
    });
}

Graph::Id Graph::layer_norm(Id x, Id gamma, Id beta, double eps) {
    const Tensor& xv = value(x);
    const Tensor& gv = value(gamma);
    const Tensor& bv = value(beta);
    const int n = xv.rows(), d = xv.cols();
    if (gv.size() != static_cast<std::size_t>(d) || bv.size() != static_cast<std::size_t>(d))
        throw ConfigError("layer_norm: gamma/beta width mismatch");

    Tensor out({n, d});
    Tensor xhat({n, d});
    std::vector<double> inv_std(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xv(i, j);
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xv(i, j) - mu;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        for (int j = 0; j < d; ++j) {
            const double h = (xv(i, j) - mu) * is;
            xhat(i, j) = h;
            out(i, j) = gv[static_cast<std::size_t>(j)] * h + bv[static_cast<std::size_t>(j)];
        }
    }
    const bool needs = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs,
                [self, x, gamma, beta, xh = std::move(xhat), is = std::move(inv_std)](Graph& g) {
                    const Tensor& go = g.grad_buf(self);
                    const Tensor& gv = g.value(gamma);
                    const int n = go.rows(), d = go.cols();
                    if (g.needs_grad(x)) {
                        Tensor& gx = g.grad_buf(x);
                        for (int i = 0; i < n; ++i) {
                            double mean_w = 0.0, mean_wx = 0.0;
                            for (int j = 0; j < d; ++j) {
                                const double w = gv[static_cast<std::size_t>(j)] * go(i, j);
                                mean_w += w;
                                mean_wx += w * xh(i, j);
                            }
                            mean_w /= d;
                            mean_wx /= d;
                            const double s = is[static_cast<std::size_t>(i)];
                            for (int j = 0; j < d; ++j) {
                                const double w = gv[static_cast<std::size_t>(j)] * go(i, j);
                                gx(i, j) += s * (w - mean_w - xh(i, j) * mean_wx);
                            }
                        }
                    }
                    if (g.needs_grad(gamma)) {
                        Tensor& gg = g.grad_buf(gamma);
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < d; ++j)
                                gg[static_cast<std::size_t>(j)] += go(i, j) * xh(i, j);
                    }
                    if (g.needs_grad(beta)) {
                        Tensor& gb = g.grad_buf(beta);
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < d; ++j) gb[static_cast<std::size_t>(j)] += go(i, j);
                    }
                });
}

Graph::Id Graph::gelu(Id x) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * norm_cdf(xv[i]);
    const bool needs = needs_grad(x);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, x](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& xv = g.value(x);
        Tensor& gx = g.grad_buf(x);
        for (std::size_t i = 0; i < go.size(); ++i) {
            const double v = xv[i];
            gx[i] += go[i] * (norm_cdf(v) + v * norm_pdf(v));
        }
    });
}

Graph::Id Graph::softmax_rows(Id x) {
    const Tensor& xv = value(x);
    const int n = xv.rows(), d = xv.cols();
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        double mx = xv(i, 0);
        for (int j = 1; j < d; ++j) mx = std::max(mx, xv(i, j));
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            const double e = std::exp(xv(i, j) - mx);
            out(i, j) = e;
            z += e;
        }
        for (int j = 0; j < d; ++j) out(i, j) /= z;
    }
    const bool needs = needs_grad(x);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, x](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& p = g.value(self);
        Tensor& gx = g.grad_buf(x);
        for (int i = 0; i < p.rows(); ++i) {
            double acc = 0.0;
            for (int j = 0; j < p.cols(); ++j) acc += go(i, j) * p(i, j);
            for (int j = 0; j < p.cols(); ++j) gx(i, j) += p(i, j) * (go(i, j) - acc);
        }
    });
}

Graph::Id Graph::rotary(Id x, std::vector<int> positions, double base_theta) {
    Tensor out = apply_rotary_raw(value(x), positions, base_theta, +1.0);
    const bool needs = needs_grad(x);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, x, pos = std::move(positions), base_theta](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        // The rotation is orthogonal, so the adjoint is the inverse rotation.
        const Tensor back = apply_rotary_raw(go, pos, base_theta, -1.0);
        g.add_to_grad(x, back);
    });
}

Graph::Id Graph::mean_rows(Id x) {
    const Tensor& xv = value(x);
    const int n = xv.rows(), d = xv.cols();
    Tensor out({d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += xv(i, j);
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] /= n;
    const bool needs = needs_grad(x);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, x, n](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        Tensor& gx = g.grad_buf(x);
        for (int i = 0; i < gx.rows(); ++i)
            for (int j = 0; j < gx.cols(); ++j) gx(i, j) += go[static_cast<std::size_t>(j)] / n;
    });
}

Graph::Id Graph::l2_normalize(Id v) {
    const Tensor& vv = value(v);
    const double r = l2_norm(vv.data());
    if (r == 0.0) throw ConfigError("l2_normalize: zero vector");
    Tensor out(vv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = vv[i] / r;
    const bool needs = needs_grad(v);
    const Id self = static_cast<Id>(nodes_.size());
    return push(std::move(out), needs, [self, v, r](Graph& g) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& y = g.value(self);
        Tensor& gv = g.grad_buf(v);
        double gy = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) gy += go[i] * y[i];
        for (std::size_t i = 0; i < y.size(); ++i) gv[i] += (go[i] - y[i] * gy) / r;
    });
}

Graph::Id Graph::sum_squares(Id x) {
    const Tensor& xv = value(x);
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * xv[i];
    const bool needs = needs_grad(x);
    const Id self = static_cast<Id>(nodes_.size());
    return push(Tensor::scalar(s), needs, [self, x](Graph& g) {
        const double go = g.grad_buf(self)[0];
        const Tensor& xv = g.value(x);
        Tensor& gx = g.grad_buf(x);
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * xv[i] * go;
    });
}

Graph::Id Graph::sum(Id x) {
    const Tensor& xv = value(x);
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
    const bool needs = needs_grad(x);
    const Id self = static_cast<Id>(nodes_.size());
    return push(Tensor::scalar(s), needs, [self, x](Graph& g) {
        const double go = g.grad_buf(self)[0];
        Tensor& gx = g.grad_buf(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go;
    });
}

}  // namespace clipin
