#include "kdaudit/graph.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace kdaudit {

namespace {

constexpr double kLayerNormEps = 1e-5;

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using Strided = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                           0, Eigen::OuterStride<>>;
using StridedConst =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
               Eigen::OuterStride<>>;

ConstMatMap as_matrix(const Tensor& t) {
    return ConstMatMap(t.data(), t.rows(), t.cols());
}

MatMap as_matrix(Tensor& t) {
    return MatMap(t.data(), t.rows(), t.cols());
}

}  // namespace

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Graph::value(int node) const {
    const Node& n = at(node);
    return n.external ? *n.external : n.value;
}

Tensor& Graph::grad_slot(int i) {
    Node& n = at(i);
    if (n.grad.empty()) n.grad = Tensor(value(i).shape());
    return n.grad;
}

const Tensor& Graph::grad(int node) {
    return grad_slot(node);
}

void Graph::accumulate(int target, const Tensor& g) {
    if (target < 0 || !at(target).requires_grad) return;
    Tensor& slot = grad_slot(target);
    double* d = slot.data();
    const double* s = g.data();
    const std::int64_t n = slot.size();
    for (std::int64_t k = 0; k < n; ++k) d[k] += s[k];
}

int Graph::leaf(Tensor t, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(t);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

int Graph::param(const Tensor* t) {
    Node n;
    n.op = Op::Leaf;
    n.external = t;
    n.requires_grad = true;
    return push(std::move(n));
}

int Graph::gather_rows(int table, std::vector<int> row_ids) {
    const Tensor& src = value(table);
    if (src.ndim() != 2) throw ShapeError("gather_rows expects a 2-D table");
    const int cols = src.dim(1);
    Tensor out({static_cast<int>(row_ids.size()), cols});
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        const int r = row_ids[i];
        if (r < 0 || r >= src.dim(0)) throw InputError("gather_rows row id out of range");
        for (int c = 0; c < cols; ++c) out.at(static_cast<int>(i), c) = src.at(r, c);
    }
    Node n;
    n.op = Op::GatherRows;
    n.a = table;
    n.value = std::move(out);
    n.indices = std::move(row_ids);
    n.requires_grad = needs_grad(table);
    return push(std::move(n));
}

int Graph::matmul(int a, int b) {
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.value = kdaudit::matmul(value(a), value(b));
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

int Graph::matmul_nt(int a, int b) {
    Node n;
    n.op = Op::MatMulNT;
    n.a = a;
    n.b = b;
    n.value = kdaudit::matmul_nt(value(a), value(b));
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("add shape mismatch");
    Tensor out(ta.shape(), ta.values());
    const double* s = tb.data();
    double* d = out.data();
    for (std::int64_t k = 0; k < out.size(); ++k) d[k] += s[k];
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

int Graph::add_row(int a, int row) {
    const Tensor& ta = value(a);
    const Tensor& tr = value(row);
    if (tr.size() != ta.cols()) throw ShapeError("add_row bias length mismatch");
    Tensor out(ta.shape(), ta.values());
    const int rows = ta.rows(), cols = ta.cols();
    const double* rd = tr.data();
    for (int r = 0; r < rows; ++r) {
        double* od = out.data() + static_cast<std::int64_t>(r) * cols;
        for (int c = 0; c < cols; ++c) od[c] += rd[c];
    }
    Node n;
    n.op = Op::AddRow;
    n.a = a;
    n.b = row;
    n.value = std::move(out);
    n.requires_grad = needs_grad(a) || needs_grad(row);
    return push(std::move(n));
}

int Graph::sub(int a, int b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("sub shape mismatch");
    Tensor out(ta.shape(), ta.values());
    const double* s = tb.data();
    double* d = out.data();
    for (std::int64_t k = 0; k < out.size(); ++k) d[k] -= s[k];
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("mul shape mismatch");
    Tensor out(ta.shape(), ta.values());
    const double* s = tb.data();
    double* d = out.data();
    for (std::int64_t k = 0; k < out.size(); ++k) d[k] *= s[k];
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.value = std::move(out);
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

int Graph::scale(int a, double s) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape(), ta.values());
    double* d = out.data();
    for (std::int64_t k = 0; k < out.size(); ++k) d[k] *= s;
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.scalar = s;
    n.value = std::move(out);
    n.requires_grad = needs_grad(a);
    return push(std::move(n));
}

int Graph::exp_op(int a) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape(), ta.values());
    double* d = out.data();
    for (std::int64_t k = 0; k < out.size(); ++k) d[k] = std::exp(d[k]);
    Node n;
    n.op = Op::Exp;
    n.a = a;
    n.value = std::move(out);
    n.requires_grad = needs_grad(a);
    return push(std::move(n));
}

int Graph::log_op(int a) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape(), ta.values());
    double* d = out.data();
    for (std::int64_t k = 0; k < out.size(); ++k) d[k] = std::log(d[k]);
    Node n;
    n.op = Op::Log;
    n.a = a;
    n.value = std::move(out);
    n.requires_grad = needs_grad(a);
    return push(std::move(n));
}

int Graph::relu_sq(int a) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape(), ta.values());
    double* d = out.data();
    for (std::int64_t k = 0; k < out.size(); ++k) {
        const double x = d[k];
        d[k] = x > 0.0 ? x * x : 0.0;
    }
    Node n;
    n.op = Op::ReluSquared;
    n.a = a;
    n.value = std::move(out);
    n.requires_grad = needs_grad(a);
    return push(std::move(n));
}

int Graph::layer_norm(int x, int gain, int bias) {
    const Tensor& tx = value(x);
    const Tensor& tg = value(gain);
    const Tensor& tb = value(bias);
    const int rows = tx.rows();
    const int cols = tx.cols();
    if (tg.size() != cols || tb.size() != cols)
        throw ShapeError("layer_norm gain/bias length mismatch");
    Tensor out(tx.shape());
    Tensor aux({rows, cols + 1});  // per row: normalized x then inv_std
    const double* gd = tg.data();
    const double* bd = tb.data();
    for (int r = 0; r < rows; ++r) {
        const double* xr = tx.data() + static_cast<std::int64_t>(r) * cols;
        double* ar = aux.data() + static_cast<std::int64_t>(r) * (cols + 1);
        double* or_ = out.data() + static_cast<std::int64_t>(r) * cols;
        double mean = 0.0;
        for (int c = 0; c < cols; ++c) mean += xr[c];
        mean /= cols;
        double var = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double d = xr[c] - mean;
            var += d * d;
        }
        var /= cols;
        const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int c = 0; c < cols; ++c) {
            const double xn = (xr[c] - mean) * inv_std;
            ar[c] = xn;
            or_[c] = gd[c] * xn + bd[c];
        }
        ar[cols] = inv_std;
    }
    Node n;
    n.op = Op::LayerNorm;
    n.a = x;
    n.b = gain;
    n.c = bias;
    n.value = std::move(out);
    n.aux = std::move(aux);
    n.requires_grad = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
    return push(std::move(n));
}

int Graph::causal_attention(int qkv, int n_heads) {
    const Tensor& in = value(qkv);
    if (in.ndim() != 2 || in.dim(1) % 3 != 0)
        throw ShapeError("causal_attention expects a T x 3d input");
    const int T = in.dim(0);
    const int d = in.dim(1) / 3;
    if (n_heads <= 0 || d % n_heads != 0)
        throw ShapeError("embedding width not divisible by head count");
    const int hd = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor out({T, d});
    Tensor probs({n_heads, T, T});
    const double* ind = in.data();
    const int w = 3 * d;
    for (int h = 0; h < n_heads; ++h) {
        const int qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
        double* p = probs.data() + static_cast<std::int64_t>(h) * T * T;
        StridedConst q(ind + qo, T, hd, Eigen::OuterStride<>(w));
        StridedConst k(ind + ko, T, hd, Eigen::OuterStride<>(w));
        StridedConst v(ind + vo, T, hd, Eigen::OuterStride<>(w));
        MatMap scores(p, T, T);
        scores.noalias() = q * k.transpose() * scale;
        for (int t = 0; t < T; ++t) {
            double* pt = p + static_cast<std::int64_t>(t) * T;
            double mx = -std::numeric_limits<double>::infinity();
            for (int s = 0; s <= t; ++s) mx = std::max(mx, pt[s]);
            double sum = 0.0;
            for (int s = 0; s <= t; ++s) {
                const double e = std::exp(pt[s] - mx);
                pt[s] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (int s = 0; s <= t; ++s) pt[s] *= inv;
            for (int s = t + 1; s < T; ++s) pt[s] = 0.0;
        }
        Strided o(out.data() + qo, T, hd, Eigen::OuterStride<>(d));
        o.noalias() = ConstMatMap(p, T, T) * v;
    }
    Node n;
    n.op = Op::CausalAttention;
    n.a = qkv;
    n.heads = n_heads;
    n.value = std::move(out);
    n.aux = std::move(probs);
    n.requires_grad = needs_grad(qkv);
    return push(std::move(n));
}

int Graph::softmax_rows(int x) {
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = x;
    n.value = kdaudit::softmax(value(x), -1);
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

int Graph::log_softmax_rows(int x) {
    Node n;
    n.op = Op::LogSoftmaxRows;
    n.a = x;
    n.value = kdaudit::log_softmax(value(x), -1);
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

int Graph::pick_positions(int mat, std::vector<int> cols) {
    const Tensor& m = value(mat);
    if (static_cast<int>(cols.size()) != m.rows())
        throw ShapeError("pick_positions needs one column per row");
    Tensor out({static_cast<int>(cols.size())});
    for (std::size_t r = 0; r < cols.size(); ++r) {
        if (cols[r] < 0 || cols[r] >= m.cols())
            throw InputError("pick_positions column out of range");
        out[static_cast<std::int64_t>(r)] = m.at(static_cast<int>(r), cols[r]);
    }
    Node n;
    n.op = Op::PickPositions;
    n.a = mat;
    n.value = std::move(out);
    n.indices = std::move(cols);
    n.requires_grad = needs_grad(mat);
    return push(std::move(n));
}

int Graph::sum(int a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (std::int64_t k = 0; k < ta.size(); ++k) acc += ta[k];
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.value = Tensor({}, {acc});
    n.requires_grad = needs_grad(a);
    return push(std::move(n));
}

int Graph::weighted_sum(int a, std::vector<double> weights) {
    const Tensor& ta = value(a);
    if (static_cast<std::int64_t>(weights.size()) != ta.size())
        throw ShapeError("weighted_sum weight length mismatch");
    double acc = 0.0;
    for (std::int64_t k = 0; k < ta.size(); ++k)
        acc += weights[static_cast<std::size_t>(k)] * ta[k];
    Node n;
    n.op = Op::WeightedSum;
    n.a = a;
    n.value = Tensor({}, {acc});
    n.weights = std::move(weights);
    n.requires_grad = needs_grad(a);
    return push(std::move(n));
}

void Graph::backward(int loss) {
    if (value(loss).size() != 1)
        throw InputError("backward requires a scalar loss node");
    grad_slot(loss)[0] = 1.0;
    for (int i = loss; i >= 0; --i) {
        Node& n = at(i);
        if (!n.requires_grad || n.grad.empty()) continue;
        backward_node(i);
    }
}

void Graph::backward_node(int i) {
    Node& n = at(i);
    const Tensor& g = n.grad;
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::GatherRows: {
            Tensor& ga = grad_slot(n.a);
            const int cols = ga.cols();
            for (std::size_t r = 0; r < n.indices.size(); ++r)
                for (int c = 0; c < cols; ++c)
                    ga.at(n.indices[r], c) += g.at(static_cast<int>(r), c);
            break;
        }
        case Op::MatMul: {
            const Tensor& a = value(n.a);
            const Tensor& b = value(n.b);
            if (needs_grad(n.a)) {
                Tensor& ga = grad_slot(n.a);
                as_matrix(ga).noalias() += as_matrix(g) * as_matrix(b).transpose();
            }
            if (needs_grad(n.b)) {
                Tensor& gb = grad_slot(n.b);
                as_matrix(gb).noalias() += as_matrix(a).transpose() * as_matrix(g);
            }
            break;
        }
        case Op::MatMulNT: {
            const Tensor& a = value(n.a);
            const Tensor& b = value(n.b);
            if (needs_grad(n.a)) {
                Tensor& ga = grad_slot(n.a);
                as_matrix(ga).noalias() += as_matrix(g) * as_matrix(b);
            }
            if (needs_grad(n.b)) {
                Tensor& gb = grad_slot(n.b);
                as_matrix(gb).noalias() += as_matrix(g).transpose() * as_matrix(a);
            }
            break;
        }
        case Op::Add:
            accumulate(n.a, g);
            accumulate(n.b, g);
            break;
        case Op::AddRow: {
            accumulate(n.a, g);
            if (needs_grad(n.b)) {
                Tensor& gb = grad_slot(n.b);
                for (int r = 0; r < g.rows(); ++r)
                    for (int c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
            }
            break;
        }
        case Op::Sub: {
            accumulate(n.a, g);
            if (needs_grad(n.b)) {
                Tensor& gb = grad_slot(n.b);
                for (std::int64_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
            }
            break;
        }
        case Op::Mul: {
            if (needs_grad(n.a)) {
                Tensor& ga = grad_slot(n.a);
                const Tensor& b = value(n.b);
                for (std::int64_t k = 0; k < g.size(); ++k) ga[k] += g[k] * b[k];
            }
            if (needs_grad(n.b)) {
                Tensor& gb = grad_slot(n.b);
                const Tensor& a = value(n.a);
                for (std::int64_t k = 0; k < g.size(); ++k) gb[k] += g[k] * a[k];
            }
            break;
        }
        case Op::Scale: {
            if (needs_grad(n.a)) {
                Tensor& ga = grad_slot(n.a);
                for (std::int64_t k = 0; k < g.size(); ++k) ga[k] += g[k] * n.scalar;
            }
            break;
        }
        case Op::Exp: {
            Tensor& ga = grad_slot(n.a);
            const Tensor& y = n.value;
            for (std::int64_t k = 0; k < g.size(); ++k) ga[k] += g[k] * y[k];
            break;
        }
        case Op::Log: {
            Tensor& ga = grad_slot(n.a);
            const Tensor& x = value(n.a);
            for (std::int64_t k = 0; k < g.size(); ++k) ga[k] += g[k] / x[k];
            break;
        }
        case Op::ReluSquared: {
            Tensor& ga = grad_slot(n.a);
            const Tensor& x = value(n.a);
            for (std::int64_t k = 0; k < g.size(); ++k) {
                const double v = x[k];
                ga[k] += v > 0.0 ? g[k] * 2.0 * v : 0.0;
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& aux = n.aux;
            const Tensor& tg = value(n.b);
            const int rows = g.rows();
            const int cols = g.cols();
            const double* gaind = tg.data();
            const bool want_x = needs_grad(n.a);
            const bool want_g = needs_grad(n.b);
            const bool want_b = needs_grad(n.c);
            double* gx = want_x ? grad_slot(n.a).data() : nullptr;
            double* gg = want_g ? grad_slot(n.b).data() : nullptr;
            double* gb = want_b ? grad_slot(n.c).data() : nullptr;
            for (int r = 0; r < rows; ++r) {
                const double* gr = g.data() + static_cast<std::int64_t>(r) * cols;
                const double* ar = aux.data() + static_cast<std::int64_t>(r) * (cols + 1);
                const double inv_std = ar[cols];
                double sum_gd = 0.0, sum_gdx = 0.0;
                for (int c = 0; c < cols; ++c) {
                    const double gd = gr[c] * gaind[c];
                    sum_gd += gd;
                    sum_gdx += gd * ar[c];
                }
                if (want_x) {
                    double* gxr = gx + static_cast<std::int64_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) {
                        const double gd = gr[c] * gaind[c];
                        gxr[c] += inv_std * (gd - sum_gd / cols - ar[c] * sum_gdx / cols);
                    }
                }
                if (want_g)
                    for (int c = 0; c < cols; ++c) gg[c] += gr[c] * ar[c];
                if (want_b)
                    for (int c = 0; c < cols; ++c) gb[c] += gr[c];
            }
            break;
        }
        case Op::CausalAttention: {
            const Tensor& in = value(n.a);
            Tensor& gin = grad_slot(n.a);
            const int T = in.dim(0);
            const int d = in.dim(1) / 3;
            const int H = n.heads;
            const int hd = d / H;
            const int w = 3 * d;
            const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
            const double* ind = in.data();
            double* gind = gin.data();
            Tensor ds_buf({T, T});
            for (int h = 0; h < H; ++h) {
                const int qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
                const double* p = n.aux.data() + static_cast<std::int64_t>(h) * T * T;
                StridedConst q(ind + qo, T, hd, Eigen::OuterStride<>(w));
                StridedConst k(ind + ko, T, hd, Eigen::OuterStride<>(w));
                StridedConst v(ind + vo, T, hd, Eigen::OuterStride<>(w));
                StridedConst go(g.data() + qo, T, hd, Eigen::OuterStride<>(d));
                ConstMatMap probs(p, T, T);
                Strided gq(gind + qo, T, hd, Eigen::OuterStride<>(w));
                Strided gk(gind + ko, T, hd, Eigen::OuterStride<>(w));
                Strided gv(gind + vo, T, hd, Eigen::OuterStride<>(w));

                gv.noalias() += probs.transpose() * go;

                MatMap dscore(ds_buf.data(), T, T);
                dscore.noalias() = go * v.transpose();
                // softmax backward on each causal row
                for (int t = 0; t < T; ++t) {
                    double* dst = ds_buf.data() + static_cast<std::int64_t>(t) * T;
                    const double* pt = p + static_cast<std::int64_t>(t) * T;
                    double dot = 0.0;
                    for (int s = 0; s <= t; ++s) dot += pt[s] * dst[s];
                    for (int s = 0; s <= t; ++s) dst[s] = pt[s] * (dst[s] - dot) * scale;
                    for (int s = t + 1; s < T; ++s) dst[s] = 0.0;
                }
                gq.noalias() += ConstMatMap(ds_buf.data(), T, T) * k;
                gk.noalias() += ConstMatMap(ds_buf.data(), T, T).transpose() * q;
            }
            break;
        }
        case Op::SoftmaxRows: {
            Tensor& ga = grad_slot(n.a);
            const Tensor& y = n.value;
            const int rows = y.rows(), cols = y.cols();
            for (int r = 0; r < rows; ++r) {
                const double* yr = y.data() + static_cast<std::int64_t>(r) * cols;
                const double* gr = g.data() + static_cast<std::int64_t>(r) * cols;
                double* gar = ga.data() + static_cast<std::int64_t>(r) * cols;
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += yr[c] * gr[c];
                for (int c = 0; c < cols; ++c) gar[c] += yr[c] * (gr[c] - dot);
            }
            break;
        }
        case Op::LogSoftmaxRows: {
            Tensor& ga = grad_slot(n.a);
            const Tensor& y = n.value;
            const int rows = y.rows(), cols = y.cols();
            for (int r = 0; r < rows; ++r) {
                const double* yr = y.data() + static_cast<std::int64_t>(r) * cols;
                const double* gr = g.data() + static_cast<std::int64_t>(r) * cols;
                double* gar = ga.data() + static_cast<std::int64_t>(r) * cols;
                double gsum = 0.0;
                for (int c = 0; c < cols; ++c) gsum += gr[c];
                for (int c = 0; c < cols; ++c) gar[c] += gr[c] - std::exp(yr[c]) * gsum;
            }
            break;
        }
        case Op::PickPositions: {
            Tensor& ga = grad_slot(n.a);
            for (std::size_t r = 0; r < n.indices.size(); ++r)
                ga.at(static_cast<int>(r), n.indices[r]) += g[static_cast<std::int64_t>(r)];
            break;
        }
        case Op::Sum: {
            Tensor& ga = grad_slot(n.a);
            const double gv = g[0];
            for (std::int64_t k = 0; k < ga.size(); ++k) ga[k] += gv;
            break;
        }
        case Op::WeightedSum: {
            Tensor& ga = grad_slot(n.a);
            const double gv = g[0];
            for (std::int64_t k = 0; k < ga.size(); ++k)
                ga[k] += gv * n.weights[static_cast<std::size_t>(k)];
            break;
        }
    }
}

}  // namespace kdaudit
