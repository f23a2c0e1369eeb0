#pragma once

// Reverse-mode automatic differentiation over 2-D arrays (time x channels).
// A Tape owns the nodes of one forward pass; backward() sweeps them in
// reverse creation order and accumulates gradients into Param storage.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cyclevc/mat.hpp"
#include "cyclevc/rng.hpp"

namespace cyclevc::ad {

struct Param {
    std::string name;
    Mat value;
    Mat grad;

    void zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }
    Eigen::Index size() const { return value.size(); }
};

inline Mat xavier_uniform(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-a, a);
    return m;
}

inline Param make_param(const std::string& name, Rng& rng, Eigen::Index rows,
                        Eigen::Index cols) {
    Param p;
    p.name = name;
    p.value = xavier_uniform(rng, rows, cols);
    p.zero_grad();
    return p;
}

inline Param make_zero_param(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    Param p;
    p.name = name;
    p.value = Mat::Zero(rows, cols);
    p.zero_grad();
    return p;
}

// Gated recurrent unit weights, gate order [r, z, n].
struct GruParams {
    Param w_i;  // 3H x Cin
    Param w_h;  // 3H x H
    Param b_i;  // 1 x 3H
    Param b_h;  // 1 x 3H
    Eigen::Index hidden = 0;

    void init(const std::string& prefix, Rng& rng, Eigen::Index in, Eigen::Index h) {
        hidden = h;
        w_i = make_param(prefix + ".w_i", rng, 3 * h, in);
        w_h = make_param(prefix + ".w_h", rng, 3 * h, h);
        b_i = make_zero_param(prefix + ".b_i", 1, 3 * h);
        b_h = make_zero_param(prefix + ".b_h", 1, 3 * h);
    }
    void collect(std::vector<Param*>& out) {
        out.push_back(&w_i);
        out.push_back(&w_h);
        out.push_back(&b_i);
        out.push_back(&b_h);
    }
};

class Tape;

class Var {
public:
    Var() = default;
    const Mat& val() const;
    const Mat& grad() const;
    Eigen::Index rows() const { return val().rows(); }
    Eigen::Index cols() const { return val().cols(); }
    double scalar() const { return val()(0, 0); }

private:
    friend class Tape;
    Var(Tape* t, std::size_t i) : tape_(t), idx_(i) {}
    Tape* tape_ = nullptr;
    std::size_t idx_ = 0;
};

class Tape {
    struct Node {
        Mat val;
        Mat grad;  // empty until touched
        std::function<void(Node&)> back;
    };

public:
    Var input(Mat v) { return push(std::move(v), nullptr); }

    Var param(Param& p) {
        return push(p.value, [&p](Node& n) { p.grad += n.grad; });
    }

    Var add(Var a, Var b) {
        Node *pa = &node(a), *pb = &node(b);
        return push(pa->val + pb->val, [this, pa, pb](Node& n) {
            grad_of(*pa) += n.grad;
            grad_of(*pb) += n.grad;
        });
    }

    Var relu(Var a) {
        Node* pa = &node(a);
        return push(pa->val.cwiseMax(0.0), [this, pa](Node& n) {
            grad_of(*pa).array() += n.grad.array() * (pa->val.array() > 0.0).cast<double>();
        });
    }

    Var tanh(Var a) {
        Node* pa = &node(a);
        Mat y = pa->val.array().tanh();
        return push(std::move(y), [this, pa](Node& n) {
            grad_of(*pa).array() += n.grad.array() * (1.0 - n.val.array().square());
        });
    }

    // y = x * w, w constant (e.g. a DCT basis)
    Var matmul_const(Var a, const Mat& w) {
        Node* pa = &node(a);
        auto wc = std::make_shared<Mat>(w);
        return push(pa->val * w, [this, pa, wc](Node& n) {
            grad_of(*pa) += n.grad * wc->transpose();
        });
    }

    // y = x * w + b (row-broadcast bias)
    Var linear(Var x, Param& w, Param& b) {
        Node* px = &node(x);
        Mat y = px->val * w.value;
        y.rowwise() += b.value.row(0);
        return push(std::move(y), [this, px, &w, &b](Node& n) {
            w.grad += px->val.transpose() * n.grad;
            b.grad += n.grad.colwise().sum();
            grad_of(*px) += n.grad * w.value.transpose();
        });
    }

    // 1-D convolution along rows with replicate padding, kernel width k (odd).
    // w has shape (k*Cin, Cout).
    Var conv1d(Var x, Param& w, Param& b, int k) {
        Node* px = &node(x);
        const Eigen::Index t_len = px->val.rows();
        const Eigen::Index cin = px->val.cols();
        if (w.value.rows() != k * cin)
            throw std::invalid_argument("conv1d: weight/input channel mismatch");
        const int pad = (k - 1) / 2;

        auto cols = std::make_shared<Mat>(t_len, k * cin);
        for (Eigen::Index t = 0; t < t_len; ++t)
            for (int j = 0; j < k; ++j) {
                Eigen::Index src = t + j - pad;
                if (src < 0) src = 0;
                if (src >= t_len) src = t_len - 1;
                cols->block(t, j * cin, 1, cin) = px->val.row(src);
            }
        Mat y = *cols * w.value;
        y.rowwise() += b.value.row(0);
        return push(std::move(y), [this, px, &w, &b, cols, k, pad](Node& n) {
            w.grad += cols->transpose() * n.grad;
            b.grad += n.grad.colwise().sum();
            Mat dcols = n.grad * w.value.transpose();
            Mat& dx = grad_of(*px);
            const Eigen::Index t_len = dx.rows();
            const Eigen::Index cin = dx.cols();
            for (Eigen::Index t = 0; t < t_len; ++t)
                for (int j = 0; j < k; ++j) {
                    Eigen::Index src = t + j - pad;
                    if (src < 0) src = 0;
                    if (src >= t_len) src = t_len - 1;
                    dx.row(src) += dcols.block(t, j * cin, 1, cin);
                }
        });
    }

    // Per-channel standardization over time, no learned affine.
    Var instance_norm(Var x, double eps) {
        Node* px = &node(x);
        const double t_len = static_cast<double>(px->val.rows());
        Vec mu = px->val.colwise().mean();
        Vec var = (px->val.rowwise() - mu).array().square().colwise().mean();
        auto inv_s = std::make_shared<Vec>((var.array() + eps).sqrt().inverse());
        Mat y = (px->val.rowwise() - mu).array().rowwise() * inv_s->array();
        return push(std::move(y), [this, px, inv_s, t_len](Node& n) {
            Vec m1 = n.grad.colwise().mean();
            Vec m2 = (n.grad.array() * n.val.array()).colwise().mean();
            Mat dx = n.grad;
            dx.rowwise() -= m1;
            dx.array() -= n.val.array().rowwise() * m2.array();
            dx.array().rowwise() *= inv_s->array();
            grad_of(*px) += dx;
            (void)t_len;
        });
    }

    Var gru(Var x, GruParams& p, bool reverse = false) {
        Node* px = &node(x);
        const Eigen::Index t_len = px->val.rows();
        const Eigen::Index h = p.hidden;

        struct Cache {
            Mat r, z, g, hg, hout;  // each T x H, indexed by row position
        };
        auto c = std::make_shared<Cache>();
        c->r.resize(t_len, h);
        c->z.resize(t_len, h);
        c->g.resize(t_len, h);
        c->hg.resize(t_len, h);
        c->hout.resize(t_len, h);

        Mat ai = px->val * p.w_i.value.transpose();
        ai.rowwise() += p.b_i.value.row(0);

        auto sigmoid = [](const Vec& v) -> Vec { return 1.0 / (1.0 + (-v.array()).exp()); };
        auto idx = [t_len, reverse](Eigen::Index t) { return reverse ? t_len - 1 - t : t; };

        Vec hprev = Vec::Zero(h);
        for (Eigen::Index t = 0; t < t_len; ++t) {
            const Eigen::Index row = idx(t);
            Vec hw = hprev * p.w_h.value.transpose();
            hw += p.b_h.value.row(0);
            Vec r = sigmoid(ai.block(row, 0, 1, h) + hw.segment(0, h));
            Vec z = sigmoid(ai.block(row, h, 1, h) + hw.segment(h, h));
            Vec hg = hw.segment(2 * h, h);
            Vec g = (ai.block(row, 2 * h, 1, h).array() + r.array() * hg.array()).tanh();
            Vec hnew = (1.0 - z.array()) * g.array() + z.array() * hprev.array();
            c->r.row(row) = r;
            c->z.row(row) = z;
            c->g.row(row) = g;
            c->hg.row(row) = hg;
            c->hout.row(row) = hnew;
            hprev = hnew;
        }

        return push(c->hout, [this, px, &p, c, reverse](Node& n) {
            const Eigen::Index t_len = px->val.rows();
            const Eigen::Index h = p.hidden;
            auto idx = [t_len, reverse](Eigen::Index t) { return reverse ? t_len - 1 - t : t; };

            Mat da_i = Mat::Zero(t_len, 3 * h);  // [da_r | da_z | da_g]
            Mat da_h = Mat::Zero(t_len, 3 * h);  // [da_r | da_z | d_hg]
            Mat hprev_rows(t_len, h);
            Vec carry = Vec::Zero(h);
            for (Eigen::Index t = t_len - 1; t >= 0; --t) {
                const Eigen::Index row = idx(t);
                Vec hprev = (t == 0) ? Vec::Zero(h) : Vec(c->hout.row(idx(t - 1)));
                hprev_rows.row(row) = hprev;
                Vec dh = carry + n.grad.row(row);
                Vec z = c->z.row(row), r = c->r.row(row), g = c->g.row(row),
                    hg = c->hg.row(row);
                Vec dz = dh.array() * (hprev.array() - g.array());
                Vec da_z = dz.array() * z.array() * (1.0 - z.array());
                Vec dg = dh.array() * (1.0 - z.array());
                Vec da_g = dg.array() * (1.0 - g.array().square());
                Vec dhg = da_g.array() * r.array();
                Vec dr = da_g.array() * hg.array();
                Vec da_r = dr.array() * r.array() * (1.0 - r.array());
                da_i.block(row, 0, 1, h) = da_r;
                da_i.block(row, h, 1, h) = da_z;
                da_i.block(row, 2 * h, 1, h) = da_g;
                da_h.block(row, 0, 1, h) = da_r;
                da_h.block(row, h, 1, h) = da_z;
                da_h.block(row, 2 * h, 1, h) = dhg;
                carry = (dh.array() * z.array()).matrix() + da_h.row(row) * p.w_h.value;
            }
            p.w_i.grad += da_i.transpose() * px->val;
            p.b_i.grad += da_i.colwise().sum();
            p.w_h.grad += da_h.transpose() * hprev_rows;
            p.b_h.grad += da_h.colwise().sum();
            grad_of(*px) += da_i * p.w_i.value;
        });
    }

    Var concat_cols(Var a, Var b) {
        Node *pa = &node(a), *pb = &node(b);
        if (pa->val.rows() != pb->val.rows())
            throw std::invalid_argument("concat_cols: row mismatch");
        Mat y(pa->val.rows(), pa->val.cols() + pb->val.cols());
        y << pa->val, pb->val;
        const Eigen::Index ca = pa->val.cols();
        return push(std::move(y), [this, pa, pb, ca](Node& n) {
            grad_of(*pa) += n.grad.leftCols(ca);
            grad_of(*pb) += n.grad.rightCols(n.grad.cols() - ca);
        });
    }

    // Take rows 0, stride, 2*stride, ...
    Var slice_rows_stride(Var x, int stride) {
        Node* px = &node(x);
        const Eigen::Index n_out = (px->val.rows() + stride - 1) / stride;
        Mat y(n_out, px->val.cols());
        for (Eigen::Index i = 0; i < n_out; ++i) y.row(i) = px->val.row(i * stride);
        return push(std::move(y), [this, px, stride](Node& n) {
            Mat& dx = grad_of(*px);
            for (Eigen::Index i = 0; i < n.grad.rows(); ++i)
                dx.row(i * stride) += n.grad.row(i);
        });
    }

    // Repeat every row `times` times consecutively.
    Var repeat_rows(Var x, int times) {
        Node* px = &node(x);
        Mat y(px->val.rows() * times, px->val.cols());
        for (Eigen::Index i = 0; i < px->val.rows(); ++i)
            for (int j = 0; j < times; ++j) y.row(i * times + j) = px->val.row(i);
        return push(std::move(y), [this, px, times](Node& n) {
            Mat& dx = grad_of(*px);
            for (Eigen::Index i = 0; i < dx.rows(); ++i)
                for (int j = 0; j < times; ++j) dx.row(i) += n.grad.row(i * times + j);
        });
    }

    // Broadcast a 1 x C row to n_rows x C.
    Var broadcast_row(Var v, Eigen::Index n_rows) {
        Node* pv = &node(v);
        Mat y = pv->val.row(0).replicate(n_rows, 1);
        return push(std::move(y), [this, pv](Node& n) {
            grad_of(*pv) += n.grad.colwise().sum();
        });
    }

    Var mean_rows(Var x) {
        Node* px = &node(x);
        Mat y = px->val.colwise().mean();
        return push(std::move(y), [this, px](Node& n) {
            const double t_len = static_cast<double>(px->val.rows());
            grad_of(*px).rowwise() += (n.grad.row(0) / t_len).eval();
        });
    }

    // Non-overlapping max pooling over rows; partial last window kept.
    Var maxpool_rows(Var x, int width) {
        Node* px = &node(x);
        const Eigen::Index t_len = px->val.rows();
        const Eigen::Index c = px->val.cols();
        const Eigen::Index n_out = (t_len + width - 1) / width;
        auto argmax = std::make_shared<Eigen::Matrix<Eigen::Index, Eigen::Dynamic,
                                                     Eigen::Dynamic, Eigen::RowMajor>>(n_out, c);
        Mat y(n_out, c);
        for (Eigen::Index w = 0; w < n_out; ++w) {
            const Eigen::Index lo = w * width;
            const Eigen::Index hi = std::min(t_len, lo + width);
            for (Eigen::Index j = 0; j < c; ++j) {
                Eigen::Index best = lo;
                for (Eigen::Index i = lo + 1; i < hi; ++i)
                    if (px->val(i, j) > px->val(best, j)) best = i;
                (*argmax)(w, j) = best;
                y(w, j) = px->val(best, j);
            }
        }
        return push(std::move(y), [this, px, argmax](Node& n) {
            Mat& dx = grad_of(*px);
            for (Eigen::Index w = 0; w < n.grad.rows(); ++w)
                for (Eigen::Index j = 0; j < n.grad.cols(); ++j)
                    dx((*argmax)(w, j), j) += n.grad(w, j);
        });
    }

    // Mean squared error over all elements -> 1x1.
    Var mse(Var a, Var b) {
        Node *pa = &node(a), *pb = &node(b);
        if (pa->val.rows() != pb->val.rows() || pa->val.cols() != pb->val.cols())
            throw std::invalid_argument("mse: shape mismatch");
        const double count = static_cast<double>(pa->val.size());
        Mat diff = pa->val - pb->val;
        Mat y(1, 1);
        y(0, 0) = diff.array().square().sum() / count;
        auto d = std::make_shared<Mat>(std::move(diff));
        return push(std::move(y), [this, pa, pb, d, count](Node& n) {
            const double s = 2.0 * n.grad(0, 0) / count;
            grad_of(*pa) += s * (*d);
            grad_of(*pb) -= s * (*d);
        });
    }

    // Mean absolute error over all elements -> 1x1.
    Var mae(Var a, Var b) {
        Node *pa = &node(a), *pb = &node(b);
        if (pa->val.rows() != pb->val.rows() || pa->val.cols() != pb->val.cols())
            throw std::invalid_argument("mae: shape mismatch");
        const double count = static_cast<double>(pa->val.size());
        Mat diff = pa->val - pb->val;
        Mat y(1, 1);
        y(0, 0) = diff.array().abs().sum() / count;
        auto d = std::make_shared<Mat>(std::move(diff));
        return push(std::move(y), [this, pa, pb, d, count](Node& n) {
            const double s = n.grad(0, 0) / count;
            Mat sg = d->array().sign();
            grad_of(*pa) += s * sg;
            grad_of(*pb) -= s * sg;
        });
    }

    // Cross-entropy of softmax(logits) against a fixed probability row.
    Var softmax_ce(Var logits, const Mat& target) {
        Node* pl = &node(logits);
        Vec x = pl->val.row(0);
        const double xmax = x.maxCoeff();
        Vec ex = (x.array() - xmax).exp();
        const double z = ex.sum();
        auto probs = std::make_shared<Vec>(ex / z);
        double loss = 0.0;
        for (Eigen::Index k = 0; k < x.cols(); ++k)
            loss -= target(0, k) * (x(k) - xmax - std::log(z));
        Mat y(1, 1);
        y(0, 0) = loss;
        auto tgt = std::make_shared<Mat>(target);
        return push(std::move(y), [this, pl, probs, tgt](Node& n) {
            grad_of(*pl).row(0) += n.grad(0, 0) * (probs->matrix() - tgt->row(0));
        });
    }

    // Weighted sum of 1x1 scalars, evaluated left to right.
    Var weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
        std::vector<Node*> ps;
        std::vector<double> ws;
        double acc = 0.0;
        for (const auto& [w, v] : terms) {
            ps.push_back(&node(v));
            ws.push_back(w);
            acc += w * node(v).val(0, 0);
        }
        Mat y(1, 1);
        y(0, 0) = acc;
        return push(std::move(y), [this, ps, ws](Node& n) {
            for (std::size_t i = 0; i < ps.size(); ++i)
                grad_of(*ps[i])(0, 0) += ws[i] * n.grad(0, 0);
        });
    }

    void backward(Var loss) {
        Node& l = node(loss);
        if (l.val.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
        grad_of(l).setOnes();
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = *nodes_[i];
            if (n.grad.size() == 0 || !n.back) continue;
            n.back(n);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    friend class Var;

    Node& node(Var v) { return *nodes_[v.idx_]; }

    Mat& grad_of(Node& n) {
        if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
        return n.grad;
    }

    Var push(Mat val, std::function<void(Node&)> back) {
        auto n = std::make_unique<Node>();
        n->val = std::move(val);
        n->back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var(this, nodes_.size() - 1);
    }

    std::vector<std::unique_ptr<Node>> nodes_;
};

inline const Mat& Var::val() const { return tape_->node(*this).val; }
inline const Mat& Var::grad() const { return tape_->node(*this).grad; }

}  // namespace cyclevc::ad
