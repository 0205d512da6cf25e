#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sgr/error.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

// Reverse-mode automatic differentiation over Tensor.
//
// Each operation appends a node holding its output value and a closure that
// scatters the node's output gradient back into its parents. Nodes are only
// ever appended, so walking the tape backwards visits every node after all
// of its consumers: a reverse topological order by construction. backward()
// seeds d(loss)/d(loss) = 1 and runs that walk once.
class Tape {
public:
    struct Val {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    size_t size() const { return nodes_.size(); }

    void clear() {
        nodes_.clear();
        grads_.clear();
        ran_backward_ = false;
    }

    Val leaf(Tensor value, bool requires_grad = false) {
        check_finite(value, "leaf");
        return push(std::move(value), requires_grad, {});
    }

    Val constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(Val v) const {
        check_val(v);
        return nodes_[v.id].value;
    }

    // Gradient of the last backward() target w.r.t. node v. Zero if v did not
    // participate in the target's computation.
    const Tensor& grad(Val v) const {
        check_val(v);
        require(ran_backward_, "Tape::grad: backward() has not been run");
        return grads_[v.id];
    }

    void backward(Val loss) {
        check_val(loss);
        const Tensor& lv = nodes_[loss.id].value;
        require(lv.rows() == 1 && lv.cols() == 1,
                "Tape::backward: loss must be scalar, got " + lv.shape_str());
        grads_.clear();
        grads_.resize(nodes_.size());
        for (size_t i = 0; i < nodes_.size(); ++i)
            grads_[i] = Tensor::zeros(nodes_[i].value.rows(), nodes_[i].value.cols());
        grads_[loss.id].data[0] = 1.0;
        ran_backward_ = true;
        for (int i = loss.id; i >= 0; --i) {
            if (!nodes_[i].needs_grad || !nodes_[i].backward) continue;
            nodes_[i].backward(grads_[i]);
        }
    }

    // ---- primitive operations ----

    Val matmul(Val a, Val b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        require(av.cols() == bv.rows(),
                "matmul: shape mismatch " + av.shape_str() + " * " + bv.shape_str());
        Tensor out = matmul_plain(av, bv);
        check_finite(out, "matmul");
        return push(std::move(out), needs(a) || needs(b), [this, a, b](const Tensor& g) {
            if (needs(a)) detail::gemm_nt_acc(g, nodes_[b.id].value, grads_[a.id]);
            if (needs(b)) detail::gemm_tn_acc(nodes_[a.id].value, g, grads_[b.id]);
        });
    }

    Val transpose(Val a) {
        Tensor out = transpose_plain(value(a));
        return push(std::move(out), needs(a), [this, a](const Tensor& g) {
            if (!needs(a)) return;
            Tensor gt = transpose_plain(g);
            accumulate(a, gt);
        });
    }

    Val add(Val a, Val b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        require(av.same_shape(bv),
                "add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
        Tensor out = av + bv;
        check_finite(out, "add");
        return push(std::move(out), needs(a) || needs(b), [this, a, b](const Tensor& g) {
            if (needs(a)) accumulate(a, g);
            if (needs(b)) accumulate(b, g);
        });
    }

    // (n,d) + (1,d), bias broadcast over rows.
    Val add_row_broadcast(Val a, Val bias) {
        const Tensor& av = value(a);
        const Tensor& bv = value(bias);
        require(bv.rows() == 1 && bv.cols() == av.cols(),
                "add_row_broadcast: bias " + bv.shape_str() + " does not match " + av.shape_str());
        Tensor out = av;
        for (int i = 0; i < out.rows(); ++i)
            for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bv.at(0, j);
        check_finite(out, "add_row_broadcast");
        return push(std::move(out), needs(a) || needs(bias), [this, a, bias](const Tensor& g) {
            if (needs(a)) accumulate(a, g);
            if (needs(bias)) {
                Tensor& gb = grads_[bias.id];
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gb.at(0, j) += g.at(i, j);
            }
        });
    }

    // (m,1) + (1,n) -> (m,n), both broadcast.
    Val add_outer(Val col, Val row) {
        const Tensor& cv = value(col);
        const Tensor& rv = value(row);
        require(cv.cols() == 1 && rv.rows() == 1,
                "add_outer: expected (m,1)+(1,n), got " + cv.shape_str() + " and " + rv.shape_str());
        Tensor out(cv.rows(), rv.cols());
        for (int i = 0; i < out.rows(); ++i)
            for (int j = 0; j < out.cols(); ++j) out.at(i, j) = cv.at(i, 0) + rv.at(0, j);
        check_finite(out, "add_outer");
        return push(std::move(out), needs(col) || needs(row), [this, col, row](const Tensor& g) {
            if (needs(col)) {
                Tensor& gc = grads_[col.id];
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gc.at(i, 0) += g.at(i, j);
            }
            if (needs(row)) {
                Tensor& gr = grads_[row.id];
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gr.at(0, j) += g.at(i, j);
            }
        });
    }

    Val mul(Val a, Val b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        require(av.same_shape(bv),
                "mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
        Tensor out = av;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
        check_finite(out, "mul");
        return push(std::move(out), needs(a) || needs(b), [this, a, b](const Tensor& g) {
            if (needs(a)) {
                Tensor& ga = grads_[a.id];
                const Tensor& bv2 = nodes_[b.id].value;
                for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * bv2.data[i];
            }
            if (needs(b)) {
                Tensor& gb = grads_[b.id];
                const Tensor& av2 = nodes_[a.id].value;
                for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * av2.data[i];
            }
        });
    }

    Val scale(Val a, double s) {
        Tensor out = value(a) * s;
        check_finite(out, "scale");
        return push(std::move(out), needs(a), [this, a, s](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * s;
        });
    }

    Val sigmoid(Val a) {
        Tensor out = value(a);
        for (double& v : out.data) v = stable_sigmoid(v);
        check_finite(out, "sigmoid");
        int id = next_id();
        return push(std::move(out), needs(a), [this, a, id](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            const Tensor& y = nodes_[id].value;
            for (size_t i = 0; i < g.data.size(); ++i)
                ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        });
    }

    Val tanh_act(Val a) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::tanh(v);
        check_finite(out, "tanh");
        int id = next_id();
        return push(std::move(out), needs(a), [this, a, id](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            const Tensor& y = nodes_[id].value;
            for (size_t i = 0; i < g.data.size(); ++i)
                ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
        });
    }

    Val leaky_relu(Val a, double slope) {
        const Tensor& av = value(a);
        Tensor out = av;
        for (double& v : out.data) v = v >= 0.0 ? v : slope * v;
        check_finite(out, "leaky_relu");
        return push(std::move(out), needs(a), [this, a, slope](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            const Tensor& x = nodes_[a.id].value;
            for (size_t i = 0; i < g.data.size(); ++i)
                ga.data[i] += g.data[i] * (x.data[i] >= 0.0 ? 1.0 : slope);
        });
    }

    Val elu(Val a, double alpha = 1.0) {
        const Tensor& av = value(a);
        Tensor out = av;
        for (double& v : out.data) v = v > 0.0 ? v : alpha * std::expm1(v);
        check_finite(out, "elu");
        return push(std::move(out), needs(a), [this, a, alpha](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            const Tensor& x = nodes_[a.id].value;
            for (size_t i = 0; i < g.data.size(); ++i) {
                double d = x.data[i] > 0.0 ? 1.0 : alpha * std::exp(x.data[i]);
                ga.data[i] += g.data[i] * d;
            }
        });
    }

    Val softmax_rows(Val a) { return softmax_rows_impl(a, nullptr); }

    // Row softmax with an additive mask. Mask entries are 0 (keep) or
    // -infinity (drop); dropped positions come out exactly 0 and rows that
    // are dropped entirely come out all-zero rather than NaN.
    Val softmax_rows_masked(Val a, const Tensor& additive_mask) {
        require(value(a).same_shape(additive_mask),
                "softmax_rows_masked: mask " + additive_mask.shape_str() +
                    " does not match input " + value(a).shape_str());
        return softmax_rows_impl(a, &additive_mask);
    }

    // Per-row layer normalization with learned gain and shift (both 1xd).
    Val layer_norm(Val x, Val gamma, Val beta, double eps = 1e-5) {
        const Tensor& xv = value(x);
        const Tensor& gv = value(gamma);
        const Tensor& bv = value(beta);
        const int n = xv.rows(), d = xv.cols();
        require(gv.rows() == 1 && gv.cols() == d && bv.rows() == 1 && bv.cols() == d,
                "layer_norm: gamma/beta must be 1x" + std::to_string(d));
        Tensor out(n, d);
        auto xhat = std::make_shared<Tensor>(n, d);
        auto inv_std = std::make_shared<std::vector<double>>(n);
        for (int i = 0; i < n; ++i) {
            double mean = 0.0;
            for (int j = 0; j < d; ++j) mean += xv.at(i, j);
            mean /= d;
            double var = 0.0;
            for (int j = 0; j < d; ++j) {
                double c = xv.at(i, j) - mean;
                var += c * c;
            }
            var /= d;
            double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[i] = is;
            for (int j = 0; j < d; ++j) {
                double xh = (xv.at(i, j) - mean) * is;
                xhat->at(i, j) = xh;
                out.at(i, j) = gv.at(0, j) * xh + bv.at(0, j);
            }
        }
        check_finite(out, "layer_norm");
        return push(std::move(out), needs(x) || needs(gamma) || needs(beta),
                    [this, x, gamma, beta, xhat, inv_std](const Tensor& g) {
            const int n = g.rows(), d = g.cols();
            const Tensor& gv = nodes_[gamma.id].value;
            if (needs(gamma)) {
                Tensor& gg = grads_[gamma.id];
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) gg.at(0, j) += g.at(i, j) * xhat->at(i, j);
            }
            if (needs(beta)) {
                Tensor& gb = grads_[beta.id];
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) gb.at(0, j) += g.at(i, j);
            }
            if (needs(x)) {
                Tensor& gx = grads_[x.id];
                for (int i = 0; i < n; ++i) {
                    double mean_gy = 0.0, mean_gyxh = 0.0;
                    for (int j = 0; j < d; ++j) {
                        double gy = g.at(i, j) * gv.at(0, j);
                        mean_gy += gy;
                        mean_gyxh += gy * xhat->at(i, j);
                    }
                    mean_gy /= d;
                    mean_gyxh /= d;
                    for (int j = 0; j < d; ++j) {
                        double gy = g.at(i, j) * gv.at(0, j);
                        gx.at(i, j) += (*inv_std)[i] *
                                       (gy - mean_gy - xhat->at(i, j) * mean_gyxh);
                    }
                }
            }
        });
    }

    // Rows of `table` selected by index; indices may repeat. Backward
    // scatter-adds into the table rows (embedding lookup).
    Val gather_rows(Val table, std::vector<int> indices) {
        const Tensor& tv = value(table);
        for (int ix : indices)
            require(ix >= 0 && ix < tv.rows(),
                    "gather_rows: index " + std::to_string(ix) + " out of range for " +
                        tv.shape_str());
        Tensor out(static_cast<int>(indices.size()), tv.cols());
        for (size_t i = 0; i < indices.size(); ++i)
            for (int j = 0; j < tv.cols(); ++j) out.at(static_cast<int>(i), j) = tv.at(indices[i], j);
        auto idx = std::make_shared<std::vector<int>>(std::move(indices));
        return push(std::move(out), needs(table), [this, table, idx](const Tensor& g) {
            if (!needs(table)) return;
            Tensor& gt = grads_[table.id];
            for (size_t i = 0; i < idx->size(); ++i)
                for (int j = 0; j < g.cols(); ++j)
                    gt.at((*idx)[i], j) += g.at(static_cast<int>(i), j);
        });
    }

    // Row g of the output is the sum of table rows listed in groups[g].
    // Used for summing the relation embeddings of parallel edges.
    Val gather_rows_sum(Val table, std::vector<std::vector<int>> groups) {
        const Tensor& tv = value(table);
        Tensor out(static_cast<int>(groups.size()), tv.cols());
        for (size_t gi = 0; gi < groups.size(); ++gi) {
            require(!groups[gi].empty(), "gather_rows_sum: empty group");
            for (int ix : groups[gi]) {
                require(ix >= 0 && ix < tv.rows(),
                        "gather_rows_sum: index " + std::to_string(ix) + " out of range for " +
                            tv.shape_str());
                for (int j = 0; j < tv.cols(); ++j) out.at(static_cast<int>(gi), j) += tv.at(ix, j);
            }
        }
        auto grp = std::make_shared<std::vector<std::vector<int>>>(std::move(groups));
        return push(std::move(out), needs(table), [this, table, grp](const Tensor& g) {
            if (!needs(table)) return;
            Tensor& gt = grads_[table.id];
            for (size_t gi = 0; gi < grp->size(); ++gi)
                for (int ix : (*grp)[gi])
                    for (int j = 0; j < g.cols(); ++j)
                        gt.at(ix, j) += g.at(static_cast<int>(gi), j);
        });
    }

    Val concat_cols(const std::vector<Val>& parts) {
        require(!parts.empty(), "concat_cols: no inputs");
        int rows = value(parts[0]).rows();
        int cols = 0;
        bool ng = false;
        for (Val p : parts) {
            require(value(p).rows() == rows, "concat_cols: row count mismatch");
            cols += value(p).cols();
            ng = ng || needs(p);
        }
        Tensor out(rows, cols);
        int off = 0;
        for (Val p : parts) {
            const Tensor& pv = value(p);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < pv.cols(); ++j) out.at(i, off + j) = pv.at(i, j);
            off += pv.cols();
        }
        auto ps = std::make_shared<std::vector<Val>>(parts);
        return push(std::move(out), ng, [this, ps](const Tensor& g) {
            int off2 = 0;
            for (Val p : *ps) {
                const int pc = nodes_[p.id].value.cols();
                if (needs(p)) {
                    Tensor& gp = grads_[p.id];
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < pc; ++j) gp.at(i, j) += g.at(i, off2 + j);
                }
                off2 += pc;
            }
        });
    }

    Val concat_rows(const std::vector<Val>& parts) {
        require(!parts.empty(), "concat_rows: no inputs");
        int cols = value(parts[0]).cols();
        int rows = 0;
        bool ng = false;
        for (Val p : parts) {
            require(value(p).cols() == cols, "concat_rows: column count mismatch");
            rows += value(p).rows();
            ng = ng || needs(p);
        }
        Tensor out(rows, cols);
        int off = 0;
        for (Val p : parts) {
            const Tensor& pv = value(p);
            for (int i = 0; i < pv.rows(); ++i)
                for (int j = 0; j < cols; ++j) out.at(off + i, j) = pv.at(i, j);
            off += pv.rows();
        }
        auto ps = std::make_shared<std::vector<Val>>(parts);
        return push(std::move(out), ng, [this, ps](const Tensor& g) {
            int off2 = 0;
            for (Val p : *ps) {
                const int pr = nodes_[p.id].value.rows();
                if (needs(p)) {
                    Tensor& gp = grads_[p.id];
                    for (int i = 0; i < pr; ++i)
                        for (int j = 0; j < g.cols(); ++j) gp.at(i, j) += g.at(off2 + i, j);
                }
                off2 += pr;
            }
        });
    }

    Val slice_cols(Val a, int c0, int c1) {
        const Tensor& av = value(a);
        require(0 <= c0 && c0 < c1 && c1 <= av.cols(),
                "slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                    ") for " + av.shape_str());
        Tensor out(av.rows(), c1 - c0);
        for (int i = 0; i < av.rows(); ++i)
            for (int j = c0; j < c1; ++j) out.at(i, j - c0) = av.at(i, j);
        return push(std::move(out), needs(a), [this, a, c0](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) ga.at(i, c0 + j) += g.at(i, j);
        });
    }

    Val slice_rows(Val a, int r0, int r1) {
        const Tensor& av = value(a);
        require(0 <= r0 && r0 < r1 && r1 <= av.rows(),
                "slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                    ") for " + av.shape_str());
        Tensor out(r1 - r0, av.cols());
        for (int i = r0; i < r1; ++i)
            for (int j = 0; j < av.cols(); ++j) out.at(i - r0, j) = av.at(i, j);
        return push(std::move(out), needs(a), [this, a, r0](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) ga.at(r0 + i, j) += g.at(i, j);
        });
    }

    Val repeat_rows(Val rowvec, int n) {
        const Tensor& rv = value(rowvec);
        require(rv.rows() == 1, "repeat_rows: expected 1xd, got " + rv.shape_str());
        require(n >= 1, "repeat_rows: n must be positive");
        Tensor out(n, rv.cols());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < rv.cols(); ++j) out.at(i, j) = rv.at(0, j);
        return push(std::move(out), needs(rowvec), [this, rowvec](const Tensor& g) {
            if (!needs(rowvec)) return;
            Tensor& gr = grads_[rowvec.id];
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) gr.at(0, j) += g.at(i, j);
        });
    }

    // Dense (rows,cols) matrix with vals[e] added at coords[e], zero elsewhere.
    Val scatter_to_dense(Val vals, const std::vector<std::pair<int, int>>& coords,
                         int rows, int cols) {
        const Tensor& vv = value(vals);
        require(vv.cols() == 1 && vv.rows() == static_cast<int>(coords.size()),
                "scatter_to_dense: vals must be " + std::to_string(coords.size()) + "x1");
        Tensor out(rows, cols);
        for (size_t e = 0; e < coords.size(); ++e) {
            auto [i, j] = coords[e];
            require(i >= 0 && i < rows && j >= 0 && j < cols, "scatter_to_dense: coord out of range");
            out.at(i, j) += vv.at(static_cast<int>(e), 0);
        }
        auto cs = std::make_shared<std::vector<std::pair<int, int>>>(coords);
        return push(std::move(out), needs(vals), [this, vals, cs](const Tensor& g) {
            if (!needs(vals)) return;
            Tensor& gv = grads_[vals.id];
            for (size_t e = 0; e < cs->size(); ++e)
                gv.at(static_cast<int>(e), 0) += g.at((*cs)[e].first, (*cs)[e].second);
        });
    }

    Val reshape(Val a, int rows, int cols) {
        const Tensor& av = value(a);
        require(static_cast<size_t>(rows) * cols == av.size(),
                "reshape: cannot view " + av.shape_str() + " as " + std::to_string(rows) + "x" +
                    std::to_string(cols));
        Tensor out(rows, cols);
        out.data = av.data;
        return push(std::move(out), needs(a), [this, a](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        });
    }

    Val sum_all(Val a) {
        const Tensor& av = value(a);
        double s = 0.0;
        for (double v : av.data) s += v;
        Tensor out = Tensor::scalar(s);
        check_finite(out, "sum_all");
        return push(std::move(out), needs(a), [this, a](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            for (double& v : ga.data) v += g.data[0];
        });
    }

    // Sum of elementwise binary cross-entropy between sigmoid(logits) and
    // targets, computed in the numerically safe log1p form.
    Val bce_with_logits_sum(Val logits, const Tensor& targets) {
        const Tensor& zv = value(logits);
        require(zv.same_shape(targets), "bce_with_logits_sum: target shape mismatch");
        double loss = 0.0;
        for (size_t i = 0; i < zv.data.size(); ++i) {
            double z = zv.data[i], y = targets.data[i];
            require(y >= 0.0 && y <= 1.0, "bce_with_logits_sum: target outside [0,1]");
            loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        }
        Tensor out = Tensor::scalar(loss);
        check_finite(out, "bce_with_logits_sum");
        auto tg = std::make_shared<Tensor>(targets);
        return push(std::move(out), needs(logits), [this, logits, tg](const Tensor& g) {
            if (!needs(logits)) return;
            Tensor& gz = grads_[logits.id];
            const Tensor& zv2 = nodes_[logits.id].value;
            for (size_t i = 0; i < gz.data.size(); ++i)
                gz.data[i] += g.data[0] * (stable_sigmoid(zv2.data[i]) - tg->data[i]);
        });
    }

    // Weighted sum over rows of categorical cross-entropy between
    // softmax(row) and the target column, via logsumexp. A zero weight skips
    // the row entirely (used for entities with no supervised location).
    Val softmax_xent_sum(Val logits, const std::vector<int>& target_cols,
                         const std::vector<double>& row_weights) {
        const Tensor& zv = value(logits);
        require(static_cast<int>(target_cols.size()) == zv.rows() &&
                    static_cast<int>(row_weights.size()) == zv.rows(),
                "softmax_xent_sum: need one target and weight per row");
        double loss = 0.0;
        for (int i = 0; i < zv.rows(); ++i) {
            if (row_weights[i] == 0.0) continue;
            int t = target_cols[i];
            require(t >= 0 && t < zv.cols(), "softmax_xent_sum: target column out of range");
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < zv.cols(); ++j) mx = std::max(mx, zv.at(i, j));
            double se = 0.0;
            for (int j = 0; j < zv.cols(); ++j) se += std::exp(zv.at(i, j) - mx);
            loss += row_weights[i] * (mx + std::log(se) - zv.at(i, t));
        }
        Tensor out = Tensor::scalar(loss);
        check_finite(out, "softmax_xent_sum");
        auto tc = std::make_shared<std::vector<int>>(target_cols);
        auto rw = std::make_shared<std::vector<double>>(row_weights);
        return push(std::move(out), needs(logits), [this, logits, tc, rw](const Tensor& g) {
            if (!needs(logits)) return;
            Tensor& gz = grads_[logits.id];
            const Tensor& zv2 = nodes_[logits.id].value;
            for (int i = 0; i < zv2.rows(); ++i) {
                double w = (*rw)[i];
                if (w == 0.0) continue;
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < zv2.cols(); ++j) mx = std::max(mx, zv2.at(i, j));
                double se = 0.0;
                for (int j = 0; j < zv2.cols(); ++j) se += std::exp(zv2.at(i, j) - mx);
                for (int j = 0; j < zv2.cols(); ++j) {
                    double p = std::exp(zv2.at(i, j) - mx) / se;
                    gz.at(i, j) += g.data[0] * w * (p - ((*tc)[i] == j ? 1.0 : 0.0));
                }
            }
        });
    }

private:
    struct Node {
        Tensor value;
        bool needs_grad = false;
        std::function<void(const Tensor&)> backward;
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool ran_backward_ = false;

    int next_id() const { return static_cast<int>(nodes_.size()); }

    Val push(Tensor value, bool needs_grad, std::function<void(const Tensor&)> bw) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        n.backward = needs_grad ? std::move(bw) : nullptr;
        nodes_.push_back(std::move(n));
        return Val{static_cast<int>(nodes_.size()) - 1};
    }

    bool needs(Val v) const { return nodes_[v.id].needs_grad; }

    void accumulate(Val v, const Tensor& g) {
        Tensor& gv = grads_[v.id];
        for (size_t i = 0; i < g.data.size(); ++i) gv.data[i] += g.data[i];
    }

    void check_val(Val v) const {
        require(v.valid() && v.id < static_cast<int>(nodes_.size()),
                "Tape: invalid value handle");
    }

    static void check_finite(const Tensor& t, const char* op) {
        if (!t.all_finite())
            contract_fail(std::string("non-finite value produced by ") + op);
    }

    static double stable_sigmoid(double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    }

    Val softmax_rows_impl(Val a, const Tensor* mask) {
        const Tensor& av = value(a);
        const int n = av.rows(), d = av.cols();
        Tensor out(n, d);
        for (int i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < d; ++j) {
                double z = av.at(i, j) + (mask ? mask->at(i, j) : 0.0);
                mx = std::max(mx, z);
            }
            if (mx == -std::numeric_limits<double>::infinity()) continue; // fully masked row
            double se = 0.0;
            for (int j = 0; j < d; ++j) {
                double z = av.at(i, j) + (mask ? mask->at(i, j) : 0.0);
                double e = std::exp(z - mx);
                out.at(i, j) = e;
                se += e;
            }
            for (int j = 0; j < d; ++j) out.at(i, j) /= se;
        }
        check_finite(out, mask ? "softmax_rows_masked" : "softmax_rows");
        int id = next_id();
        return push(std::move(out), needs(a), [this, a, id](const Tensor& g) {
            if (!needs(a)) return;
            Tensor& ga = grads_[a.id];
            const Tensor& y = nodes_[id].value;
            for (int i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (int j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
                for (int j = 0; j < y.cols(); ++j)
                    ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
            }
        });
    }
};

} // namespace sgr
