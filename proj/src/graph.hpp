#ifndef MEDUSA_GRAPH_HPP
#define MEDUSA_GRAPH_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace medusa::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;

// Reverse-mode tape. One Graph instance per forward pass; node ids are indices
// into the tape in creation order, which is already a topological order.
//
// Leaves come in two kinds: input() copies a constant, param() binds external
// value/grad storage so the optimizer sees accumulated gradients after
// backward(). Scalars are rank-0 tensors (empty shape, numel 1).
template <typename T>
class Graph {
public:
    using Id = int;

    Id input(Tensor<T> v) {
        Node n;
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    Id param(Tensor<T>& value, Tensor<T>& grad) {
        Node n;
        n.value = value;  // copy; cheap at desk scale and keeps the tape self-contained
        n.external_grad = &grad;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    const Tensor<T>& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    Tensor<T>& grad(Id id) { return nodes_[static_cast<size_t>(id)].grad; }

    // y = x W^T + b, applied over the last axis. W: (out, in), b: (out).
    Id linear(Id x, Id w, Id b) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& wv = value(w);
        const Tensor<T>& bv = value(b);
        require(xv.rank() >= 1 && wv.rank() == 2 && bv.rank() == 1, "linear: bad ranks");
        int64_t in = xv.shape.back();
        int64_t out = wv.dim(0);
        require(wv.dim(1) == in, "linear: W columns != input dim " + wv.shape_str());
        require(bv.dim(0) == out, "linear: bias dim != output dim");
        int64_t m = xv.numel() / in;

        std::vector<int64_t> oshape(xv.shape);
        oshape.back() = out;
        Tensor<T> y(oshape);
        CMapM<T> X(xv.data.data(), m, in);
        CMapM<T> W(wv.data.data(), out, in);
        MapM<T> Y(y.data.data(), m, out);
        Y.noalias() = X * W.transpose();
        Y.rowwise() += Eigen::Map<const Eigen::RowVector<T, Eigen::Dynamic>>(bv.data.data(), out);

        return make(std::move(y), {x, w, b}, [m, in, out](Graph& g, Node& n) {
            Tensor<T>& dx = g.parent_grad(n, 0);
            Tensor<T>& dw = g.parent_grad(n, 1);
            Tensor<T>& db = g.parent_grad(n, 2);
            const Tensor<T>& xv = g.parent_value(n, 0);
            const Tensor<T>& wv = g.parent_value(n, 1);
            CMapM<T> X(xv.data.data(), m, in);
            CMapM<T> W(wv.data.data(), out, in);
            CMapM<T> dY(n.grad.data.data(), m, out);
            MapM<T>(dx.data.data(), m, in).noalias() += dY * W;
            MapM<T>(dw.data.data(), out, in).noalias() += dY.transpose() * X;
            Eigen::Map<Eigen::RowVector<T, Eigen::Dynamic>>(db.data.data(), out) +=
                dY.colwise().sum();
        });
    }

    Id relu(Id x) {
        Tensor<T> y = value(x);
        for (T& v : y.data) v = v > T(0) ? v : T(0);
        return make(std::move(y), {x}, [](Graph& g, Node& n) {
            Tensor<T>& dx = g.parent_grad(n, 0);
            const Tensor<T>& xv = g.parent_value(n, 0);
            for (int64_t i = 0; i < xv.numel(); ++i)
                if (xv[i] > T(0)) dx[i] += n.grad[i];
        });
    }

    Id add(Id a, Id b) { return weighted_sum(a, b, T(1), T(1)); }

    // y = wa * a + wb * b (same shapes). Also serves as the MixUp lerp.
    Id weighted_sum(Id a, Id b, T wa, T wb) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(b);
        require(av.same_shape(bv), "weighted_sum: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
        Tensor<T> y(av.shape);
        for (int64_t i = 0; i < av.numel(); ++i) y[i] = wa * av[i] + wb * bv[i];
        return make(std::move(y), {a, b}, [wa, wb](Graph& g, Node& n) {
            Tensor<T>& da = g.parent_grad(n, 0);
            Tensor<T>& db = g.parent_grad(n, 1);
            for (int64_t i = 0; i < n.grad.numel(); ++i) {
                da[i] += wa * n.grad[i];
                db[i] += wb * n.grad[i];
            }
        });
    }

    Id scale(Id x, T s) {
        Tensor<T> y = value(x);
        for (T& v : y.data) v *= s;
        return make(std::move(y), {x}, [s](Graph& g, Node& n) {
            Tensor<T>& dx = g.parent_grad(n, 0);
            for (int64_t i = 0; i < n.grad.numel(); ++i) dx[i] += s * n.grad[i];
        });
    }

    // y[i] = x[perm[i]] over the first axis.
    Id gather_rows(Id x, std::vector<int64_t> perm) {
        const Tensor<T>& xv = value(x);
        require(xv.rank() >= 1, "gather_rows: rank 0");
        int64_t rows = xv.dim(0);
        int64_t stride = xv.numel() / rows;
        require(static_cast<int64_t>(perm.size()) == rows, "gather_rows: perm size != rows");
        Tensor<T> y(xv.shape);
        for (size_t i = 0; i < perm.size(); ++i) {
            require(perm[i] >= 0 && perm[i] < rows, "gather_rows: index out of range");
            std::copy_n(xv.data.begin() + perm[i] * stride, stride, y.data.begin() + static_cast<int64_t>(i) * stride);
        }
        return make(std::move(y), {x}, [perm = std::move(perm), stride](Graph& g, Node& n) {
            Tensor<T>& dx = g.parent_grad(n, 0);
            for (size_t i = 0; i < perm.size(); ++i)
                for (int64_t k = 0; k < stride; ++k)
                    dx[perm[i] * stride + k] += n.grad[static_cast<int64_t>(i) * stride + k];
        });
    }

    // LayerNorm over the last axis; gamma/beta: (F).
    Id layer_norm(Id x, Id gamma, Id beta, T eps = T(1e-5)) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& gv = value(gamma);
        int64_t f = xv.shape.back();
        require(gv.numel() == f && value(beta).numel() == f, "layer_norm: affine dims");
        int64_t rows = xv.numel() / f;
        Tensor<T> y(xv.shape);
        Tensor<T> xhat(xv.shape);        // cached for backward
        std::vector<T> inv_std(static_cast<size_t>(rows));
        const Tensor<T>& bv = value(beta);
        for (int64_t r = 0; r < rows; ++r) {
            const T* xp = xv.data.data() + r * f;
            T mu = 0;
            for (int64_t i = 0; i < f; ++i) mu += xp[i];
            mu /= static_cast<T>(f);
            T var = 0;
            for (int64_t i = 0; i < f; ++i) var += (xp[i] - mu) * (xp[i] - mu);
            var /= static_cast<T>(f);
            T is = T(1) / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(r)] = is;
            for (int64_t i = 0; i < f; ++i) {
                T xh = (xp[i] - mu) * is;
                xhat[r * f + i] = xh;
                y[r * f + i] = gv[i] * xh + bv[i];
            }
        }
        return make(std::move(y), {x, gamma, beta},
                    [f, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, Node& n) {
                        Tensor<T>& dx = g.parent_grad(n, 0);
                        Tensor<T>& dgamma = g.parent_grad(n, 1);
                        Tensor<T>& dbeta = g.parent_grad(n, 2);
                        const Tensor<T>& gv = g.parent_value(n, 1);
                        for (int64_t r = 0; r < rows; ++r) {
                            const T* dy = n.grad.data.data() + r * f;
                            const T* xh = xhat.data.data() + r * f;
                            T is = inv_std[static_cast<size_t>(r)];
                            T sum_g = 0, sum_gx = 0;
                            for (int64_t i = 0; i < f; ++i) {
                                T gi = dy[i] * gv[i];
                                sum_g += gi;
                                sum_gx += gi * xh[i];
                                dgamma[i] += dy[i] * xh[i];
                                dbeta[i] += dy[i];
                            }
                            T mg = sum_g / static_cast<T>(f);
                            T mgx = sum_gx / static_cast<T>(f);
                            for (int64_t i = 0; i < f; ++i) {
                                T gi = dy[i] * gv[i];
                                dx[r * f + i] += is * (gi - mg - xh[i] * mgx);
                            }
                        }
                    });
    }

    // Inverted dropout with an externally sampled keep mask (1 = keep).
    Id dropout(Id x, const BoolMask& keep, T p) {
        const Tensor<T>& xv = value(x);
        require(keep.numel() == xv.numel(), "dropout: mask size");
        T inv_keep = T(1) / (T(1) - p);
        Tensor<T> y(xv.shape);
        std::vector<uint8_t> m = keep.data;
        for (int64_t i = 0; i < xv.numel(); ++i) y[i] = m[static_cast<size_t>(i)] ? xv[i] * inv_keep : T(0);
        return make(std::move(y), {x}, [m = std::move(m), inv_keep](Graph& g, Node& n) {
            Tensor<T>& dx = g.parent_grad(n, 0);
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                if (m[static_cast<size_t>(i)]) dx[i] += n.grad[i] * inv_keep;
        });
    }

    // (B, L, D) -> (B*H, L, D/H)
    Id split_heads(Id x, int64_t heads) {
        const Tensor<T>& xv = value(x);
        require(xv.rank() == 3, "split_heads: want rank 3");
        int64_t b = xv.dim(0), l = xv.dim(1), d = xv.dim(2);
        require(d % heads == 0, "split_heads: D % heads != 0");
        int64_t dh = d / heads;
        Tensor<T> y({b * heads, l, dh});
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t li = 0; li < l; ++li)
                for (int64_t h = 0; h < heads; ++h)
                    std::copy_n(xv.data.begin() + (bi * l + li) * d + h * dh, dh,
                                y.data.begin() + (((bi * heads + h) * l) + li) * dh);
        return make(std::move(y), {x}, [b, l, d, heads, dh](Graph& g, Node& n) {
            Tensor<T>& dx = g.parent_grad(n, 0);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t li = 0; li < l; ++li)
                    for (int64_t h = 0; h < heads; ++h) {
                        const T* src = n.grad.data.data() + (((bi * heads + h) * l) + li) * dh;
                        T* dst = dx.data.data() + (bi * l + li) * d + h * dh;
                        for (int64_t k = 0; k < dh; ++k) dst[k] += src[k];
                    }
        });
    }

    // (B*H, L, dh) -> (B, L, H*dh)
    Id merge_heads(Id x, int64_t heads) {
        const Tensor<T>& xv = value(x);
        require(xv.rank() == 3 && xv.dim(0) % heads == 0, "merge_heads: bad shape");
        int64_t b = xv.dim(0) / heads, l = xv.dim(1), dh = xv.dim(2);
        int64_t d = heads * dh;
        Tensor<T> y({b, l, d});
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t li = 0; li < l; ++li)
                for (int64_t h = 0; h < heads; ++h)
                    std::copy_n(xv.data.begin() + (((bi * heads + h) * l) + li) * dh, dh,
                                y.data.begin() + (bi * l + li) * d + h * dh);
        return make(std::move(y), {x}, [b, l, d, heads, dh](Graph& g, Node& n) {
            Tensor<T>& dx = g.parent_grad(n, 0);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t li = 0; li < l; ++li)
                    for (int64_t h = 0; h < heads; ++h) {
                        const T* src = n.grad.data.data() + (bi * l + li) * d + h * dh;
                        T* dst = dx.data.data() + (((bi * heads + h) * l) + li) * dh;
                        for (int64_t k = 0; k < dh; ++k) dst[k] += src[k];
                    }
        });
    }

    // Batched matmul: a (G,M,K) x b (G,K,N) -> (G,M,N); trans_b reads b as (G,N,K).
    Id bmm(Id a, Id b, bool trans_b = false) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& bv = value(b);
        require(av.rank() == 3 && bv.rank() == 3 && av.dim(0) == bv.dim(0), "bmm: bad batch dims");
        int64_t gcount = av.dim(0), m = av.dim(1), k = av.dim(2);
        int64_t n_cols = trans_b ? bv.dim(1) : bv.dim(2);
        require(trans_b ? bv.dim(2) == k : bv.dim(1) == k, "bmm: inner dim mismatch");
        Tensor<T> y({gcount, m, n_cols});
        for (int64_t gi = 0; gi < gcount; ++gi) {
            CMapM<T> A(av.data.data() + gi * m * k, m, k);
            MapM<T> Y(y.data.data() + gi * m * n_cols, m, n_cols);
            if (trans_b) {
                CMapM<T> B(bv.data.data() + gi * n_cols * k, n_cols, k);
                Y.noalias() = A * B.transpose();
            } else {
                CMapM<T> B(bv.data.data() + gi * k * n_cols, k, n_cols);
                Y.noalias() = A * B;
            }
        }
        return make(std::move(y), {a, b}, [gcount, m, k, n_cols, trans_b](Graph& g, Node& n) {
            Tensor<T>& da = g.parent_grad(n, 0);
            Tensor<T>& db = g.parent_grad(n, 1);
            const Tensor<T>& av = g.parent_value(n, 0);
            const Tensor<T>& bv = g.parent_value(n, 1);
            for (int64_t gi = 0; gi < gcount; ++gi) {
                CMapM<T> A(av.data.data() + gi * m * k, m, k);
                CMapM<T> dY(n.grad.data.data() + gi * m * n_cols, m, n_cols);
                MapM<T> dA(da.data.data() + gi * m * k, m, k);
                if (trans_b) {
                    CMapM<T> B(bv.data.data() + gi * n_cols * k, n_cols, k);
                    MapM<T> dB(db.data.data() + gi * n_cols * k, n_cols, k);
                    dA.noalias() += dY * B;
                    dB.noalias() += dY.transpose() * A;
                } else {
                    CMapM<T> B(bv.data.data() + gi * k * n_cols, k, n_cols);
                    MapM<T> dB(db.data.data() + gi * k * n_cols, k, n_cols);
                    dA.noalias() += dY * B.transpose();
                    dB.noalias() += A.transpose() * dY;
                }
            }
        });
    }

    // Softmax over the last axis of (G, Lq, Lk) with a key-validity mask (B, Lk),
    // G = B * heads. Masked keys get exactly zero weight.
    Id softmax_masked(Id scores, const BoolMask& key_mask, int64_t heads) {
        const Tensor<T>& sv = value(scores);
        require(sv.rank() == 3, "softmax_masked: want rank 3");
        int64_t gcount = sv.dim(0), lq = sv.dim(1), lk = sv.dim(2);
        require(key_mask.rank() == 2 && key_mask.dim(0) * heads == gcount && key_mask.dim(1) == lk,
                "softmax_masked: mask shape");
        Tensor<T> y(sv.shape);
        for (int64_t gi = 0; gi < gcount; ++gi) {
            int64_t b = gi / heads;
            const uint8_t* mk = key_mask.data.data() + b * lk;
            for (int64_t q = 0; q < lq; ++q) {
                const T* row = sv.data.data() + (gi * lq + q) * lk;
                T* out = y.data.data() + (gi * lq + q) * lk;
                T mx = -std::numeric_limits<T>::infinity();
                for (int64_t j = 0; j < lk; ++j)
                    if (mk[j] && row[j] > mx) mx = row[j];
                T denom = 0;
                for (int64_t j = 0; j < lk; ++j) {
                    out[j] = mk[j] ? std::exp(row[j] - mx) : T(0);
                    denom += out[j];
                }
                for (int64_t j = 0; j < lk; ++j) out[j] /= denom;
            }
        }
        return make(std::move(y), {scores}, [gcount, lq, lk](Graph& g, Node& n) {
            Tensor<T>& dx = g.parent_grad(n, 0);
            for (int64_t r = 0; r < gcount * lq; ++r) {
                const T* yv = n.value.data.data() + r * lk;
                const T* dy = n.grad.data.data() + r * lk;
                T dot = 0;
                for (int64_t j = 0; j < lk; ++j) dot += dy[j] * yv[j];
                for (int64_t j = 0; j < lk; ++j) dx[r * lk + j] += yv[j] * (dy[j] - dot);
            }
        });
    }

    // Mean over valid time steps: (B, L, D) + mask (B, L) -> (B, D).
    Id masked_mean_pool(Id x, const BoolMask& mask) {
        const Tensor<T>& xv = value(x);
        require(xv.rank() == 3, "masked_mean_pool: want rank 3");
        int64_t b = xv.dim(0), l = xv.dim(1), d = xv.dim(2);
        require(mask.rank() == 2 && mask.dim(0) == b && mask.dim(1) == l, "masked_mean_pool: mask shape");
        Tensor<T> y({b, d});
        std::vector<T> inv_n(static_cast<size_t>(b));
        for (int64_t bi = 0; bi < b; ++bi) {
            int64_t cnt = 0;
            for (int64_t li = 0; li < l; ++li) cnt += mask.at2(bi, li) ? 1 : 0;
            if (cnt == 0) throw AllMaskedRowError("masked_mean_pool: row " + std::to_string(bi) + " has no valid step");
            inv_n[static_cast<size_t>(bi)] = T(1) / static_cast<T>(cnt);
            for (int64_t li = 0; li < l; ++li) {
                if (!mask.at2(bi, li)) continue;
                const T* xp = xv.data.data() + (bi * l + li) * d;
                T* yp = y.data.data() + bi * d;
                for (int64_t k = 0; k < d; ++k) yp[k] += xp[k];
            }
            T* yp = y.data.data() + bi * d;
            for (int64_t k = 0; k < d; ++k) yp[k] *= inv_n[static_cast<size_t>(bi)];
        }
        std::vector<uint8_t> m = mask.data;
        return make(std::move(y), {x}, [b, l, d, m = std::move(m), inv_n = std::move(inv_n)](Graph& g, Node& n) {
            Tensor<T>& dx = g.parent_grad(n, 0);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t li = 0; li < l; ++li) {
                    if (!m[static_cast<size_t>(bi * l + li)]) continue;
                    const T* dy = n.grad.data.data() + bi * d;
                    T* dp = dx.data.data() + (bi * l + li) * d;
                    for (int64_t k = 0; k < d; ++k) dp[k] += dy[k] * inv_n[static_cast<size_t>(bi)];
                }
        });
    }

    // Concatenate (B, L_i, D) tensors along the time axis.
    Id concat_time(std::span<const Id> xs) {
        require(!xs.empty(), "concat_time: empty");
        int64_t b = value(xs[0]).dim(0), d = value(xs[0]).dim(2);
        int64_t total_l = 0;
        for (Id id : xs) {
            const Tensor<T>& v = value(id);
            require(v.rank() == 3 && v.dim(0) == b && v.dim(2) == d, "concat_time: incompatible " + v.shape_str());
            total_l += v.dim(1);
        }
        Tensor<T> y({b, total_l, d});
        std::vector<int64_t> lens;
        for (Id id : xs) lens.push_back(value(id).dim(1));
        int64_t off = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            const Tensor<T>& v = value(xs[i]);
            for (int64_t bi = 0; bi < b; ++bi)
                std::copy_n(v.data.begin() + bi * lens[i] * d, lens[i] * d,
                            y.data.begin() + (bi * total_l + off) * d);
            off += lens[i];
        }
        return make(std::move(y), std::vector<Id>(xs.begin(), xs.end()),
                    [b, d, total_l, lens = std::move(lens)](Graph& g, Node& n) {
                        int64_t off = 0;
                        for (size_t i = 0; i < lens.size(); ++i) {
                            Tensor<T>& dx = g.parent_grad(n, i);
                            for (int64_t bi = 0; bi < b; ++bi) {
                                const T* src = n.grad.data.data() + (bi * total_l + off) * d;
                                T* dst = dx.data.data() + bi * lens[i] * d;
                                for (int64_t k = 0; k < lens[i] * d; ++k) dst[k] += src[k];
                            }
                            off += lens[i];
                        }
                    });
    }

    // Concatenate (B, D_i) tensors along the feature axis.
    Id concat_feat(std::span<const Id> xs) {
        require(!xs.empty(), "concat_feat: empty");
        int64_t b = value(xs[0]).dim(0);
        int64_t total_d = 0;
        for (Id id : xs) {
            const Tensor<T>& v = value(id);
            require(v.rank() == 2 && v.dim(0) == b, "concat_feat: incompatible " + v.shape_str());
            total_d += v.dim(1);
        }
        Tensor<T> y({b, total_d});
        std::vector<int64_t> dims;
        for (Id id : xs) dims.push_back(value(id).dim(1));
        int64_t off = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            const Tensor<T>& v = value(xs[i]);
            for (int64_t bi = 0; bi < b; ++bi)
                std::copy_n(v.data.begin() + bi * dims[i], dims[i], y.data.begin() + bi * total_d + off);
            off += dims[i];
        }
        return make(std::move(y), std::vector<Id>(xs.begin(), xs.end()),
                    [b, total_d, dims = std::move(dims)](Graph& g, Node& n) {
                        int64_t off = 0;
                        for (size_t i = 0; i < dims.size(); ++i) {
                            Tensor<T>& dx = g.parent_grad(n, i);
                            for (int64_t bi = 0; bi < b; ++bi) {
                                const T* src = n.grad.data.data() + bi * total_d + off;
                                T* dst = dx.data.data() + bi * dims[i];
                                for (int64_t k = 0; k < dims[i]; ++k) dst[k] += src[k];
                            }
                            off += dims[i];
                        }
                    });
    }

    // Class-weighted soft-target cross entropy, mean over the batch.
    // targets (B, C) row-stochastic, weights (C); both constants.
    Id ce_soft(Id logits, const Tensor<T>& targets, const Tensor<T>& weights) {
        const Tensor<T>& lv = value(logits);
        require(lv.rank() == 2, "ce_soft: logits rank");
        int64_t b = lv.dim(0), c = lv.dim(1);
        require(targets.rank() == 2 && targets.dim(0) == b && targets.dim(1) == c, "ce_soft: target shape");
        require(weights.numel() == c, "ce_soft: weights shape");

        // log-softmax with max subtraction; probabilities cached for backward
        Tensor<T> probs({b, c});
        double total = 0.0;
        for (int64_t bi = 0; bi < b; ++bi) {
            const T* z = lv.data.data() + bi * c;
            T mx = z[0];
            for (int64_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
            double denom = 0.0;
            for (int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(z[j] - mx));
            double log_denom = std::log(denom);
            for (int64_t j = 0; j < c; ++j) {
                double logp = static_cast<double>(z[j] - mx) - log_denom;
                probs.at2(bi, j) = static_cast<T>(std::exp(logp));
                total -= static_cast<double>(weights[j]) * static_cast<double>(targets.at2(bi, j)) * logp;
            }
        }
        Tensor<T> y({});
        y[0] = static_cast<T>(total / static_cast<double>(b));
        return make(std::move(y), {logits},
                    [b, c, probs = std::move(probs), targets, weights](Graph& g, Node& n) {
                        Tensor<T>& dl = g.parent_grad(n, 0);
                        T gout = n.grad[0] / static_cast<T>(b);
                        for (int64_t bi = 0; bi < b; ++bi) {
                            T wsum = 0;
                            for (int64_t j = 0; j < c; ++j) wsum += weights[j] * targets.at2(bi, j);
                            for (int64_t j = 0; j < c; ++j)
                                dl.at2(bi, j) += gout * (probs.at2(bi, j) * wsum - weights[j] * targets.at2(bi, j));
                        }
                    });
    }

    // Mean squared error over all entries; targets constant.
    Id mse(Id preds, const Tensor<T>& targets) {
        const Tensor<T>& pv = value(preds);
        require(pv.same_shape(targets), "mse: shape mismatch");
        int64_t n_elems = pv.numel();
        double total = 0.0;
        for (int64_t i = 0; i < n_elems; ++i) {
            double d = static_cast<double>(pv[i]) - static_cast<double>(targets[i]);
            total += d * d;
        }
        Tensor<T> y({});
        y[0] = static_cast<T>(total / static_cast<double>(n_elems));
        return make(std::move(y), {preds}, [n_elems, targets](Graph& g, Node& n) {
            Tensor<T>& dp = g.parent_grad(n, 0);
            const Tensor<T>& pv = g.parent_value(n, 0);
            T gout = n.grad[0] * T(2) / static_cast<T>(n_elems);
            for (int64_t i = 0; i < n_elems; ++i) dp[i] += gout * (pv[i] - targets[i]);
        });
    }

    // Backpropagate from a scalar root through the whole tape.
    void backward(Id root) {
        Node& rn = nodes_[static_cast<size_t>(root)];
        require(rn.value.numel() == 1, "backward: root must be scalar");
        for (Node& n : nodes_) {
            n.grad = Tensor<T>(n.value.shape);
        }
        rn.grad[0] = T(1);
        for (size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward) n.backward(*this, n);
            if (n.external_grad) {
                for (int64_t k = 0; k < n.grad.numel(); ++k) (*n.external_grad)[k] += n.grad[k];
            }
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<Id> parents;
        std::function<void(Graph&, Node&)> backward;
        Tensor<T>* external_grad = nullptr;
    };

    Tensor<T>& parent_grad(Node& n, size_t i) { return nodes_[static_cast<size_t>(n.parents[i])].grad; }
    const Tensor<T>& parent_value(Node& n, size_t i) const {
        return nodes_[static_cast<size_t>(n.parents[i])].value;
    }

    Id make(Tensor<T> value, std::vector<Id> parents, std::function<void(Graph&, Node&)> backward) {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
};

}  // namespace medusa::nn

#endif
