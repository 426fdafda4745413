#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace snnzip::testsupport {

// ---------------------------------------------------------------------------
// Singular values via the Gram matrix.

namespace {

// Cyclic Jacobi eigenvalue iteration for a symmetric matrix held row-major.
std::vector<double> symmetric_eigenvalues(std::vector<double> g, std::size_t n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += g[p * n + q] * g[p * n + q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = g[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = g[p * n + p], aqq = g[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = g[k * n + p], akq = g[k * n + q];
                    g[k * n + p] = c * akp - s * akq;
                    g[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = g[p * n + k], aqk = g[q * n + k];
                    g[p * n + k] = c * apk - s * aqk;
                    g[q * n + k] = s * apk + c * aqk;
                }
                (void)app;
                (void)aqq;
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = g[i * n + i];
    return eig;
}

}  // namespace

std::vector<double> svd_values_gram(const double* a, std::size_t rows, std::size_t cols) {
    const std::size_t n = std::min(rows, cols);
    // Gram on the smaller side: G = A^T A (cols x cols) or A A^T (rows x rows).
    std::vector<double> g(n * n, 0.0);
    if (cols <= rows) {
        for (std::size_t i = 0; i < cols; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < rows; ++k) s += a[k * cols + i] * a[k * cols + j];
                g[i * n + j] = s;
            }
    } else {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < rows; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < cols; ++k) s += a[i * cols + k] * a[j * cols + k];
                g[i * n + j] = s;
            }
    }
    std::vector<double> eig = symmetric_eigenvalues(std::move(g), n);
    std::vector<double> sv(n);
    for (std::size_t i = 0; i < n; ++i) sv[i] = std::sqrt(std::max(eig[i], 0.0));
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

// ---------------------------------------------------------------------------
// Exact integer rank (Bareiss).

std::size_t integer_rank(std::vector<std::vector<long long>> m) {
    if (m.empty()) return 0;
    const std::size_t rows = m.size(), cols = m[0].size();
    std::vector<std::vector<__int128>> a(rows, std::vector<__int128>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) a[i][j] = m[i][j];

    __int128 prev = 1;
    std::size_t rank = 0, row = 0;
    for (std::size_t col = 0; col < cols && row < rows; ++col) {
        std::size_t pivot = row;
        while (pivot < rows && a[pivot][col] == 0) ++pivot;
        if (pivot == rows) continue;
        std::swap(a[row], a[pivot]);
        for (std::size_t i = row + 1; i < rows; ++i) {
            for (std::size_t j = col + 1; j < cols; ++j) {
                a[i][j] = (a[row][col] * a[i][j] - a[i][col] * a[row][j]) / prev;
            }
            a[i][col] = 0;
        }
        prev = a[row][col];
        ++row;
        ++rank;
    }
    return rank;
}

double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// ---------------------------------------------------------------------------
// Random desk-scale cases.

DeskNetCase random_desk_case(Rng& rng, std::size_t max_weights) {
    for (int attempt = 0; attempt < 2000; ++attempt) {
        Architecture arch;
        arch.n_classes = 2 + rng.below(3);
        arch.input.channels = 1 + rng.below(2);
        arch.input.height = arch.input.width = 3 + rng.below(3);
        arch.input.spatial = true;

        const auto random_lif = [&] {
            LifParams p;
            p.leak = rng.uniform(0.0, 0.9);
            p.threshold = rng.uniform(0.5, 1.5);
            p.surrogate_width = rng.uniform(0.5, 1.5);
            p.detach_reset = rng.below(2) == 0;
            return p;
        };
        const auto conv = [&] {
            LayerDef d;
            d.kind = LayerKind::conv2d;
            d.out_channels = 1 + rng.below(2);
            d.kernel = 1 + rng.below(3);
            d.stride = 1 + rng.below(2);
            d.padding = rng.below(2);
            d.affine = rng.below(2) == 0;
            return d;
        };
        const auto lif = [&] {
            LayerDef d;
            d.kind = LayerKind::lif;
            d.lif = random_lif();
            return d;
        };
        const auto pool = [&] {
            LayerDef d;
            d.kind = LayerKind::maxpool;
            d.window = 2;
            return d;
        };
        const auto dense = [&] {
            LayerDef d;
            d.kind = LayerKind::dense;
            d.out_features = arch.n_classes;
            return d;
        };

        switch (rng.below(4)) {
            case 0:
                arch.layers = {dense(), lif()};
                break;
            case 1:
                arch.layers = {conv(), lif(), dense(), lif()};
                break;
            case 2:
                arch.layers = {conv(), lif(), pool(), dense(), lif()};
                break;
            default: {
                arch.layers = {conv(), lif()};
                if (rng.below(2) == 0) arch.layers.push_back(pool());
                arch.layers.push_back(conv());
                arch.layers.push_back(lif());
                if (rng.below(2) == 0) arch.layers.push_back(pool());
                arch.layers.push_back(dense());
                arch.layers.push_back(lif());
                break;
            }
        }

        // Random quantizers on hidden weighted layers.
        std::vector<std::size_t> weighted;
        for (std::size_t i = 0; i < arch.layers.size(); ++i) {
            const auto k = arch.layers[i].kind;
            if (k == LayerKind::conv2d || k == LayerKind::dense) weighted.push_back(i);
        }
        for (std::size_t i = 1; i + 1 < weighted.size(); ++i) {
            if (rng.below(2) != 0) continue;
            QuantizerSpec q;
            q.bits = 1 << (1 + rng.below(3));  // 2, 4, 8
            switch (rng.below(4)) {
                case 0: q.gamma = GammaOption::none; break;
                case 1: q.gamma = GammaOption::max_abs; break;
                case 2: q.gamma = GammaOption::percentile_pair; break;
                default: q.gamma = GammaOption::l1_mean; break;
            }
            arch.layers[weighted[i]].quantizer = q;
        }

        std::optional<Network> net;
        try {
            net = Network::build(arch, rng.next_u64());
        } catch (const std::exception&) {
            continue;  // invalid shape combination; roll again
        }

        std::size_t weight_count = 0;
        for (const Layer& l : net->layers()) {
            if (l.weighted()) weight_count += l.weight.size();
        }
        if (weight_count > max_weights) continue;

        DeskNetCase out;
        out.arch = arch;
        out.time_steps = 1 + rng.below(4);
        const std::size_t batch = 1 + rng.below(2);
        out.input = Tensor({batch, arch.input.channels, arch.input.height, arch.input.width});
        for (std::size_t i = 0; i < out.input.size(); ++i) out.input[i] = rng.normal(0.7, 0.7);
        out.grad_readout = Tensor({batch, arch.n_classes});
        for (std::size_t i = 0; i < out.grad_readout.size(); ++i) out.grad_readout[i] = rng.normal();
        return out;
    }
    throw std::runtime_error("random_desk_case: no valid architecture found in 2000 attempts");
}

// ---------------------------------------------------------------------------
// Gradient oracle.

namespace {

double surrogate(double u, const LifParams& p) {
    return std::max(p.surrogate_width - std::abs(u - p.threshold), 0.0) / p.surrogate_width;
}

struct DenseWeighted {
    std::size_t in_vol = 0, out_vol = 0;
    std::size_t hw = 1;  // contiguous spatial block per output channel
    std::vector<double> c;        // [out_vol * in_vol] effective weights
    std::vector<double> c_grad;   // accumulated dL/dC
};

}  // namespace

OracleGradients oracle_gradients(const Network& net, const ForwardTrace& trace, const Tensor& input,
                                 const Tensor& grad_readout) {
    const std::size_t T = trace.time_steps, B = trace.batch, L = net.layer_count();

    // Materialize every weighted layer as a dense matrix over its flattened
    // input/output, using the weights the pass actually used.
    std::vector<DenseWeighted> dense(L);
    for (std::size_t i = 0; i < L; ++i) {
        const Layer& l = net.layer(i);
        if (!l.weighted()) continue;
        const FeatureShape in = net.shape_before(i), out = net.shape_before(i + 1);
        DenseWeighted& d = dense[i];
        d.in_vol = in.volume();
        d.out_vol = out.volume();
        d.c.assign(d.out_vol * d.in_vol, 0.0);
        d.c_grad.assign(d.out_vol * d.in_vol, 0.0);
        const Tensor& w = trace.layers[i].effective_weight;
        if (l.kind == LayerKind::dense) {
            d.hw = 1;
            for (std::size_t r = 0; r < d.out_vol; ++r)
                for (std::size_t col = 0; col < d.in_vol; ++col) d.c[r * d.in_vol + col] = w.at(r, col);
        } else {
            d.hw = out.height * out.width;
            for (std::size_t oc = 0; oc < l.out_channels; ++oc)
                for (std::size_t oy = 0; oy < out.height; ++oy)
                    for (std::size_t ox = 0; ox < out.width; ++ox) {
                        const std::size_t r = (oc * out.height + oy) * out.width + ox;
                        for (std::size_t ic = 0; ic < l.in_channels; ++ic)
                            for (std::size_t ky = 0; ky < l.kernel; ++ky)
                                for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                                    const std::ptrdiff_t iy =
                                        static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                        static_cast<std::ptrdiff_t>(l.padding);
                                    const std::ptrdiff_t ix =
                                        static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                        static_cast<std::ptrdiff_t>(l.padding);
                                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.height) || ix < 0 ||
                                        ix >= static_cast<std::ptrdiff_t>(in.width))
                                        continue;
                                    const std::size_t col =
                                        (ic * in.height + static_cast<std::size_t>(iy)) * in.width +
                                        static_cast<std::size_t>(ix);
                                    d.c[r * d.in_vol + col] = w.at(oc, ic, ky, kx);
                                }
                    }
        }
    }

    GradientSet grads;
    grads.layers.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        const Layer& l = net.layer(i);
        if (!l.weighted()) continue;
        grads.layers[i].weight = Tensor(l.weight.shape());
        grads.layers[i].bias = Tensor(l.bias.shape());
        grads.layers[i].scale = Tensor(l.scale.shape());
    }

    OracleGradients result;
    result.min_threshold_gap = 1e300;

    std::vector<std::size_t> lifs;
    for (std::size_t i = 0; i < L; ++i)
        if (net.layer(i).kind == LayerKind::lif) lifs.push_back(i);

    const std::size_t in_vol = net.input_shape().volume();

    for (std::size_t b = 0; b < B; ++b) {
        // ---- independent forward -------------------------------------
        // Everything indexed [layer][t].
        std::vector<std::vector<std::vector<double>>> z(L), raw(L), u(L), s(L);
        std::vector<std::vector<std::vector<std::size_t>>> route(L);
        std::vector<std::vector<double>> h_state(L);
        for (std::size_t i = 0; i < L; ++i) {
            z[i].resize(T);
            raw[i].resize(T);
            u[i].resize(T);
            s[i].resize(T);
            route[i].resize(T);
            if (net.layer(i).kind == LayerKind::lif) h_state[i].assign(net.shape_before(i).volume(), 0.0);
        }

        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> cur(in_vol);
            for (std::size_t j = 0; j < in_vol; ++j) cur[j] = input[b * in_vol + j];
            for (std::size_t i = 0; i < L; ++i) {
                const Layer& l = net.layer(i);
                const FeatureShape in = net.shape_before(i), out = net.shape_before(i + 1);
                if (l.weighted()) {
                    const DenseWeighted& d = dense[i];
                    z[i][t] = cur;
                    std::vector<double> r(d.out_vol, 0.0);
                    for (std::size_t row = 0; row < d.out_vol; ++row) {
                        double acc = 0.0;
                        for (std::size_t col = 0; col < d.in_vol; ++col) acc += d.c[row * d.in_vol + col] * cur[col];
                        r[row] = acc;
                    }
                    raw[i][t] = r;
                    std::vector<double> o(d.out_vol);
                    for (std::size_t row = 0; row < d.out_vol; ++row) {
                        const std::size_t ch = row / d.hw;
                        o[row] = l.scale[ch] * r[row] + l.bias[ch];
                    }
                    cur = std::move(o);
                } else if (l.kind == LayerKind::maxpool) {
                    std::vector<std::size_t> rt(out.volume());
                    std::vector<double> o(out.volume());
                    for (std::size_t c = 0; c < out.channels; ++c)
                        for (std::size_t oy = 0; oy < out.height; ++oy)
                            for (std::size_t ox = 0; ox < out.width; ++ox) {
                                double best = -1e300;
                                std::size_t best_idx = 0;
                                for (std::size_t wy = 0; wy < l.window; ++wy)
                                    for (std::size_t wx = 0; wx < l.window; ++wx) {
                                        const std::size_t iy = oy * l.window + wy, ix = ox * l.window + wx;
                                        const std::size_t idx = (c * in.height + iy) * in.width + ix;
                                        if (cur[idx] > best) {
                                            best = cur[idx];
                                            best_idx = idx;
                                        }
                                    }
                                const std::size_t r = (c * out.height + oy) * out.width + ox;
                                rt[r] = best_idx;
                                o[r] = best;
                            }
                    route[i][t] = std::move(rt);
                    cur = std::move(o);
                } else {  // lif
                    const std::size_t vol = in.volume();
                    std::vector<double> uu(vol), ss(vol);
                    for (std::size_t j = 0; j < vol; ++j) {
                        uu[j] = l.lif.leak * h_state[i][j] + cur[j];
                        ss[j] = uu[j] >= l.lif.threshold ? 1.0 : 0.0;
                        h_state[i][j] = uu[j] * (1.0 - ss[j]);
                        result.min_threshold_gap =
                            std::min(result.min_threshold_gap, std::abs(uu[j] - l.lif.threshold));
                    }
                    // diagnostics against the library's trace
                    const Tensor& tu = trace.layers[i].u_pre[t];
                    const Tensor& ts = trace.layers[i].spikes[t];
                    for (std::size_t j = 0; j < vol; ++j) {
                        result.max_u_diff = std::max(result.max_u_diff, std::abs(uu[j] - tu[b * vol + j]));
                        if (ss[j] != ts[b * vol + j]) result.spikes_match = false;
                    }
                    u[i][t] = std::move(uu);
                    s[i][t] = ss;
                    cur = std::move(ss);
                }
            }
        }

        // ---- expanded temporal adjoints, top layer down ----------------
        // For each LIF: Total[tau] = sum_{t>=tau} D[t] * prod_{i in [tau,t)} f[i].
        std::vector<std::vector<std::vector<double>>> total(L);

        for (std::size_t k = lifs.size(); k-- > 0;) {
            const std::size_t li = lifs[k];
            const Layer& ll = net.layer(li);
            const std::size_t vol = net.shape_before(li).volume();

            // D[t]: readout injection for the top LIF, routed spatial adjoint
            // through the surrogate for the rest.
            std::vector<std::vector<double>> D(T, std::vector<double>(vol, 0.0));
            if (k + 1 == lifs.size()) {
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t j = 0; j < vol; ++j)
                        D[t][j] = grad_readout[b * vol + j] / static_cast<double>(T);
            } else {
                const std::size_t above = lifs[k + 1];
                for (std::size_t t = 0; t < T; ++t) {
                    // Start from the layer above's membrane adjoint and walk
                    // back down through the gap (weighted and pool layers),
                    // collecting parameter-gradient contributions on the way.
                    std::vector<double> g = total[above][t];
                    for (std::size_t i = above; i-- > li + 1;) {
                        const Layer& l = net.layer(i);
                        const FeatureShape in = net.shape_before(i);
                        if (l.weighted()) {
                            const DenseWeighted& d = dense[i];
                            std::vector<double> gb(d.in_vol, 0.0);
                            for (std::size_t row = 0; row < d.out_vol; ++row) {
                                const std::size_t ch = row / d.hw;
                                const double gs = g[row];
                                if (l.affine) grads.layers[i].scale[ch] += gs * raw[i][t][row];
                                grads.layers[i].bias[ch] += gs;
                                const double gg = l.scale[ch] * gs;
                                for (std::size_t col = 0; col < d.in_vol; ++col) {
                                    dense[i].c_grad[row * d.in_vol + col] += gg * z[i][t][col];
                                    gb[col] += d.c[row * d.in_vol + col] * gg;
                                }
                            }
                            g = std::move(gb);
                        } else {  // maxpool
                            std::vector<double> gb(in.volume(), 0.0);
                            for (std::size_t o = 0; o < g.size(); ++o) gb[route[i][t][o]] += g[o];
                            g = std::move(gb);
                        }
                    }
                    for (std::size_t j = 0; j < vol; ++j) D[t][j] = g[j] * surrogate(u[li][t][j], ll.lif);
                }
            }

            // f[i] per step for the temporal chain.
            std::vector<std::vector<double>> f(T, std::vector<double>(vol, 0.0));
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < vol; ++j) {
                    const double keep = 1.0 - s[li][t][j];
                    f[t][j] = ll.lif.detach_reset
                                  ? ll.lif.leak * keep
                                  : ll.lif.leak * (keep - u[li][t][j] * surrogate(u[li][t][j], ll.lif));
                }

            total[li].assign(T, std::vector<double>(vol, 0.0));
            for (std::size_t tau = 0; tau < T; ++tau)
                for (std::size_t t = tau; t < T; ++t)
                    for (std::size_t j = 0; j < vol; ++j) {
                        double prod = 1.0;
                        for (std::size_t i = tau; i < t; ++i) prod *= f[i][j];
                        total[li][tau][j] += D[t][j] * prod;
                    }
        }

        // Layers below the first LIF (the input-facing weighted stack).
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> g = total[lifs[0]][t];
            for (std::size_t i = lifs[0]; i-- > 0;) {
                const Layer& l = net.layer(i);
                const FeatureShape in = net.shape_before(i);
                if (l.weighted()) {
                    const DenseWeighted& d = dense[i];
                    std::vector<double> gb(d.in_vol, 0.0);
                    for (std::size_t row = 0; row < d.out_vol; ++row) {
                        const std::size_t ch = row / d.hw;
                        const double gs = g[row];
                        if (l.affine) grads.layers[i].scale[ch] += gs * raw[i][t][row];
                        grads.layers[i].bias[ch] += gs;
                        const double gg = l.scale[ch] * gs;
                        for (std::size_t col = 0; col < d.in_vol; ++col) {
                            dense[i].c_grad[row * d.in_vol + col] += gg * z[i][t][col];
                            gb[col] += d.c[row * d.in_vol + col] * gg;
                        }
                    }
                    g = std::move(gb);
                } else if (l.kind == LayerKind::maxpool) {
                    std::vector<double> gb(in.volume(), 0.0);
                    for (std::size_t o = 0; o < g.size(); ++o) gb[route[i][t][o]] += g[o];
                    g = std::move(gb);
                }
            }
        }
    }

    // Fold the dense-matrix gradients back onto the kernels (weight tying:
    // each kernel entry sums the matrix entries it occupies), then apply the
    // straight-through gate for quantized layers.
    for (std::size_t i = 0; i < L; ++i) {
        const Layer& l = net.layer(i);
        if (!l.weighted()) continue;
        const DenseWeighted& d = dense[i];
        Tensor& gw = grads.layers[i].weight;
        if (l.kind == LayerKind::dense) {
            for (std::size_t r = 0; r < d.out_vol; ++r)
                for (std::size_t col = 0; col < d.in_vol; ++col) gw.at(r, col) = d.c_grad[r * d.in_vol + col];
        } else {
            const FeatureShape in = net.shape_before(i), out = net.shape_before(i + 1);
            for (std::size_t oc = 0; oc < l.out_channels; ++oc)
                for (std::size_t ic = 0; ic < l.in_channels; ++ic)
                    for (std::size_t ky = 0; ky < l.kernel; ++ky)
                        for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                            double acc = 0.0;
                            for (std::size_t oy = 0; oy < out.height; ++oy)
                                for (std::size_t ox = 0; ox < out.width; ++ox) {
                                    const std::ptrdiff_t iy =
                                        static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                        static_cast<std::ptrdiff_t>(l.padding);
                                    const std::ptrdiff_t ix =
                                        static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                        static_cast<std::ptrdiff_t>(l.padding);
                                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.height) || ix < 0 ||
                                        ix >= static_cast<std::ptrdiff_t>(in.width))
                                        continue;
                                    const std::size_t r = (oc * out.height + oy) * out.width + ox;
                                    const std::size_t col =
                                        (ic * in.height + static_cast<std::size_t>(iy)) * in.width +
                                        static_cast<std::size_t>(ix);
                                    acc += d.c_grad[r * d.in_vol + col];
                                }
                            gw.at(oc, ic, ky, kx) = acc;
                        }
        }
        if (l.quantizer) {
            const double gamma = trace.layers[i].gamma;
            for (std::size_t j = 0; j < gw.size(); ++j) {
                if (std::abs(l.weight[j] / gamma) > 1.0) gw[j] = 0.0;
            }
        }
    }

    result.grads = std::move(grads);
    return result;
}

double max_rel_diff(const Tensor& reference, const Tensor& candidate, double floor) {
    if (!reference.same_shape(candidate)) throw std::runtime_error("max_rel_diff: shape mismatch");
    double dmax = 0.0, rmax = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        dmax = std::max(dmax, std::abs(reference[i] - candidate[i]));
        rmax = std::max(rmax, std::abs(reference[i]));
    }
    return dmax / std::max(rmax, floor);
}

}  // namespace snnzip::testsupport
