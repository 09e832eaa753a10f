#include "istrain/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace istrain {

namespace {

void matvec(const Matrix& w, std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        double s = 0.0;
        const double* row = w.data.data() + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) s += row[c] * x[c];
        out[r] = s;
    }
}

// out += w^T * d
void matvec_transpose_add(const Matrix& w, std::span<const double> d, std::span<double> out) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* row = w.data.data() + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) out[c] += row[c] * d[r];
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& v : m.data) v = rng.next_uniform(-bound, bound);
    return m;
}

}  // namespace

// ---- MlpParams ----

std::size_t MlpParams::input_size() const {
    return layers.empty() ? 0 : layers.front().weight.cols;
}

std::size_t MlpParams::output_size() const {
    return layers.empty() ? 0 : layers.back().weight.rows;
}

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

void MlpParams::flatten(std::vector<double>& out) const {
    out.clear();
    out.reserve(param_count());
    for (const auto& l : layers) {
        out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
}

void MlpParams::unflatten(std::span<const double> flat) {
    if (flat.size() != param_count()) throw ShapeError("MlpParams::unflatten: size mismatch");
    std::size_t off = 0;
    for (auto& l : layers) {
        std::copy_n(flat.begin() + off, l.weight.size(), l.weight.data.begin());
        off += l.weight.size();
        std::copy_n(flat.begin() + off, l.bias.size(), l.bias.begin());
        off += l.bias.size();
    }
}

MlpParams MlpParams::random(const std::vector<std::size_t>& dims, double dropout, Rng& rng) {
    if (dims.size() < 2) throw ShapeError("MlpParams::random: need at least input and output dims");
    if (dropout < 0.0 || dropout >= 1.0) throw ShapeError("MlpParams::random: dropout must be in [0,1)");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.weight = glorot(dims[l + 1], dims[l], rng);
        layer.bias.assign(dims[l + 1], 0.0);
        bool last = (l + 2 == dims.size());
        layer.activation = last ? Activation::Identity : Activation::Relu;
        layer.dropout_rate = last ? 0.0 : dropout;
        p.layers.push_back(std::move(layer));
    }
    return p;
}

// ---- forward ----

namespace {

struct MlpCache {
    std::vector<std::vector<double>> layer_inputs;     // post-dropout input to each layer
    std::vector<std::vector<double>> preactivations;   // z_l
    std::vector<std::vector<double>> dropout_masks;    // empty when no dropout
};

std::vector<double> mlp_forward_impl(const MlpParams& params, std::span<const double> x,
                                     Rng* dropout_rng, MlpCache* cache) {
    if (params.layers.empty()) throw ShapeError("mlp_forward: empty network");
    if (x.size() != params.input_size())
        throw ShapeError("mlp_forward: input length " + std::to_string(x.size()) +
                         " does not match first layer input " +
                         std::to_string(params.input_size()));

    std::vector<double> a(x.begin(), x.end());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const DenseLayer& layer = params.layers[l];
        if (a.size() != layer.weight.cols) throw ShapeError("mlp_forward: layer dims do not chain");
        if (cache) cache->layer_inputs.push_back(a);

        std::vector<double> z(layer.weight.rows);
        matvec(layer.weight, a, z);
        for (std::size_t r = 0; r < z.size(); ++r) z[r] += layer.bias[r];
        if (cache) cache->preactivations.push_back(z);

        a = z;
        if (layer.activation == Activation::Relu) {
            for (double& v : a) v = std::max(0.0, v);
        }
        std::vector<double> mask;
        if (layer.dropout_rate > 0.0 && dropout_rng) {
            mask.resize(a.size());
            double keep_scale = 1.0 / (1.0 - layer.dropout_rate);
            for (std::size_t r = 0; r < a.size(); ++r) {
                mask[r] = dropout_rng->next_double() < layer.dropout_rate ? 0.0 : keep_scale;
                a[r] *= mask[r];
            }
        }
        if (cache) cache->dropout_masks.push_back(std::move(mask));
    }
    return a;
}

}  // namespace

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> x,
                                Rng* dropout_rng) {
    return mlp_forward_impl(params, x, dropout_rng, nullptr);
}

// ---- losses ----

double loss_nll(std::span<const double> logits, std::size_t cls) {
    if (cls >= logits.size()) throw IndexError("loss_nll: class index out of range");
    double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double l : logits) s += std::exp(l - m);
    return m + std::log(s) - logits[cls];
}

double loss_mse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw ShapeError("loss_mse: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - target[i];
        s += d * d;
    }
    return s;
}

std::vector<double> softmax(std::span<const double> logits) {
    double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        s += p[i];
    }
    for (double& v : p) v /= s;
    return p;
}

std::vector<double> loss_nll_grad_wrt_probs(std::span<const double> probs, std::size_t cls) {
    if (cls >= probs.size()) throw IndexError("loss_nll_grad_wrt_probs: class out of range");
    std::vector<double> g(probs.size(), 0.0);
    g[cls] = -1.0 / probs[cls];
    return g;
}

std::vector<double> loss_mse_grad(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw ShapeError("loss_mse_grad: length mismatch");
    std::vector<double> g(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = 2.0 * (pred[i] - target[i]);
    return g;
}

// ---- backward ----

namespace {

// Per-sample loss + flat gradient for one sample; masks shared with the forward.
double sample_backward(const MlpParams& params, LossKind loss, const TrainSample& sample,
                       Rng* dropout_rng, std::vector<double>& flat_grad) {
    MlpCache cache;
    std::vector<double> out = mlp_forward_impl(params, sample.input, dropout_rng, &cache);

    double loss_value;
    std::vector<double> d_out;
    if (loss == LossKind::Nll) {
        loss_value = loss_nll(out, static_cast<std::size_t>(sample.label));
        d_out = softmax(out);
        d_out[static_cast<std::size_t>(sample.label)] -= 1.0;
    } else {
        loss_value = loss_mse(out, sample.target);
        d_out = loss_mse_grad(out, sample.target);
    }

    flat_grad.assign(params.param_count(), 0.0);
    // offsets of each layer's weight block in the flat gradient
    std::vector<std::size_t> offsets(params.layers.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        offsets[l] = off;
        off += params.layers[l].weight.size() + params.layers[l].bias.size();
    }

    std::vector<double> delta = std::move(d_out);
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const DenseLayer& layer = params.layers[li];
        const std::vector<double>& mask = cache.dropout_masks[li];
        if (!mask.empty()) {
            for (std::size_t r = 0; r < delta.size(); ++r) delta[r] *= mask[r];
        }
        if (layer.activation == Activation::Relu) {
            const std::vector<double>& z = cache.preactivations[li];
            for (std::size_t r = 0; r < delta.size(); ++r) {
                if (z[r] <= 0.0) delta[r] = 0.0;
            }
        }
        const std::vector<double>& in = cache.layer_inputs[li];
        double* wgrad = flat_grad.data() + offsets[li];
        double* bgrad = wgrad + layer.weight.size();
        for (std::size_t r = 0; r < layer.weight.rows; ++r) {
            for (std::size_t c = 0; c < layer.weight.cols; ++c) {
                wgrad[r * layer.weight.cols + c] += delta[r] * in[c];
            }
            bgrad[r] += delta[r];
        }
        if (li > 0) {
            std::vector<double> d_in(layer.weight.cols, 0.0);
            matvec_transpose_add(layer.weight, delta, d_in);
            delta = std::move(d_in);
        }
    }
    return loss_value;
}

}  // namespace

GradBundle backward(const MlpParams& params, LossKind loss, std::span<const TrainSample> batch,
                    std::span<const double> weights, Rng* dropout_rng,
                    std::vector<std::vector<double>>* per_sample_weighted_grads) {
    if (batch.size() != weights.size()) throw ShapeError("backward: |batch| != |weights|");
    if (batch.empty()) throw ShapeError("backward: empty batch");
    for (double w : weights) {
        if (!(w > 0.0)) throw ShapeError("backward: weights must be > 0");
    }

    GradBundle bundle;
    bundle.weights.assign(weights.begin(), weights.end());
    bundle.gradient.assign(params.param_count(), 0.0);
    bundle.per_sample_losses.resize(batch.size());
    if (per_sample_weighted_grads) per_sample_weighted_grads->clear();

    std::vector<double> g;
    double inv_b = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double l = sample_backward(params, loss, batch[i], dropout_rng, g);
        if (!std::isfinite(l)) throw NumericError("backward: non-finite loss", i);
        bundle.per_sample_losses[i] = l;
        for (double& v : g) v *= weights[i];
        for (std::size_t j = 0; j < g.size(); ++j) bundle.gradient[j] += inv_b * g[j];
        if (per_sample_weighted_grads) per_sample_weighted_grads->push_back(g);
    }
    return bundle;
}

double per_sample_grad_norm(const MlpParams& params, LossKind loss, const TrainSample& sample) {
    std::vector<double> g;
    sample_backward(params, loss, sample, nullptr, g);
    return std::sqrt(squared_norm(g));
}

// ---- LSTM ----

std::size_t LstmParams::param_count() const {
    std::size_t gate = w_i.size() + u_i.size() + b_i.size();
    return 4 * gate;
}

void LstmParams::flatten(std::vector<double>& out) const {
    out.clear();
    out.reserve(param_count());
    auto push = [&out](const Matrix& w, const Matrix& u, const std::vector<double>& b) {
        out.insert(out.end(), w.data.begin(), w.data.end());
        out.insert(out.end(), u.data.begin(), u.data.end());
        out.insert(out.end(), b.begin(), b.end());
    };
    push(w_i, u_i, b_i);
    push(w_f, u_f, b_f);
    push(w_o, u_o, b_o);
    push(w_g, u_g, b_g);
}

void LstmParams::unflatten(std::span<const double> flat) {
    if (flat.size() != param_count()) throw ShapeError("LstmParams::unflatten: size mismatch");
    std::size_t off = 0;
    auto pull = [&flat, &off](Matrix& w, Matrix& u, std::vector<double>& b) {
        std::copy_n(flat.begin() + off, w.size(), w.data.begin());
        off += w.size();
        std::copy_n(flat.begin() + off, u.size(), u.data.begin());
        off += u.size();
        std::copy_n(flat.begin() + off, b.size(), b.begin());
        off += b.size();
    };
    pull(w_i, u_i, b_i);
    pull(w_f, u_f, b_f);
    pull(w_o, u_o, b_o);
    pull(w_g, u_g, b_g);
}

LstmParams LstmParams::random(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
    LstmParams p;
    p.input_size = input_size;
    p.hidden_size = hidden_size;
    auto init_gate = [&](Matrix& w, Matrix& u, std::vector<double>& b) {
        w = glorot(hidden_size, input_size, rng);
        u = glorot(hidden_size, hidden_size, rng);
        b.assign(hidden_size, 0.0);
    };
    init_gate(p.w_i, p.u_i, p.b_i);
    init_gate(p.w_f, p.u_f, p.b_f);
    init_gate(p.w_o, p.u_o, p.b_o);
    init_gate(p.w_g, p.u_g, p.b_g);
    return p;
}

std::vector<double> lstm_forward(const LstmParams& params,
                                 std::span<const std::vector<double>> sequence,
                                 LstmCache* cache) {
    std::size_t h = params.hidden_size;
    std::vector<double> hidden(h, 0.0);
    std::vector<double> cell(h, 0.0);

    std::vector<double> zi(h), zf(h), zo(h), zg(h), tmp(h);
    for (const std::vector<double>& x : sequence) {
        if (x.size() != params.input_size)
            throw ShapeError("lstm_forward: element length does not match input_size");
        auto gate_pre = [&](const Matrix& w, const Matrix& u, const std::vector<double>& b,
                            std::vector<double>& z) {
            matvec(w, x, z);
            matvec(u, hidden, tmp);
            for (std::size_t r = 0; r < h; ++r) z[r] += tmp[r] + b[r];
        };
        gate_pre(params.w_i, params.u_i, params.b_i, zi);
        gate_pre(params.w_f, params.u_f, params.b_f, zf);
        gate_pre(params.w_o, params.u_o, params.b_o, zo);
        gate_pre(params.w_g, params.u_g, params.b_g, zg);

        std::vector<double> gi(h), gf(h), go(h), gg(h), tc(h);
        for (std::size_t r = 0; r < h; ++r) {
            gi[r] = sigmoid(zi[r]);
            gf[r] = sigmoid(zf[r]);
            go[r] = sigmoid(zo[r]);
            gg[r] = std::tanh(zg[r]);
            cell[r] = gf[r] * cell[r] + gi[r] * gg[r];
            tc[r] = std::tanh(cell[r]);
            hidden[r] = go[r] * tc[r];
        }
        if (cache) {
            cache->inputs.push_back(x);
            cache->gate_i.push_back(gi);
            cache->gate_f.push_back(gf);
            cache->gate_o.push_back(go);
            cache->gate_g.push_back(gg);
            cache->cell.push_back(cell);
            cache->hidden.push_back(hidden);
            cache->tanh_cell.push_back(tc);
        }
    }
    return hidden;
}

std::vector<double> lstm_backward(const LstmParams& params, const LstmCache& cache,
                                  std::span<const double> d_hidden) {
    std::size_t h = params.hidden_size;
    std::size_t in = params.input_size;
    if (d_hidden.size() != h) throw ShapeError("lstm_backward: d_hidden size mismatch");

    std::size_t gate_w = h * in;
    std::size_t gate_u = h * h;
    std::size_t gate_block = gate_w + gate_u + h;
    std::vector<double> grad(4 * gate_block, 0.0);

    std::vector<double> dh(d_hidden.begin(), d_hidden.end());
    std::vector<double> dc(h, 0.0);

    std::size_t steps = cache.inputs.size();
    for (std::size_t t = steps; t-- > 0;) {
        const auto& gi = cache.gate_i[t];
        const auto& gf = cache.gate_f[t];
        const auto& go = cache.gate_o[t];
        const auto& gg = cache.gate_g[t];
        const auto& tc = cache.tanh_cell[t];
        const auto& x = cache.inputs[t];
        const std::vector<double>* h_prev = t > 0 ? &cache.hidden[t - 1] : nullptr;
        const std::vector<double>* c_prev = t > 0 ? &cache.cell[t - 1] : nullptr;

        std::vector<double> dzi(h), dzf(h), dzo(h), dzg(h), dc_prev(h);
        for (std::size_t r = 0; r < h; ++r) {
            double d_o = dh[r] * tc[r];
            double dcr = dc[r] + dh[r] * go[r] * (1.0 - tc[r] * tc[r]);
            double d_i = dcr * gg[r];
            double d_g = dcr * gi[r];
            double d_f = dcr * (c_prev ? (*c_prev)[r] : 0.0);
            dc_prev[r] = dcr * gf[r];
            dzi[r] = d_i * gi[r] * (1.0 - gi[r]);
            dzf[r] = d_f * gf[r] * (1.0 - gf[r]);
            dzo[r] = d_o * go[r] * (1.0 - go[r]);
            dzg[r] = d_g * (1.0 - gg[r] * gg[r]);
        }

        std::vector<double> dh_prev(h, 0.0);
        auto accumulate_gate = [&](std::size_t gate_index, const std::vector<double>& dz,
                                   const Matrix& u) {
            double* base = grad.data() + gate_index * gate_block;
            for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t c = 0; c < in; ++c) base[r * in + c] += dz[r] * x[c];
                if (h_prev) {
                    for (std::size_t c = 0; c < h; ++c)
                        base[gate_w + r * h + c] += dz[r] * (*h_prev)[c];
                }
                base[gate_w + gate_u + r] += dz[r];
            }
            matvec_transpose_add(u, dz, dh_prev);
        };
        accumulate_gate(0, dzi, params.u_i);
        accumulate_gate(1, dzf, params.u_f);
        accumulate_gate(2, dzo, params.u_o);
        accumulate_gate(3, dzg, params.u_g);

        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
    }
    return grad;
}

// ---- embedding ----

EmbeddingParams EmbeddingParams::random(std::size_t num_classes, std::size_t embed_dim, Rng& rng) {
    EmbeddingParams p;
    p.table = glorot(num_classes, embed_dim, rng);
    return p;
}

std::span<const double> embed(const EmbeddingParams& params, std::size_t cls) {
    if (cls >= params.table.rows) throw IndexError("embed: class index out of range");
    return params.table.row(cls);
}

// ---- optimizers ----

OptimizerState OptimizerState::sgd(double lr) {
    OptimizerState s;
    s.kind = Kind::Sgd;
    s.learning_rate = lr;
    return s;
}

OptimizerState OptimizerState::adam(double lr, double beta1, double beta2, double eps) {
    OptimizerState s;
    s.kind = Kind::Adam;
    s.learning_rate = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

void sgd_step(std::vector<double>& params, std::span<const double> grad, OptimizerState& state) {
    if (params.size() != grad.size()) throw ShapeError("sgd_step: shape mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= state.learning_rate * grad[i];
    ++state.step;
}

void adam_step(std::vector<double>& params, std::span<const double> grad, OptimizerState& state) {
    if (params.size() != grad.size()) throw ShapeError("adam_step: shape mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: accumulator shape mismatch");
    ++state.step;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
}

void optimizer_step(std::vector<double>& params, std::span<const double> grad,
                    OptimizerState& state) {
    if (state.kind == OptimizerState::Kind::Sgd) {
        sgd_step(params, grad, state);
    } else {
        adam_step(params, grad, state);
    }
}

}  // namespace istrain
