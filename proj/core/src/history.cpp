#include "istrain/history.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace istrain {

void HistoryStore::record_loss(std::size_t sample, std::uint64_t iteration, double loss) {
    if (sample >= buffers_.size()) throw IndexError("record_loss: sample index out of range");
    if (!std::isfinite(loss)) throw NumericError("record_loss: non-finite loss", sample);
    auto& buf = buffers_[sample];
    buf.push_back({iteration, loss});
    if (buf.size() > window_) buf.pop_front();
    ++total_;
}

std::vector<double> HistoryStore::loss_history(std::size_t sample) const {
    if (sample >= buffers_.size()) return {};
    const auto& buf = buffers_[sample];
    std::vector<double> out;
    out.reserve(buf.size());
    for (const auto& obs : buf) out.push_back(obs.loss);
    return out;
}

const std::deque<HistoryStore::Observation>& HistoryStore::observations(std::size_t sample) const {
    if (sample >= buffers_.size()) throw IndexError("observations: sample index out of range");
    return buffers_[sample];
}

// ---- ApproxParams ----

std::size_t ApproxParams::param_count() const {
    return lstm.param_count() + embedding.param_count() + head_weight.size() + 1;
}

void ApproxParams::flatten(std::vector<double>& out) const {
    lstm.flatten(out);
    out.insert(out.end(), embedding.table.data.begin(), embedding.table.data.end());
    out.insert(out.end(), head_weight.begin(), head_weight.end());
    out.push_back(head_bias);
}

void ApproxParams::unflatten(std::span<const double> flat) {
    if (flat.size() != param_count()) throw ShapeError("ApproxParams::unflatten: size mismatch");
    std::size_t n_lstm = lstm.param_count();
    lstm.unflatten(flat.subspan(0, n_lstm));
    std::size_t off = n_lstm;
    std::copy_n(flat.begin() + off, embedding.table.size(), embedding.table.data.begin());
    off += embedding.table.size();
    std::copy_n(flat.begin() + off, head_weight.size(), head_weight.begin());
    off += head_weight.size();
    head_bias = flat[off];
}

ApproxParams ApproxParams::random(std::size_t num_classes, Rng& rng, std::size_t lstm_hidden,
                                  std::size_t embed_dim) {
    ApproxParams p;
    p.lstm = LstmParams::random(1, lstm_hidden, rng);
    p.embedding = EmbeddingParams::random(num_classes, embed_dim, rng);
    std::size_t feat = lstm_hidden + embed_dim;
    p.head_weight.resize(feat);
    double bound = std::sqrt(6.0 / static_cast<double>(feat + 1));
    for (double& v : p.head_weight) v = rng.next_uniform(-bound, bound);
    p.head_bias = 0.0;
    return p;
}

namespace {

std::vector<std::vector<double>> history_sequence(const HistoryStore& store, std::size_t sample) {
    std::vector<double> losses = store.loss_history(sample);
    std::vector<std::vector<double>> seq;
    seq.reserve(losses.size());
    for (double l : losses) seq.push_back({l});
    return seq;
}

double forward_raw(const ApproxParams& params, std::size_t sample, std::size_t cls,
                   const HistoryStore& store, LstmCache* cache,
                   std::vector<double>* hidden_out) {
    std::vector<std::vector<double>> seq = history_sequence(store, sample);
    std::vector<double> hidden = lstm_forward(params.lstm, seq, cache);
    std::span<const double> emb = embed(params.embedding, cls);

    double out = params.head_bias;
    std::size_t h = hidden.size();
    for (std::size_t i = 0; i < h; ++i) out += params.head_weight[i] * hidden[i];
    for (std::size_t i = 0; i < emb.size(); ++i) out += params.head_weight[h + i] * emb[i];
    if (hidden_out) *hidden_out = std::move(hidden);
    return out;
}

}  // namespace

double predict_raw(const ApproxParams& params, std::size_t sample, std::size_t cls,
                   const HistoryStore& store) {
    return forward_raw(params, sample, cls, store, nullptr, nullptr);
}

double predict_importance(const ApproxParams& params, std::size_t sample, std::size_t cls,
                          const HistoryStore& store, double ema_mean_loss) {
    if (store.loss_history(sample).empty()) return ema_mean_loss;
    return std::max(0.0, predict_raw(params, sample, cls, store));
}

std::vector<double> approx_loss_gradient(const ApproxParams& params,
                                         std::span<const ApproxObservation> observations,
                                         const HistoryStore& store, double* mse_out) {
    if (observations.empty()) throw ShapeError("approx_loss_gradient: no observations");

    std::size_t n_lstm = params.lstm.param_count();
    std::size_t n_emb = params.embedding.param_count();
    std::size_t h = params.lstm.hidden_size;
    std::size_t d = params.embedding.table.cols;
    std::vector<double> grad(params.param_count(), 0.0);

    double mse = 0.0;
    double inv_b = 1.0 / static_cast<double>(observations.size());
    for (const ApproxObservation& obs : observations) {
        LstmCache cache;
        std::vector<double> hidden;
        double pred = forward_raw(params, obs.sample, obs.cls, store, &cache, &hidden);
        double residual = pred - obs.true_loss;
        mse += residual * residual * inv_b;

        // d(mse)/d(pred) for this observation
        double dpred = 2.0 * residual * inv_b;

        std::span<const double> emb = embed(params.embedding, obs.cls);
        // head
        for (std::size_t i = 0; i < h; ++i)
            grad[n_lstm + n_emb + i] += dpred * hidden[i];
        for (std::size_t i = 0; i < d; ++i)
            grad[n_lstm + n_emb + h + i] += dpred * emb[i];
        grad[n_lstm + n_emb + h + d] += dpred;

        // embedding row
        for (std::size_t i = 0; i < d; ++i)
            grad[n_lstm + obs.cls * d + i] += dpred * params.head_weight[h + i];

        // LSTM through the hidden state (empty history: zero state, no gradient)
        if (!cache.inputs.empty()) {
            std::vector<double> dh(h);
            for (std::size_t i = 0; i < h; ++i) dh[i] = dpred * params.head_weight[i];
            std::vector<double> lstm_grad = lstm_backward(params.lstm, cache, dh);
            for (std::size_t i = 0; i < n_lstm; ++i) grad[i] += lstm_grad[i];
        }
    }
    if (mse_out) *mse_out = mse;
    return grad;
}

double approx_train_step(ApproxParams& params, std::span<const ApproxObservation> observations,
                         const HistoryStore& store, OptimizerState& state) {
    double mse = 0.0;
    std::vector<double> grad = approx_loss_gradient(params, observations, store, &mse);
    std::vector<double> flat;
    params.flatten(flat);
    optimizer_step(flat, grad, state);
    params.unflatten(flat);
    return mse;
}

// ---- checkpoint ----

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x49534150;  // "ISAP"

void write_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("checkpoint: truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_doubles(std::ofstream& out, std::span<const double> v) {
    for (double x : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

void read_doubles(std::ifstream& in, std::span<double> v) {
    for (double& x : v) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) throw FormatError("checkpoint: truncated parameter data");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        std::memcpy(&x, &bits, 8);
    }
}

}  // namespace

void save_approx_checkpoint(const ApproxParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_approx_checkpoint: cannot open " + path);
    write_u32(out, kCheckpointMagic);
    write_u32(out, static_cast<std::uint32_t>(params.lstm.input_size));
    write_u32(out, static_cast<std::uint32_t>(params.lstm.hidden_size));
    write_u32(out, static_cast<std::uint32_t>(params.embedding.table.rows));
    write_u32(out, static_cast<std::uint32_t>(params.embedding.table.cols));
    std::vector<double> flat;
    params.flatten(flat);
    write_doubles(out, flat);
    if (!out) throw IoError("save_approx_checkpoint: write failed for " + path);
}

ApproxParams load_approx_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_approx_checkpoint: cannot open " + path);
    if (read_u32(in) != kCheckpointMagic)
        throw FormatError("load_approx_checkpoint: bad magic (expected 0x49534150)");
    std::size_t input_size = read_u32(in);
    std::size_t hidden = read_u32(in);
    std::size_t num_classes = read_u32(in);
    std::size_t embed_dim = read_u32(in);

    ApproxParams p;
    Rng scratch(0);
    p.lstm = LstmParams::random(input_size, hidden, scratch);
    p.embedding.table = Matrix(num_classes, embed_dim);
    p.head_weight.assign(hidden + embed_dim, 0.0);
    std::vector<double> flat(p.param_count());
    read_doubles(in, flat);
    p.unflatten(flat);
    return p;
}

}  // namespace istrain
