#include "rkd/classifier.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "rkd/error.hpp"

namespace rkd {

namespace {

std::atomic<long> g_params_live{0};
std::atomic<long> g_params_peak{0};

void registry_inc() {
    const long now = g_params_live.fetch_add(1, std::memory_order_relaxed) + 1;
    long peak = g_params_peak.load(std::memory_order_relaxed);
    while (peak < now &&
           !g_params_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
}

void registry_dec() {
    g_params_live.fetch_sub(1, std::memory_order_relaxed);
}

} // namespace

long params_live() { return g_params_live.load(std::memory_order_relaxed); }
long params_peak() { return g_params_peak.load(std::memory_order_relaxed); }

void reset_params_peak() {
    g_params_peak.store(g_params_live.load(std::memory_order_relaxed),
                        std::memory_order_relaxed);
}

std::vector<int> ClassifierConfig::layer_dims() const {
    std::vector<int> dims;
    dims.reserve(hidden_layers.size() + 2);
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden_layers.begin(), hidden_layers.end());
    dims.push_back(num_classes);
    return dims;
}

ClassifierParams::ClassifierParams(const ClassifierParams& other)
    : config(other.config),
      weights(other.weights),
      biases(other.biases),
      tracked_(other.tracked_) {
    if (tracked_) registry_inc();
}

ClassifierParams::ClassifierParams(ClassifierParams&& other) noexcept
    : config(std::move(other.config)),
      weights(std::move(other.weights)),
      biases(std::move(other.biases)),
      tracked_(other.tracked_) {
    other.weights.clear();
    other.biases.clear();
    other.tracked_ = false;
}

ClassifierParams& ClassifierParams::operator=(const ClassifierParams& other) {
    if (this == &other) return *this;
    if (tracked_) registry_dec();
    config = other.config;
    weights = other.weights;
    biases = other.biases;
    tracked_ = other.tracked_;
    if (tracked_) registry_inc();
    return *this;
}

ClassifierParams& ClassifierParams::operator=(ClassifierParams&& other) noexcept {
    if (this == &other) return *this;
    if (tracked_) registry_dec();
    config = std::move(other.config);
    weights = std::move(other.weights);
    biases = std::move(other.biases);
    tracked_ = other.tracked_;
    other.weights.clear();
    other.biases.clear();
    other.tracked_ = false;
    return *this;
}

ClassifierParams::~ClassifierParams() {
    if (tracked_) registry_dec();
}

void ClassifierParams::clear() {
    if (tracked_) registry_dec();
    tracked_ = false;
    weights.clear();
    biases.clear();
}

void ClassifierParams::track() {
    if (!tracked_) {
        tracked_ = true;
        registry_inc();
    }
}

bool ClassifierParams::same_shape(const ClassifierParams& other) const {
    if (weights.size() != other.weights.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].size() != other.weights[l].size()) return false;
        if (biases[l].size() != other.biases[l].size()) return false;
    }
    return true;
}

bool ClassifierParams::all_finite() const {
    auto finite = [](const std::vector<std::vector<double>>& layers) {
        for (const auto& layer : layers) {
            for (double v : layer) {
                if (!std::isfinite(v)) return false;
            }
        }
        return true;
    };
    return finite(weights) && finite(biases);
}

bool operator==(const ClassifierParams& a, const ClassifierParams& b) {
    return a.weights == b.weights && a.biases == b.biases;
}

void Gradients::zero() {
    for (auto& layer : weights) std::fill(layer.begin(), layer.end(), 0.0);
    for (auto& layer : biases) std::fill(layer.begin(), layer.end(), 0.0);
}

void Gradients::scale(double factor) {
    for (auto& layer : weights) {
        for (double& v : layer) v *= factor;
    }
    for (auto& layer : biases) {
        for (double& v : layer) v *= factor;
    }
}

Gradients make_gradients(const ClassifierParams& params) {
    Gradients g;
    g.weights.reserve(params.weights.size());
    g.biases.reserve(params.biases.size());
    for (const auto& w : params.weights) g.weights.emplace_back(w.size(), 0.0);
    for (const auto& b : params.biases) g.biases.emplace_back(b.size(), 0.0);
    return g;
}

AdamState make_adam_state(const ClassifierParams& params, const AdamConfig& config) {
    AdamState st;
    st.config = config;
    for (const auto& w : params.weights) {
        st.m_weights.emplace_back(w.size(), 0.0);
        st.v_weights.emplace_back(w.size(), 0.0);
    }
    for (const auto& b : params.biases) {
        st.m_biases.emplace_back(b.size(), 0.0);
        st.v_biases.emplace_back(b.size(), 0.0);
    }
    return st;
}

namespace {

void adam_update_array(std::vector<double>& param, const std::vector<double>& grad,
                       std::vector<double>& m, std::vector<double>& v,
                       const AdamConfig& c, double bc1, double bc2) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        double g = grad[i];
        if (c.weight_decay != 0.0) g += c.weight_decay * param[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        param[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

} // namespace

void adam_step(ClassifierParams& params, const Gradients& grads, AdamState& state) {
    if (grads.weights.size() != params.weights.size() ||
        state.m_weights.size() != params.weights.size()) {
        throw InvalidInputError("adam_step: layer count mismatch");
    }
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        if (grads.weights[l].size() != params.weights[l].size() ||
            grads.biases[l].size() != params.biases[l].size()) {
            throw InvalidInputError("adam_step: shape mismatch at layer " + std::to_string(l));
        }
    }
    state.step += 1;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        adam_update_array(params.weights[l], grads.weights[l], state.m_weights[l],
                          state.v_weights[l], c, bc1, bc2);
        adam_update_array(params.biases[l], grads.biases[l], state.m_biases[l],
                          state.v_biases[l], c, bc1, bc2);
    }
}

namespace {

void check_config(const ClassifierConfig& c) {
    if (c.input_dim < 1) throw InvalidInputError("classifier: input_dim must be >= 1");
    if (c.num_classes < 2) throw InvalidInputError("classifier: num_classes must be >= 2");
    for (int w : c.hidden_layers) {
        if (w < 1) throw InvalidInputError("classifier: hidden layer width must be >= 1");
    }
    if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0) {
        throw InvalidInputError("classifier: dropout_rate must be in [0, 1)");
    }
}

} // namespace

ClassifierParams init_params(const ClassifierConfig& config) {
    check_config(config);
    ClassifierParams p;
    p.config = config;
    const auto dims = config.layer_dims();
    Rng rng(config.init_seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> w(static_cast<std::size_t>(fan_in) *
                              static_cast<std::size_t>(fan_out));
        for (double& x : w) x = rng.uniform(-scale, scale);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
    }
    p.track();
    return p;
}

namespace {

void affine(const std::vector<double>& w, const std::vector<double>& b,
            const std::vector<double>& x, std::vector<double>& out) {
    const std::size_t n_out = b.size();
    const std::size_t n_in = x.size();
    out.resize(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
        const double* row = w.data() + o * n_in;
        double acc = b[o];
        for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * x[i];
        out[o] = acc;
    }
}

} // namespace

ForwardTrace forward_trace(const ClassifierParams& params,
                           std::span<const double> features, bool training,
                           Rng* rng) {
    const auto& cfg = params.config;
    if (static_cast<int>(features.size()) != cfg.input_dim) {
        throw InvalidInputError("forward: feature length " +
                                std::to_string(features.size()) + " != input_dim " +
                                std::to_string(cfg.input_dim));
    }
    const bool use_dropout = training && cfg.dropout_rate > 0.0;
    if (use_dropout && rng == nullptr) {
        throw InvalidInputError("forward: training mode with dropout needs an rng");
    }

    ForwardTrace t;
    const std::size_t n_hidden = cfg.hidden_layers.size();
    t.layer_inputs.resize(n_hidden + 1);
    t.preacts.resize(n_hidden);
    t.dropout_scale.resize(n_hidden);
    t.layer_inputs[0].assign(features.begin(), features.end());

    const double keep_scale = use_dropout ? 1.0 / (1.0 - cfg.dropout_rate) : 1.0;
    for (std::size_t l = 0; l < n_hidden; ++l) {
        affine(params.weights[l], params.biases[l], t.layer_inputs[l], t.preacts[l]);
        auto& next = t.layer_inputs[l + 1];
        auto& scale = t.dropout_scale[l];
        const std::size_t width = t.preacts[l].size();
        next.resize(width);
        scale.assign(width, 1.0);
        for (std::size_t u = 0; u < width; ++u) {
            const double a = t.preacts[l][u];
            double h = a > 0.0 ? a : cfg.leaky_slope * a;
            if (use_dropout) {
                scale[u] = rng->uniform() < cfg.dropout_rate ? 0.0 : keep_scale;
                h *= scale[u];
            }
            next[u] = h;
        }
    }
    affine(params.weights[n_hidden], params.biases[n_hidden],
           t.layer_inputs[n_hidden], t.logits);
    return t;
}

LogitsVector forward_logits(const ClassifierParams& params,
                            std::span<const double> features, bool training,
                            Rng* rng) {
    return forward_trace(params, features, training, rng).logits;
}

void backward_accumulate(const ClassifierParams& params, const ForwardTrace& trace,
                         std::span<const double> dloss_dlogits, Gradients& grads) {
    const auto& cfg = params.config;
    const std::size_t n_hidden = cfg.hidden_layers.size();
    if (dloss_dlogits.size() != static_cast<std::size_t>(cfg.num_classes)) {
        throw InvalidInputError("backward: dloss/dlogits length mismatch");
    }

    std::vector<double> delta(dloss_dlogits.begin(), dloss_dlogits.end());
    for (std::size_t l = n_hidden + 1; l-- > 0;) {
        const auto& x = trace.layer_inputs[l];
        auto& gw = grads.weights[l];
        auto& gb = grads.biases[l];
        const std::size_t n_out = gb.size();
        const std::size_t n_in = x.size();
        for (std::size_t o = 0; o < n_out; ++o) {
            const double d = delta[o];
            gb[o] += d;
            double* grow = gw.data() + o * n_in;
            for (std::size_t i = 0; i < n_in; ++i) grow[i] += d * x[i];
        }
        if (l == 0) break;

        // propagate to the previous layer's post-activation, then through
        // dropout and LeakyReLU
        const auto& w = params.weights[l];
        std::vector<double> prev(n_in, 0.0);
        for (std::size_t o = 0; o < n_out; ++o) {
            const double d = delta[o];
            const double* row = w.data() + o * n_in;
            for (std::size_t i = 0; i < n_in; ++i) prev[i] += d * row[i];
        }
        const auto& pre = trace.preacts[l - 1];
        const auto& scale = trace.dropout_scale[l - 1];
        for (std::size_t i = 0; i < n_in; ++i) {
            const double slope = pre[i] > 0.0 ? 1.0 : cfg.leaky_slope;
            prev[i] *= scale[i] * slope;
        }
        delta = std::move(prev);
    }
}

ProbVector temp_softmax(std::span<const double> z, double temperature) {
    if (!(temperature > 0.0)) {
        throw InvalidInputError("temp_softmax: temperature must be > 0");
    }
    if (z.empty()) {
        throw InvalidInputError("temp_softmax: empty logits");
    }
    double zmax = -std::numeric_limits<double>::infinity();
    for (double v : z) {
        if (!std::isfinite(v)) {
            throw InvalidInputError("temp_softmax: non-finite logit");
        }
        zmax = std::max(zmax, v);
    }
    ProbVector q(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        q[i] = std::exp((z[i] - zmax) / temperature);
        sum += q[i];
    }
    const double inv = 1.0 / sum;
    for (double& v : q) v *= inv;
    return q;
}

HardLoss hard_loss_and_grad(std::span<const double> z, int true_class) {
    if (true_class < 0 || static_cast<std::size_t>(true_class) >= z.size()) {
        throw InvalidInputError("hard_loss: class " + std::to_string(true_class) +
                                " out of range for " + std::to_string(z.size()) +
                                " logits");
    }
    HardLoss out;
    out.grad = temp_softmax(z, 1.0);
    // -log q_true computed in log-sum-exp form to stay exact when q_true is tiny
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    out.loss = std::log(sum) - (z[static_cast<std::size_t>(true_class)] - zmax);
    out.grad[static_cast<std::size_t>(true_class)] -= 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format, version 1, little-endian:
//   "RKDC" | u32 version | i32 input_dim | i32 n_hidden | i32[n_hidden]
//   | i32 num_classes | f64 leaky_slope | f64 dropout_rate | u64 init_seed
//   | per layer: u64 n_weights, f64[n] | u64 n_biases, f64[n]
// Doubles travel as u64 bit patterns, so round-trips are bit-exact.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'K', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& out, std::int32_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

class Reader {
public:
    Reader(const std::string& data, const std::string& path)
        : data_(data), path_(path) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    void raw(char* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, data_.data() + pos_, n);
        pos_ += n;
    }

    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) {
        if (pos_ + n > data_.size()) {
            throw ParseError("checkpoint '" + path_ + "': truncated");
        }
    }

    const std::string& data_;
    std::string path_;
    std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const ClassifierParams& params, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    const auto& c = params.config;
    put_i32(buf, c.input_dim);
    put_i32(buf, static_cast<std::int32_t>(c.hidden_layers.size()));
    for (int h : c.hidden_layers) put_i32(buf, h);
    put_i32(buf, c.num_classes);
    put_f64(buf, c.leaky_slope);
    put_f64(buf, c.dropout_rate);
    put_u64(buf, c.init_seed);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        put_u64(buf, params.weights[l].size());
        for (double v : params.weights[l]) put_f64(buf, v);
        put_u64(buf, params.biases[l].size());
        for (double v : params.biases[l]) put_f64(buf, v);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open '" + path + "'");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

ClassifierParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());

    Reader r(data, path);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw ParseError("checkpoint '" + path + "': bad magic");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw ParseError("checkpoint '" + path + "': unsupported version " +
                         std::to_string(version));
    }

    ClassifierParams p;
    p.config.input_dim = r.i32();
    const std::int32_t n_hidden = r.i32();
    if (n_hidden < 0 || n_hidden > 1024) {
        throw ParseError("checkpoint '" + path + "': implausible hidden layer count");
    }
    p.config.hidden_layers.resize(static_cast<std::size_t>(n_hidden));
    for (auto& h : p.config.hidden_layers) h = r.i32();
    p.config.num_classes = r.i32();
    p.config.leaky_slope = r.f64();
    p.config.dropout_rate = r.f64();
    p.config.init_seed = r.u64();

    const auto dims = p.config.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::uint64_t nw = r.u64();
        const std::uint64_t expect_w = static_cast<std::uint64_t>(dims[l]) *
                                       static_cast<std::uint64_t>(dims[l + 1]);
        if (nw != expect_w) {
            throw ParseError("checkpoint '" + path + "': layer " + std::to_string(l) +
                             " weight count mismatch");
        }
        std::vector<double> w(nw);
        for (auto& v : w) v = r.f64();
        const std::uint64_t nb = r.u64();
        if (nb != static_cast<std::uint64_t>(dims[l + 1])) {
            throw ParseError("checkpoint '" + path + "': layer " + std::to_string(l) +
                             " bias count mismatch");
        }
        std::vector<double> b(nb);
        for (auto& v : b) v = r.f64();
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    if (!r.done()) {
        throw ParseError("checkpoint '" + path + "': trailing bytes");
    }
    p.track();
    return p;
}

} // namespace rkd
