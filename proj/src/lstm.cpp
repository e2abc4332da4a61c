#include "fedmeter/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "fedmeter/errors.hpp"

namespace fedmeter {

namespace {

// out[r] += m.row(r) . v
void matvec_accumulate(const Matrix& m, const double* v, double* out) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        double acc = out[r];
        for (std::size_t c = 0; c < m.cols; ++c) acc += mr[c] * v[c];
        out[r] = acc;
    }
}

template <typename P, typename F>
void visit_tensors(P& p, F&& f) {
    f(p.w_f.data);
    f(p.w_i.data);
    f(p.w_z.data);
    f(p.w_o.data);
    f(p.r_f.data);
    f(p.r_i.data);
    f(p.r_z.data);
    f(p.r_o.data);
    f(p.p_f);
    f(p.p_i);
    f(p.p_o);
    f(p.b_f);
    f(p.b_i);
    f(p.b_z);
    f(p.b_o);
    f(p.head_w);
}

template <typename A, typename B, typename F>
void visit_tensor_pairs(A& a, B& b, F&& f) {
    f(a.w_f.data, b.w_f.data);
    f(a.w_i.data, b.w_i.data);
    f(a.w_z.data, b.w_z.data);
    f(a.w_o.data, b.w_o.data);
    f(a.r_f.data, b.r_f.data);
    f(a.r_i.data, b.r_i.data);
    f(a.r_z.data, b.r_z.data);
    f(a.r_o.data, b.r_o.data);
    f(a.p_f, b.p_f);
    f(a.p_i, b.p_i);
    f(a.p_o, b.p_o);
    f(a.b_f, b.b_f);
    f(a.b_i, b.b_i);
    f(a.b_z, b.b_z);
    f(a.b_o, b.b_o);
    f(a.head_w, b.head_w);
}

double xavier_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void fill_uniform(std::vector<double>& v, double limit, RngStream& rng) {
    for (double& x : v) x = limit * (2.0 * rng.uniform() - 1.0);
}

}  // namespace

LstmParams::LstmParams(std::size_t hidden, std::size_t input_dim)
    : w_f(hidden, input_dim),
      w_i(hidden, input_dim),
      w_z(hidden, input_dim),
      w_o(hidden, input_dim),
      r_f(hidden, hidden),
      r_i(hidden, hidden),
      r_z(hidden, hidden),
      r_o(hidden, hidden),
      p_f(hidden, 0.0),
      p_i(hidden, 0.0),
      p_o(hidden, 0.0),
      b_f(hidden, 0.0),
      b_i(hidden, 0.0),
      b_z(hidden, 0.0),
      b_o(hidden, 0.0),
      head_w(hidden, 0.0) {}

std::size_t LstmParams::param_count() const {
    const std::size_t h = hidden();
    const std::size_t d = input_dim();
    return 4 * h * d + 4 * h * h + 3 * h + 4 * h + h + 1;
}

Vector LstmParams::flatten() const {
    Vector flat;
    flat.reserve(param_count());
    visit_tensors(*this, [&](const std::vector<double>& t) {
        flat.insert(flat.end(), t.begin(), t.end());
    });
    flat.push_back(head_b);
    return flat;
}

LstmParams LstmParams::unflatten(std::span<const double> flat,
                                 std::size_t hidden, std::size_t input_dim) {
    LstmParams p(hidden, input_dim);
    if (flat.size() != p.param_count()) {
        throw ShapeError("unflatten: expected " +
                         std::to_string(p.param_count()) + " values, got " +
                         std::to_string(flat.size()));
    }
    std::size_t off = 0;
    visit_tensors(p, [&](std::vector<double>& t) {
        std::copy(flat.begin() + off, flat.begin() + off + t.size(), t.begin());
        off += t.size();
    });
    p.head_b = flat[off];
    return p;
}

void LstmParams::add_flat(std::span<const double> delta) {
    if (delta.size() != param_count()) {
        throw ShapeError("add_flat: expected " + std::to_string(param_count()) +
                         " values, got " + std::to_string(delta.size()));
    }
    std::size_t off = 0;
    visit_tensors(*this, [&](std::vector<double>& t) {
        for (double& x : t) x += delta[off++];
    });
    head_b += delta[off];
}

void LstmParams::fill(double value) {
    visit_tensors(*this, [&](std::vector<double>& t) {
        std::fill(t.begin(), t.end(), value);
    });
    head_b = value;
}

void LstmState::resize(std::size_t steps, std::size_t hidden) {
    for (Matrix* m : {&f, &i, &z, &c, &o, &h, &tanh_c}) {
        if (m->rows != steps || m->cols != hidden) {
            *m = Matrix(steps, hidden);
        }
    }
}

void TrainConfig::validate() const {
    if (hidden_units < 1) throw ConfigError("hidden_units must be >= 1");
    if (window < 1) throw ConfigError("window must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

LstmParams init_params(std::size_t hidden, std::size_t input_dim,
                       RngStream rng) {
    if (hidden < 1 || input_dim < 1) {
        throw ConfigError("init_params: hidden and input_dim must be >= 1");
    }
    LstmParams p(hidden, input_dim);
    const double wlim = xavier_limit(input_dim, hidden);
    const double rlim = xavier_limit(hidden, hidden);
    const double hlim = xavier_limit(hidden, 1);
    fill_uniform(p.w_f.data, wlim, rng);
    fill_uniform(p.w_i.data, wlim, rng);
    fill_uniform(p.w_z.data, wlim, rng);
    fill_uniform(p.w_o.data, wlim, rng);
    fill_uniform(p.r_f.data, rlim, rng);
    fill_uniform(p.r_i.data, rlim, rng);
    fill_uniform(p.r_z.data, rlim, rng);
    fill_uniform(p.r_o.data, rlim, rng);
    fill_uniform(p.head_w, hlim, rng);
    std::fill(p.b_f.begin(), p.b_f.end(), 1.0);
    return p;
}

double forward_into(const LstmParams& p, std::span<const double> x,
                    LstmState& st) {
    if (p.input_dim() != 1) {
        throw ShapeError("forward: expected input_dim 1, got " +
                         std::to_string(p.input_dim()));
    }
    const std::size_t T = x.size();
    const std::size_t H = p.hidden();
    if (T == 0) throw ShapeError("forward: empty window");
    st.resize(T, H);

    static thread_local Vector zeros;
    if (zeros.size() < H) zeros.assign(H, 0.0);

    const double* wf = p.w_f.data.data();
    const double* wi = p.w_i.data.data();
    const double* wz = p.w_z.data.data();
    const double* wo = p.w_o.data.data();

    for (std::size_t t = 0; t < T; ++t) {
        const double xt = x[t];
        const double* hprev = t ? st.h.row(t - 1) : zeros.data();
        const double* cprev = t ? st.c.row(t - 1) : zeros.data();
        double* f = st.f.row(t);
        double* i = st.i.row(t);
        double* z = st.z.row(t);
        double* c = st.c.row(t);
        double* o = st.o.row(t);
        double* tc = st.tanh_c.row(t);
        double* h = st.h.row(t);

        for (std::size_t j = 0; j < H; ++j) {
            f[j] = wf[j] * xt + p.p_f[j] * cprev[j] + p.b_f[j];
            i[j] = wi[j] * xt + p.p_i[j] * cprev[j] + p.b_i[j];
            z[j] = wz[j] * xt + p.b_z[j];
        }
        matvec_accumulate(p.r_f, hprev, f);
        matvec_accumulate(p.r_i, hprev, i);
        matvec_accumulate(p.r_z, hprev, z);
        for (std::size_t j = 0; j < H; ++j) {
            f[j] = sigmoid(f[j]);
            i[j] = sigmoid(i[j]);
            z[j] = std::tanh(z[j]);
            c[j] = z[j] * i[j] + cprev[j] * f[j];
        }
        for (std::size_t j = 0; j < H; ++j) {
            o[j] = wo[j] * xt + p.p_o[j] * c[j] + p.b_o[j];
        }
        matvec_accumulate(p.r_o, hprev, o);
        for (std::size_t j = 0; j < H; ++j) {
            o[j] = sigmoid(o[j]);
            tc[j] = std::tanh(c[j]);
            h[j] = tc[j] * o[j];
        }
    }

    double pred = p.head_b;
    const double* hlast = st.h.row(T - 1);
    for (std::size_t j = 0; j < H; ++j) pred += p.head_w[j] * hlast[j];
    return pred;
}

ForwardResult forward(const LstmParams& p, std::span<const double> x) {
    ForwardResult r;
    r.prediction = forward_into(p, x, r.state);
    return r;
}

double squared_loss(double prediction, double target) {
    const double e = prediction - target;
    return e * e;
}

void BackwardScratch::resize(std::size_t hidden) {
    for (Vector* v : {&dh, &dc, &dhn, &daf, &dai, &daz, &dao}) {
        v->assign(hidden, 0.0);
    }
}

void backward_into(const LstmParams& p, std::span<const double> x,
                   double target, const LstmState& st, double prediction,
                   Gradients& g, BackwardScratch& ws) {
    const std::size_t T = st.steps();
    const std::size_t H = p.hidden();
    if (T != x.size() || st.f.cols != H) {
        throw ShapeError("backward: state does not match params/window");
    }
    g.fill(0.0);
    ws.resize(H);

    static thread_local Vector zeros;
    if (zeros.size() < H) zeros.assign(H, 0.0);

    const double dpred = 2.0 * (prediction - target);
    g.head_b = dpred;
    const double* hlast = st.h.row(T - 1);
    for (std::size_t j = 0; j < H; ++j) {
        g.head_w[j] = dpred * hlast[j];
        ws.dh[j] = dpred * p.head_w[j];
        ws.dc[j] = 0.0;
    }

    for (std::size_t t = T; t-- > 0;) {
        const double xt = x[t];
        const double* f = st.f.row(t);
        const double* i = st.i.row(t);
        const double* z = st.z.row(t);
        const double* c = st.c.row(t);
        const double* o = st.o.row(t);
        const double* tc = st.tanh_c.row(t);
        const double* hprev = t ? st.h.row(t - 1) : zeros.data();
        const double* cprev = t ? st.c.row(t - 1) : zeros.data();

        double* dh = ws.dh.data();
        double* dc = ws.dc.data();
        double* daf = ws.daf.data();
        double* dai = ws.dai.data();
        double* daz = ws.daz.data();
        double* dao = ws.dao.data();

        for (std::size_t j = 0; j < H; ++j) {
            // Output gate first: its peephole feeds back into dc.
            dao[j] = dh[j] * tc[j] * o[j] * (1.0 - o[j]);
            dc[j] += dh[j] * o[j] * (1.0 - tc[j] * tc[j]) + dao[j] * p.p_o[j];
            daz[j] = dc[j] * i[j] * (1.0 - z[j] * z[j]);
            dai[j] = dc[j] * z[j] * i[j] * (1.0 - i[j]);
            daf[j] = dc[j] * cprev[j] * f[j] * (1.0 - f[j]);
        }

        for (std::size_t j = 0; j < H; ++j) {
            g.w_f.data[j] += daf[j] * xt;
            g.w_i.data[j] += dai[j] * xt;
            g.w_z.data[j] += daz[j] * xt;
            g.w_o.data[j] += dao[j] * xt;
            g.b_f[j] += daf[j];
            g.b_i[j] += dai[j];
            g.b_z[j] += daz[j];
            g.b_o[j] += dao[j];
            g.p_f[j] += daf[j] * cprev[j];
            g.p_i[j] += dai[j] * cprev[j];
            g.p_o[j] += dao[j] * c[j];
        }
        if (t > 0) {
            outer_accumulate(g.r_f, ws.daf, {hprev, H});
            outer_accumulate(g.r_i, ws.dai, {hprev, H});
            outer_accumulate(g.r_z, ws.daz, {hprev, H});
            outer_accumulate(g.r_o, ws.dao, {hprev, H});

            std::fill(ws.dhn.begin(), ws.dhn.end(), 0.0);
            matvec_transposed_accumulate(p.r_f, ws.daf, ws.dhn.data());
            matvec_transposed_accumulate(p.r_i, ws.dai, ws.dhn.data());
            matvec_transposed_accumulate(p.r_z, ws.daz, ws.dhn.data());
            matvec_transposed_accumulate(p.r_o, ws.dao, ws.dhn.data());
            std::swap(ws.dh, ws.dhn);
            for (std::size_t j = 0; j < H; ++j) {
                dc[j] = ws.dc[j] * f[j] + p.p_f[j] * daf[j] + p.p_i[j] * dai[j];
            }
        }
    }
}

Gradients backward(const LstmParams& p, std::span<const double> x,
                   double target, const ForwardResult& fwd) {
    Gradients g(p.hidden(), p.input_dim());
    BackwardScratch ws;
    backward_into(p, x, target, fwd.state, fwd.prediction, g, ws);
    return g;
}

void sgd_step(LstmParams& p, const Gradients& g, double lr) {
    if (g.hidden() != p.hidden() || g.input_dim() != p.input_dim()) {
        throw ShapeError("sgd_step: gradient shape mismatch");
    }
    visit_tensor_pairs(
        p, g, [&](std::vector<double>& t, const std::vector<double>& gv) {
            for (std::size_t j = 0; j < t.size(); ++j) t[j] -= lr * gv[j];
        });
    p.head_b -= lr * g.head_b;
}

double clip_global_norm(Gradients& g, double max_norm) {
    double sq = g.head_b * g.head_b;
    visit_tensors(g, [&](const std::vector<double>& t) {
        for (const double v : t) sq += v * v;
    });
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return 1.0;
    const double scale = max_norm / norm;
    visit_tensors(g, [&](std::vector<double>& t) {
        for (double& v : t) v *= scale;
    });
    g.head_b *= scale;
    return scale;
}

SegmentResult train_segment(LstmParams& p,
                            std::span<const TrainingWindow> windows,
                            const TrainConfig& cfg) {
    if (windows.empty()) {
        throw DataError("train_segment: empty segment");
    }
    LstmState state;
    Gradients grads(p.hidden(), p.input_dim());
    BackwardScratch scratch;

    double loss_sum = 0.0;
    for (const TrainingWindow& w : windows) {
        const double pred = forward_into(p, w.input, state);
        const double loss = squared_loss(pred, w.target);
        if (!std::isfinite(loss)) {
            throw NumericError("train_segment: non-finite loss");
        }
        loss_sum += loss;
        backward_into(p, w.input, w.target, state, pred, grads, scratch);
        clip_global_norm(grads, cfg.clip_norm);
        sgd_step(p, grads, cfg.learning_rate);
    }
    return SegmentResult{loss_sum / static_cast<double>(windows.size())};
}

std::vector<double> forecast(const LstmParams& p,
                             std::span<const double> series,
                             std::size_t horizon, std::size_t window) {
    if (horizon == 0) return {};
    if (series.size() < window + horizon - 1) {
        throw DataError("forecast: insufficient history (" +
                        std::to_string(series.size()) + " values for window " +
                        std::to_string(window) + ", horizon " +
                        std::to_string(horizon) + ")");
    }
    std::vector<double> out(horizon);
    LstmState state;
    const std::size_t first = series.size() - window - (horizon - 1);
    for (std::size_t m = 0; m < horizon; ++m) {
        out[m] = forward_into(p, series.subspan(first + m, window), state);
    }
    return out;
}

}  // namespace fedmeter
