#include "ddic/train.hpp"

#include <algorithm>
#include <cmath>

#include "ddic/rng.hpp"
#include "ddic/schedule.hpp"

namespace ddic {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
    if (steps < 0) throw ConfigError("train: steps must be >= 0");
    if (checkpoint_interval < 1) throw ConfigError("train: checkpoint_interval must be >= 1");
    if (ema_decay < 0.0 || ema_decay >= 1.0) throw ConfigError("train: ema_decay must be in [0, 1)");
}

namespace {

constexpr std::uint64_t kTrainStream = 0x7261696e; // per-step RNG stream id

double smoothed(const std::vector<double>& v, bool tail) {
    if (v.empty()) return 0.0;
    const std::size_t k = std::max<std::size_t>(1, std::min<std::size_t>(100, v.size() / 10 + 1));
    double s = 0.0;
    if (tail)
        for (std::size_t i = v.size() - k; i < v.size(); ++i) s += v[i];
    else
        for (std::size_t i = 0; i < k; ++i) s += v[i];
    return s / static_cast<double>(k);
}

net::Tensor flipped_horizontal(const net::Tensor& t) {
    net::Tensor out(t.c, t.h, t.w);
    for (int c = 0; c < t.c; ++c)
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x)
                out.ch(c)[static_cast<std::size_t>(y) * t.w + x] =
                    t.ch(c)[static_cast<std::size_t>(y) * t.w + (t.w - 1 - x)];
    return out;
}

} // namespace

TrainResult train_denoiser(NetworkDenoiser& den, const std::vector<ImageGrid>& dataset,
                           const TrainConfig& cfg, const std::filesystem::path& checkpoint_dir,
                           TrainState* state, const std::function<void(int, double)>& progress) {
    cfg.validate();
    if (dataset.empty()) throw DataError("train: empty dataset");
    for (const auto& img : dataset)
        require_same_shape(img, dataset.front(), "train dataset");

    const DiffusionSchedule& sched = den.schedule();
    const int T = sched.steps();
    net::UNet& net = den.network();
    const std::size_t np = net.param_count();

    TrainState local;
    TrainState& st = state ? *state : local;
    if (!st.initialized) {
        st.opt = net::Adam(np, cfg.learning_rate);
        if (cfg.ema_decay > 0.0) st.ema = net.params().w;
        st.initialized = true;
    }

    auto save_ckpt = [&](int step) -> std::filesystem::path {
        if (checkpoint_dir.empty()) return {};
        std::filesystem::create_directories(checkpoint_dir);
        CheckpointExtras extras;
        extras.adam_m = st.opt.moment1();
        extras.adam_v = st.opt.moment2();
        extras.adam_steps = st.opt.steps_taken();
        extras.ema = st.ema;
        extras.train_seed = cfg.seed;
        den.set_trained_steps(step);
        const auto path = checkpoint_dir / ("checkpoint_" + std::to_string(step) + ".ddck");
        den.save_checkpoint(path, &extras);
        return path;
    };

    TrainResult result;
    std::vector<net::Tensor> data;
    data.reserve(dataset.size());
    for (const auto& img : dataset) data.push_back(net::Tensor(1, img.rows(), img.cols()));
    for (std::size_t i = 0; i < dataset.size(); ++i)
        std::copy(dataset[i].pixels().begin(), dataset[i].pixels().end(), data[i].v.begin());

    const std::size_t npix = data.front().size();
    net::UNet::Workspace ws;

    for (int step = st.step; step < cfg.steps; ++step) {
        std::mt19937_64 rng = stream_rng(cfg.seed, kTrainStream, static_cast<std::uint64_t>(step));
        std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
        std::uniform_int_distribution<int> pick_t(1, T);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        net.params().zero_grad();
        double loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const std::size_t idx = pick(rng);
            const int t = pick_t(rng);
            net::Tensor x0 = data[idx];
            if (cfg.augment_flip && unif(rng) < 0.5) x0 = flipped_horizontal(x0);
            const double ab = sched.alpha_bar(t);
            const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
            net::Tensor eps(x0.c, x0.h, x0.w);
            net::Tensor xt(x0.c, x0.h, x0.w);
            for (std::size_t i = 0; i < npix; ++i) {
                eps[i] = gauss(rng);
                xt[i] = sa * x0[i] + sb * eps[i];
            }
            net::Tensor pred = net.forward(xt, t, ws);
            net::Tensor gout(pred.c, pred.h, pred.w);
            const double gscale = 2.0 / (static_cast<double>(npix) * cfg.batch_size);
            for (std::size_t i = 0; i < npix; ++i) {
                const double r = pred[i] - eps[i];
                loss += r * r;
                gout[i] = gscale * r;
            }
            net.backward(gout, ws, &net.params());
        }
        loss /= static_cast<double>(npix) * cfg.batch_size;
        if (!std::isfinite(loss))
            throw TrainingDivergedError("train: non-finite loss at step " + std::to_string(step), step);

        st.opt.step(net.params());
        if (cfg.ema_decay > 0.0)
            for (std::size_t i = 0; i < np; ++i)
                st.ema[i] = cfg.ema_decay * st.ema[i] + (1.0 - cfg.ema_decay) * net.params().w[i];

        result.loss_trace.push_back(loss);
        st.step = step + 1;
        ++result.steps_done;
        if (progress) progress(step, loss);
        if (st.step % cfg.checkpoint_interval == 0 && st.step < cfg.steps)
            result.last_checkpoint = save_ckpt(st.step);
    }

    if (cfg.steps > st.step) st.step = cfg.steps;
    den.set_trained_steps(st.step);
    if (!checkpoint_dir.empty() && cfg.steps > 0) result.last_checkpoint = save_ckpt(st.step);
    result.smoothed_initial = smoothed(result.loss_trace, false);
    result.smoothed_final = smoothed(result.loss_trace, true);
    return result;
}

double eps_objective(const Denoiser& den, const std::vector<ImageGrid>& x0s,
                     const std::vector<ImageGrid>& eps_draws, const std::vector<int>& ts) {
    if (x0s.size() != eps_draws.size() || x0s.size() != ts.size() || x0s.empty())
        throw DataError("eps_objective: mismatched draw lists");
    const DiffusionSchedule& sched = den.schedule();
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < x0s.size(); ++i) {
        const ImageGrid xt = q_sample(x0s[i], ts[i], eps_draws[i], sched);
        const ImageGrid pred = den.predict_eps(xt, ts[i]);
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const double r = pred[k] - eps_draws[i][k];
            total += r * r;
        }
        count += pred.size();
    }
    return total / static_cast<double>(count);
}

} // namespace ddic
