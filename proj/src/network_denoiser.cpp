#include "ddic/network_denoiser.hpp"

#include <cstring>
#include <fstream>

#include "ddic/io.hpp"

namespace ddic {

namespace {
constexpr char kMagic[8] = {'D', 'D', 'C', 'K', 'P', 'T', '0', '1'};
constexpr int kSchemaVersion = 1;
} // namespace

net::Tensor to_tensor(const ImageGrid& img) {
    net::Tensor t(1, img.rows(), img.cols());
    std::copy(img.pixels().begin(), img.pixels().end(), t.v.begin());
    return t;
}

ImageGrid to_image(const net::Tensor& t, const ImageGrid& like) {
    ImageGrid out = like;
    std::copy(t.v.begin(), t.v.end(), out.pixels().begin());
    return out;
}

NetworkDenoiser::NetworkDenoiser(net::UNetConfig arch, DiffusionSchedule sched,
                                 std::uint64_t init_seed, double norm_lo, double norm_hi)
    : arch_(std::move(arch)), sched_(std::move(sched)),
      net_(std::make_unique<net::UNet>(arch_)),
      init_seed_(init_seed), norm_lo_(norm_lo), norm_hi_(norm_hi) {
    net_->init_params(init_seed);
}

ImageGrid NetworkDenoiser::predict_eps(const ImageGrid& x_t, int t) const {
    if (t < 0 || t > sched_.steps())
        throw IndexError("predict_eps: timestep out of range");
    net::UNet::Workspace ws;
    net::Tensor out = net_->forward(to_tensor(x_t), t, ws);
    return to_image(out, x_t);
}

ImageGrid NetworkDenoiser::eps_vjp(const ImageGrid& x_t, int t, const ImageGrid& cotangent,
                                   ImageGrid* eps_out) const {
    require_same_shape(x_t, cotangent, "eps_vjp");
    net::UNet::Workspace ws;
    net::Tensor out = net_->forward(to_tensor(x_t), t, ws);
    if (eps_out) *eps_out = to_image(out, x_t);
    net::Tensor gin = net_->backward(to_tensor(cotangent), ws, nullptr);
    return to_image(gin, x_t);
}

namespace {

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v, std::size_t n) {
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated payload");
}

} // namespace

void NetworkDenoiser::save_checkpoint(const std::filesystem::path& path,
                                      const CheckpointExtras* extras) const {
    if (!sched_.is_cosine())
        throw ConfigError("checkpoint: only cosine schedules are serializable");
    json header{
        {"schema_version", kSchemaVersion},
        {"architecture", arch_.to_json()},
        {"schedule",
         {{"kind", "cosine"},
          {"steps", sched_.config().steps},
          {"offset", sched_.config().cosine_offset},
          {"beta_clip", sched_.config().beta_clip}}},
        {"normalization", {{"lo", norm_lo_}, {"hi", norm_hi_}}},
        {"init_seed", init_seed_},
        {"trained_steps", trained_steps_},
        {"param_count", net_->param_count()},
        {"has_optimizer", extras != nullptr && !extras->adam_m.empty()},
        {"has_ema", extras != nullptr && !extras->ema.empty()},
    };
    if (extras) {
        header["adam_steps"] = extras->adam_steps;
        header["train_seed"] = extras->train_seed;
    }

    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    write_doubles(out, net_->params().w);
    if (extras && !extras->adam_m.empty()) {
        write_doubles(out, extras->adam_m);
        write_doubles(out, extras->adam_v);
    }
    if (extras && !extras->ema.empty()) write_doubles(out, extras->ema);
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

NetworkDenoiser NetworkDenoiser::load_checkpoint(const std::filesystem::path& path,
                                                 CheckpointExtras* extras) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw DataError(path.string() + ": not a checkpoint file");
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw DataError(path.string() + ": truncated header");
    const json header = json::parse(hs);
    if (header.at("schema_version").get<int>() != kSchemaVersion)
        throw DataError(path.string() + ": unsupported checkpoint schema");

    const net::UNetConfig arch = net::UNetConfig::from_json(header.at("architecture"));
    const json& js = header.at("schedule");
    if (js.at("kind").get<std::string>() != "cosine")
        throw DataError(path.string() + ": unknown schedule kind");
    DiffusionSchedule sched = DiffusionSchedule::cosine(
        js.at("steps").get<int>(), js.at("offset").get<double>(), js.at("beta_clip").get<double>());

    NetworkDenoiser den(arch, std::move(sched), header.at("init_seed").get<std::uint64_t>(),
                        header.at("normalization").at("lo").get<double>(),
                        header.at("normalization").at("hi").get<double>());
    den.trained_steps_ = header.at("trained_steps").get<std::int64_t>();

    const auto n = header.at("param_count").get<std::size_t>();
    if (n != den.net_->param_count())
        throw DataError(path.string() + ": parameter count mismatch with architecture");
    read_doubles(in, den.net_->params().w, n);
    if (header.value("has_optimizer", false)) {
        if (extras) {
            read_doubles(in, extras->adam_m, n);
            read_doubles(in, extras->adam_v, n);
            extras->adam_steps = header.value("adam_steps", std::int64_t{0});
            extras->train_seed = header.value("train_seed", std::uint64_t{0});
        } else {
            in.seekg(static_cast<std::streamoff>(2 * n * sizeof(double)), std::ios::cur);
        }
    }
    if (header.value("has_ema", false) && extras) read_doubles(in, extras->ema, n);
    return den;
}

} // namespace ddic
