// ddic: unpaired diffusion image translation toolkit.
// Commands: phantom-gen, preprocess, train, translate, evaluate.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "ddic/data.hpp"
#include "ddic/io.hpp"
#include "ddic/rng.hpp"
#include "ddic/metrics.hpp"
#include "ddic/phantom.hpp"
#include "ddic/sampler.hpp"
#include "ddic/train.hpp"
#include "ddic/translate.hpp"

namespace fs = std::filesystem;
using ddic::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    int jobs = 1;
    bool force = false;
};

json load_config(const GlobalArgs& g, const char* section) {
    if (g.config_path.empty()) throw ddic::ConfigError("--config is required");
    const json root = ddic::read_json_file(g.config_path);
    ddic::check_known_keys(root, {"seed", "out", "preprocess", "train", "translate",
                                  "evaluate", "phantom_gen"},
                           "config");
    if (!root.contains(section))
        throw ddic::ConfigError(std::string("config lacks a \"") + section + "\" section");
    return root;
}

std::uint64_t resolve_seed(const json& root, const GlobalArgs& g) {
    if (g.seed) return *g.seed;
    return root.value("seed", std::uint64_t{0});
}

fs::path resolve_out(const json& root, const GlobalArgs& g) {
    if (g.out) return fs::path(*g.out);
    if (root.contains("out")) return fs::path(root.at("out").get<std::string>());
    throw ddic::ConfigError("no output directory: set \"out\" in the config or pass --out");
}

void prepare_out_dir(const fs::path& out, bool force) {
    if (fs::exists(out) && !fs::is_empty(out)) {
        if (!force)
            throw ddic::ConfigError("output directory " + out.string() +
                                    " is not empty; pass --force to overwrite");
    }
    fs::create_directories(out);
}

// run fn(i) for i in [0, n) over a small thread pool; items are independent
// and any randomness is derived per item, so the job count never changes
// results
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mutex;
    std::exception_ptr first_error;
    for (int w = 0; w < jobs; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<fs::path> sorted_pgms(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ddic::DataError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

json hash_files(const std::vector<fs::path>& files, const fs::path& base) {
    json out = json::object();
    for (const auto& f : files) out[fs::relative(f, base).string()] = ddic::sha256_file(f);
    return out;
}

void write_manifest(const fs::path& out_dir, const char* command, const json& resolved_config,
                    std::uint64_t seed, const json& inputs, const json& outputs) {
    json m{{"command", command},
           {"version", kVersion},
           {"seed", seed},
           {"resolved_config", resolved_config},
           {"inputs", inputs},
           {"outputs", outputs}};
    ddic::write_json_file(out_dir / "manifest.json", m);
}

ddic::DiffusionSchedule schedule_from_json(const json& j) {
    ddic::check_known_keys(j, {"steps", "offset", "beta_clip"}, "schedule");
    return ddic::DiffusionSchedule::cosine(j.value("steps", 1000), j.value("offset", 0.008),
                                           j.value("beta_clip", 0.999));
}

ddic::net::UNetConfig arch_from_json(const json& j) {
    ddic::check_known_keys(j, {"base_channels", "channel_mults", "time_dim", "groups"}, "arch");
    ddic::net::UNetConfig cfg;
    cfg.base_channels = j.value("base_channels", 16);
    if (j.contains("channel_mults")) cfg.channel_mults = j.at("channel_mults").get<std::vector<int>>();
    cfg.time_dim = j.value("time_dim", 64);
    cfg.groups = j.value("groups", 8);
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------- phantom-gen

int cmd_phantom_gen(const GlobalArgs& g) {
    const json root = load_config(g, "phantom_gen");
    const json& pj = root.at("phantom_gen");
    ddic::check_known_keys(pj,
                           {"count", "test_count", "size", "speckle_amplitude", "speckle_blur",
                            "shadow_strength", "shadow_half_angle", "b_smooth_sigma", "b_noise",
                            "cavities_min", "cavities_max"},
                           "phantom_gen");
    const std::uint64_t seed = resolve_seed(root, g);
    const fs::path out = resolve_out(root, g);
    prepare_out_dir(out, g.force);

    const int count = pj.value("count", 330);
    const int test_count = pj.value("test_count", 30);
    if (test_count < 0 || test_count > count)
        throw ddic::ConfigError("phantom_gen: test_count must lie in [0, count]");

    ddic::PhantomSpec base;
    base.size = pj.value("size", 32);
    base.speckle_amplitude = pj.value("speckle_amplitude", base.speckle_amplitude);
    base.speckle_blur = pj.value("speckle_blur", base.speckle_blur);
    base.shadow_strength = pj.value("shadow_strength", base.shadow_strength);
    base.shadow_half_angle = pj.value("shadow_half_angle", base.shadow_half_angle);
    base.b_smooth_sigma = pj.value("b_smooth_sigma", base.b_smooth_sigma);
    base.b_noise = pj.value("b_noise", base.b_noise);
    base.cavities_min = pj.value("cavities_min", base.cavities_min);
    base.cavities_max = pj.value("cavities_max", base.cavities_max);

    for (const char* d : {"a_train", "b_train", "a_test", "b_test"})
        fs::create_directories(out / d);

    constexpr double kLo = 0.0, kHi = 1.2; // raster intensity mapping
    std::mutex geo_mutex;
    json rois = json::object();
    parallel_for(count, g.jobs, [&](int i) {
        ddic::PhantomSpec spec = base;
        spec.seed = ddic::derive_seed(seed, 0x9fa7, static_cast<std::uint64_t>(i));
        const ddic::PhantomPair pair = ddic::generate_phantom_pair(spec);
        char name[32];
        std::snprintf(name, sizeof name, "phantom_%04d.pgm", i);
        const bool is_test = i >= count - test_count;
        const fs::path da = out / (is_test ? "a_test" : "a_train") / name;
        const fs::path db = out / (is_test ? "b_test" : "b_train") / name;
        ddic::write_pgm(da, pair.domain_a, 65535, kLo, kHi);
        ddic::write_pgm(db, pair.domain_b, 65535, kLo, kHi);
        if (is_test) {
            const auto& r = pair.geometry.cnr_roi;
            std::lock_guard<std::mutex> lock(geo_mutex);
            rois[name] = {{"roi", {r.roi_row, r.roi_col, r.roi_height, r.roi_width}},
                          {"background", {r.bg_row, r.bg_col, r.bg_height, r.bg_width}}};
        }
    });
    ddic::write_json_file(out / "rois.json", rois);

    std::vector<fs::path> all;
    for (const char* d : {"a_train", "b_train", "a_test", "b_test"})
        for (const auto& f : sorted_pgms(out / d)) all.push_back(f);
    json resolved = pj;
    resolved["intensity_range"] = {kLo, kHi};
    write_manifest(out, "phantom-gen", resolved, seed, json::object(), hash_files(all, out));
    std::cout << "phantom-gen: wrote " << count << " pairs (" << test_count << " test) to "
              << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- preprocess

int cmd_preprocess(const GlobalArgs& g) {
    const json root = load_config(g, "preprocess");
    const json& pj = root.at("preprocess");
    ddic::check_known_keys(pj,
                           {"annotations", "hc_range", "output_size", "pixel_size_mm",
                            "apply_mask", "normalize", "train_fraction"},
                           "preprocess");
    const std::uint64_t seed = resolve_seed(root, g);
    const fs::path out = resolve_out(root, g);
    prepare_out_dir(out, g.force);

    const fs::path ann = pj.at("annotations").get<std::string>();
    const auto items = ddic::load_dataset(ann);

    std::vector<ddic::AnnotatedImage> selected = items;
    int excluded_missing = 0;
    if (pj.contains("hc_range")) {
        const auto range = pj.at("hc_range").get<std::vector<double>>();
        if (range.size() != 2) throw ddic::ConfigError("preprocess: hc_range must be [lo, hi]");
        selected = ddic::filter_by_hc(items, range[0], range[1], &excluded_missing);
    }
    if (selected.empty()) throw ddic::DataError("preprocess: no items left after filtering");

    ddic::PreprocessConfig cfg;
    if (pj.contains("output_size")) {
        const auto sz = pj.at("output_size").get<std::vector<int>>();
        if (sz.size() != 2) throw ddic::ConfigError("preprocess: output_size must be [rows, cols]");
        cfg.out_rows = sz[0];
        cfg.out_cols = sz[1];
    }
    cfg.out_pixel_mm = pj.value("pixel_size_mm", cfg.out_pixel_mm);
    cfg.apply_mask = pj.value("apply_mask", cfg.apply_mask);
    if (pj.contains("normalize")) {
        const auto nr = pj.at("normalize").get<std::vector<double>>();
        cfg.norm_lo = nr.at(0);
        cfg.norm_hi = nr.at(1);
    }

    fs::create_directories(out / "images");
    std::mutex err_mutex;
    std::vector<std::string> failures;
    std::vector<std::string> names(selected.size());
    parallel_for(static_cast<int>(selected.size()), g.jobs, [&](int i) {
        try {
            const ddic::ImageGrid img = ddic::preprocess(selected[static_cast<std::size_t>(i)], cfg);
            const std::string name = fs::path(selected[static_cast<std::size_t>(i)].name)
                                         .stem().string() + ".pgm";
            names[static_cast<std::size_t>(i)] = name;
            ddic::write_pgm(out / "images" / name, img, 65535, cfg.norm_lo, cfg.norm_hi);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(err_mutex);
            failures.push_back(selected[static_cast<std::size_t>(i)].name + ": " + e.what());
        }
    });
    if (!failures.empty()) {
        std::cerr << "preprocess: " << failures.size() << " item(s) failed:\n";
        for (const auto& f : failures) std::cerr << "  " << f << "\n";
        return 1;
    }

    const double frac = pj.value("train_fraction", 0.9);
    const auto [train_idx, test_idx] = ddic::split_dataset(names.size(), frac, seed);
    json split{{"train", json::array()}, {"test", json::array()}};
    for (const auto i : train_idx) split["train"].push_back(names[i]);
    for (const auto i : test_idx) split["test"].push_back(names[i]);

    json resolved = pj;
    resolved["excluded_missing_hc"] = excluded_missing;
    resolved["kept"] = names.size();
    resolved["split"] = split;
    json inputs{{ann.string(), ddic::sha256_file(ann)}};
    write_manifest(out, "preprocess", resolved, seed, inputs,
                   hash_files(sorted_pgms(out / "images"), out));
    std::cout << "preprocess: " << names.size() << " images (" << train_idx.size() << " train / "
              << test_idx.size() << " test), " << excluded_missing
              << " lacked HC; output " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const GlobalArgs& g, bool resume) {
    const json root = load_config(g, "train");
    const json& tj = root.at("train");
    ddic::check_known_keys(tj,
                           {"images_dir", "schedule", "arch", "batch_size", "learning_rate",
                            "steps", "checkpoint_interval", "augment_flip", "ema_decay",
                            "normalize"},
                           "train");
    const std::uint64_t seed = resolve_seed(root, g);
    const fs::path out = resolve_out(root, g);
    if (!resume) prepare_out_dir(out, g.force);
    fs::create_directories(out);

    const ddic::DiffusionSchedule sched = schedule_from_json(tj.value("schedule", json::object()));
    const ddic::net::UNetConfig arch = arch_from_json(tj.value("arch", json::object()));

    double norm_lo = -1.0, norm_hi = 1.0;
    if (tj.contains("normalize")) {
        const auto nr = tj.at("normalize").get<std::vector<double>>();
        norm_lo = nr.at(0);
        norm_hi = nr.at(1);
    }

    const fs::path images_dir = tj.at("images_dir").get<std::string>();
    const auto files = sorted_pgms(images_dir);
    if (files.empty()) throw ddic::DataError("train: no .pgm images in " + images_dir.string());
    std::vector<ddic::ImageGrid> dataset;
    dataset.reserve(files.size());
    for (const auto& f : files) dataset.push_back(ddic::normalize_to(ddic::read_pgm(f), norm_lo, norm_hi));

    ddic::TrainConfig cfg;
    cfg.batch_size = tj.value("batch_size", cfg.batch_size);
    cfg.learning_rate = tj.value("learning_rate", cfg.learning_rate);
    cfg.steps = tj.value("steps", cfg.steps);
    cfg.checkpoint_interval = tj.value("checkpoint_interval", cfg.checkpoint_interval);
    cfg.augment_flip = tj.value("augment_flip", cfg.augment_flip);
    cfg.ema_decay = tj.value("ema_decay", cfg.ema_decay);
    cfg.seed = seed;
    cfg.validate();

    std::unique_ptr<ddic::NetworkDenoiser> den;
    ddic::TrainState state;
    if (resume) {
        // continue from the highest-numbered checkpoint in the output directory
        fs::path latest;
        long best = -1;
        for (const auto& e : fs::directory_iterator(out)) {
            const std::string n = e.path().filename().string();
            if (n.rfind("checkpoint_", 0) == 0 && e.path().extension() == ".ddck") {
                const long step = std::stol(n.substr(11));
                if (step > best) {
                    best = step;
                    latest = e.path();
                }
            }
        }
        if (best < 0) throw ddic::DataError("train --resume: no checkpoint found in " + out.string());
        ddic::CheckpointExtras extras;
        den = std::make_unique<ddic::NetworkDenoiser>(
            ddic::NetworkDenoiser::load_checkpoint(latest, &extras));
        state.opt = ddic::net::Adam(den->network().param_count(), cfg.learning_rate);
        if (!extras.adam_m.empty()) state.opt.restore(extras.adam_m, extras.adam_v, extras.adam_steps);
        state.ema = extras.ema;
        state.step = static_cast<int>(den->trained_steps());
        state.initialized = true;
        std::cout << "train: resuming from " << latest.filename().string() << " (step "
                  << state.step << ")\n";
    } else {
        den = std::make_unique<ddic::NetworkDenoiser>(arch, sched, seed, norm_lo, norm_hi);
    }

    const auto result = ddic::train_denoiser(
        *den, dataset, cfg, out, &state, [&](int step, double loss) {
            if ((step + 1) % 100 == 0)
                std::cout << "train: step " << (step + 1) << "/" << cfg.steps << " loss " << loss
                          << "\n";
        });

    {
        std::ofstream trace(out / "loss_trace.csv");
        trace << "step,loss\n";
        for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
            trace << (state.step - result.steps_done + static_cast<int>(i)) << ","
                  << result.loss_trace[i] << "\n";
    }

    json resolved = tj;
    resolved["param_count"] = den->network().param_count();
    json inputs = hash_files(files, images_dir);
    json outputs = json::object();
    if (!result.last_checkpoint.empty())
        outputs[fs::relative(result.last_checkpoint, out).string()] =
            ddic::sha256_file(result.last_checkpoint);
    write_manifest(out, "train", resolved, seed, inputs, outputs);
    std::cout << "train: " << result.steps_done << " steps, smoothed loss "
              << result.smoothed_initial << " -> " << result.smoothed_final << ", checkpoint "
              << result.last_checkpoint.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- translate

int cmd_translate(const GlobalArgs& g, const std::string& method_flag,
                  std::optional<double> lr_flag) {
    const json root = load_config(g, "translate");
    const json& tj = root.at("translate");
    ddic::check_known_keys(tj,
                           {"inputs", "source_checkpoint", "target_checkpoint", "method", "lr",
                            "median_kernel", "normalized_gradient", "trace_stride",
                            "latent_trace_stride"},
                           "translate");
    const std::uint64_t seed = resolve_seed(root, g);
    const fs::path out = resolve_out(root, g);
    prepare_out_dir(out, g.force);

    const fs::path src_ckpt = tj.at("source_checkpoint").get<std::string>();
    const fs::path dst_ckpt = tj.at("target_checkpoint").get<std::string>();
    const ddic::NetworkDenoiser den_src = ddic::NetworkDenoiser::load_checkpoint(src_ckpt);
    const ddic::NetworkDenoiser den_dst = ddic::NetworkDenoiser::load_checkpoint(dst_ckpt);
    if (den_src.schedule().steps() != den_dst.schedule().steps())
        throw ddic::ConfigError("translate: checkpoints disagree on schedule length");
    if (den_src.norm_lo() != den_dst.norm_lo() || den_src.norm_hi() != den_dst.norm_hi())
        throw ddic::ConfigError("translate: checkpoints disagree on normalization");

    std::string method = method_flag.empty() ? tj.value("method", "ddic") : method_flag;
    if (method != "ddib" && method != "ddic")
        throw ddic::ConfigError("translate: method must be ddib or ddic");

    ddic::DdicConfig cfg;
    cfg.lr = lr_flag ? *lr_flag : tj.value("lr", cfg.lr);
    cfg.median_kernel = tj.value("median_kernel", cfg.median_kernel);
    cfg.normalized_gradient = tj.value("normalized_gradient", cfg.normalized_gradient);
    cfg.trace_stride = tj.value("trace_stride", cfg.trace_stride);
    cfg.validate();

    const fs::path inputs_dir = tj.at("inputs").get<std::string>();
    const auto files = sorted_pgms(inputs_dir);
    if (files.empty()) throw ddic::DataError("translate: no .pgm inputs in " + inputs_dir.string());

    const int latent_stride = tj.value("latent_trace_stride", 0);
    const double lo = den_src.norm_lo(), hi = den_src.norm_hi();
    parallel_for(static_cast<int>(files.size()), g.jobs, [&](int i) {
        const fs::path& f = files[static_cast<std::size_t>(i)];
        const ddic::ImageGrid x = ddic::normalize_to(ddic::read_pgm(f), lo, hi);
        ddic::ImageGrid y;
        std::vector<ddic::DdicStepTrace> trace;
        if (method == "ddib") {
            // debug archive of the deterministic chains at the configured stride
            ddic::SampleTrace enc_trace, dec_trace;
            ddic::SampleTrace* et = latent_stride > 0 ? &enc_trace : nullptr;
            ddic::SampleTrace* dt = latent_stride > 0 ? &dec_trace : nullptr;
            const ddic::ImageGrid latent = ddic::encode(x, den_src, et, latent_stride);
            y = ddic::decode(latent, den_dst, dt, latent_stride);
            if (latent_stride > 0) {
                const fs::path tdir = out / (f.stem().string() + "_latents");
                ddic::write_trace_archive(tdir / "encode", enc_trace.timesteps,
                                          enc_trace.snapshots, lo, hi);
                ddic::write_trace_archive(tdir / "decode", dec_trace.timesteps,
                                          dec_trace.snapshots, lo, hi);
            }
        } else {
            if (latent_stride > 0) {
                ddic::SampleTrace enc_trace;
                ddic::encode(x, den_src, &enc_trace, latent_stride);
                ddic::write_trace_archive(out / (f.stem().string() + "_latents") / "encode",
                                          enc_trace.timesteps, enc_trace.snapshots, lo, hi);
            }
            ddic::DdicRun run = ddic::translate_ddic(x, den_src, den_dst, cfg);
            y = std::move(run.output);
            trace = std::move(run.trace);
        }
        ddic::write_pgm(out / f.filename(), y, 65535, lo, hi);
        std::ofstream tr(out / (f.stem().string() + ".trace.jsonl"));
        for (const auto& t : trace) {
            json line{{"t", t.t},
                      {"loss_before", t.loss_before},
                      {"loss_after", t.loss_after},
                      {"corr_before", t.corr_before},
                      {"corr_after", t.corr_after},
                      {"grad_norm", t.grad_norm},
                      {"skipped", t.skipped}};
            tr << line.dump() << "\n";
        }
    });

    json resolved = tj;
    resolved["method"] = method;
    resolved["lr"] = cfg.lr;
    resolved["intensity_mapping"] = {lo, hi};
    json inputs = hash_files(files, inputs_dir.parent_path().empty() ? "." : inputs_dir.parent_path());
    inputs["source_checkpoint"] = ddic::sha256_file(src_ckpt);
    inputs["target_checkpoint"] = ddic::sha256_file(dst_ckpt);
    std::vector<fs::path> written;
    for (const auto& e : fs::recursive_directory_iterator(out))
        if (e.is_regular_file() && e.path().filename() != "manifest.json")
            written.push_back(e.path());
    std::sort(written.begin(), written.end());
    write_manifest(out, "translate", resolved, seed, inputs, hash_files(written, out));
    std::cout << "translate: " << files.size() << " image(s) via " << method << " -> "
              << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

namespace {

struct MetricRow {
    std::string name, method;
    double mi = 0.0, psnr = 0.0;
    std::optional<double> cnr;
};

void write_strip_plot(const fs::path& path, const std::string& metric,
                      const std::map<std::string, std::vector<double>>& groups) {
    double lo = 1e300, hi = -1e300;
    for (const auto& [_, vals] : groups)
        for (double v : vals)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (!(hi > lo)) {
        hi = lo + 1.0;
        lo -= 1.0;
    }
    const int w = 160 + 120 * static_cast<int>(groups.size()), h = 320;
    std::ofstream svg(path);
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    svg << "<text x='10' y='20' font-size='14'>" << metric << "</text>\n";
    auto ypos = [&](double v) { return 40.0 + (h - 80) * (1.0 - (v - lo) / (hi - lo)); };
    int gi = 0;
    for (const auto& [name, vals] : groups) {
        const double x0 = 120.0 + 120.0 * gi;
        double mean = 0.0;
        int nfinite = 0;
        for (std::size_t k = 0; k < vals.size(); ++k) {
            if (!std::isfinite(vals[k])) continue;
            mean += vals[k];
            ++nfinite;
            const double jitter = 30.0 * (static_cast<double>(k % 7) / 6.0 - 0.5);
            svg << "<circle cx='" << x0 + jitter << "' cy='" << ypos(vals[k])
                << "' r='3' fill='steelblue' fill-opacity='0.6'/>\n";
        }
        if (nfinite > 0) {
            mean /= nfinite;
            svg << "<line x1='" << x0 - 25 << "' x2='" << x0 + 25 << "' y1='" << ypos(mean)
                << "' y2='" << ypos(mean) << "' stroke='crimson' stroke-width='2'/>\n";
        }
        svg << "<text x='" << x0 - 25 << "' y='" << h - 12 << "' font-size='12'>" << name
            << "</text>\n";
        ++gi;
    }
    svg << "<text x='10' y='" << ypos(lo) << "' font-size='10'>" << lo << "</text>\n";
    svg << "<text x='10' y='" << ypos(hi) + 10 << "' font-size='10'>" << hi << "</text>\n";
    svg << "</svg>\n";
}

} // namespace

int cmd_evaluate(const GlobalArgs& g) {
    const json root = load_config(g, "evaluate");
    const json& ej = root.at("evaluate");
    ddic::check_known_keys(ej, {"source", "methods", "mi_bins", "fid_downsample", "rois", "plots"},
                           "evaluate");
    const std::uint64_t seed = resolve_seed(root, g);
    const fs::path out = resolve_out(root, g);
    prepare_out_dir(out, g.force);

    const fs::path source_dir = ej.at("source").get<std::string>();
    const auto src_files = sorted_pgms(source_dir);
    if (src_files.empty()) throw ddic::DataError("evaluate: no source images");
    std::vector<std::string> names;
    for (const auto& f : src_files) names.push_back(f.filename().string());

    std::map<std::string, fs::path> methods;
    for (const auto& [k, v] : ej.at("methods").items())
        methods[k] = fs::path(v.get<std::string>());
    if (methods.empty()) throw ddic::ConfigError("evaluate: no method directories given");

    // every method directory must contain exactly the source file list
    for (const auto& [mname, mdir] : methods) {
        const auto mfiles = sorted_pgms(mdir);
        std::vector<std::string> mnames;
        for (const auto& f : mfiles) mnames.push_back(f.filename().string());
        if (mnames != names) {
            std::cerr << "evaluate: file list mismatch for method \"" << mname << "\":\n";
            for (const auto& n : names)
                if (std::find(mnames.begin(), mnames.end(), n) == mnames.end())
                    std::cerr << "  missing: " << n << "\n";
            for (const auto& n : mnames)
                if (std::find(names.begin(), names.end(), n) == names.end())
                    std::cerr << "  extra:   " << n << "\n";
            return 1;
        }
    }

    std::map<std::string, ddic::RoiSpec> rois;
    if (ej.contains("rois") && !ej.at("rois").is_null()) {
        const json rj = ddic::read_json_file(ej.at("rois").get<std::string>());
        for (const auto& [k, v] : rj.items()) {
            ddic::RoiSpec r;
            const auto& a = v.at("roi");
            r.roi_row = a.at(0); r.roi_col = a.at(1); r.roi_height = a.at(2); r.roi_width = a.at(3);
            const auto& b = v.at("background");
            r.bg_row = b.at(0); r.bg_col = b.at(1); r.bg_height = b.at(2); r.bg_width = b.at(3);
            rois[k] = r;
        }
    }

    ddic::HistogramSpec mi_spec;
    mi_spec.bins = ej.value("mi_bins", 64);
    const ddic::DownsampleFlattenExtractor fx(ej.value("fid_downsample", 16));

    // metrics operate on [0,1]-normalized intensities (MI and CNR are
    // invariant; PSNR quantizes through the range metadata either way; FID
    // gets a scale-free feature space)
    auto load_normalized = [](const fs::path& f) {
        return ddic::normalize_to(ddic::read_pgm(f), 0.0, 1.0);
    };
    std::vector<ddic::ImageGrid> sources;
    for (const auto& f : src_files) sources.push_back(load_normalized(f));

    std::vector<MetricRow> rows;
    std::map<std::string, double> fid_by_method;
    std::map<std::string, std::map<std::string, std::vector<double>>> groups; // metric -> method -> values

    // CNR of the raw sources as a reference group
    if (!rois.empty()) {
        for (std::size_t i = 0; i < sources.size(); ++i) {
            const auto it = rois.find(names[i]);
            if (it == rois.end()) continue;
            groups["cnr"]["source"].push_back(ddic::cnr(sources[i], it->second));
        }
    }

    for (const auto& [mname, mdir] : methods) {
        std::vector<ddic::ImageGrid> translated;
        for (const auto& n : names) translated.push_back(load_normalized(mdir / n));
        for (std::size_t i = 0; i < translated.size(); ++i) {
            MetricRow row;
            row.name = names[i];
            row.method = mname;
            row.mi = ddic::mutual_information(sources[i], translated[i], mi_spec);
            row.psnr = ddic::psnr(sources[i], translated[i]);
            groups["mi"][mname].push_back(row.mi);
            groups["psnr"][mname].push_back(row.psnr);
            const auto it = rois.find(names[i]);
            if (it != rois.end()) {
                row.cnr = ddic::cnr(translated[i], it->second);
                groups["cnr"][mname].push_back(*row.cnr);
            }
            rows.push_back(std::move(row));
        }
        fid_by_method[mname] = ddic::fid(sources, translated, fx);
    }

    // set-level stats and pairwise Welch comparisons
    json set_level = json::object();
    for (const auto& [metric, by_method] : groups) {
        for (const auto& [mname, vals] : by_method) {
            double mean = 0.0;
            int nf = 0;
            for (double v : vals)
                if (std::isfinite(v)) {
                    mean += v;
                    ++nf;
                }
            mean = nf ? mean / nf : 0.0;
            double sd = 0.0;
            for (double v : vals)
                if (std::isfinite(v)) sd += (v - mean) * (v - mean);
            sd = nf > 1 ? std::sqrt(sd / (nf - 1)) : 0.0;
            set_level[metric][mname] = {{"mean", mean}, {"sd", sd}, {"n", vals.size()}};
        }
    }
    for (const auto& [mname, f] : fid_by_method) set_level["fid"][mname] = f;

    json comparisons = json::array();
    for (const auto& [metric, by_method] : groups) {
        std::vector<std::string> mnames;
        for (const auto& [mname, _] : by_method) mnames.push_back(mname);
        for (std::size_t i = 0; i < mnames.size(); ++i)
            for (std::size_t j = i + 1; j < mnames.size(); ++j) {
                const auto& va = by_method.at(mnames[i]);
                const auto& vb = by_method.at(mnames[j]);
                const bool finite =
                    std::all_of(va.begin(), va.end(), [](double v) { return std::isfinite(v); }) &&
                    std::all_of(vb.begin(), vb.end(), [](double v) { return std::isfinite(v); });
                json rec{{"metric", metric}, {"group_a", mnames[i]}, {"group_b", mnames[j]}};
                if (!finite) {
                    rec["note"] = "non-finite values present; test skipped";
                } else if (va.size() < 2 || vb.size() < 2) {
                    rec["note"] = "groups too small";
                } else {
                    try {
                        const auto w = ddic::compare_groups(va, vb);
                        rec["t"] = w.t;
                        rec["df"] = w.df;
                        rec["p"] = w.p;
                    } catch (const ddic::StatsError& e) {
                        rec["note"] = e.what();
                    }
                }
                comparisons.push_back(rec);
            }
    }

    json per_image = json::array();
    {
        std::ofstream csv(out / "report.csv");
        csv << "name,method,mi,psnr,cnr\n";
        for (const auto& r : rows) {
            json jr{{"name", r.name}, {"method", r.method}, {"mi", r.mi}};
            jr["psnr"] = std::isfinite(r.psnr) ? json(r.psnr) : json("inf");
            if (r.cnr) jr["cnr"] = *r.cnr;
            per_image.push_back(jr);
            csv << r.name << "," << r.method << "," << r.mi << ","
                << (std::isfinite(r.psnr) ? std::to_string(r.psnr) : "inf") << ","
                << (r.cnr ? std::to_string(*r.cnr) : "") << "\n";
        }
    }
    json report{{"per_image", per_image},
                {"set_level", set_level},
                {"comparisons", comparisons}};
    ddic::write_json_file(out / "report.json", report);

    if (ej.value("plots", true))
        for (const auto& [metric, by_method] : groups)
            write_strip_plot(out / (metric + ".svg"), metric, by_method);

    json inputs{{"source", hash_files(src_files, source_dir)}};
    for (const auto& [mname, mdir] : methods)
        inputs[mname] = hash_files(sorted_pgms(mdir), mdir);
    std::vector<fs::path> outs;
    for (const auto& e : fs::directory_iterator(out))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") outs.push_back(e.path());
    std::sort(outs.begin(), outs.end());
    write_manifest(out, "evaluate", ej, seed, inputs, hash_files(outs, out));

    std::cout << "evaluate: " << rows.size() << " rows over " << methods.size()
              << " method(s); report in " << out.string() << "\n";
    for (const auto& [mname, f] : fid_by_method)
        std::cout << "  fid[" << mname << "] = " << f << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"unpaired diffusion-based image translation (DDIB baseline + "
                 "correlation-guided DDIC), with training, preprocessing and evaluation"};
    app.require_subcommand(1);

    GlobalArgs g;
    std::string method_flag;
    std::optional<double> lr_flag;
    bool resume = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", g.config_path, "JSON configuration file")->required();
        cmd->add_option("--seed", g.seed, "override the config seed");
        cmd->add_option("--out", g.out, "override the output directory");
        cmd->add_option("--jobs", g.jobs, "parallel workers (never changes results)");
        cmd->add_flag("--force", g.force, "overwrite non-empty output directories");
    };

    auto* gen = app.add_subcommand("phantom-gen", "generate synthetic two-domain phantom pairs");
    add_common(gen);
    auto* pre = app.add_subcommand("preprocess", "filter, align, resample and normalize a dataset");
    add_common(pre);
    auto* tr = app.add_subcommand("train", "train a denoiser on an image directory");
    add_common(tr);
    tr->add_flag("--resume", resume, "continue from the latest checkpoint in the output directory");
    auto* tl = app.add_subcommand("translate", "translate images between the two trained domains");
    add_common(tl);
    tl->add_option("--method", method_flag, "ddib or ddic (overrides the config)");
    tl->add_option("--lr", lr_flag, "guidance step size (overrides the config)");
    auto* ev = app.add_subcommand("evaluate", "compute MI/PSNR/FID/CNR reports and plots");
    add_common(ev);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_phantom_gen(g);
        if (pre->parsed()) return cmd_preprocess(g);
        if (tr->parsed()) return cmd_train(g, resume);
        if (tl->parsed()) return cmd_translate(g, method_flag, lr_flag);
        if (ev->parsed()) return cmd_evaluate(g);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
