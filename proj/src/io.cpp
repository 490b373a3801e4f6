#include "ddic/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ddic {

namespace {

// next whitespace-delimited token, skipping '#' comment lines
std::string next_token(std::istream& in) {
    std::string tok;
    for (;;) {
        int c = in.get();
        if (c == EOF) throw DataError("pgm: unexpected end of header");
        if (std::isspace(c)) continue;
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        tok.push_back(static_cast<char>(c));
        while (in.peek() != EOF && !std::isspace(in.peek())) tok.push_back(static_cast<char>(in.get()));
        return tok;
    }
}

} // namespace

ImageGrid read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    if (next_token(in) != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
    const int w = std::stoi(next_token(in));
    const int h = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (w <= 0 || h <= 0 || (maxval != 255 && maxval != 65535))
        throw DataError(path.string() + ": unsupported PGM geometry or depth");
    in.get(); // single whitespace after maxval

    const std::size_t n = static_cast<std::size_t>(w) * h;
    ImageGrid img(h, w);
    img.range_lo = 0.0;
    img.range_hi = static_cast<double>(maxval);
    if (maxval == 255) {
        std::vector<unsigned char> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (!in) throw DataError(path.string() + ": truncated pixel data");
        for (std::size_t i = 0; i < n; ++i) img[i] = buf[i];
    } else {
        std::vector<unsigned char> buf(n * 2);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
        if (!in) throw DataError(path.string() + ": truncated pixel data");
        for (std::size_t i = 0; i < n; ++i)
            img[i] = static_cast<double>((buf[2 * i] << 8) | buf[2 * i + 1]); // big-endian
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const ImageGrid& img,
               int maxval, double lo, double hi) {
    if (maxval != 255 && maxval != 65535)
        throw ConfigError("write_pgm: maxval must be 255 or 65535");
    if (!(hi > lo)) throw ConfigError("write_pgm: degenerate intensity range");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "P5\n" << img.cols() << " " << img.rows() << "\n" << maxval << "\n";
    const double scale = maxval / (hi - lo);
    if (maxval == 255) {
        std::vector<unsigned char> buf(img.size());
        for (std::size_t i = 0; i < img.size(); ++i)
            buf[i] = static_cast<unsigned char>(
                std::clamp<long>(std::lround((img[i] - lo) * scale), 0, 255));
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    } else {
        std::vector<unsigned char> buf(img.size() * 2);
        for (std::size_t i = 0; i < img.size(); ++i) {
            const auto v = static_cast<unsigned>(
                std::clamp<long>(std::lround((img[i] - lo) * scale), 0, 65535));
            buf[2 * i] = static_cast<unsigned char>(v >> 8);
            buf[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw DataError("failed writing " + path.string());
}

ImageGrid normalize_to(const ImageGrid& img, double norm_lo, double norm_hi) {
    if (!(norm_hi > norm_lo)) throw ConfigError("normalize_to: degenerate target range");
    if (img.range_lo == norm_lo && img.range_hi == norm_hi) return img;
    const double span = img.range_hi - img.range_lo;
    ImageGrid out = img;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = norm_lo + (img[i] - img.range_lo) / span * (norm_hi - norm_lo);
    out.range_lo = norm_lo;
    out.range_hi = norm_hi;
    return out;
}

namespace {

std::string hex_digest(const unsigned char* d, unsigned len) {
    static const char* k = "0123456789abcdef";
    std::string s(2 * len, '0');
    for (unsigned i = 0; i < len; ++i) {
        s[2 * i] = k[d[i] >> 4];
        s[2 * i + 1] = k[d[i] & 0xf];
    }
    return s;
}

} // namespace

void write_trace_archive(const std::filesystem::path& dir,
                         const std::vector<int>& timesteps,
                         const std::vector<ImageGrid>& snapshots,
                         double lo, double hi) {
    if (timesteps.size() != snapshots.size())
        throw DataError("trace archive: timestep/snapshot count mismatch");
    std::filesystem::create_directories(dir);
    json index{{"intensity_mapping", {lo, hi}}, {"frames", json::array()}};
    for (std::size_t i = 0; i < timesteps.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "t_%05d.pgm", timesteps[i]);
        write_pgm(dir / name, snapshots[i], 65535, lo, hi);
        index["frames"].push_back({{"t", timesteps[i]}, {"file", name}});
    }
    write_json_file(dir / "index.json", index);
}

std::string sha256_bytes(const void* data, std::size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned dlen = 0;
    if (EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr) != 1)
        throw NumericError("sha256 failed");
    return hex_digest(digest, dlen);
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned dlen = 0;
    EVP_DigestFinal_ex(ctx, digest, &dlen);
    EVP_MD_CTX_free(ctx);
    return hex_digest(digest, dlen);
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in, nullptr, true, true); // allow comments
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void check_known_keys(const json& obj, const std::vector<std::string>& allowed,
                      const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
    }
}

} // namespace ddic
