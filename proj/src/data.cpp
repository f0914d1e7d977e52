#include "xaigan/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace xaigan::data {

namespace fs = std::filesystem;

std::vector<int> DomainDataset::epoch_order(int epoch) const {
    std::vector<int> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(derive_seed(shuffle_seed, "epoch", static_cast<uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)],
                  order[static_cast<size_t>(rng.uniform_int(0, i))]);
    return order;
}

SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "stripes") return SyntheticKind::stripes;
    if (s == "tint") return SyntheticKind::tint;
    if (s == "blobs") return SyntheticKind::blobs;
    throw std::invalid_argument("dataset kind must be stripes, tint or blobs, got '" + s + "'");
}

const char* to_string(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::stripes: return "stripes";
        case SyntheticKind::tint: return "tint";
        case SyntheticKind::blobs: return "blobs";
    }
    return "?";
}

namespace {

Tensor gray_image(int size, Scalar value) {
    return Tensor::full({3, size, size}, value);
}

void set_px(Tensor& img, int c, int y, int x, Scalar v) {
    const int size = img.dim(1);
    img.data()[static_cast<size_t>((c * size + y) * size + x)] = v;
}

void set_px_gray(Tensor& img, int y, int x, Scalar v) {
    for (int c = 0; c < 3; ++c) set_px(img, c, y, x, v);
}

Tensor make_stripes(int size, bool horizontal, Rng& rng) {
    const int width = static_cast<int>(rng.uniform_int(2, 4));
    const int phase = static_cast<int>(rng.uniform_int(0, 2 * width - 1));
    const Scalar hi = 0.5 + 0.3 * rng.uniform();
    const Scalar lo = -hi;
    Tensor img = gray_image(size, lo);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int pos = horizontal ? y : x;
            if (((pos + phase) / width) % 2 == 0) set_px_gray(img, y, x, hi);
        }
    return img;
}

Tensor make_tint(int size, bool red_shift, Rng& rng) {
    Tensor img = gray_image(size, -0.2);
    const int n_rects = static_cast<int>(rng.uniform_int(2, 4));
    for (int r = 0; r < n_rects; ++r) {
        const int x0 = static_cast<int>(rng.uniform_int(0, size - 2));
        const int y0 = static_cast<int>(rng.uniform_int(0, size - 2));
        const int x1 = static_cast<int>(rng.uniform_int(x0 + 1, size - 1));
        const int y1 = static_cast<int>(rng.uniform_int(y0 + 1, size - 1));
        const Scalar v = -0.1 + 0.8 * rng.uniform();
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) set_px_gray(img, y, x, v);
    }
    // domain shift sums to zero across channels: brightness is unchanged
    const Scalar boost = 0.3, cut = 0.15;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) {
                const bool boosted = red_shift ? (c == 0) : (c == 1);
                const size_t idx = static_cast<size_t>((c * size + y) * size + x);
                img.data()[idx] = std::clamp(img.data()[idx] + (boosted ? boost : -cut), -1.0, 1.0);
            }
    return img;
}

Tensor make_blob(int size, bool filled, Rng& rng) {
    const Scalar bg = -0.7;
    // ring annulus (0.6r..r) covers 0.64 of the disc area; scale its value so
    // both domains paint the same expected brightness
    const Scalar disc_delta = 0.5;
    const Scalar ring_delta = disc_delta / 0.64;
    Tensor img = gray_image(size, bg);
    const double r = size / 6.0 + (size / 4.0 - size / 6.0) * rng.uniform();
    const double cx = r + (size - 2 * r) * rng.uniform();
    const double cy = r + (size - 2 * r) * rng.uniform();
    const double inner2 = (0.6 * r) * (0.6 * r);
    const double outer2 = r * r;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if (filled ? d2 <= outer2 : (d2 <= outer2 && d2 > inner2))
                set_px_gray(img, y, x, bg + (filled ? disc_delta : ring_delta));
        }
    return img;
}

}  // namespace

std::pair<DomainDataset, DomainDataset> gen_synthetic_domains(SyntheticKind kind, int n, int size,
                                                              uint64_t seed) {
    if (n < 2) throw std::invalid_argument("gen_synthetic_domains: need n >= 2, got " + std::to_string(n));
    if (size < 8 || size % 8 != 0)
        throw std::invalid_argument("gen_synthetic_domains: size must be divisible by 8, got " +
                                    std::to_string(size));
    DomainDataset a, b;
    a.domain = 'A';
    b.domain = 'B';
    a.shuffle_seed = derive_seed(seed, "shuffle_a");
    b.shuffle_seed = derive_seed(seed, "shuffle_b");
    for (int i = 0; i < n; ++i) {
        Rng rng_a(derive_seed(seed, "sample_a", static_cast<uint64_t>(i)));
        Rng rng_b(derive_seed(seed, "sample_b", static_cast<uint64_t>(i)));
        Tensor pa, pb;
        switch (kind) {
            case SyntheticKind::stripes:
                pa = make_stripes(size, true, rng_a);
                pb = make_stripes(size, false, rng_b);
                break;
            case SyntheticKind::tint:
                pa = make_tint(size, true, rng_a);
                pb = make_tint(size, false, rng_b);
                break;
            case SyntheticKind::blobs:
                pa = make_blob(size, true, rng_a);
                pb = make_blob(size, false, rng_b);
                break;
        }
        char buf[16];
        std::snprintf(buf, sizeof buf, "%c%04d", 'A', i);
        a.samples.push_back({pa, 'A', buf});
        std::snprintf(buf, sizeof buf, "%c%04d", 'B', i);
        b.samples.push_back({pb, 'B', buf});
    }
    return {std::move(a), std::move(b)};
}

Tensor sample_noise_mask(int h, int w, Rng& stream) {
    std::vector<Scalar> d(static_cast<size_t>(h) * w);
    for (Scalar& v : d) v = stream.normal(1.0, 0.02);
    return Tensor::from_data({1, h, w}, std::move(d));
}

Tensor sample_noise_mask_batch(int n, int h, int w, Rng& stream) {
    std::vector<Scalar> d(static_cast<size_t>(n) * h * w);
    for (Scalar& v : d) v = stream.normal(1.0, 0.02);
    return Tensor::from_data({n, 1, h, w}, std::move(d));
}

// ---- PPM / PGM ---------------------------------------------------------------

namespace {

struct PnmHeader {
    int width = 0;
    int height = 0;
    size_t payload_offset = 0;
};

PnmHeader parse_pnm_header(const std::string& bytes, const std::string& magic,
                           const std::string& path) {
    size_t pos = 0;
    auto fail = [&](const std::string& what) {
        throw std::runtime_error(path + ": malformed " + magic + " header at byte " +
                                 std::to_string(pos) + ": " + what);
    };
    if (bytes.size() < 2 || bytes.substr(0, 2) != magic) fail("expected magic '" + magic + "'");
    pos = 2;
    auto skip_ws = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> int {
        skip_ws();
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
            fail("expected integer");
        int v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
            v = v * 10 + (bytes[pos++] - '0');
        return v;
    };
    PnmHeader h;
    h.width = read_int();
    h.height = read_int();
    const int maxval = read_int();
    if (h.width <= 0 || h.height <= 0) fail("non-positive dimensions");
    if (maxval != 255) fail("maxval must be 255, got " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        fail("expected single whitespace before payload");
    h.payload_offset = ++pos;
    return h;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

unsigned char to_byte_signed(Scalar v) {
    const Scalar c = std::clamp(v, -1.0, 1.0);
    return static_cast<unsigned char>(std::lround((c + 1.0) * 127.5));
}

unsigned char to_byte_unit(Scalar v) {
    const Scalar c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace

ImageSample load_ppm(const std::string& path) {
    const std::string bytes = read_file(path);
    const PnmHeader h = parse_pnm_header(bytes, "P6", path);
    const size_t need = static_cast<size_t>(h.width) * h.height * 3;
    if (bytes.size() - h.payload_offset < need)
        throw std::runtime_error(path + ": truncated payload at byte " + std::to_string(bytes.size()) +
                                 ", expected " + std::to_string(h.payload_offset + need) + " bytes");
    std::vector<Scalar> px(need);
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
    for (int y = 0; y < h.height; ++y)
        for (int x = 0; x < h.width; ++x)
            for (int c = 0; c < 3; ++c)
                px[static_cast<size_t>((c * h.height + y) * h.width + x)] =
                    static_cast<Scalar>(p[(y * h.width + x) * 3 + c]) / 127.5 - 1.0;
    ImageSample s;
    s.pixels = Tensor::from_data({3, h.height, h.width}, std::move(px));
    s.id = fs::path(path).stem().string();
    return s;
}

void save_ppm(const Tensor& pixels, const std::string& path) {
    if (pixels.rank() != 3 || pixels.dim(0) != 3)
        throw std::invalid_argument("save_ppm: expected [3,H,W], got " + shape_str(pixels.shape()));
    const int hgt = pixels.dim(1), wid = pixels.dim(2);
    std::string out = "P6\n" + std::to_string(wid) + " " + std::to_string(hgt) + "\n255\n";
    out.reserve(out.size() + static_cast<size_t>(hgt) * wid * 3);
    for (int y = 0; y < hgt; ++y)
        for (int x = 0; x < wid; ++x)
            for (int c = 0; c < 3; ++c)
                out.push_back(static_cast<char>(
                    to_byte_signed(pixels.data()[static_cast<size_t>((c * hgt + y) * wid + x)])));
    write_file(path, out);
}

Tensor load_pgm(const std::string& path) {
    const std::string bytes = read_file(path);
    const PnmHeader h = parse_pnm_header(bytes, "P5", path);
    const size_t need = static_cast<size_t>(h.width) * h.height;
    if (bytes.size() - h.payload_offset < need)
        throw std::runtime_error(path + ": truncated payload at byte " + std::to_string(bytes.size()) +
                                 ", expected " + std::to_string(h.payload_offset + need) + " bytes");
    std::vector<Scalar> v(need);
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
    for (size_t i = 0; i < need; ++i) v[i] = static_cast<Scalar>(p[i]) / 255.0;
    return Tensor::from_data({1, h.height, h.width}, std::move(v));
}

void save_pgm(const Tensor& map, const std::string& path) {
    if (map.rank() != 3 || map.dim(0) != 1)
        throw std::invalid_argument("save_pgm: expected [1,H,W], got " + shape_str(map.shape()));
    const int hgt = map.dim(1), wid = map.dim(2);
    std::string out = "P5\n" + std::to_string(wid) + " " + std::to_string(hgt) + "\n255\n";
    for (int i = 0; i < hgt * wid; ++i)
        out.push_back(static_cast<char>(to_byte_unit(map.data()[static_cast<size_t>(i)])));
    write_file(path, out);
}

DomainDataset load_domain_dir(const std::string& dir, char domain) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("dataset directory not found: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm")
            files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .ppm files in " + dir);
    DomainDataset ds;
    ds.domain = domain;
    for (const auto& f : files) {
        ImageSample s = load_ppm(f);
        s.domain = domain;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

Tensor stack_batch(const DomainDataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("stack_batch: empty index list");
    const Tensor& first = ds.samples[static_cast<size_t>(indices[0])].pixels;
    const int c = first.dim(0), h = first.dim(1), w = first.dim(2);
    const int64_t per = static_cast<int64_t>(c) * h * w;
    std::vector<Scalar> out(static_cast<size_t>(indices.size()) * per);
    for (size_t i = 0; i < indices.size(); ++i) {
        const Tensor& px = ds.samples[static_cast<size_t>(indices[i])].pixels;
        if (px.dim(1) != h || px.dim(2) != w)
            throw std::invalid_argument("stack_batch: mixed image sizes in dataset");
        std::copy(px.data().begin(), px.data().end(), out.begin() + static_cast<int64_t>(i) * per);
    }
    return Tensor::from_data({static_cast<int>(indices.size()), c, h, w}, std::move(out));
}

}  // namespace xaigan::data
