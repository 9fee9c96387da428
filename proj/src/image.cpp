#include "d24fad/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "d24fad/kernels.hpp"

namespace d24fad::img {

namespace {

uint8_t to_byte(double v) {
    const double c = std::max(0.0, std::min(1.0, v));
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

int read_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v = 0;
    if (!(in >> v)) throw IoError("malformed PNM header");
    return v;
}

}  // namespace

Tensor read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
        throw IoError("unsupported image format (expected binary PPM/PGM): " + path);
    const int channels = magic[1] == '6' ? 3 : 1;
    const int w = read_pnm_token(in);
    const int h = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (w < 1 || h < 1 || maxval != 255) throw IoError("unsupported PNM geometry/depth: " + path);
    in.get();  // single whitespace after header
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError("truncated image file: " + path);

    Tensor out({channels, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                out.at(c, y, x) = raw[(static_cast<size_t>(y) * w + x) * channels + c] / 255.0;
    return out;
}

void write_ppm(const std::string& path, const Tensor& rgb01) {
    if (rgb01.ndim() != 3 || rgb01.dim(0) != 3) throw ShapeError("write_ppm: expected (3,H,W)");
    const int h = rgb01.dim(1), w = rgb01.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                raw[(static_cast<size_t>(y) * w + x) * 3 + c] = to_byte(rgb01.at(c, y, x));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("short write: " + path);
}

void write_pgm(const std::string& path, const Tensor& gray01) {
    if (gray01.ndim() != 3 || gray01.dim(0) != 1) throw ShapeError("write_pgm: expected (1,H,W)");
    const int h = gray01.dim(1), w = gray01.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) raw[static_cast<size_t>(y) * w + x] = to_byte(gray01.at(0, y, x));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("short write: " + path);
}

namespace {

void put_u32be(std::string& s, uint32_t v) {
    s.push_back(static_cast<char>((v >> 24) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>(v & 0xff));
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32be(out, static_cast<uint32_t>(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    const uint32_t crc = static_cast<uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    put_u32be(out, crc);
}

}  // namespace

void write_png(const std::string& path, const Tensor& rgb01) {
    if (rgb01.ndim() != 3 || rgb01.dim(0) != 3) throw ShapeError("write_png: expected (3,H,W)");
    const int h = rgb01.dim(1), w = rgb01.dim(2);

    // raw scanlines, filter byte 0 per row
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * 3));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) raw.push_back(to_byte(rgb01.at(c, y, x)));
    }

    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("PNG deflate failed: " + path);
    comp.resize(comp_len);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(w));
    put_u32be(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", std::string(reinterpret_cast<const char*>(comp.data()), comp.size()));
    put_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write image file: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write: " + path);
}

Tensor preprocess(const Tensor& image01, int size, const std::array<double, 3>& mean,
                  const std::array<double, 3>& stdev) {
    if (image01.ndim() != 3) throw ShapeError("preprocess: expected (C,H,W)");
    Tensor rgb;
    if (image01.dim(0) == 3) {
        rgb = image01;
    } else if (image01.dim(0) == 1) {
        rgb = Tensor({3, image01.dim(1), image01.dim(2)});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < image01.dim(1); ++y)
                for (int x = 0; x < image01.dim(2); ++x) rgb.at(c, y, x) = image01.at(0, y, x);
    } else {
        throw ShapeError("preprocess: expected 1 or 3 channels, got " + std::to_string(image01.dim(0)));
    }
    Tensor resized = kernels::resize_bilinear(rgb, size, size);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                resized.at(c, y, x) = (resized.at(c, y, x) - mean[static_cast<size_t>(c)]) /
                                      stdev[static_cast<size_t>(c)];
    return resized;
}

bool has_image_ext(const std::string& path) {
    auto dotpos = path.find_last_of('.');
    if (dotpos == std::string::npos) return false;
    std::string ext = path.substr(dotpos + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == "ppm" || ext == "pgm";
}

}  // namespace d24fad::img
