#include "mgreid/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mgreid {

void Image::quantize8() {
    for (double& x : pix) {
        double c = std::min(1.0, std::max(0.0, x));
        x = std::round(c * 255.0) / 255.0;
    }
}

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32_be(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32_be(out, static_cast<uint32_t>(data.size()));
    size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32_be(out, crc);
}

std::vector<uint8_t> zlib_compress(const std::vector<uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK)
        throw std::runtime_error("png: zlib compression failed");
    out.resize(bound);
    return out;
}

std::vector<uint8_t> zlib_decompress(const std::vector<uint8_t>& comp, size_t expected) {
    std::vector<uint8_t> out(expected);
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw std::runtime_error("png: inflateInit failed");
    zs.next_in = const_cast<Bytef*>(comp.data());
    zs.avail_in = static_cast<uInt>(comp.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw std::runtime_error("png: inflate failed");
    out.resize(zs.total_out);
    return out;
}

const uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void write_png(const std::string& path, int height, int width, int channels, const std::vector<uint8_t>& bytes) {
    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(width));
    put_u32_be(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);                                    // bit depth
    ihdr.push_back(channels == 3 ? 2 : 0);                // color type
    ihdr.push_back(0);                                    // compression
    ihdr.push_back(0);                                    // filter method
    ihdr.push_back(0);                                    // no interlace

    const size_t stride = static_cast<size_t>(width) * channels;
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * height);
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);  // filter type none
        raw.insert(raw.end(), bytes.begin() + y * stride, bytes.begin() + (y + 1) * stride);
    }

    std::vector<uint8_t> out(kSig, kSig + 8);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zlib_compress(raw));
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("png: write failed: " + path);
}

uint8_t paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
    if (pb <= pc) return static_cast<uint8_t>(b);
    return static_cast<uint8_t>(c);
}

}  // namespace

void write_png_rgb(const std::string& path, const Image& img) {
    std::vector<uint8_t> bytes(img.pix.size());
    for (size_t i = 0; i < img.pix.size(); ++i) {
        double c = std::min(1.0, std::max(0.0, img.pix[i]));
        bytes[i] = static_cast<uint8_t>(std::lround(c * 255.0));
    }
    write_png(path, img.height, img.width, 3, bytes);
}

void write_png_gray(const std::string& path, int height, int width, const std::vector<uint8_t>& gray) {
    if (gray.size() != static_cast<size_t>(height) * width)
        throw std::invalid_argument("write_png_gray: size mismatch");
    write_png(path, height, width, 1, gray);
}

Image read_png_rgb(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kSig, 8) != 0)
        throw std::runtime_error("png: bad signature: " + path);

    size_t pos = 8;
    int width = 0, height = 0, channels = 0;
    std::vector<uint8_t> idat;
    while (pos + 8 <= buf.size()) {
        uint32_t len = get_u32_be(buf.data() + pos);
        std::string type(reinterpret_cast<const char*>(buf.data() + pos + 4), 4);
        const uint8_t* data = buf.data() + pos + 8;
        if (pos + 12 + len > buf.size()) throw std::runtime_error("png: truncated chunk");
        if (type == "IHDR") {
            width = static_cast<int>(get_u32_be(data));
            height = static_cast<int>(get_u32_be(data + 4));
            int depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8 || (color != 2 && color != 0) || interlace != 0)
                throw std::runtime_error("png: unsupported format (need 8-bit RGB/gray, no interlace)");
            channels = color == 2 ? 3 : 1;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0) throw std::runtime_error("png: missing IHDR");

    const size_t stride = static_cast<size_t>(width) * channels;
    std::vector<uint8_t> raw = zlib_decompress(idat, (stride + 1) * height);
    if (raw.size() != (stride + 1) * height) throw std::runtime_error("png: bad decompressed size");

    // Undo per-scanline filters.
    std::vector<uint8_t> img_bytes(stride * height);
    const int bpp = channels;
    for (int y = 0; y < height; ++y) {
        uint8_t filter = raw[y * (stride + 1)];
        const uint8_t* src = raw.data() + y * (stride + 1) + 1;
        uint8_t* dst = img_bytes.data() + y * stride;
        const uint8_t* up = y > 0 ? img_bytes.data() + (y - 1) * stride : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
            int b = up ? up[x] : 0;
            int c = (up && x >= static_cast<size_t>(bpp)) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::runtime_error("png: unknown filter type");
            }
            dst[x] = static_cast<uint8_t>(v);
        }
    }

    Image img(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                uint8_t b = channels == 3 ? img_bytes[(y * width + x) * 3 + ch] : img_bytes[y * width + x];
                img.at(y, x, ch) = b / 255.0;
            }
    return img;
}

}  // namespace mgreid
