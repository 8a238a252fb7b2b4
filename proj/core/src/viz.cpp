#include "iptdet/viz.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include "iptdet/errors.hpp"
#include "iptdet/features.hpp"

namespace iptdet {

namespace {

// Classic 5x7 column font, ASCII 0x20..0x7A. Five column bytes per glyph,
// bit 0 = top row.
constexpr unsigned char kFont[][5] = {
    {0x00, 0x00, 0x00, 0x00, 0x00}, // ' '
    {0x00, 0x00, 0x5F, 0x00, 0x00}, // !
    {0x00, 0x07, 0x00, 0x07, 0x00}, // "
    {0x14, 0x7F, 0x14, 0x7F, 0x14}, // #
    {0x24, 0x2A, 0x7F, 0x2A, 0x12}, // $
    {0x23, 0x13, 0x08, 0x64, 0x62}, // %
    {0x36, 0x49, 0x55, 0x22, 0x50}, // &
    {0x00, 0x05, 0x03, 0x00, 0x00}, // '
    {0x00, 0x1C, 0x22, 0x41, 0x00}, // (
    {0x00, 0x41, 0x22, 0x1C, 0x00}, // )
    {0x14, 0x08, 0x3E, 0x08, 0x14}, // *
    {0x08, 0x08, 0x3E, 0x08, 0x08}, // +
    {0x00, 0x50, 0x30, 0x00, 0x00}, // ,
    {0x08, 0x08, 0x08, 0x08, 0x08}, // -
    {0x00, 0x60, 0x60, 0x00, 0x00}, // .
    {0x20, 0x10, 0x08, 0x04, 0x02}, // /
    {0x3E, 0x51, 0x49, 0x45, 0x3E}, // 0
    {0x00, 0x42, 0x7F, 0x40, 0x00}, // 1
    {0x42, 0x61, 0x51, 0x49, 0x46}, // 2
    {0x21, 0x41, 0x45, 0x4B, 0x31}, // 3
    {0x18, 0x14, 0x12, 0x7F, 0x10}, // 4
    {0x27, 0x45, 0x45, 0x45, 0x39}, // 5
    {0x3C, 0x4A, 0x49, 0x49, 0x30}, // 6
    {0x01, 0x71, 0x09, 0x05, 0x03}, // 7
    {0x36, 0x49, 0x49, 0x49, 0x36}, // 8
    {0x06, 0x49, 0x49, 0x29, 0x1E}, // 9
    {0x00, 0x36, 0x36, 0x00, 0x00}, // :
    {0x00, 0x56, 0x36, 0x00, 0x00}, // ;
    {0x08, 0x14, 0x22, 0x41, 0x00}, // <
    {0x14, 0x14, 0x14, 0x14, 0x14}, // =
    {0x00, 0x41, 0x22, 0x14, 0x08}, // >
    {0x02, 0x01, 0x51, 0x09, 0x06}, // ?
    {0x32, 0x49, 0x79, 0x41, 0x3E}, // @
    {0x7E, 0x11, 0x11, 0x11, 0x7E}, // A
    {0x7F, 0x49, 0x49, 0x49, 0x36}, // B
    {0x3E, 0x41, 0x41, 0x41, 0x22}, // C
    {0x7F, 0x41, 0x41, 0x22, 0x1C}, // D
    {0x7F, 0x49, 0x49, 0x49, 0x41}, // E
    {0x7F, 0x09, 0x09, 0x09, 0x01}, // F
    {0x3E, 0x41, 0x49, 0x49, 0x7A}, // G
    {0x7F, 0x08, 0x08, 0x08, 0x7F}, // H
    {0x00, 0x41, 0x7F, 0x41, 0x00}, // I
    {0x20, 0x40, 0x41, 0x3F, 0x01}, // J
    {0x7F, 0x08, 0x14, 0x22, 0x41}, // K
    {0x7F, 0x40, 0x40, 0x40, 0x40}, // L
    {0x7F, 0x02, 0x0C, 0x02, 0x7F}, // M
    {0x7F, 0x04, 0x08, 0x10, 0x7F}, // N
    {0x3E, 0x41, 0x41, 0x41, 0x3E}, // O
    {0x7F, 0x09, 0x09, 0x09, 0x06}, // P
    {0x3E, 0x41, 0x51, 0x21, 0x5E}, // Q
    {0x7F, 0x09, 0x19, 0x29, 0x46}, // R
    {0x46, 0x49, 0x49, 0x49, 0x31}, // S
    {0x01, 0x01, 0x7F, 0x01, 0x01}, // T
    {0x3F, 0x40, 0x40, 0x40, 0x3F}, // U
    {0x1F, 0x20, 0x40, 0x20, 0x1F}, // V
    {0x3F, 0x40, 0x38, 0x40, 0x3F}, // W
    {0x63, 0x14, 0x08, 0x14, 0x63}, // X
    {0x07, 0x08, 0x70, 0x08, 0x07}, // Y
    {0x61, 0x51, 0x49, 0x45, 0x43}, // Z
    {0x00, 0x7F, 0x41, 0x41, 0x00}, // [
    {0x02, 0x04, 0x08, 0x10, 0x20}, // backslash
    {0x00, 0x41, 0x41, 0x7F, 0x00}, // ]
    {0x04, 0x02, 0x01, 0x02, 0x04}, // ^
    {0x40, 0x40, 0x40, 0x40, 0x40}, // _
    {0x00, 0x01, 0x02, 0x04, 0x00}, // `
    {0x20, 0x54, 0x54, 0x54, 0x78}, // a
    {0x7F, 0x48, 0x44, 0x44, 0x38}, // b
    {0x38, 0x44, 0x44, 0x44, 0x20}, // c
    {0x38, 0x44, 0x44, 0x48, 0x7F}, // d
    {0x38, 0x54, 0x54, 0x54, 0x18}, // e
    {0x08, 0x7E, 0x09, 0x01, 0x02}, // f
    {0x0C, 0x52, 0x52, 0x52, 0x3E}, // g
    {0x7F, 0x08, 0x04, 0x04, 0x78}, // h
    {0x00, 0x44, 0x7D, 0x40, 0x00}, // i
    {0x20, 0x40, 0x44, 0x3D, 0x00}, // j
    {0x7F, 0x10, 0x28, 0x44, 0x00}, // k
    {0x00, 0x41, 0x7F, 0x40, 0x00}, // l
    {0x7C, 0x04, 0x18, 0x04, 0x78}, // m
    {0x7C, 0x08, 0x04, 0x04, 0x78}, // n
    {0x38, 0x44, 0x44, 0x44, 0x38}, // o
    {0x7C, 0x14, 0x14, 0x14, 0x08}, // p
    {0x08, 0x14, 0x14, 0x18, 0x7C}, // q
    {0x7C, 0x08, 0x04, 0x04, 0x08}, // r
    {0x48, 0x54, 0x54, 0x54, 0x20}, // s
    {0x04, 0x3F, 0x44, 0x40, 0x20}, // t
    {0x3C, 0x40, 0x40, 0x20, 0x7C}, // u
    {0x1C, 0x20, 0x40, 0x20, 0x1C}, // v
    {0x3C, 0x40, 0x30, 0x40, 0x3C}, // w
    {0x44, 0x28, 0x10, 0x28, 0x44}, // x
    {0x0C, 0x50, 0x50, 0x50, 0x3C}, // y
    {0x44, 0x64, 0x54, 0x4C, 0x44}, // z
};

constexpr int kGlyphCount = static_cast<int>(sizeof(kFont) / sizeof(kFont[0]));

const unsigned char* glyph(char ch) {
    const int idx = static_cast<unsigned char>(ch) - 0x20;
    if (idx < 0 || idx >= kGlyphCount) return nullptr;
    return kFont[idx];
}

struct Rgb {
    std::uint8_t r, g, b;
};

Rgb lerp(Rgb a, Rgb b, double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto mix = [t](std::uint8_t x, std::uint8_t y) {
        return static_cast<std::uint8_t>(std::lround(x + t * (y - x)));
    };
    return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

// White-to-dark-blue ramp for the heatmap.
Rgb heat(double v) { return lerp({247, 251, 255}, {8, 48, 107}, v); }

} // namespace

Image::Image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
    : width(w), height(h), px(static_cast<std::size_t>(w) * h * 3) {
    if (w <= 0 || h <= 0) throw ValidationError("Image: dimensions must be positive");
    for (std::size_t i = 0; i < px.size(); i += 3) {
        px[i] = r;
        px[i + 1] = g;
        px[i + 2] = b;
    }
}

void Image::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || x >= width || y < 0 || y >= height) return;
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    px[i] = r;
    px[i + 1] = g;
    px[i + 2] = b;
}

void Image::fill_rect(int x, int y, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int x0 = std::max(x, 0), y0 = std::max(y, 0);
    const int x1 = std::min(x + w, width), y1 = std::min(y + h, height);
    for (int yy = y0; yy < y1; ++yy)
        for (int xx = x0; xx < x1; ++xx) set(xx, yy, r, g, b);
}

void Image::draw_text(int x, int y, std::string_view text, int scale,
                      std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    int cx = x;
    for (char ch : text) {
        const unsigned char* gl = glyph(ch);
        if (gl == nullptr) {
            // hollow box for unknown characters
            for (int i = 0; i < 5 * scale; ++i) {
                set(cx + i, y, r, g, b);
                set(cx + i, y + 7 * scale - 1, r, g, b);
            }
            for (int i = 0; i < 7 * scale; ++i) {
                set(cx, y + i, r, g, b);
                set(cx + 5 * scale - 1, y + i, r, g, b);
            }
        } else {
            for (int col = 0; col < 5; ++col)
                for (int row = 0; row < 7; ++row)
                    if (gl[col] >> row & 1)
                        fill_rect(cx + col * scale, y + row * scale, scale, scale, r, g, b);
        }
        cx += 6 * scale;
    }
}

int text_width(std::string_view text, int scale) {
    if (text.empty()) return 0;
    return static_cast<int>(text.size()) * 6 * scale - scale;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.px.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw ValidationError("write_png: image buffer does not match its dimensions");

    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (fp == nullptr) throw IoError("write_png: cannot open " + path.string());

    png_structp pngp = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop infop = pngp != nullptr ? png_create_info_struct(pngp) : nullptr;
    if (infop == nullptr) {
        if (pngp != nullptr) png_destroy_write_struct(&pngp, nullptr);
        std::fclose(fp);
        throw IoError("write_png: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(pngp))) {
        png_destroy_write_struct(&pngp, &infop);
        std::fclose(fp);
        throw IoError("write_png: encoding failed for " + path.string());
    }

    png_init_io(pngp, fp);
    png_set_IHDR(pngp, infop, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(pngp, infop);
    for (int y = 0; y < img.height; ++y)
        png_write_row(pngp, const_cast<png_bytep>(img.px.data() +
                                                  static_cast<std::size_t>(y) * img.width * 3));
    png_write_end(pngp, nullptr);
    png_destroy_write_struct(&pngp, &infop);
    if (std::fclose(fp) != 0) throw IoError("write_png: close failed for " + path.string());
}

Image render_confusion(const MlcmMatrix& m) {
    constexpr int kCell = 64;
    constexpr int kLeft = 70;
    constexpr int kTop = 30;
    constexpr int kBottom = 10;
    const int n = MlcmMatrix::kSize;

    auto label = [](int i) -> std::string {
        if (i < kNumIptClasses) return std::string(ipt_short_name(static_cast<IptClass>(i)));
        return "none";
    };

    const auto rows = normalize_rows(m);
    Image img(kLeft + n * kCell + 8, kTop + n * kCell + kBottom);
    img.draw_text(4, 4, "rows: truth / cols: predicted, row-normalized", 1, 60, 60, 60);

    for (int i = 0; i < n; ++i) {
        // column header, clipped to the cell
        const std::string cl = label(i);
        const int cx = kLeft + i * kCell + std::max(0, (kCell - text_width(cl, 1)) / 2);
        img.draw_text(cx, kTop - 11, cl, 1, 0, 0, 0);
        // row label, right-aligned to the matrix
        const std::string rl = label(i);
        const int ry = kTop + i * kCell + (kCell - 7) / 2;
        img.draw_text(std::max(2, kLeft - 6 - text_width(rl, 1)), ry, rl, 1, 0, 0, 0);
    }

    char buf[32];
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            const Rgb c = heat(v);
            const int x = kLeft + j * kCell, y = kTop + i * kCell;
            img.fill_rect(x, y, kCell - 1, kCell - 1, c.r, c.g, c.b);
            const std::uint8_t tc = v > 0.55 ? 255 : 0;
            std::snprintf(buf, sizeof buf, "%lld",
                          static_cast<long long>(
                              m.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
            img.draw_text(x + std::max(1, (kCell - text_width(buf, 1)) / 2), y + kCell / 2 - 9,
                          buf, 1, tc, tc, tc);
            std::snprintf(buf, sizeof buf, "%.2f", v);
            img.draw_text(x + std::max(1, (kCell - text_width(buf, 1)) / 2), y + kCell / 2 + 2,
                          buf, 1, tc, tc, tc);
        }
    }
    return img;
}

Image render_piano_roll(const Prediction& pred, const FrameLabelMatrix* truth,
                        double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("render_piano_roll: threshold must lie in (0, 1)");
    if (truth != nullptr && truth->n_frames != pred.n_frames)
        throw ValidationError("render_piano_roll: truth and prediction frame counts differ");

    constexpr int kBand = 24;
    constexpr int kLeft = 64;
    constexpr int kTop = 14;
    constexpr int kBottom = 16;
    const int t_n = std::max(pred.n_frames, 1);

    Image img(kLeft + t_n + 8, kTop + kNumIptClasses * kBand + kBottom);
    const Rgb active{204, 85, 0};     // prediction
    const Rgb miss_bg{200, 224, 200}; // truth underlay

    for (int c = 0; c < kNumIptClasses; ++c) {
        const int y0 = kTop + c * kBand;
        const std::string name(ipt_short_name(static_cast<IptClass>(c)));
        img.draw_text(std::max(2, kLeft - 6 - text_width(name, 1)), y0 + (kBand - 7) / 2,
                      name, 1, 0, 0, 0);
        for (int t = 0; t < pred.n_frames; ++t) {
            Rgb base{255, 255, 255};
            if (truth != nullptr && truth->at(c, t) != 0) base = miss_bg;
            const double p = pred.at(c, t);
            const Rgb col = p >= threshold ? active : lerp(base, active, 0.8 * p);
            img.fill_rect(kLeft + t, y0 + 1, 1, kBand - 2, col.r, col.g, col.b);
        }
        // band separator
        img.fill_rect(kLeft, y0 + kBand - 1, t_n, 1, 190, 190, 190);
    }

    // one tick per second along the frame axis
    const double frames_per_second = static_cast<double>(kTargetSampleRate) / kHop;
    const int y_axis = kTop + kNumIptClasses * kBand;
    char buf[16];
    for (int s = 0;; ++s) {
        const int x = kLeft + static_cast<int>(std::lround(s * frames_per_second));
        if (x > kLeft + t_n) break;
        img.fill_rect(x, y_axis, 1, 4, 0, 0, 0);
        std::snprintf(buf, sizeof buf, "%ds", s);
        img.draw_text(x + 2, y_axis + 5, buf, 1, 60, 60, 60);
    }
    return img;
}

} // namespace iptdet
