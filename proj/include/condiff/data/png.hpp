#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "condiff/tensor/ops.hpp"

namespace condiff::data {

/// Reads an 8-bit grayscale or RGB PNG as [1, C, H, W] with values in [0, 1].
inline Tensor<float> load_png(const std::string& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw FormatError("load_png: " + path + ": " + img.message);
    }
    const auto fail = [&](const std::string& why) {
        png_image_free(&img);
        throw FormatError("load_png: " + path + ": " + why);
    };
    if (img.format & PNG_FORMAT_FLAG_LINEAR) fail("unsupported bit depth (only 8-bit images are accepted)");
    if (img.format & PNG_FORMAT_FLAG_COLORMAP) fail("unsupported color type (palette)");
    if (img.format & PNG_FORMAT_FLAG_ALPHA) fail("unsupported color type (alpha channel)");
    const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::size_t C = color ? 3 : 1, H = img.height, W = img.width;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw FormatError("load_png: " + path + ": " + msg);
    }
    std::vector<float> data(C * H * W);
    for (std::size_t i = 0; i < H * W; ++i) {
        for (std::size_t c = 0; c < C; ++c) data[c * H * W + i] = static_cast<float>(buf[i * C + c]) / 255.0f;
    }
    return Tensor<float>(Shape{1, C, H, W}, std::move(data));
}

inline std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

/// Writes [1, C, H, W] (C = 1 or 3), clamping to [0, 1] and rounding to 8 bits.
inline void save_png(const Tensor<float>& t, const std::string& path) {
    require(t.rank() == 4 && t.dim(0) == 1 && (t.dim(1) == 1 || t.dim(1) == 3),
            "save_png: expected [1,1|3,H,W], got ", shape_str(t.shape()));
    const std::size_t C = t.dim(1), H = t.dim(2), W = t.dim(3);
    std::vector<png_byte> buf(C * H * W);
    const auto& v = t.vec();
    for (std::size_t i = 0; i < H * W; ++i) {
        for (std::size_t c = 0; c < C; ++c) buf[i * C + c] = to_byte(v[c * H * W + i]);
    }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(W);
    img.height = static_cast<png_uint_32>(H);
    img.format = C == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw FormatError("save_png: " + path + ": " + msg);
    }
}

/// Gray images are replicated to three channels.
inline Tensor<float> to_rgb(const Tensor<float>& t) {
    require(t.rank() == 4, "to_rgb: expected [B,C,H,W], got ", shape_str(t.shape()));
    if (t.dim(1) == 3) return t;
    require(t.dim(1) == 1, "to_rgb: cannot convert ", t.dim(1), " channels");
    return concat_channels<float>({t, t, t}).detach();
}

} // namespace condiff::data
