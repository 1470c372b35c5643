#pragma once

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "floc/common.hpp"
#include "floc/image.hpp"

namespace floc {

// 8-bit interleaved image; the unit all file and JPEG round-trips work in.
struct U8Image {
    int h = 0, w = 0, c = 0;
    std::vector<uint8_t> data;

    U8Image() = default;
    U8Image(int h_, int w_, int c_, uint8_t fill = 0)
        : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

    uint8_t& at(int y, int x, int ch) { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
    uint8_t at(int y, int x, int ch) const { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
};

inline uint8_t quantize_u8(real v) {
    const real s = clamp01(v) * 255.0;
    int q = static_cast<int>(s + 0.5);
    if (q > 255) q = 255;
    return static_cast<uint8_t>(q);
}

inline U8Image to_u8(const Image& img) {
    U8Image out(img.h, img.w, img.c);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = quantize_u8(img.data[i]);
    return out;
}

inline Image to_real(const U8Image& img) {
    Image out(img.h, img.w, img.c);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] / 255.0;
    return out;
}

namespace detail {

struct FileHandle {
    std::FILE* f = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

struct JpegErr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_throwing_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

} // namespace detail

// ---------------------------------------------------------------------------
// PNG

inline void save_png(const std::string& path, const U8Image& img) {
    FLOC_CHECK(img.c == 1 || img.c == 3, "save_png: only gray or RGB supported, got c=", img.c);
    FLOC_CHECK(img.h > 0 && img.w > 0, "save_png: empty image");
    detail::FileHandle fh(path, "wb");
    FLOC_CHECK(fh.f, "save_png: cannot open '", path, "' for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    FLOC_CHECK(png, "save_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("save_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("save_png: libpng error writing '", path, "'");
    }
    png_init_io(png, fh.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    for (int y = 0; y < img.h; ++y)
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * img.w * img.c);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline U8Image load_png(const std::string& path) {
    detail::FileHandle fh(path, "rb");
    FLOC_CHECK(fh.f, "load_png: cannot open '", path, "'");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    FLOC_CHECK(png, "load_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("load_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("load_png: libpng error reading '", path, "' (corrupt or not a PNG)");
    }
    png_init_io(png, fh.f);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    U8Image out;
    out.h = static_cast<int>(png_get_image_height(png, info));
    out.w = static_cast<int>(png_get_image_width(png, info));
    out.c = static_cast<int>(png_get_channels(png, info));
    if (out.c != 1 && out.c != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("load_png: unsupported channel count ", out.c, " in '", path, "'");
    }
    out.data.resize(static_cast<size_t>(out.h) * out.w * out.c);
    std::vector<png_bytep> rows(static_cast<size_t>(out.h));
    for (int y = 0; y < out.h; ++y)
        rows[static_cast<size_t>(y)] = out.data.data() + static_cast<size_t>(y) * out.w * out.c;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

// ---------------------------------------------------------------------------
// JPEG (in-memory, real libjpeg round-trip)

inline std::vector<uint8_t> jpeg_encode(const U8Image& img, int quality) {
    FLOC_CHECK(quality >= 1 && quality <= 100, "jpeg_encode: quality must be in [1,100], got ", quality);
    FLOC_CHECK(img.c == 1 || img.c == 3, "jpeg_encode: only gray or RGB supported");
    jpeg_compress_struct cinfo;
    detail::JpegErr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = detail::jpeg_throwing_error_exit;

    unsigned char* buf = nullptr;
    unsigned long buf_size = 0;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        if (buf) free(buf);
        fail("jpeg_encode: ", jerr.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buf, &buf_size);
    cinfo.image_width = static_cast<JDIMENSION>(img.w);
    cinfo.image_height = static_cast<JDIMENSION>(img.h);
    cinfo.input_components = img.c;
    cinfo.in_color_space = img.c == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(img.data.data() + static_cast<size_t>(cinfo.next_scanline) * img.w * img.c);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    std::vector<uint8_t> out(buf, buf + buf_size);
    free(buf);
    return out;
}

inline U8Image jpeg_decode(const uint8_t* bytes, size_t n) {
    jpeg_decompress_struct cinfo;
    detail::JpegErr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = detail::jpeg_throwing_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        fail("jpeg_decode: ", jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes, static_cast<unsigned long>(n));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    U8Image out;
    out.h = static_cast<int>(cinfo.output_height);
    out.w = static_cast<int>(cinfo.output_width);
    out.c = cinfo.output_components;
    out.data.resize(static_cast<size_t>(out.h) * out.w * out.c);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.data.data() + static_cast<size_t>(cinfo.output_scanline) * out.w * out.c;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

inline U8Image jpeg_decode(const std::vector<uint8_t>& bytes) { return jpeg_decode(bytes.data(), bytes.size()); }

inline void save_jpeg(const std::string& path, const U8Image& img, int quality) {
    const auto bytes = jpeg_encode(img, quality);
    detail::FileHandle fh(path, "wb");
    FLOC_CHECK(fh.f, "save_jpeg: cannot open '", path, "' for writing");
    FLOC_CHECK(std::fwrite(bytes.data(), 1, bytes.size(), fh.f) == bytes.size(), "save_jpeg: short write to '",
               path, "'");
}

// Re-encode through the codec at the given quality; the workhorse of the
// compression augmentation and degradation ops.
inline Image jpeg_roundtrip(const Image& img, int quality) {
    const U8Image decoded = jpeg_decode(jpeg_encode(to_u8(img), quality));
    FLOC_CHECK(decoded.h == img.h && decoded.w == img.w && decoded.c == img.c,
               "jpeg_roundtrip: codec changed image geometry");
    return to_real(decoded);
}

// ---------------------------------------------------------------------------

inline U8Image load_image_file(const std::string& path) {
    detail::FileHandle fh(path, "rb");
    FLOC_CHECK(fh.f, "load_image_file: cannot open '", path, "'");
    uint8_t magic[4] = {0, 0, 0, 0};
    const size_t got = std::fread(magic, 1, 4, fh.f);
    FLOC_CHECK(got >= 3, "load_image_file: '", path, "' is too short to be an image");
    if (magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G') return load_png(path);
    if (magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) {
        std::fseek(fh.f, 0, SEEK_END);
        const long len = std::ftell(fh.f);
        std::fseek(fh.f, 0, SEEK_SET);
        std::vector<uint8_t> bytes(static_cast<size_t>(len));
        FLOC_CHECK(std::fread(bytes.data(), 1, bytes.size(), fh.f) == bytes.size(), "load_image_file: short read");
        return jpeg_decode(bytes);
    }
    fail("load_image_file: '", path, "' is neither PNG nor JPEG");
}

} // namespace floc
