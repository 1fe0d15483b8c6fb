#pragma once

#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "qagent/error.hpp"
#include "qagent/image.hpp"

// PNG and JPEG I/O. Decoded pixels land in ImageF as float/255; encoding
// quantizes with round-half-up. Grayscale sources are replicated across the
// three planes, alpha is dropped.

namespace qagent {

namespace detail {

inline ImageF rgb8_to_imagef(const std::vector<unsigned char>& rgb, int w, int h) {
    ImageF img(w, h);
    float* r = img.plane(0);
    float* g = img.plane(1);
    float* b = img.plane(2);
    const size_t n = static_cast<size_t>(w) * h;
    for (size_t i = 0; i < n; ++i) {
        r[i] = rgb[3 * i + 0] / 255.0f;
        g[i] = rgb[3 * i + 1] / 255.0f;
        b[i] = rgb[3 * i + 2] / 255.0f;
    }
    return img;
}

inline std::vector<unsigned char> imagef_to_rgb8(const ImageF& img) {
    const size_t n = img.plane_size();
    std::vector<unsigned char> rgb(3 * n);
    const float* r = img.plane(0);
    const float* g = img.plane(1);
    const float* b = img.plane(2);
    auto q = [](float s) {
        const float c = std::clamp(s, 0.0f, 1.0f);
        return static_cast<unsigned char>(std::floor(255.0f * c + 0.5f));
    };
    for (size_t i = 0; i < n; ++i) {
        rgb[3 * i + 0] = q(r[i]);
        rgb[3 * i + 1] = q(g[i]);
        rgb[3 * i + 2] = q(b[i]);
    }
    return rgb;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit_throw(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, mgr->message);
    std::longjmp(mgr->jump, 1);
}

inline ImageF decode_jpeg_common(jpeg_decompress_struct& cinfo, JpegErrorMgr& err) {
    if (setjmp(err.jump)) {
        std::string msg = err.message;
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError("jpeg decode failed: " + msg);
    }
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const int w = static_cast<int>(cinfo.output_width);
    const int h = static_cast<int>(cinfo.output_height);
    std::vector<unsigned char> rgb(static_cast<size_t>(w) * h * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* rowptr = &rgb[static_cast<size_t>(cinfo.output_scanline) * w * 3];
        jpeg_read_scanlines(&cinfo, &rowptr, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return rgb8_to_imagef(rgb, w, h);
}

} // namespace detail

inline ImageF load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8)) {
        std::fclose(fp);
        throw DecodeError("not a png file: " + path);
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DecodeError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DecodeError("png decode failed: " + path);
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    std::vector<unsigned char> rgb(static_cast<size_t>(w) * h * 3);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = &rgb[static_cast<size_t>(y) * w * 3];
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return detail::rgb8_to_imagef(rgb, w, h);
}

inline void save_png(const ImageF& img, const std::string& path) {
    std::vector<unsigned char> rgb = detail::imagef_to_rgb8(img);
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("png encode failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = &rgb[static_cast<size_t>(y) * img.width * 3];
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline ImageF load_jpeg(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path);
    jpeg_decompress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = detail::jpeg_error_exit_throw;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(fp);
        throw DecodeError("jpeg decode failed: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    ImageF img = detail::decode_jpeg_common(cinfo, err);
    std::fclose(fp);
    return img;
}

inline std::vector<unsigned char> encode_jpeg(const ImageF& img, int quality) {
    if (quality < 1 || quality > 100)
        throw ParamOutOfRange("encode_jpeg: quality must be in [1,100]");
    std::vector<unsigned char> rgb = detail::imagef_to_rgb8(img);

    jpeg_compress_struct enc;
    detail::JpegErrorMgr eerr;
    enc.err = jpeg_std_error(&eerr.pub);
    eerr.pub.error_exit = detail::jpeg_error_exit_throw;
    unsigned char* buf = nullptr;
    unsigned long buflen = 0;
    if (setjmp(eerr.jump)) {
        jpeg_destroy_compress(&enc);
        if (buf) free(buf);
        throw DecodeError(std::string("jpeg encode failed: ") + eerr.message);
    }
    jpeg_create_compress(&enc);
    jpeg_mem_dest(&enc, &buf, &buflen);
    enc.image_width = static_cast<JDIMENSION>(img.width);
    enc.image_height = static_cast<JDIMENSION>(img.height);
    enc.input_components = 3;
    enc.in_color_space = JCS_RGB;
    jpeg_set_defaults(&enc);
    jpeg_set_quality(&enc, quality, TRUE);
    jpeg_start_compress(&enc, TRUE);
    while (enc.next_scanline < enc.image_height) {
        unsigned char* rowptr = &rgb[static_cast<size_t>(enc.next_scanline) * img.width * 3];
        jpeg_write_scanlines(&enc, &rowptr, 1);
    }
    jpeg_finish_compress(&enc);
    jpeg_destroy_compress(&enc);
    std::vector<unsigned char> out(buf, buf + buflen);
    free(buf);
    return out;
}

inline ImageF decode_jpeg(const std::vector<unsigned char>& bytes) {
    jpeg_decompress_struct dec;
    detail::JpegErrorMgr derr;
    dec.err = jpeg_std_error(&derr.pub);
    derr.pub.error_exit = detail::jpeg_error_exit_throw;
    if (setjmp(derr.jump)) {
        jpeg_destroy_decompress(&dec);
        throw DecodeError(std::string("jpeg decode failed: ") + derr.message);
    }
    jpeg_create_decompress(&dec);
    jpeg_mem_src(&dec, bytes.data(), static_cast<unsigned long>(bytes.size()));
    return detail::decode_jpeg_common(dec, derr);
}

// Encode to JPEG at the given quality and decode the result: the actual
// 8x8 DCT quantization path, not an approximation of it.
inline ImageF jpeg_roundtrip(const ImageF& img, int quality) {
    return decode_jpeg(encode_jpeg(img, quality));
}

// Dispatch on magic bytes; png and jpeg are the supported containers.
inline ImageF load_image(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path);
    unsigned char sig[8] = {0};
    const size_t got = std::fread(sig, 1, 8, fp);
    std::fclose(fp);
    if (got >= 8 && !png_sig_cmp(sig, 0, 8)) return load_png(path);
    if (got >= 2 && sig[0] == 0xFF && sig[1] == 0xD8) return load_jpeg(path);
    throw UnsupportedFormat("unsupported image format: " + path);
}

} // namespace qagent
