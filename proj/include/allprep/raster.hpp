#pragma once

// Image decoding/encoding (JPG/PNG in, PNG out) and bilinear resizing.

#include <png.h>
#include <jpeglib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "allprep/error.hpp"
#include "allprep/image.hpp"

namespace allprep {

namespace fs = std::filesystem;

inline constexpr Size kModelInputSize{224, 224};

enum class ImageFormat { Png, Jpeg };

namespace detail {

struct DecodedImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> data;
};

inline std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(Errc::FileNotFound, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const fs::path& path,
                             std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(Errc::IoError, "write failed: " + path.string());
}

inline bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

inline bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

// ---- PNG ------------------------------------------------------------------

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  char message[256] = {};
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + n > st->bytes.size()) {
    png_error(png, "unexpected end of PNG data");
  }
  std::memcpy(out, st->bytes.data() + st->pos, n);
  st->pos += n;
}

inline void png_error_to_longjmp(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngReadState*>(png_get_error_ptr(png));
  if (st) std::snprintf(st->message, sizeof(st->message), "%s", msg);
  png_longjmp(png, 1);
}

inline void png_warning_ignore(png_structp, png_const_charp) {}

// Returns an empty message on success. No objects with non-trivial
// destructors are created between setjmp and the end of this function.
inline void decode_png_impl(std::span<const std::uint8_t> bytes, DecodedImage& out,
                            bool keep_gray, PngReadState& st, bool& unsupported) {
  st.bytes = bytes;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st,
                                           png_error_to_longjmp, png_warning_ignore);
  if (!png) {
    std::snprintf(st.message, sizeof(st.message), "png_create_read_struct failed");
    return;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    std::snprintf(st.message, sizeof(st.message), "png_create_info_struct failed");
    return;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    if (st.message[0] == '\0') {
      std::snprintf(st.message, sizeof(st.message), "libpng error");
    }
    return;
  }
  png_set_read_fn(png, &st, png_read_from_memory);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) {
    unsupported = true;
    std::snprintf(st.message, sizeof(st.message), "16-bit PNG is not supported");
    png_destroy_read_struct(&png, &info, nullptr);
    return;
  }
  const bool gray = (color_type & PNG_COLOR_MASK_COLOR) == 0 &&
                    color_type != PNG_COLOR_TYPE_PALETTE;
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (gray && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  const bool out_gray = gray && keep_gray;
  if (gray && !keep_gray) png_set_gray_to_rgb(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.channels = out_gray ? 1 : 3;
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(w) * out.channels) {
    std::snprintf(st.message, sizeof(st.message), "unexpected PNG row layout");
    png_destroy_read_struct(&png, &info, nullptr);
    return;
  }
  out.data.resize(static_cast<std::size_t>(w) * h * out.channels);
  const int passes = png_set_interlace_handling(png);
  for (int pass = 0; pass < passes; ++pass) {
    for (png_uint_32 y = 0; y < h; ++y) {
      png_read_row(png, out.data.data() + static_cast<std::size_t>(y) * w * out.channels,
                   nullptr);
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

inline DecodedImage decode_png(std::span<const std::uint8_t> bytes, bool keep_gray) {
  DecodedImage out;
  PngReadState st;
  bool unsupported = false;
  decode_png_impl(bytes, out, keep_gray, st, unsupported);
  if (st.message[0] != '\0') {
    throw Error(unsupported ? Errc::UnsupportedFormat : Errc::CorruptImage, st.message);
  }
  return out;
}

struct PngWriteState {
  std::vector<std::uint8_t>* sink = nullptr;
  char message[256] = {};
};

inline void png_write_to_memory(png_structp png, png_bytep data, png_size_t n) {
  auto* st = static_cast<PngWriteState*>(png_get_io_ptr(png));
  st->sink->insert(st->sink->end(), data, data + n);
}

inline void png_flush_noop(png_structp) {}

inline void png_write_error(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngWriteState*>(png_get_error_ptr(png));
  if (st) std::snprintf(st->message, sizeof(st->message), "%s", msg);
  png_longjmp(png, 1);
}

inline void encode_png_impl(const std::uint8_t* pixels, int width, int height,
                            int channels, std::vector<std::uint8_t>& sink,
                            PngWriteState& st) {
  st.sink = &sink;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &st,
                                            png_write_error, png_warning_ignore);
  if (!png) {
    std::snprintf(st.message, sizeof(st.message), "png_create_write_struct failed");
    return;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    std::snprintf(st.message, sizeof(st.message), "png_create_info_struct failed");
    return;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return;
  }
  png_set_write_fn(png, &st, png_write_to_memory, png_flush_noop);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline std::vector<std::uint8_t> encode_png(std::span<const std::uint8_t> pixels,
                                            int width, int height, int channels) {
  std::vector<std::uint8_t> sink;
  PngWriteState st;
  encode_png_impl(pixels.data(), width, height, channels, sink, st);
  if (st.message[0] != '\0') throw Error(Errc::IoError, st.message);
  return sink;
}

// ---- JPEG -----------------------------------------------------------------

struct JpegErrorState {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  int warnings = 0;
  char message[JMSG_LENGTH_MAX] = {};
};

inline void jpeg_error_exit_longjmp(j_common_ptr cinfo) {
  auto* st = reinterpret_cast<JpegErrorState*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, st->message);
  std::longjmp(st->jump, 1);
}

// Warnings such as a premature end of data are treated as corruption.
inline void jpeg_emit_message(j_common_ptr cinfo, int level) {
  auto* st = reinterpret_cast<JpegErrorState*>(cinfo->err);
  if (level < 0) {
    if (st->warnings == 0) (*cinfo->err->format_message)(cinfo, st->message);
    ++st->warnings;
  }
}

inline void decode_jpeg_impl(std::span<const std::uint8_t> bytes, DecodedImage& out,
                             JpegErrorState& st, bool& unsupported) {
  jpeg_decompress_struct cinfo;
  cinfo.err = jpeg_std_error(&st.mgr);
  st.mgr.error_exit = jpeg_error_exit_longjmp;
  st.mgr.emit_message = jpeg_emit_message;
  if (setjmp(st.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space == JCS_CMYK || cinfo.jpeg_color_space == JCS_YCCK) {
    unsupported = true;
    std::snprintf(st.message, sizeof(st.message), "CMYK JPEG is not supported");
    jpeg_destroy_decompress(&cinfo);
    return;
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.channels = 3;
  out.data.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data.data() +
                   static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
}

inline DecodedImage decode_jpeg(std::span<const std::uint8_t> bytes) {
  DecodedImage out;
  JpegErrorState st{};
  bool unsupported = false;
  decode_jpeg_impl(bytes, out, st, unsupported);
  if (unsupported) throw Error(Errc::UnsupportedFormat, st.message);
  if (st.message[0] != '\0' || st.warnings > 0) {
    throw Error(Errc::CorruptImage, st.message[0] ? st.message : "JPEG decode failed");
  }
  return out;
}

inline DecodedImage decode_any(std::span<const std::uint8_t> bytes, bool keep_gray,
                               const std::string& name) {
  if (is_png(bytes)) return decode_png(bytes, keep_gray);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw Error(Errc::UnsupportedFormat, name + " is neither PNG nor JPEG");
}

inline double round_half_up(double v) { return std::floor(v + 0.5); }

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(round_half_up(v), 0.0, 255.0));
}

}  // namespace detail

/// .png, .jpg or .jpeg, case-insensitive.
inline bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Reads a PNG or JPEG file. Grayscale sources are expanded to RGB and
/// alpha is dropped, so the result is always 8-bit RGB.
inline RasterImage decode_image(std::span<const std::uint8_t> bytes,
                                const std::string& name = "<memory>") {
  auto d = detail::decode_any(bytes, /*keep_gray=*/false, name);
  return RasterImage(d.width, d.height, std::move(d.data));
}

inline RasterImage load_image(const fs::path& path) {
  return decode_image(detail::read_file_bytes(path), path.string());
}

/// Reads a single-channel PNG (e.g. a saved mask or LAB plane).
inline Plane load_plane(const fs::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  auto d = detail::decode_any(bytes, /*keep_gray=*/true, path.string());
  if (d.channels != 1) {
    throw Error(Errc::UnsupportedFormat, path.string() + " is not a grayscale image");
  }
  return Plane(d.width, d.height, std::move(d.data));
}

/// Mask encoding is 0/255; any value above 127 decodes as foreground.
inline BinaryMask load_mask(const fs::path& path) {
  const Plane p = load_plane(path);
  std::vector<std::uint8_t> bits(p.data().size());
  std::transform(p.data().begin(), p.data().end(), bits.begin(),
                 [](std::uint8_t v) { return v > 127 ? 1 : 0; });
  return BinaryMask(p.width(), p.height(), std::move(bits));
}

inline std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  return detail::encode_png(img.data(), img.width(), img.height(), 3);
}

inline std::vector<std::uint8_t> encode_png(const Plane& plane) {
  return detail::encode_png(plane.data(), plane.width(), plane.height(), 1);
}

inline std::vector<std::uint8_t> encode_png(const BinaryMask& mask) {
  std::vector<std::uint8_t> gray(mask.bits().size());
  std::transform(mask.bits().begin(), mask.bits().end(), gray.begin(),
                 [](std::uint8_t b) -> std::uint8_t { return b ? 255 : 0; });
  return detail::encode_png(gray, mask.width(), mask.height(), 1);
}

namespace detail {

inline void check_parent(const fs::path& path) {
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::is_directory(parent, ec)) {
    throw Error(Errc::IoError, "parent directory does not exist: " + parent.string());
  }
}

}  // namespace detail

/// Lossless PNG writes. Overloads cover RGB images, 8-bit planes and masks.
template <typename T>
  requires requires(const T& t) { encode_png(t); }
void save_image(const T& img, const fs::path& path, ImageFormat format = ImageFormat::Png) {
  if (format != ImageFormat::Png) {
    throw Error(Errc::UnsupportedFormat, "only PNG output is supported");
  }
  detail::check_parent(path);
  detail::write_file_bytes(path, encode_png(img));
}

/// Bilinear resize with half-pixel centres: destination pixel x samples the
/// source at (x + 0.5) * src_w / dst_w - 0.5, clamped to the valid range.
/// Resizing to the source dimensions returns an identical buffer.
inline RasterImage resize_bilinear(const RasterImage& img, Size target = kModelInputSize) {
  if (target.width <= 0 || target.height <= 0) {
    throw Error(Errc::ZeroTarget, "resize target must be non-zero, got " +
                                      std::to_string(target.width) + "x" +
                                      std::to_string(target.height));
  }
  if (img.size() == target) return img;

  struct Tap {
    int i0, i1;
    double w;
  };
  auto taps = [](int src, int dst) {
    std::vector<Tap> t(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int d = 0; d < dst; ++d) {
      double f = (d + 0.5) * scale - 0.5;
      f = std::clamp(f, 0.0, static_cast<double>(src - 1));
      const int i0 = static_cast<int>(std::floor(f));
      const int i1 = std::min(i0 + 1, src - 1);
      t[d] = {i0, i1, f - i0};
    }
    return t;
  };
  const auto xs = taps(img.width(), target.width);
  const auto ys = taps(img.height(), target.height);

  RasterImage out(target.width, target.height);
  const auto src = img.data();
  auto dst = out.data();
  const std::size_t stride = static_cast<std::size_t>(img.width()) * 3;
  for (int y = 0; y < target.height; ++y) {
    const Tap& ty = ys[y];
    const std::uint8_t* r0 = src.data() + ty.i0 * stride;
    const std::uint8_t* r1 = src.data() + ty.i1 * stride;
    for (int x = 0; x < target.width; ++x) {
      const Tap& tx = xs[x];
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - tx.w) * r0[tx.i0 * 3 + c] + tx.w * r0[tx.i1 * 3 + c];
        const double bot = (1.0 - tx.w) * r1[tx.i0 * 3 + c] + tx.w * r1[tx.i1 * 3 + c];
        dst[(static_cast<std::size_t>(y) * target.width + x) * 3 + c] =
            detail::clamp_u8((1.0 - ty.w) * top + ty.w * bot);
      }
    }
  }
  return out;
}

}  // namespace allprep
