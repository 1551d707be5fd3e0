#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include <fmt/format.h>
#include <png.h>

#include "tlsspec/dataset.hpp"

namespace tlsspec::dataset {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

GrayImage to_gray8(const spectro::SpectroscopyMap& map) {
    GrayImage img;
    img.height = map.rows();
    img.width = map.cols();
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 0);
    const double lo = map.P.minCoeff();
    const double hi = map.P.maxCoeff();
    if (!(hi > lo)) return img;
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < img.width; ++j) {
            const double x = (map.P(i, j) - lo) / (hi - lo);
            img.pixels[static_cast<std::size_t>(i) * img.width + j] =
                static_cast<std::uint8_t>(std::clamp(std::floor(255.0 * x), 0.0, 255.0));
        }
    }
    return img;
}

void export_png(const spectro::SpectroscopyMap& map, const std::filesystem::path& path) {
    const GrayImage img = to_gray8(map);
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw std::runtime_error(fmt::format("cannot write {}", path.string()));

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error(fmt::format("PNG encoding failed for {}", path.string()));
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int i = 0; i < img.height; ++i) {
        png_write_row(png, img.pixels.data() + static_cast<std::size_t>(i) * img.width);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

GrayImage read_png_gray(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw std::runtime_error(fmt::format("cannot read PNG {}: {}", path.string(), image.message));
    }
    image.format = PNG_FORMAT_GRAY;
    GrayImage out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw std::runtime_error(fmt::format("cannot decode PNG {}: {}", path.string(), image.message));
    }
    return out;
}

}  // namespace tlsspec::dataset
