#include "ctdn/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace ctdn::png {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

void write_png(const std::string& path, int h, int w, int color_type,
               const std::vector<std::vector<uint8_t>>& rows, const std::vector<Rgb>* palette) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    check(f != nullptr, "png: cannot open '" + path + "' for writing");
    PngWriter wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    check(wr.png, "png: writer allocation failed");
    wr.info = png_create_info_struct(wr.png);
    check(wr.info, "png: info allocation failed");
    if (setjmp(png_jmpbuf(wr.png))) throw std::runtime_error("png: write error for '" + path + "'");
    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> pal;
    if (palette) {
        for (const auto& c : *palette) pal.push_back({c[0], c[1], c[2]});
        png_set_PLTE(wr.png, wr.info, pal.data(), static_cast<int>(pal.size()));
    }
    png_write_info(wr.png, wr.info);
    for (const auto& row : rows)
        png_write_row(wr.png, const_cast<png_bytep>(row.data()));
    png_write_end(wr.png, nullptr);
}

}  // namespace

const std::vector<Rgb>& class_palette() {
    static const std::vector<Rgb> palette = {
        {0, 0, 0},      {230, 25, 75},  {60, 180, 75},   {255, 225, 25},
        {0, 130, 200},  {245, 130, 48}, {145, 30, 180},  {70, 240, 240},
        {240, 50, 230}, {210, 245, 60}, {250, 190, 212}, {0, 128, 128},
        {220, 190, 255},{170, 110, 40}, {255, 250, 200}, {128, 128, 128}};
    return palette;
}

void write_rgb(const std::string& path, const ImageTensor& image) {
    std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(image.h));
    for (int y = 0; y < image.h; ++y) {
        rows[y].resize(static_cast<size_t>(image.w) * 3);
        for (int x = 0; x < image.w; ++x)
            for (int c = 0; c < 3; ++c)
                rows[y][static_cast<size_t>(x) * 3 + c] = static_cast<uint8_t>(
                    std::lround(std::clamp(image.at(y, x, c), 0.0, 1.0) * 255.0));
    }
    write_png(path, image.h, image.w, PNG_COLOR_TYPE_RGB, rows, nullptr);
}

ImageTensor read_rgb(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    check(f != nullptr, "png: cannot open '" + path + "'");
    PngReader rd;
    rd.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    check(rd.png, "png: reader allocation failed");
    rd.info = png_create_info_struct(rd.png);
    check(rd.info, "png: info allocation failed");
    if (setjmp(png_jmpbuf(rd.png))) throw std::runtime_error("png: read error for '" + path + "'");
    png_init_io(rd.png, f.get());
    png_read_info(rd.png, rd.info);
    png_set_expand(rd.png);          // palette/gray -> rgb, <8bit -> 8bit
    png_set_strip_16(rd.png);
    png_set_strip_alpha(rd.png);
    png_set_gray_to_rgb(rd.png);
    png_read_update_info(rd.png, rd.info);
    const int h = static_cast<int>(png_get_image_height(rd.png, rd.info));
    const int w = static_cast<int>(png_get_image_width(rd.png, rd.info));
    check(png_get_rowbytes(rd.png, rd.info) == static_cast<size_t>(w) * 3,
          "png: unexpected row size in '" + path + "'");
    ImageTensor img = ImageTensor::zeros(h, w);
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(rd.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
    }
    return img;
}

void write_indexed(const std::string& path, const Eigen::MatrixXi& labels,
                   const std::vector<Rgb>& palette) {
    check_arg(labels.minCoeff() >= 0 &&
                  labels.maxCoeff() < static_cast<int>(palette.size()),
              "png: label outside palette range");
    std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(labels.rows()));
    for (Eigen::Index y = 0; y < labels.rows(); ++y) {
        rows[y].resize(static_cast<size_t>(labels.cols()));
        for (Eigen::Index x = 0; x < labels.cols(); ++x)
            rows[y][static_cast<size_t>(x)] = static_cast<uint8_t>(labels(y, x));
    }
    write_png(path, static_cast<int>(labels.rows()), static_cast<int>(labels.cols()),
              PNG_COLOR_TYPE_PALETTE, rows, &palette);
}

Eigen::MatrixXi read_indexed(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    check(f != nullptr, "png: cannot open '" + path + "'");
    PngReader rd;
    rd.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    check(rd.png, "png: reader allocation failed");
    rd.info = png_create_info_struct(rd.png);
    check(rd.info, "png: info allocation failed");
    if (setjmp(png_jmpbuf(rd.png))) throw std::runtime_error("png: read error for '" + path + "'");
    png_init_io(rd.png, f.get());
    png_read_info(rd.png, rd.info);
    const int color = png_get_color_type(rd.png, rd.info);
    check(color == PNG_COLOR_TYPE_PALETTE || color == PNG_COLOR_TYPE_GRAY,
          "png: '" + path + "' is not an indexed or grayscale mask");
    if (png_get_bit_depth(rd.png, rd.info) < 8) png_set_packing(rd.png);
    png_read_update_info(rd.png, rd.info);
    const int h = static_cast<int>(png_get_image_height(rd.png, rd.info));
    const int w = static_cast<int>(png_get_image_width(rd.png, rd.info));
    Eigen::MatrixXi labels(h, w);
    std::vector<uint8_t> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        png_read_row(rd.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) labels(y, x) = row[static_cast<size_t>(x)];
    }
    return labels;
}

void write_gray(const std::string& path, const Mat& values) {
    std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(values.rows()));
    for (Eigen::Index y = 0; y < values.rows(); ++y) {
        rows[y].resize(static_cast<size_t>(values.cols()));
        for (Eigen::Index x = 0; x < values.cols(); ++x)
            rows[y][static_cast<size_t>(x)] =
                static_cast<uint8_t>(std::lround(std::clamp(values(y, x), 0.0, 1.0) * 255.0));
    }
    write_png(path, static_cast<int>(values.rows()), static_cast<int>(values.cols()),
              PNG_COLOR_TYPE_GRAY, rows, nullptr);
}

}  // namespace ctdn::png
