#include "volseg/overlay.hpp"

#include <cmath>
#include <csetjmp>
#include <cstdio>

#include <png.h>

#include "volseg/errors.hpp"

namespace volseg {

std::vector<std::uint8_t> render_overlay_rgb(const Volume& vol, const LabelMask& mask,
                                             int slice_index) {
    validate_volume(vol);
    validate_mask(mask, vol.dims);
    if (slice_index < 0 || slice_index >= vol.dims.nz)
        throw param_error("overlay: slice " + std::to_string(slice_index) +
                          " outside [0, " + std::to_string(vol.dims.nz) + ")");

    const int nx = vol.dims.nx, ny = vol.dims.ny, z = slice_index;
    auto background = [&](int x, int y) {
        if (x < 0 || x >= nx || y < 0 || y >= ny) return true;
        return mask.at(x, y, z) == 0;
    };

    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(nx) * ny * 3);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            std::uint8_t* px = &rgb[(static_cast<std::size_t>(y) * nx + x) * 3];
            const bool boundary = mask.at(x, y, z) == 1 &&
                                  (background(x - 1, y) || background(x + 1, y) ||
                                   background(x, y - 1) || background(x, y + 1));
            if (boundary) {
                px[0] = 255;
                px[1] = 0;
                px[2] = 0;
            } else {
                const double v = std::lround(vol.at(x, y, z));
                const std::uint8_t g =
                    static_cast<std::uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
                px[0] = px[1] = px[2] = g;
            }
        }
    return rgb;
}

void write_overlay_png(const Volume& vol, const LabelMask& mask, int slice_index,
                       const std::filesystem::path& path) {
    const std::vector<std::uint8_t> rgb = render_overlay_rgb(vol, mask, slice_index);
    const int nx = vol.dims.nx, ny = vol.dims.ny;

    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw data_error("overlay: cannot write " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw data_error("overlay: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw data_error("overlay: png write failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, nx, ny, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < ny; ++y)
        png_write_row(png, const_cast<png_bytep>(&rgb[static_cast<std::size_t>(y) * nx * 3]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace volseg
