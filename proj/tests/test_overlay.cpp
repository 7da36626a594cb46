#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <vector>

#include "volseg/errors.hpp"
#include "volseg/overlay.hpp"
#include "volseg/volume.hpp"

using namespace volseg;
namespace fs = std::filesystem;

namespace {

Volume grey_ramp(Dims d) {
    Volume v = make_volume(d, {1, 1, 1}, {0, 0, 0}, UnitTag::Grey);
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x)
                v.at(x, y, z) = static_cast<float>((x * 7 + y * 3 + z) % 256);
    return v;
}

std::uint8_t expected_grey(float v) {
    const double r = std::lround(v);
    return static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

}  // namespace

TEST_CASE("empty mask renders the plain greyscale slice") {
    const Dims d{9, 7, 4};
    const Volume vol = grey_ramp(d);
    const LabelMask mask = make_mask(d);
    for (int z = 0; z < d.nz; ++z) {
        const auto rgb = render_overlay_rgb(vol, mask, z);
        REQUIRE(rgb.size() == static_cast<std::size_t>(d.nx) * d.ny * 3);
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::uint8_t g = expected_grey(vol.at(x, y, z));
                const std::uint8_t* px = &rgb[(static_cast<std::size_t>(y) * d.nx + x) * 3];
                CHECK(px[0] == g);
                CHECK(px[1] == g);
                CHECK(px[2] == g);
            }
    }
}

TEST_CASE("out-of-range values clamp to the greyscale limits") {
    const Dims d{3, 1, 1};
    Volume vol = make_volume(d, {1, 1, 1}, {0, 0, 0}, UnitTag::HU);
    vol.at(0, 0, 0) = -41.0f;
    vol.at(1, 0, 0) = 300.5f;
    vol.at(2, 0, 0) = 127.4f;
    const auto rgb = render_overlay_rgb(vol, make_mask(d), 0);
    CHECK(rgb[0] == 0);
    CHECK(rgb[3] == 255);
    CHECK(rgb[6] == 127);
}

TEST_CASE("full-slice mask draws the contour only along the image border") {
    const Dims d{8, 6, 3};
    const Volume vol = grey_ramp(d);
    LabelMask mask = make_mask(d);
    for (auto& v : mask.labels) v = 1;
    const auto rgb = render_overlay_rgb(vol, mask, 1);
    for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
            const std::uint8_t* px = &rgb[(static_cast<std::size_t>(y) * d.nx + x) * 3];
            const bool border = x == 0 || x == d.nx - 1 || y == 0 || y == d.ny - 1;
            const bool red = px[0] == 255 && px[1] == 0 && px[2] == 0;
            CHECK(red == border);
        }
}

TEST_CASE("contour pixels equal an independent boundary scan") {
    const Dims d{8, 8, 8};
    const Volume vol = grey_ramp(d);
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        LabelMask mask = make_mask(d);
        for (auto& v : mask.labels) v = static_cast<std::uint8_t>(rng() % 2);
        const int z = static_cast<int>(rng() % d.nz);

        std::set<std::pair<int, int>> expected;
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                if (mask.at(x, y, z) != 1) continue;
                const int dx[] = {-1, 1, 0, 0};
                const int dy[] = {0, 0, -1, 1};
                for (int n = 0; n < 4; ++n) {
                    const int ax = x + dx[n], ay = y + dy[n];
                    const bool bg = ax < 0 || ax >= d.nx || ay < 0 || ay >= d.ny ||
                                    mask.at(ax, ay, z) == 0;
                    if (bg) {
                        expected.insert({x, y});
                        break;
                    }
                }
            }

        const auto rgb = render_overlay_rgb(vol, mask, z);
        std::set<std::pair<int, int>> got;
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::uint8_t* px = &rgb[(static_cast<std::size_t>(y) * d.nx + x) * 3];
                if (px[0] == 255 && px[1] == 0 && px[2] == 0) got.insert({x, y});
            }
        CHECK(got == expected);
    }
}

TEST_CASE("png output starts with the png signature") {
    const Dims d{16, 12, 2};
    const Volume vol = grey_ramp(d);
    LabelMask mask = make_mask(d);
    for (int y = 3; y < 8; ++y)
        for (int x = 4; x < 10; ++x) mask.at(x, y, 1) = 1;

    const fs::path path = fs::temp_directory_path() / "volseg_overlay_test.png";
    write_overlay_png(vol, mask, 1, path);
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    CHECK(sig[0] == 0x89);
    CHECK(sig[1] == 'P');
    CHECK(sig[2] == 'N');
    CHECK(sig[3] == 'G');
    CHECK(fs::file_size(path) > 8);
    fs::remove(path);
}

TEST_CASE("bad slice index or mismatched mask is rejected") {
    const Dims d{6, 6, 6};
    const Volume vol = grey_ramp(d);
    const LabelMask mask = make_mask(d);
    CHECK_THROWS_AS(render_overlay_rgb(vol, mask, -1), param_error);
    CHECK_THROWS_AS(render_overlay_rgb(vol, mask, 6), param_error);
    const LabelMask wrong = make_mask({6, 6, 5});
    CHECK_THROWS_AS(render_overlay_rgb(vol, wrong, 0), data_error);
}
