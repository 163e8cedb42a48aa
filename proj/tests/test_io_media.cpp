#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include <unistd.h>

#include "dkf/io_media.hpp"

using namespace dkf;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dkf_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

PlanarImage random_image(int w, int h, Subsampling ss, unsigned seed) {
  std::mt19937 rng(seed);
  PlanarImage img(w, h, ss);
  for (auto& p : img.planes)
    for (auto& v : p.samples()) v = static_cast<std::uint8_t>(rng());
  return img;
}

void write_rgb_png(const fs::path& path, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  std::vector<png_byte> px(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < px.size(); i += 3) {
    px[i] = r;
    px[i + 1] = g;
    px[i + 2] = b;
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = w;
  image.height = h;
  image.format = PNG_FORMAT_RGB;
  ASSERT_TRUE(png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr));
}

}  // namespace

TEST(Y4m, ParsesFourByFour) {
  auto data = bytes_of("YUV4MPEG2 W4 H4 F25:1 Ip A1:1 C420jpeg\nFRAME\n");
  for (int i = 0; i < 24; ++i) data.push_back(static_cast<std::uint8_t>(i));
  const auto img = parse_y4m(data);
  EXPECT_EQ(img.width, 4);
  EXPECT_EQ(img.height, 4);
  EXPECT_EQ(img.planes[1].width(), 2);
  EXPECT_EQ(img.planes[1].height(), 2);
  EXPECT_EQ(img.luma().at(3, 3), 15);
  EXPECT_EQ(img.planes[1].at(0, 0), 16);
  EXPECT_EQ(img.planes[2].at(1, 1), 23);
}

TEST(Y4m, TrailingFramesAreIgnored) {
  auto data = bytes_of("YUV4MPEG2 W2 H2 C444\nFRAME\n");
  for (int i = 0; i < 12; ++i) data.push_back(1);
  const auto second = bytes_of("FRAME\n");
  data.insert(data.end(), second.begin(), second.end());
  for (int i = 0; i < 12; ++i) data.push_back(2);
  const auto img = parse_y4m(data);
  EXPECT_EQ(img.subsampling, Subsampling::k444);
  for (const auto& p : img.planes)
    for (auto v : p.samples()) EXPECT_EQ(v, 1);
}

TEST(Y4m, HeaderErrors) {
  EXPECT_THROW(parse_y4m({}), ParseError);
  EXPECT_THROW(parse_y4m(bytes_of("YUV4MPEG2 W4 H4 C422\nFRAME\n")), UnsupportedFormat);
  EXPECT_THROW(parse_y4m(bytes_of("YUV4MPEG W4 H4\nFRAME\n")), ParseError);
  try {
    parse_y4m(bytes_of("YUV4MPEG2 Wx H4\nFRAME\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("W"), std::string::npos);
  }
  try {
    parse_y4m(bytes_of("YUV4MPEG2 W4\nFRAME\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("H"), std::string::npos);
  }
  EXPECT_THROW(parse_y4m(bytes_of("YUV4MPEG2 W4 H4\nFRAME\n\x01\x02")), ParseError);
  EXPECT_THROW(parse_y4m(bytes_of("YUV4MPEG2 W4 H4\n")), ParseError);
}

TEST(Y4m, OneByOneByteCount) {
  PlanarImage img(1, 1, Subsampling::k420, 9);
  const auto out = serialize_y4m(img);
  const std::string header = "YUV4MPEG2 W1 H1 F25:1 Ip A1:1 C420jpeg\nFRAME\n";
  ASSERT_EQ(out.size(), header.size() + 3);
  EXPECT_TRUE(std::equal(header.begin(), header.end(), out.begin()));
}

TEST(Y4m, FileRoundTrip) {
  for (auto ss : {Subsampling::k420, Subsampling::k444}) {
    const auto img = random_image(37, 19, ss, 11);
    const auto path = scratch("rt.y4m").string();
    write_y4m(img, path);
    EXPECT_EQ(read_y4m(path), img);
    // read followed by write reproduces the file bytes as well.
    const auto before = detail::read_file(path);
    write_y4m(read_y4m(path), path);
    EXPECT_EQ(detail::read_file(path), before);
  }
}

TEST(Y4m, UnwritablePath) {
  EXPECT_THROW(write_y4m(PlanarImage(2, 2, Subsampling::k420), "/nonexistent/dir/x.y4m"), IoError);
  EXPECT_THROW(read_y4m("/nonexistent/dir/x.y4m"), IoError);
}

TEST(Colour, GrayMapsToNeutral) {
  const auto ycc = rgb_to_ycc({128, 128, 128});
  EXPECT_EQ(ycc.y, 128);
  EXPECT_EQ(ycc.cb, 128);
  EXPECT_EQ(ycc.cr, 128);
}

TEST(Colour, RoundTripWithinOneForEveryColour) {
  int worst = 0;
  for (int r = 0; r < 256; ++r)
    for (int g = 0; g < 256; ++g)
      for (int b = 0; b < 256; ++b) {
        const auto back = ycc_to_rgb(rgb_to_ycc({std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)}));
        worst = std::max({worst, std::abs(back.r - r), std::abs(back.g - g), std::abs(back.b - b)});
      }
  EXPECT_LE(worst, 1);
}

TEST(Png, WhiteAndGray) {
  const auto white = scratch("white.png");
  write_rgb_png(white, 2, 2, 255, 255, 255);
  const auto w = read_png(white.string());
  for (auto v : w.luma().samples()) EXPECT_EQ(v, 255);

  const auto gray = scratch("gray.png");
  write_rgb_png(gray, 3, 3, 128, 128, 128);
  const auto g = read_image(gray.string());
  EXPECT_EQ(g.planes[1].width(), 2);
  for (const auto& p : g.planes)
    for (auto v : p.samples()) EXPECT_EQ(v, 128);
}

TEST(Png, WriteReadKeepsLumaClose) {
  const auto img = [] {
    PlanarImage im(16, 8, Subsampling::k444);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 16; ++x) im.luma().at(x, y) = static_cast<std::uint8_t>(16 * x);
    return im;
  }();
  const auto path = scratch("ramp.png").string();
  write_image(img, path);
  const auto back = read_png(path, Subsampling::k444);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_NEAR(back.luma().at(x, y), img.luma().at(x, y), 1);
}

TEST(Png, SixteenBitAndPalettedAreRejected) {
  const auto deep = scratch("deep.png");
  {
    std::vector<std::uint16_t> px(4 * 3, 40000);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = 2;
    image.height = 2;
    image.format = PNG_FORMAT_LINEAR_RGB;
    ASSERT_TRUE(png_image_write_to_file(&image, deep.c_str(), 0, px.data(), 0, nullptr));
  }
  EXPECT_THROW(read_png(deep.string()), UnsupportedFormat);

  const auto pal = scratch("pal.png");
  {
    std::vector<png_byte> idx = {0, 1, 1, 0};
    std::vector<png_byte> cmap = {255, 0, 0, 0, 0, 255};
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = 2;
    image.height = 2;
    image.format = PNG_FORMAT_RGB_COLORMAP;
    image.colormap_entries = 2;
    ASSERT_TRUE(png_image_write_to_file(&image, pal.c_str(), 0, idx.data(), 0, cmap.data()));
  }
  EXPECT_THROW(read_png(pal.string()), UnsupportedFormat);
}

TEST(Png, GarbageIsParseError) {
  const auto path = scratch("junk.png").string();
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5};
  detail::write_file(path, junk);
  EXPECT_THROW(read_png(path), ParseError);
}
