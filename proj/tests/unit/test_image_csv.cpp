#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "fsat/io/csv.hpp"
#include "fsat/io/image.hpp"

namespace fsat::io {
namespace {

Tensor gradient_image() {
  Tensor t(Shape{3, 4, 5});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i % 17) / 16.0;
  return t;
}

TEST(Image, QuantizeRoundsAndClamps) {
  const Tensor t(Shape{3, 1, 1}, std::vector<double>{-0.2, 0.5, 1.7});
  const Image8 q = quantize(t);
  EXPECT_EQ(q.rgb, (std::vector<std::uint8_t>{0, 128, 255}));
  EXPECT_EQ(dequantize(q)[1], 128.0 / 255.0);
}

TEST(Image, PpmAndPngRoundTrip) {
  const auto dir = testing::scratch_dir("image");
  const Tensor t = gradient_image();
  const Tensor expected = dequantize(quantize(t));
  for (const char* name : {"x.ppm", "x.png"}) {
    save_image(dir / name, t);
    const Tensor back = load_image(dir / name);
    EXPECT_EQ(back, expected) << name;
  }
  EXPECT_THROW(save_image(dir / "x.bmp", t), ConfigError);
  EXPECT_THROW(load_image(dir / "missing.png"), IoError);
}

TEST(Image, PpmWithComments) {
  const auto dir = testing::scratch_dir("ppm_comment");
  std::ofstream(dir / "c.ppm", std::ios::binary) << "P6\n# made by hand\n2 1\n255\n"
                                                 << std::string("\x01\x02\x03\x04\x05\x06", 6);
  const Image8 img = load_ppm(dir / "c.ppm");
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.rgb[5], 6);
  std::ofstream(dir / "bad.ppm", std::ios::binary) << "P6\n2 1\n255\n\x01";
  EXPECT_THROW(load_ppm(dir / "bad.ppm"), IoError);
}

TEST(Image, DifferenceMap) {
  const Tensor a(Shape{3, 1, 2}, 0.5);
  EXPECT_EQ(difference_map(a, a), Tensor(Shape{3, 1, 2}, 0.0));
  Tensor b = a;
  b[0] = 0.6;
  b[1] = 0.0;
  const Tensor d = difference_map(a, b);
  EXPECT_NEAR(d[0], 0.3, 1e-12);
  EXPECT_EQ(d[1], 1.0);  // 3 * 0.5 clamps
}

TEST(Csv, QuotingRoundTrip) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  const std::vector<CsvRow> rows = {{"x", "a,b", "line\nbreak"}, {"", "\"q\"", "3"}};
  std::string text;
  for (const auto& r : rows) text += csv_line(r);
  EXPECT_EQ(parse_csv(text), rows);
  EXPECT_EQ(parse_csv("a,b\n\nc,d\n"), (std::vector<CsvRow>{{"a", "b"}, {"c", "d"}}));
}

TEST(Csv, FileRoundTrip) {
  const auto dir = testing::scratch_dir("csv") / "nested";
  write_csv(dir / "t.csv", {"h1", "h2"}, {{"1", "2"}, {"3", "4"}});
  EXPECT_EQ(read_csv(dir / "t.csv"), (std::vector<CsvRow>{{"h1", "h2"}, {"1", "2"}, {"3", "4"}}));
}

}  // namespace
}  // namespace fsat::io
