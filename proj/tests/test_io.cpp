#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "dcf/io.hpp"
#include "doctest.h"

using namespace dcf;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("dcf_io_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("crc32 known vector") {
  const char* text = "123456789";
  CHECK(crc32(reinterpret_cast<const std::uint8_t*>(text), 9) == 0xCBF43926u);
}

TEST_CASE("weight file round trip is 32-bit exact") {
  TempDir dir;
  NetworkSpec net = reference_net(77, Padding::Same);
  // Quantize in-memory weights to what the file stores, then compare exactly.
  for (LayerSpec& layer : net.layers) {
    if (layer.kind == LayerKind::Conv)
      for (double& w : layer.bank.weights) w = static_cast<double>(static_cast<float>(w));
    if (layer.kind == LayerKind::Fc)
      for (double& w : layer.fc.weights) w = static_cast<double>(static_cast<float>(w));
  }
  const std::string path = dir.file("net.dcfw");
  save_network(net, path);
  const NetworkSpec loaded = load_network(path);

  REQUIRE(loaded.layers.size() == net.layers.size());
  CHECK(loaded.inputSide == 32);
  CHECK(loaded.inputChannels == 1);
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    CHECK(loaded.layers[li].kind == net.layers[li].kind);
    if (net.layers[li].kind == LayerKind::Conv) {
      CHECK(loaded.layers[li].bank.weights == net.layers[li].bank.weights);
      CHECK(loaded.layers[li].bank.biases == net.layers[li].bank.biases);
    }
    if (net.layers[li].kind == LayerKind::Fc)
      CHECK(loaded.layers[li].fc.weights == net.layers[li].fc.weights);
  }

  SUBCASE("same bytes on re-save") {
    const std::string again = dir.file("net2.dcfw");
    save_network(loaded, again);
    CHECK(slurp(path) == slurp(again));
  }
}

TEST_CASE("weight file corruption detection") {
  TempDir dir;
  const std::string path = dir.file("net.dcfw");
  save_network(reference_net(78, Padding::Same), path);
  std::vector<std::uint8_t> bytes = slurp(path);

  SUBCASE("flipped payload byte fails the CRC") {
    bytes[bytes.size() / 2] ^= 0xFF;
    spit(path, bytes);
    try {
      load_network(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.kind == IoErrorKind::Corrupt);
    }
  }
  SUBCASE("truncation detected") {
    bytes.resize(bytes.size() - 10);
    spit(path, bytes);
    try {
      load_network(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.kind == IoErrorKind::Corrupt);
    }
  }
  SUBCASE("bad magic detected") {
    bytes[0] = 'X';
    // Restore the CRC so only the magic is wrong.
    const std::uint32_t crc = crc32(bytes.data(), bytes.size() - 4);
    for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = (crc >> (8 * i)) & 0xFF;
    spit(path, bytes);
    CHECK_THROWS_AS(load_network(path), IoError);
  }
}

TEST_CASE("geometry-inconsistent weight file is rejected as such") {
  TempDir dir;
  NetworkSpec net = reference_net(79, Padding::Same);
  net.layers[net.fc_layer_index()].fc = FcWeights(2, 8, 8, 8);  // channel mismatch vs conv stack
  const std::string path = dir.file("bad.dcfw");
  save_network(net, path);
  try {
    load_network(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.kind == IoErrorKind::Geometry);
  }
}

TEST_CASE("regressor file round trip") {
  TempDir dir;
  std::mt19937 g(5);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  RegressorWeights reg;
  reg.hidden = FcWeights(100, 8, 8, 16);
  reg.output = FcWeights(4, 1, 1, 100);
  for (double& w : reg.hidden.weights) w = static_cast<double>(static_cast<float>(dist(g)));
  for (double& w : reg.output.weights) w = static_cast<double>(static_cast<float>(dist(g)));
  const std::string path = dir.file("reg.dcfw");
  save_regressor(reg, path);
  const RegressorWeights loaded = load_regressor(path);
  CHECK(loaded.hidden.weights == reg.hidden.weights);
  CHECK(loaded.output.weights == reg.output.weights);
}

TEST_CASE("pgm io") {
  TempDir dir;
  SUBCASE("bytes to values and back") {
    const std::string path = dir.file("two.pgm");
    {
      std::ofstream out(path, std::ios::binary);
      out << "P5\n2 2\n255\n";
      const unsigned char px[4] = {0, 128, 255, 51};
      out.write(reinterpret_cast<const char*>(px), 4);
    }
    const Tensor img = read_pgm(path);
    REQUIRE(img.height == 2);
    REQUIRE(img.width == 2);
    CHECK(img.values[0] == 0.0);
    CHECK(img.values[1] == doctest::Approx(128.0 / 255.0));
    CHECK(img.values[2] == 1.0);
    CHECK(img.values[3] == doctest::Approx(0.2));
  }
  SUBCASE("write-read round trip preserves bytes") {
    std::mt19937 g(7);
    Tensor img(5, 9, 1);
    for (double& v : img.values) v = (g() % 256) / 255.0;
    const std::string a = dir.file("a.pgm");
    const std::string b = dir.file("b.pgm");
    write_pgm(img, a);
    write_pgm(read_pgm(a), b);
    CHECK(slurp(a) == slurp(b));
  }
  SUBCASE("comments are skipped") {
    const std::string path = dir.file("comment.pgm");
    {
      std::ofstream out(path, std::ios::binary);
      out << "P5\n# a comment line\n1 1\n# another\n255\n";
      const unsigned char px = 42;
      out.write(reinterpret_cast<const char*>(&px), 1);
    }
    CHECK(read_pgm(path).values[0] == doctest::Approx(42.0 / 255.0));
  }
  SUBCASE("wrong maxval rejected") {
    const std::string path = dir.file("bad.pgm");
    {
      std::ofstream out(path, std::ios::binary);
      out << "P5\n1 1\n65535\n";
      out.put(0);
      out.put(0);
    }
    CHECK_THROWS_WITH_AS(read_pgm(path), doctest::Contains("maxval"), IoError);
  }
}

TEST_CASE("format_detections") {
  std::vector<Detection> dets;
  dets.push_back({10.4, 20.6, 32.0, 32.0, 0.5, 1.0});
  dets.push_back({1.0, 2.0, 64.0, 64.0, 0.75, 0.5});
  const std::string text = format_detections(dets);
  CHECK(text == "1 2 64 64 0.750000 0.5000\n10 21 32 32 0.500000 1.0000\n");
}

TEST_CASE("config file parsing") {
  TempDir dir;
  const std::string path = dir.file("cfg");
  {
    std::ofstream out(path);
    out << "# comment\n\nepochs = 12\nbatch=32  # trailing comment\n";
  }
  const auto values = parse_config_file(path, {"epochs", "batch"});
  CHECK(values.at("epochs") == 12);
  CHECK(values.at("batch") == 32);

  SUBCASE("unknown key names itself") {
    std::ofstream out(path, std::ios::app);
    out << "bogus=1\n";
    out.close();
    try {
      parse_config_file(path, {"epochs", "batch"});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.key == "bogus");
    }
  }
  SUBCASE("non-numeric value rejected") {
    std::ofstream out(path, std::ios::app);
    out << "epochs=fast\n";
    out.close();
    CHECK_THROWS_AS(parse_config_file(path, {"epochs", "batch"}), ConfigError);
  }
}
