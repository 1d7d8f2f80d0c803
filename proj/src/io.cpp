#include "dcf/io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dcf {

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {

constexpr std::uint8_t kKindConv = 1;
constexpr std::uint8_t kKindPool = 2;
constexpr std::uint8_t kKindLcn = 3;
constexpr std::uint8_t kKindFc = 4;
constexpr std::uint8_t kKindSoftmax = 5;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw IoError(IoErrorKind::Corrupt, "weight file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
  }
};

std::vector<std::uint8_t> serialize(const NetworkSpec& net) {
  std::vector<std::uint8_t> out;
  out.push_back('D');
  out.push_back('C');
  out.push_back('F');
  out.push_back('W');
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const LayerSpec& layer : net.layers) {
    switch (layer.kind) {
      case LayerKind::Conv:
        out.push_back(kKindConv);
        put_u32(out, static_cast<std::uint32_t>(layer.bank.count));
        put_u32(out, static_cast<std::uint32_t>(layer.bank.size));
        put_u32(out, static_cast<std::uint32_t>(layer.bank.inChannels));
        put_u32(out, 1);  // padding tag: only same-padding models are persisted for now
        for (double w : layer.bank.weights) put_f32(out, w);
        for (double b : layer.bank.biases) put_f32(out, b);
        break;
      case LayerKind::Pool:
        out.push_back(kKindPool);
        put_u32(out, static_cast<std::uint32_t>(layer.poolSize));
        break;
      case LayerKind::Lcn:
        out.push_back(kKindLcn);
        put_u32(out, static_cast<std::uint32_t>(layer.lcn.r));
        put_f32(out, layer.lcn.kappa);
        put_f32(out, layer.lcn.alpha);
        put_f32(out, layer.lcn.beta);
        break;
      case LayerKind::Fc:
        out.push_back(kKindFc);
        put_u32(out, static_cast<std::uint32_t>(layer.fc.outCount));
        put_u32(out, static_cast<std::uint32_t>(layer.fc.inHeight));
        put_u32(out, static_cast<std::uint32_t>(layer.fc.inWidth));
        put_u32(out, static_cast<std::uint32_t>(layer.fc.inChannels));
        for (double w : layer.fc.weights) put_f32(out, w);
        for (double b : layer.fc.biases) put_f32(out, b);
        break;
      case LayerKind::Softmax:
        out.push_back(kKindSoftmax);
        break;
    }
  }
  put_u32(out, crc32(out.data(), out.size()));
  return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::Unreadable, "cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  return buf;
}

NetworkSpec deserialize(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < 14) throw IoError(IoErrorKind::Corrupt, "weight file too short");
  const std::uint32_t stored = static_cast<std::uint32_t>(buf[buf.size() - 4]) |
                               (static_cast<std::uint32_t>(buf[buf.size() - 3]) << 8) |
                               (static_cast<std::uint32_t>(buf[buf.size() - 2]) << 16) |
                               (static_cast<std::uint32_t>(buf[buf.size() - 1]) << 24);
  if (crc32(buf.data(), buf.size() - 4) != stored)
    throw IoError(IoErrorKind::Corrupt, "weight file CRC mismatch");

  Reader r{buf};
  if (r.u8() != 'D' || r.u8() != 'C' || r.u8() != 'F' || r.u8() != 'W')
    throw IoError(IoErrorKind::Corrupt, "bad magic, not a DCFW file");
  const std::uint16_t version = r.u16();
  if (version != 1)
    throw IoError(IoErrorKind::Corrupt, "unsupported DCFW version " + std::to_string(version));
  const std::uint32_t layerCount = r.u32();
  if (layerCount > 1024) throw IoError(IoErrorKind::Corrupt, "implausible layer count");

  NetworkSpec net;
  for (std::uint32_t li = 0; li < layerCount; ++li) {
    LayerSpec layer;
    const std::uint8_t kind = r.u8();
    switch (kind) {
      case kKindConv: {
        layer.kind = LayerKind::Conv;
        const std::uint32_t count = r.u32();
        const std::uint32_t size = r.u32();
        const std::uint32_t inCh = r.u32();
        r.u32();  // padding tag
        if (count == 0 || size == 0 || inCh == 0 || count > 4096 || size > 1024 || inCh > 4096)
          throw IoError(IoErrorKind::Corrupt, "implausible conv geometry");
        layer.bank = KernelBank(static_cast<int>(count), static_cast<int>(size),
                                static_cast<int>(inCh));
        for (double& w : layer.bank.weights) w = r.f32();
        for (double& b : layer.bank.biases) b = r.f32();
        break;
      }
      case kKindPool:
        layer.kind = LayerKind::Pool;
        layer.poolSize = static_cast<int>(r.u32());
        if (layer.poolSize < 1 || layer.poolSize > 64)
          throw IoError(IoErrorKind::Corrupt, "implausible pool size");
        break;
      case kKindLcn:
        layer.kind = LayerKind::Lcn;
        layer.lcn.r = static_cast<int>(r.u32());
        layer.lcn.kappa = r.f32();
        layer.lcn.alpha = r.f32();
        layer.lcn.beta = r.f32();
        if (layer.lcn.r < 1 || layer.lcn.kappa <= 0.0 || layer.lcn.beta <= 0.0)
          throw IoError(IoErrorKind::Corrupt, "implausible normalization parameters");
        break;
      case kKindFc: {
        layer.kind = LayerKind::Fc;
        const std::uint32_t outCount = r.u32();
        const std::uint32_t inH = r.u32();
        const std::uint32_t inW = r.u32();
        const std::uint32_t inCh = r.u32();
        if (outCount == 0 || inH == 0 || inW == 0 || inCh == 0 || outCount > 65536 ||
            inH > 4096 || inW > 4096 || inCh > 4096)
          throw IoError(IoErrorKind::Corrupt, "implausible FC geometry");
        layer.fc = FcWeights(static_cast<int>(outCount), static_cast<int>(inH),
                             static_cast<int>(inW), static_cast<int>(inCh));
        for (double& w : layer.fc.weights) w = r.f32();
        for (double& b : layer.fc.biases) b = r.f32();
        break;
      }
      case kKindSoftmax:
        layer.kind = LayerKind::Softmax;
        break;
      default:
        throw IoError(IoErrorKind::Corrupt, "unknown layer kind tag " + std::to_string(kind));
    }
    net.layers.push_back(std::move(layer));
  }
  if (r.pos + 4 != buf.size())
    throw IoError(IoErrorKind::Corrupt, "trailing bytes in weight file");
  return net;
}

// Reconstructs the model window side by walking the chain backwards from the
// FC geometry (all persisted convolutions are same-padding).
void restore_geometry(NetworkSpec& net) {
  const int fcIdx = net.fc_layer_index();
  if (fcIdx < 0) return;
  int side = net.layers[fcIdx].fc.inHeight;
  for (int i = fcIdx - 1; i >= 0; --i)
    if (net.layers[i].kind == LayerKind::Pool) side *= net.layers[i].poolSize;
  net.inputSide = side;
  for (const LayerSpec& layer : net.layers)
    if (layer.kind == LayerKind::Conv) {
      net.inputChannels = layer.bank.inChannels;
      break;
    }
  if (net.inputChannels == 0) net.inputChannels = net.layers[fcIdx].fc.inChannels;
}

}  // namespace

void save_network(const NetworkSpec& net, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::Unreadable, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(IoErrorKind::Unreadable, "short write on " + path);
}

NetworkSpec load_network(const std::string& path) {
  NetworkSpec net = deserialize(read_file(path));
  restore_geometry(net);
  try {
    net.validate(Padding::Same);
  } catch (const std::invalid_argument& e) {
    throw IoError(IoErrorKind::Geometry, std::string("inconsistent model geometry: ") + e.what());
  }
  return net;
}

void save_regressor(const RegressorWeights& reg, const std::string& path) {
  NetworkSpec shell;
  LayerSpec hidden;
  hidden.kind = LayerKind::Fc;
  hidden.fc = reg.hidden;
  shell.layers.push_back(std::move(hidden));
  LayerSpec output;
  output.kind = LayerKind::Fc;
  output.fc = reg.output;
  shell.layers.push_back(std::move(output));
  const std::vector<std::uint8_t> bytes = serialize(shell);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::Unreadable, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

RegressorWeights load_regressor(const std::string& path) {
  const NetworkSpec shell = deserialize(read_file(path));
  if (shell.layers.size() != 2 || shell.layers[0].kind != LayerKind::Fc ||
      shell.layers[1].kind != LayerKind::Fc)
    throw IoError(IoErrorKind::Geometry, "regressor file must hold exactly two FC layers");
  RegressorWeights reg{shell.layers[0].fc, shell.layers[1].fc};
  if (reg.output.inputLength() != reg.hidden.outCount || reg.output.outCount != 4)
    throw IoError(IoErrorKind::Geometry, "regressor stage geometry mismatch");
  return reg;
}

namespace {

int pgm_token(std::istream& in) {
  // Skips whitespace and # comments, then parses one decimal token.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw IoError(IoErrorKind::Corrupt, "malformed PGM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::Unreadable, "cannot open " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    throw IoError(IoErrorKind::Corrupt, "not a binary PGM (P5) file: " + path);
  const int width = pgm_token(in);
  const int height = pgm_token(in);
  const int maxval = pgm_token(in);
  if (maxval != 255)
    throw IoError(IoErrorKind::Corrupt,
                  "unsupported PGM maxval " + std::to_string(maxval) + ", expected 255");
  if (width < 1 || height < 1) throw IoError(IoErrorKind::Corrupt, "bad PGM dimensions");
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!in) throw IoError(IoErrorKind::Corrupt, "PGM pixel data truncated");
  Tensor img(height, width, 1);
  for (std::size_t i = 0; i < pixels.size(); ++i) img.values[i] = pixels[i] / 255.0;
  return img;
}

void write_pgm(const Tensor& image, const std::string& path) {
  if (image.channels != 1)
    throw std::invalid_argument("PGM output requires a single-channel tensor");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::Unreadable, "cannot write " + path);
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  std::vector<std::uint8_t> pixels(image.count());
  for (std::size_t i = 0; i < image.count(); ++i) {
    const double scaled = std::floor(image.values[i] * 255.0 + 0.5);
    pixels[i] = static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
  }
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

std::string format_detections(std::vector<Detection> dets) {
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.scale < b.scale;
  });
  std::ostringstream os;
  char line[160];
  for (const Detection& d : dets) {
    std::snprintf(line, sizeof(line), "%ld %ld %ld %ld %.6f %.4f\n", std::lround(d.x),
                  std::lround(d.y), std::lround(d.w), std::lround(d.h), d.score, d.scale);
    os << line;
  }
  return os.str();
}

std::map<std::string, double> parse_config_file(const std::string& path,
                                                const std::set<std::string>& knownKeys) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::Unreadable, "cannot open config " + path);
  std::map<std::string, double> values;
  std::string line;
  auto trim = [](std::string s) {
    const auto notSpace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notSpace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notSpace).base(), s.end());
    return s;
  };
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "config line " + std::to_string(lineNo) + " is not key=value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (!knownKeys.count(key))
      throw ConfigError(key, "unknown config key '" + key + "' on line " + std::to_string(lineNo));
    try {
      values[key] = std::stod(value);
    } catch (const std::exception&) {
      throw ConfigError(key, "config key '" + key + "' has a non-numeric value '" + value + "'");
    }
  }
  return values;
}

}  // namespace dcf
