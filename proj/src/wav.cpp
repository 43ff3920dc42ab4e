#include "sep/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace sep {

namespace {

uint16_t rd_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t rd_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

void wr_u16(std::vector<unsigned char>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

void wr_u32(std::vector<unsigned char>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}

}  // namespace

TimeSignal load_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("load_wav: not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + off);
    const uint32_t size = rd_u32(bytes.data() + off + 4);
    const std::size_t payload = off + 8;
    if (payload + size > bytes.size())
      throw std::runtime_error("load_wav: truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw std::runtime_error("load_wav: corrupt fmt chunk");
      const uint16_t format = rd_u16(bytes.data() + payload);
      const uint16_t channels = rd_u16(bytes.data() + payload + 2);
      sample_rate = rd_u32(bytes.data() + payload + 4);
      const uint16_t bits = rd_u16(bytes.data() + payload + 14);
      if (format != 1)
        throw std::runtime_error("load_wav: non-PCM format not supported");
      if (channels != 1) throw std::runtime_error("load_wav: mono required");
      if (bits != 16)
        throw std::runtime_error("load_wav: 16-bit samples required");
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + payload;
      data_len = size;
    }
    off = payload + size + (size % 2);  // chunks are word aligned
  }

  if (!have_fmt) throw std::runtime_error("load_wav: missing fmt chunk");
  if (!data) throw std::runtime_error("load_wav: missing data chunk");
  if (sample_rate == 0) throw std::runtime_error("load_wav: zero sample rate");

  TimeSignal out;
  out.sample_rate = static_cast<int>(sample_rate);
  const std::size_t n = data_len / 2;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int16_t s = static_cast<int16_t>(rd_u16(data + 2 * i));
    out.samples[i] = s / 32768.0;
  }
  if (out.samples.empty()) throw std::runtime_error("load_wav: empty data");
  return out;
}

void save_wav(const TimeSignal& signal, const std::string& path) {
  signal.validate();
  const uint32_t n = static_cast<uint32_t>(signal.size());
  std::vector<unsigned char> b;
  b.reserve(44 + 2 * n);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  wr_u32(b, 36 + 2 * n);
  b.insert(b.end(), {'W', 'A', 'V', 'E'});
  b.insert(b.end(), {'f', 'm', 't', ' '});
  wr_u32(b, 16);
  wr_u16(b, 1);  // PCM
  wr_u16(b, 1);  // mono
  wr_u32(b, static_cast<uint32_t>(signal.sample_rate));
  wr_u32(b, static_cast<uint32_t>(signal.sample_rate) * 2);  // byte rate
  wr_u16(b, 2);   // block align
  wr_u16(b, 16);  // bits
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  wr_u32(b, 2 * n);
  for (double x : signal.samples) {
    double v = std::nearbyint(x * 32768.0);
    v = std::clamp(v, -32768.0, 32767.0);
    wr_u16(b, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_wav: cannot open " + path);
  os.write(reinterpret_cast<const char*>(b.data()),
           static_cast<std::streamsize>(b.size()));
  if (!os) throw std::runtime_error("save_wav: write failed: " + path);
}

}  // namespace sep
