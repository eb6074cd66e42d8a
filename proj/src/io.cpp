#include "pins/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace pins::io {

namespace {

constexpr char kTextMagic[] = "PINSOT";
constexpr std::array<char, 8> kBinaryMagic = {'P', 'I', 'N', 'S', 'M', 'A', 'T', '1'};

[[noreturn]] void parse_error(const std::string& what) {
  throw Error(ErrorCode::ParseError, what);
}

double parse_double(const std::string& token) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) parse_error("not a number: '" + token + "'");
  return v;
}

std::size_t parse_size(const std::string& token) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size())
    parse_error("not a dimension: '" + token + "'");
  return v;
}

std::string next_token(std::istream& in, const char* what) {
  std::string tok;
  if (!(in >> tok)) parse_error(std::string("unexpected end of input reading ") + what);
  return tok;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
  out.write(bytes.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 8)) parse_error("truncated binary instance");
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | bytes[k];
  return v;
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

Instance finish(CostMatrix cost, std::vector<double> a, std::vector<double> b) {
  Instance inst{std::move(cost), Marginals::normalized(std::move(a), std::move(b))};
  validate_instance(inst);
  return inst;
}

Instance read_text(std::istream& in) {
  if (next_token(in, "header") != kTextMagic) parse_error("missing PINSOT header");
  if (next_token(in, "version") != "1") parse_error("unsupported PINSOT version");
  const std::size_t m = parse_size(next_token(in, "m"));
  const std::size_t n = parse_size(next_token(in, "n"));
  if (m == 0 || n == 0) parse_error("dimensions must be positive");
  std::vector<double> a(m), b(n);
  for (auto& v : a) v = parse_double(next_token(in, "a"));
  for (auto& v : b) v = parse_double(next_token(in, "b"));
  CostMatrix cost(m, n);
  for (auto& v : cost.values()) v = parse_double(next_token(in, "cost"));
  std::string extra;
  if (in >> extra) parse_error("trailing data after cost matrix");
  return finish(std::move(cost), std::move(a), std::move(b));
}

Instance read_binary(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), 8);
  if (magic != kBinaryMagic) parse_error("missing PINSMAT1 magic");
  const std::uint64_t m = get_u64(in);
  const std::uint64_t n = get_u64(in);
  if (m == 0 || n == 0) parse_error("dimensions must be positive");
  if (m > (1ULL << 24) || n > (1ULL << 24)) parse_error("dimensions implausibly large");
  CostMatrix cost(m, n);
  for (auto& v : cost.values()) v = get_f64(in);
  std::vector<double> a(m), b(n);
  for (auto& v : a) v = get_f64(in);
  for (auto& v : b) v = get_f64(in);
  return finish(std::move(cost), std::move(a), std::move(b));
}

// PGM header tokens may be separated by comments running to end of line.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) parse_error("truncated PGM header");
  return tok;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void write_instance(std::ostream& out, const Instance& inst, InstanceFormat format) {
  if (format == InstanceFormat::Binary) {
    out.write(kBinaryMagic.data(), kBinaryMagic.size());
    put_u64(out, inst.m());
    put_u64(out, inst.n());
    for (double v : inst.cost.values()) put_f64(out, v);
    for (double v : inst.marginals.a) put_f64(out, v);
    for (double v : inst.marginals.b) put_f64(out, v);
    return;
  }
  out << kTextMagic << " 1\n" << inst.m() << ' ' << inst.n() << '\n';
  for (double v : inst.marginals.a) out << format_double(v) << '\n';
  for (double v : inst.marginals.b) out << format_double(v) << '\n';
  for (std::size_t i = 0; i < inst.m(); ++i) {
    const auto row = inst.cost.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ' ';
      out << format_double(row[j]);
    }
    out << '\n';
  }
}

Instance read_instance(std::istream& in) {
  const std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (data.empty()) parse_error("empty instance input");
  std::istringstream body(data, std::ios::binary);
  if (data.compare(0, kBinaryMagic.size(), kBinaryMagic.data(), kBinaryMagic.size()) == 0)
    return read_binary(body);
  return read_text(body);
}

void save_instance(const std::filesystem::path& path, const Instance& inst, InstanceFormat format) {
  std::ostringstream buf(std::ios::binary);
  write_instance(buf, inst, format);
  write_file_atomic(path, buf.str());
}

Instance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_instance(in);
}

GrayImage read_pgm(std::istream& in) {
  const std::string magic = pgm_token(in);
  if (magic != "P2" && magic != "P5") parse_error("not a P2/P5 graymap");
  GrayImage img;
  img.width = parse_size(pgm_token(in));
  img.height = parse_size(pgm_token(in));
  const std::size_t maxval = parse_size(pgm_token(in));
  if (img.width == 0 || img.height == 0) parse_error("PGM dims must be positive");
  if (maxval == 0 || maxval > 65535) parse_error("PGM maxval must be in [1, 65535]");
  const std::size_t count = img.width * img.height;
  img.intensities.resize(count);
  if (magic == "P2") {
    for (auto& v : img.intensities) {
      const std::size_t s = parse_size(pgm_token(in));
      if (s > maxval) parse_error("PGM sample exceeds maxval");
      v = static_cast<double>(s);
    }
  } else {
    // pgm_token consumed exactly one whitespace byte after maxval.
    const std::size_t bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(count * bytes);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
      parse_error("truncated P5 raster");
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t s = bytes == 2 ? (std::size_t{raw[2 * k]} << 8) | raw[2 * k + 1] : raw[k];
      if (s > maxval) parse_error("PGM sample exceeds maxval");
      img.intensities[k] = static_cast<double>(s);
    }
  }
  return img;
}

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_pgm(in);
}

void write_pgm(std::ostream& out, const GrayImage& img, unsigned maxval, bool binary) {
  out << (binary ? "P5" : "P2") << '\n' << img.width << ' ' << img.height << '\n' << maxval << '\n';
  for (std::size_t k = 0; k < img.intensities.size(); ++k) {
    const auto s = static_cast<unsigned>(std::lround(img.intensities[k]));
    if (!binary) {
      out << s << ((k + 1) % img.width == 0 ? '\n' : ' ');
    } else if (maxval > 255) {
      out.put(static_cast<char>(s >> 8));
      out.put(static_cast<char>(s & 0xFF));
    } else {
      out.put(static_cast<char>(s));
    }
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename onto " + path.string());
}

}  // namespace pins::io
