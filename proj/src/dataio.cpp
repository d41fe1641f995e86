#include "dpsm/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dpsm {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail_key(const std::string& key, const std::string& what) {
  throw std::runtime_error(key + ": " + what);
}

long long to_ll(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    fail_key(key, "expected an integer, got '" + value + "'");
  return v;
}

int to_int(const std::string& key, const std::string& value) {
  const long long v = to_ll(key, value);
  if (v < -2147483647LL || v > 2147483647LL) fail_key(key, "out of range");
  return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  if (!value.empty() && value[0] == '-')
    fail_key(key, "expected a nonnegative integer, got '" + value + "'");
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    fail_key(key, "expected a nonnegative integer, got '" + value + "'");
  return static_cast<std::uint64_t>(v);
}

double to_real(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    fail_key(key, "expected a number, got '" + value + "'");
  return v;
}

void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "problem.source") {
    if (value == "synthetic")
      c.source = ProblemSource::synthetic;
    else if (value == "mnist")
      c.source = ProblemSource::mnist;
    else
      fail_key(key, "expected synthetic or mnist, got '" + value + "'");
  } else if (key == "problem.n") {
    c.n = to_int(key, value);
  } else if (key == "problem.N") {
    c.N = to_int(key, value);
  } else if (key == "problem.m") {
    c.m = to_int(key, value);
  } else if (key == "problem.seed") {
    c.seed = to_u64(key, value);
  } else if (key == "problem.mnist_path") {
    c.mnist_path = value;
  } else if (key == "problem.mnist_index") {
    c.mnist_index = to_int(key, value);
  } else if (key == "problem.mnist_downsample") {
    c.mnist_downsample = to_int(key, value);
  } else if (key == "network.mode") {
    if (value == "fixed")
      c.mode = NetworkMode::fixed;
    else if (value == "resample")
      c.mode = NetworkMode::resample;
    else
      fail_key(key, "expected fixed or resample, got '" + value + "'");
  } else if (key == "network.p") {
    c.p = to_real(key, value);
  } else if (key == "network.seed") {
    c.network_seed = to_u64(key, value);
  } else if (key == "network.B") {
    c.B = to_int(key, value);
  } else if (key == "method.name") {
    if (value == "dpsm")
      c.method = Method::dpsm;
    else if (value == "stodpsm")
      c.method = Method::stodpsm;
    else if (value == "csub")
      c.method = Method::csub;
    else if (value == "stocsub")
      c.method = Method::stocsub;
    else
      fail_key(key, "expected dpsm, stodpsm, csub, or stocsub, got '" + value +
                        "'");
  } else if (key == "method.batch_size") {
    if (value == "full")
      c.batch_size = -1;
    else
      c.batch_size = to_int(key, value);
  } else if (key == "stepsize.variant") {
    if (value == "polynomial")
      c.variant = StepsizeVariant::polynomial;
    else if (value == "geometric")
      c.variant = StepsizeVariant::geometric;
    else if (value == "epoch_polynomial")
      c.variant = StepsizeVariant::epoch_polynomial;
    else
      fail_key(key, "expected polynomial, geometric, or epoch_polynomial, "
                    "got '" + value + "'");
  } else if (key == "stepsize.a") {
    c.a = to_real(key, value);
  } else if (key == "stepsize.q") {
    c.q = to_real(key, value);
  } else if (key == "stepsize.mu0") {
    c.mu0 = to_real(key, value);
  } else if (key == "stepsize.gamma") {
    c.gamma = to_real(key, value);
  } else if (key == "stepsize.epoch_length") {
    c.epoch_length = to_int(key, value);
  } else if (key == "control.max_iterations") {
    c.max_iterations = static_cast<long>(to_ll(key, value));
  } else if (key == "control.stop_tol") {
    c.stop_tol = to_real(key, value);
  } else if (key == "control.metric_stride") {
    c.metric_stride = to_int(key, value);
  } else if (key == "control.envelope_stride") {
    c.envelope_stride = to_int(key, value);
  } else if (key == "control.t_factor") {
    c.t_factor = to_real(key, value);
  } else if (key == "control.inner_budget") {
    c.inner_budget = to_int(key, value);
  } else if (key == "output.csv") {
    c.csv_path = value;
  } else if (key == "output.image") {
    c.image_path = value;
  } else {
    throw std::runtime_error("unknown key '" + key + "'");
  }
}

}  // namespace

void validate_config(const RunConfig& c) {
  std::string missing;
  const auto note_missing = [&missing](const char* key) {
    if (!missing.empty()) missing += ", ";
    missing += key;
  };
  if (c.n == 0) note_missing("problem.n");
  if (c.N == 0) note_missing("problem.N");
  if (c.m == 0) note_missing("problem.m");
  if (c.source == ProblemSource::mnist && c.mnist_path.empty())
    note_missing("problem.mnist_path");
  if (!missing.empty())
    throw std::runtime_error("missing required keys: " + missing);

  if (c.n < 0) fail_key("problem.n", "must be positive");
  if (c.N < 0) fail_key("problem.N", "must be positive");
  if (c.m < 0) fail_key("problem.m", "must be positive");
  if (c.mnist_index < 0) fail_key("problem.mnist_index", "must be >= 0");
  if (c.mnist_downsample < 1) fail_key("problem.mnist_downsample", "must be >= 1");
  if (!(c.p > 0.0 && c.p <= 1.0)) fail_key("network.p", "must be in (0, 1]");
  if (c.B < 1) fail_key("network.B", "must be >= 1");
  if (c.batch_size != -1 && c.batch_size < 1)
    fail_key("method.batch_size", "must be 'full' or a positive integer");
  if (!(c.a > 0.0)) fail_key("stepsize.a", "must be positive");
  if (!(c.q > 0.0 && c.q <= 1.0)) fail_key("stepsize.q", "must be in (0, 1]");
  if (!(c.mu0 > 0.0)) fail_key("stepsize.mu0", "must be positive");
  if (!(c.gamma > 0.0 && c.gamma < 1.0))
    fail_key("stepsize.gamma", "must be in (0, 1)");
  if (c.epoch_length < 0) fail_key("stepsize.epoch_length", "must be >= 0");
  if (c.max_iterations < 0) fail_key("control.max_iterations", "must be >= 0");
  if (!(c.stop_tol >= 0.0)) fail_key("control.stop_tol", "must be >= 0");
  if (c.metric_stride < 1) fail_key("control.metric_stride", "must be >= 1");
  if (c.envelope_stride < 0) fail_key("control.envelope_stride", "must be >= 0");
  if (!(c.t_factor > 0.0 && c.t_factor < 0.5))
    fail_key("control.t_factor", "must be in (0, 0.5)");
  if (c.inner_budget < 1) fail_key("control.inner_budget", "must be >= 1");
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string raw;
  long line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("line " + std::to_string(line_number) +
                               ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("line " + std::to_string(line_number) +
                               ": empty key");
    try {
      set_key(config, key, value);
    } catch (const std::runtime_error& err) {
      throw std::runtime_error("line " + std::to_string(line_number) + ": " +
                               err.what());
    }
  }
  validate_config(config);
  return config;
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::runtime_error("override '" + assignment +
                             "' is not of the form key=value");
  set_key(config, trim(assignment.substr(0, eq)),
          trim(assignment.substr(eq + 1)));
}

namespace {

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string render_config(const RunConfig& c) {
  std::ostringstream out;
  out << "problem.source = "
      << (c.source == ProblemSource::synthetic ? "synthetic" : "mnist") << '\n'
      << "problem.n = " << c.n << '\n'
      << "problem.N = " << c.N << '\n'
      << "problem.m = " << c.m << '\n'
      << "problem.seed = " << c.seed << '\n';
  if (!c.mnist_path.empty())
    out << "problem.mnist_path = " << c.mnist_path << '\n';
  out << "problem.mnist_index = " << c.mnist_index << '\n'
      << "problem.mnist_downsample = " << c.mnist_downsample << '\n'
      << "network.mode = "
      << (c.mode == NetworkMode::fixed ? "fixed" : "resample") << '\n'
      << "network.p = " << fmt_real(c.p) << '\n'
      << "network.seed = " << c.network_seed << '\n'
      << "network.B = " << c.B << '\n'
      << "method.name = ";
  switch (c.method) {
    case Method::dpsm: out << "dpsm"; break;
    case Method::stodpsm: out << "stodpsm"; break;
    case Method::csub: out << "csub"; break;
    case Method::stocsub: out << "stocsub"; break;
  }
  out << '\n' << "method.batch_size = ";
  if (c.batch_size == -1)
    out << "full";
  else
    out << c.batch_size;
  out << '\n' << "stepsize.variant = ";
  switch (c.variant) {
    case StepsizeVariant::polynomial: out << "polynomial"; break;
    case StepsizeVariant::geometric: out << "geometric"; break;
    case StepsizeVariant::epoch_polynomial: out << "epoch_polynomial"; break;
  }
  out << '\n'
      << "stepsize.a = " << fmt_real(c.a) << '\n'
      << "stepsize.q = " << fmt_real(c.q) << '\n'
      << "stepsize.mu0 = " << fmt_real(c.mu0) << '\n'
      << "stepsize.gamma = " << fmt_real(c.gamma) << '\n'
      << "stepsize.epoch_length = " << c.epoch_length << '\n'
      << "control.max_iterations = " << c.max_iterations << '\n'
      << "control.stop_tol = " << fmt_real(c.stop_tol) << '\n'
      << "control.metric_stride = " << c.metric_stride << '\n'
      << "control.envelope_stride = " << c.envelope_stride << '\n'
      << "control.t_factor = " << fmt_real(c.t_factor) << '\n'
      << "control.inner_budget = " << c.inner_budget << '\n';
  if (!c.csv_path.empty()) out << "output.csv = " << c.csv_path << '\n';
  if (!c.image_path.empty()) out << "output.image = " << c.image_path << '\n';
  return out.str();
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    throw std::runtime_error(std::string("truncated IDX header: missing ") +
                             what);
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) |
         static_cast<std::uint32_t>(b[3]);
}

}  // namespace

MnistImage load_mnist_image(const std::string& path, int index,
                            int downsample) {
  if (downsample < 1) throw std::runtime_error("downsample must be >= 1");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  const std::uint32_t magic = read_be_u32(in, "magic");
  if (magic != 0x00000803u) {
    char buf[64];
    std::snprintf(buf, sizeof buf,
                  "bad IDX magic 0x%08x (expected 0x00000803)", magic);
    throw std::runtime_error(buf);
  }
  const std::uint32_t count = read_be_u32(in, "image count");
  const std::uint32_t rows = read_be_u32(in, "row count");
  const std::uint32_t cols = read_be_u32(in, "column count");
  if (index < 0 || static_cast<std::uint32_t>(index) >= count)
    throw std::runtime_error("image index " + std::to_string(index) +
                             " out of range (file holds " +
                             std::to_string(count) + ")");
  const std::size_t image_bytes = static_cast<std::size_t>(rows) * cols;
  in.seekg(static_cast<std::streamoff>(16 +
                                       static_cast<std::size_t>(index) *
                                           image_bytes));
  std::vector<unsigned char> bytes(image_bytes);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(image_bytes));
  if (static_cast<std::size_t>(in.gcount()) != image_bytes)
    throw std::runtime_error("truncated IDX pixel data at image " +
                             std::to_string(index));

  if (rows % static_cast<std::uint32_t>(downsample) != 0 ||
      cols % static_cast<std::uint32_t>(downsample) != 0)
    throw std::runtime_error("downsample factor " + std::to_string(downsample) +
                             " does not divide " + std::to_string(rows) + "x" +
                             std::to_string(cols));

  MnistImage img;
  img.rows = static_cast<int>(rows) / downsample;
  img.cols = static_cast<int>(cols) / downsample;
  img.pixels.assign(static_cast<std::size_t>(img.rows) * img.cols, 0.0);
  const double block = static_cast<double>(downsample) * downsample;
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t col = 0; col < cols; ++col) {
      const double v = bytes[r * cols + col] / 255.0;
      const std::size_t out_index =
          static_cast<std::size_t>(r / downsample) * img.cols + col / downsample;
      img.pixels[out_index] += v / block;
    }
  return img;
}

void write_image_pgm(const std::vector<double>& pixels, int rows, int cols,
                     const std::string& path) {
  if (rows < 1 || cols < 1 ||
      pixels.size() != static_cast<std::size_t>(rows) * cols)
    throw std::runtime_error("pixel count does not match rows x cols");
  const double sum = std::accumulate(pixels.begin(), pixels.end(), 0.0);
  const double sign = sum < 0.0 ? -1.0 : 1.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (const double p : pixels) {
    const double v = std::clamp(sign * p, 0.0, 1.0);
    const unsigned char byte =
        static_cast<unsigned char>(std::lround(v * 255.0));
    out.put(static_cast<char>(byte));
  }
  if (!out) throw std::runtime_error("I/O failure writing '" + path + "'");
}

RngStream derive_stream(std::uint64_t master, std::string_view purpose,
                        std::uint64_t agent, std::uint64_t iteration) {
  return RngStream(master, purpose, agent, iteration);
}

}  // namespace dpsm
