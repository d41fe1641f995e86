#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpsm/rng.hpp"

namespace dpsm {

enum class ProblemSource { synthetic, mnist };
enum class NetworkMode { fixed, resample };
enum class Method { dpsm, stodpsm, csub, stocsub };
enum class StepsizeVariant { polynomial, geometric, epoch_polynomial };

/// Full description of one experiment run.  Parsed from flat "key = value"
/// text (dotted section prefixes, '#' comments); every field has a documented
/// default except problem.n / problem.N / problem.m (and problem.mnist_path
/// when the source is mnist), which are required.
struct RunConfig {
  // problem
  ProblemSource source = ProblemSource::synthetic;
  int n = 0;                    // signal dimension
  int N = 0;                    // agent count
  int m = 0;                    // measurements per agent
  std::uint64_t seed = 1;       // master seed for all problem randomness
  std::string mnist_path;      // IDX image file (mnist source only)
  int mnist_index = 0;          // image index within the file
  int mnist_downsample = 1;     // integer block-averaging factor

  // network
  NetworkMode mode = NetworkMode::fixed;
  double p = 0.5;               // edge probability
  std::uint64_t network_seed = 1;
  int B = 1;                    // union-connectivity window (resample mode)

  // method
  Method method = Method::dpsm;
  int batch_size = -1;          // -1 = full batch ("full" in config text)

  // stepsize
  StepsizeVariant variant = StepsizeVariant::geometric;
  double a = 0.1;               // polynomial / epoch-polynomial scale
  double q = 0.5;               // polynomial / epoch-polynomial exponent
  double mu0 = 0.1;             // geometric scale
  double gamma = 0.99;          // geometric ratio
  int epoch_length = 0;         // 0 = one pass of local data (m rounds)

  // control
  long max_iterations = 1000;
  double stop_tol = 0.0;        // stop when mean_sq_dist < tol (0 = never)
  int metric_stride = 1;        // record a row every this many rounds
  int envelope_stride = 0;      // envelope-gradient sampling (0 = never)
  double t_factor = 0.25;       // prox parameter t = t_factor / rho_hat
  int inner_budget = 2000;      // inner-solver iteration budget

  // output
  std::string csv_path;         // empty = do not write
  std::string image_path;       // empty = do not write (mnist runs)

  bool operator==(const RunConfig&) const = default;
};

/// Parse flat key=value text.  Unknown keys, malformed lines, out-of-range
/// values, and missing required keys all throw std::runtime_error with the
/// offending line number or key named in the message.
RunConfig parse_config(const std::string& text);

/// Canonical text form; parse_config(render_config(c)) == c for every valid
/// config.  Reals are rendered with %.17g so the round trip is exact.
std::string render_config(const RunConfig& config);

/// Apply one dotted "key=value" override on top of a parsed config
/// (command-line override mechanism).  Validation as in parse_config.
void apply_override(RunConfig& config, const std::string& assignment);

/// Validate cross-field invariants (required keys present, dimensions
/// positive, probabilities in range).  parse_config calls this; it is exposed
/// so programmatically built configs can be checked too.
void validate_config(const RunConfig& config);

struct MnistImage {
  std::vector<double> pixels;  // row-major, scaled to [0,1]
  int rows = 0;
  int cols = 0;
};

/// Read one image from an IDX image file (big-endian magic 0x00000803,
/// count/rows/cols as big-endian 32-bit words, then row-major bytes).
/// Pixels are scaled to [0,1]; downsample > 1 block-averages (dimensions
/// must divide evenly).  Throws on bad magic, truncation, or a bad index.
MnistImage load_mnist_image(const std::string& path, int index,
                            int downsample);

/// Write a binary PGM (P5, maxval 255).  The vector is sign-corrected first
/// (negated when its pixel sum is negative) so that recoveries of the
/// negated signal render as the image; values are clamped to [0,1] and
/// rounded to the nearest gray level.
void write_image_pgm(const std::vector<double>& pixels, int rows, int cols,
                     const std::string& path);

/// Derive the deterministic stream for a (purpose, agent, iteration) path
/// under a master seed.  Same path, same sequence; distinct paths are
/// independent for all practical purposes.
RngStream derive_stream(std::uint64_t master, std::string_view purpose,
                        std::uint64_t agent, std::uint64_t iteration);

}  // namespace dpsm
