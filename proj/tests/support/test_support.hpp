#pragma once

// Shared test helpers: temp directories, command runner and the synthetic
// smear fixtures (magenta elliptical nucleus on a textured gray field).

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "allprep/allprep.hpp"

namespace allprep::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "allprep") {
    std::string tmpl = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// Runs `cmd` through the shell, capturing stdout and stderr.
inline CommandResult run_command(const std::string& cmd, const fs::path& scratch) {
  const fs::path out = scratch / "cmd.stdout";
  const fs::path err = scratch / "cmd.stderr";
  const std::string full = cmd + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(full.c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

inline double iou(const BinaryMask& a, const BinaryMask& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits().size(); ++i) {
    inter += a.bits()[i] & b.bits()[i];
    uni += a.bits()[i] | b.bits()[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct Ellipse {
  double cx, cy, ax, by, theta;  // source pixel units

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = dx * std::cos(theta) + dy * std::sin(theta);
    const double v = -dx * std::sin(theta) + dy * std::cos(theta);
    return (u * u) / (ax * ax) + (v * v) / (by * by) <= 1.0;
  }
};

struct SmearFixture {
  RasterImage image;  // source resolution
  Ellipse nucleus;
  BinaryMask truth;   // on the output grid
};

inline std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

/// Nucleus colour is ~(150, 60, 160) with per-pixel jitter; the background
/// is achromatic with a low-frequency luminance pattern plus noise. The
/// ground truth tests output pixel centres against the ellipse in source
/// coordinates.
inline SmearFixture make_smear(std::uint64_t seed, int src = 448, Size out = kModelInputSize) {
  std::mt19937_64 rng(seed);
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  auto jitter = [&](double amp) { return (2.0 * unit() - 1.0) * amp; };

  const double s = src;
  Ellipse e{s * (0.35 + 0.3 * unit()), s * (0.35 + 0.3 * unit()), s * (0.12 + 0.1 * unit()),
            s * (0.10 + 0.08 * unit()), 3.14159265358979 * unit()};
  const double fx = 9.0 + 8.0 * unit(), fy = 11.0 + 8.0 * unit(), base = 165.0 + 20.0 * unit();

  SmearFixture f{RasterImage(src, src), e, BinaryMask(out.width, out.height)};
  for (int y = 0; y < src; ++y) {
    for (int x = 0; x < src; ++x) {
      if (e.contains(x + 0.5, y + 0.5)) {
        f.image.set_pixel(x, y, {clamp_byte(150 + jitter(10)), clamp_byte(60 + jitter(10)),
                                 clamp_byte(160 + jitter(10))});
      } else {
        const double g = base + 18.0 * std::sin(x / fx) * std::cos(y / fy) + jitter(10);
        const auto v = clamp_byte(g);
        f.image.set_pixel(x, y, {v, v, v});
      }
    }
  }
  const double sx = s / out.width, sy = s / out.height;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) f.truth.set(x, y, e.contains((x + 0.5) * sx, (y + 0.5) * sy));
  }
  return f;
}

// Empty placeholder files; manifest building never decodes them.
inline void make_tree(const fs::path& root, std::array<std::size_t, 4> per_class) {
  for (std::size_t c = 0; c < 4; ++c) {
    const fs::path dir = root / std::string(label_name(kAllLabels[c]));
    fs::create_directories(dir);
    for (std::size_t i = 0; i < per_class[c]; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "img_%05zu.jpg", i);
      std::ofstream(dir / name).put('x');
    }
  }
}

inline std::string shell_quote(const fs::path& p) { return "'" + p.string() + "'"; }

inline std::string cli_path() { return ALLPREP_CLI_PATH; }

}  // namespace allprep::testing
