#pragma once

// Seeded toy surgical scenes. Each site has its own background palette and
// class colours; instruments are capsules and tissue blobs are ellipses,
// painted far to near so that nearer objects occlude.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedsurg/model.hpp"
#include "fedsurg/tensor.hpp"

namespace fedsurg::synth {

using Color = std::array<double, 3>;

struct SiteSpec {
  std::uint64_t site_seed = 0;
  model::TaskSpec task;
  std::size_t height = 64;
  std::size_t width = 64;
  std::array<Color, 3> palette{};
  std::size_t noise_cells = 4;  // coarse lattice cells per side
  std::size_t instruments_min = 1, instruments_max = 4;
  std::size_t blobs_min = 0, blobs_max = 3;
  /// Colour of each foreground class (segmentation) or object slot (depth).
  std::vector<Color> class_colors;

  /// Palette and class colours drawn from `site_seed`.
  static SiteSpec make(std::uint64_t site_seed, const model::TaskSpec& task, std::size_t height, std::size_t width);
  void validate() const;
};

nlohmann::json to_json(const SiteSpec& spec);
SiteSpec site_spec_from_json(const nlohmann::json& j);

enum class Shape2 { capsule, ellipse };

struct SceneObject {
  Shape2 shape = Shape2::capsule;
  // capsule: segment (x0,y0)-(x1,y1) with radius r; ellipse: centre (x0,y0),
  // semi-axes (r, r2), rotation angle. Coordinates are in [0,1] of the frame.
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0, r = 0, r2 = 0, angle = 0;
  std::size_t class_id = 1;  // >= 1
  double depth = 1.0;        // smaller is nearer
  Color color{};
};

struct Scene {
  std::vector<double> lattice;  // (cells+1)^2 background noise values
  double plane_base = 0, plane_gx = 0, plane_gy = 0;  // background depth plane
  std::uint64_t noise_seed = 0;                       // background depth jitter
  std::vector<SceneObject> objects;
};

struct Sample {
  Tensor image;  // [h,w,3] in [0,1]
  Tensor label;  // [h,w]: class ids or depths
};

Scene sample_scene(const SiteSpec& spec, std::uint64_t sample_seed);
Sample render_scene(const SiteSpec& spec, const Scene& scene);
Sample render_sample(const SiteSpec& spec, std::uint64_t sample_seed);

/// True when pixel centre (px, py) in frame units lies inside the object.
bool covers(const SceneObject& object, double px, double py);

struct SampleEntry {
  std::size_t index = 0;
  std::string image_file, label_file;
  std::string image_checksum, label_checksum;
  bool train = true;
};

struct Manifest {
  SiteSpec spec;
  std::vector<SampleEntry> samples;
};

nlohmann::json to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& j);

/// Seeded 80/20 assignment; at least one sample on each side when n >= 2.
std::vector<bool> split_assignment(std::uint64_t site_seed, std::size_t n);

/// Writes n samples and manifest.json into `dir`. Throws IoError when the
/// directory cannot be created or written.
Manifest generate_site_dataset(const SiteSpec& spec, std::size_t n, const std::filesystem::path& dir);

struct SiteDataset {
  SiteSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> eval;
};

/// Reads a generated site directory, verifying every checksum.
SiteDataset load_site_dataset(const std::filesystem::path& dir);

}  // namespace fedsurg::synth
