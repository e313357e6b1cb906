#include "fedsurg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "fedsurg/errors.hpp"
#include "fedsurg/rng.hpp"
#include "fedsurg/tdf.hpp"

namespace fedsurg::synth {

using json = nlohmann::json;

namespace {

constexpr double kMinColorDistance = 0.3;

double color_distance(const Color& a, const Color& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Color random_color(Rng& rng, double lo, double hi) {
  return Color{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

// Depth range used for occlusion order; segmentation sites use a nominal one.
std::pair<double, double> depth_range(const model::TaskSpec& task) {
  if (task.kind == model::TaskKind::depth) return {task.depth_min, task.depth_max};
  return {1.0, 10.0};
}

Color lerp(const Color& a, const Color& b, double t) {
  return Color{a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

double segment_distance(const SceneObject& o, double px, double py) {
  const double dx = o.x1 - o.x0, dy = o.y1 - o.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - o.x0) * dx + (py - o.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (o.x0 + t * dx), ey = py - (o.y0 + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

double ellipse_radius(const SceneObject& o, double px, double py) {
  const double dx = px - o.x0, dy = py - o.y0;
  const double c = std::cos(o.angle), s = std::sin(o.angle);
  const double u = (c * dx + s * dy) / o.r, v = (-s * dx + c * dy) / o.r2;
  return std::sqrt(u * u + v * v);
}

// Shading factor in [0.8, 1] brighter toward the object's axis or centre.
double shade(const SceneObject& o, double px, double py) {
  if (o.shape == Shape2::capsule) return 0.8 + 0.2 * (1.0 - std::min(1.0, segment_distance(o, px, py) / o.r));
  return 0.85 + 0.15 * (1.0 - std::min(1.0, ellipse_radius(o, px, py)));
}

std::string sample_name(std::size_t index, const char* kind) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "sample_%05zu_%s.tdf", index, kind);
  return buf;
}

}  // namespace

SiteSpec SiteSpec::make(std::uint64_t site_seed, const model::TaskSpec& task, std::size_t height, std::size_t width) {
  SiteSpec spec;
  spec.site_seed = site_seed;
  spec.task = task;
  spec.height = height;
  spec.width = width;
  Rng rng(mix_seed(site_seed, fnv1a64("palette")));
  for (auto& c : spec.palette) c = random_color(rng, 0.25, 0.85);
  spec.noise_cells = 3 + rng.below(4);
  const std::size_t colors = task.kind == model::TaskKind::segmentation ? task.class_count - 1 : 4;
  // class colours are kept apart so classes are separable by appearance
  for (std::size_t i = 0; i < colors; ++i) {
    Color best{};
    double best_gap = -1.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      Color c = random_color(rng, 0.0, 1.0);
      double gap = 1e9;
      for (const Color& prev : spec.class_colors) gap = std::min(gap, color_distance(c, prev));
      if (gap > best_gap) {
        best = c;
        best_gap = gap;
      }
      if (gap >= kMinColorDistance) break;
    }
    spec.class_colors.push_back(best);
  }
  return spec;
}

void SiteSpec::validate() const {
  task.validate();
  if (height < 4 || width < 4) throw InputError("site image size must be at least 4x4");
  if (noise_cells == 0) throw InputError("noise_cells must be positive");
  if (instruments_min < 1 || instruments_min > instruments_max) throw InputError("instrument count range invalid");
  if (blobs_min > blobs_max) throw InputError("blob count range invalid");
  const std::size_t needed = task.kind == model::TaskKind::segmentation ? task.class_count - 1 : 1;
  if (class_colors.size() < needed) throw InputError("site spec has too few class colours");
}

json to_json(const SiteSpec& spec) {
  json colors = json::array();
  for (const Color& c : spec.class_colors) colors.push_back(c);
  return json{{"site_seed", spec.site_seed},
              {"task", model::to_json(spec.task)},
              {"height", spec.height},
              {"width", spec.width},
              {"palette", spec.palette},
              {"noise_cells", spec.noise_cells},
              {"instruments", {spec.instruments_min, spec.instruments_max}},
              {"blobs", {spec.blobs_min, spec.blobs_max}},
              {"class_colors", colors}};
}

SiteSpec site_spec_from_json(const json& j) {
  SiteSpec s;
  try {
    s.site_seed = j.at("site_seed").get<std::uint64_t>();
    s.task = model::task_from_json(j.at("task"));
    s.height = j.at("height").get<std::size_t>();
    s.width = j.at("width").get<std::size_t>();
    s.palette = j.at("palette").get<std::array<Color, 3>>();
    s.noise_cells = j.at("noise_cells").get<std::size_t>();
    s.instruments_min = j.at("instruments").at(0).get<std::size_t>();
    s.instruments_max = j.at("instruments").at(1).get<std::size_t>();
    s.blobs_min = j.at("blobs").at(0).get<std::size_t>();
    s.blobs_max = j.at("blobs").at(1).get<std::size_t>();
    s.class_colors = j.at("class_colors").get<std::vector<Color>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("site spec: ") + e.what());
  }
  s.validate();
  return s;
}

bool covers(const SceneObject& o, double px, double py) {
  if (o.shape == Shape2::capsule) return segment_distance(o, px, py) <= o.r;
  return ellipse_radius(o, px, py) <= 1.0;
}

Scene sample_scene(const SiteSpec& spec, std::uint64_t sample_seed) {
  Rng rng(mix_seed(spec.site_seed, sample_seed));
  Scene scene;
  const std::size_t side = spec.noise_cells + 1;
  scene.lattice.resize(side * side);
  for (auto& v : scene.lattice) v = rng.uniform();

  const auto [dmin, dmax] = depth_range(spec.task);
  const double range = dmax - dmin;
  scene.plane_base = dmin + range * rng.uniform(0.75, 0.85);
  scene.plane_gx = range * rng.uniform(-0.1, 0.1);
  scene.plane_gy = range * rng.uniform(-0.1, 0.1);
  scene.noise_seed = rng.next_u64();

  const bool seg = spec.task.kind == model::TaskKind::segmentation;
  auto assign_class = [&](SceneObject& o) {
    if (seg) {
      o.class_id = 1 + rng.below(spec.task.class_count - 1);
      o.color = spec.class_colors[o.class_id - 1];
    } else {
      o.class_id = 1;
      o.color = spec.class_colors[rng.below(spec.class_colors.size())];
    }
    o.depth = dmin + range * rng.uniform(0.0, 0.6);
  };

  const std::size_t instruments = spec.instruments_min + rng.below(spec.instruments_max - spec.instruments_min + 1);
  for (std::size_t i = 0; i < instruments; ++i) {
    SceneObject o;
    o.shape = Shape2::capsule;
    // tools enter from a frame edge and point inward
    const double along = rng.uniform(0.1, 0.9);
    switch (rng.below(4)) {
      case 0: o.x0 = along, o.y0 = 0.0; break;
      case 1: o.x0 = 1.0, o.y0 = along; break;
      case 2: o.x0 = along, o.y0 = 1.0; break;
      default: o.x0 = 0.0, o.y0 = along; break;
    }
    const double toward = std::atan2(0.5 - o.y0, 0.5 - o.x0) + rng.uniform(-0.6, 0.6);
    const double length = rng.uniform(0.35, 0.7);
    o.x1 = o.x0 + length * std::cos(toward);
    o.y1 = o.y0 + length * std::sin(toward);
    o.r = rng.uniform(0.04, 0.075);
    assign_class(o);
    scene.objects.push_back(o);
  }
  const std::size_t blobs = spec.blobs_min + rng.below(spec.blobs_max - spec.blobs_min + 1);
  for (std::size_t i = 0; i < blobs; ++i) {
    SceneObject o;
    o.shape = Shape2::ellipse;
    o.x0 = rng.uniform(0.2, 0.8);
    o.y0 = rng.uniform(0.2, 0.8);
    o.r = rng.uniform(0.08, 0.16);
    o.r2 = rng.uniform(0.06, 0.12);
    o.angle = rng.uniform(0.0, std::numbers::pi);
    assign_class(o);
    scene.objects.push_back(o);
  }
  return scene;
}

Sample render_scene(const SiteSpec& spec, const Scene& scene) {
  const std::size_t h = spec.height, w = spec.width, side = spec.noise_cells + 1;
  if (scene.lattice.size() != side * side) throw InputError("scene lattice does not match site spec");
  const auto [dmin, dmax] = depth_range(spec.task);
  const double range = dmax - dmin;
  const bool seg = spec.task.kind == model::TaskKind::segmentation;
  Sample s{Tensor(Shape{h, w, 3}), Tensor(Shape{h, w})};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
      const double py = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
      // nearest covering object; later objects win ties, as in painter's order
      const SceneObject* top = nullptr;
      for (const SceneObject& o : scene.objects)
        if (covers(o, px, py) && (top == nullptr || o.depth <= top->depth)) top = &o;

      Color c;
      double depth;
      double label;
      if (top != nullptr) {
        const double f = shade(*top, px, py);
        c = Color{top->color[0] * f, top->color[1] * f, top->color[2] * f};
        depth = top->depth;
        label = seg ? static_cast<double>(top->class_id) : depth;
      } else {
        const double gx = px * static_cast<double>(spec.noise_cells), gy = py * static_cast<double>(spec.noise_cells);
        const std::size_t ix = std::min<std::size_t>(static_cast<std::size_t>(gx), spec.noise_cells - 1);
        const std::size_t iy = std::min<std::size_t>(static_cast<std::size_t>(gy), spec.noise_cells - 1);
        const double fx = gx - static_cast<double>(ix), fy = gy - static_cast<double>(iy);
        const auto at = [&](std::size_t i, std::size_t j) { return scene.lattice[j * side + i]; };
        const double v = (1 - fy) * ((1 - fx) * at(ix, iy) + fx * at(ix + 1, iy)) +
                         fy * ((1 - fx) * at(ix, iy + 1) + fx * at(ix + 1, iy + 1));
        c = v < 0.5 ? lerp(spec.palette[0], spec.palette[1], 2 * v) : lerp(spec.palette[1], spec.palette[2], 2 * v - 1);
        Rng jitter(mix_seed(scene.noise_seed, y * w + x));
        depth = scene.plane_base + scene.plane_gx * (px - 0.5) + scene.plane_gy * (py - 0.5) +
                range * 0.01 * jitter.uniform(-1.0, 1.0);
        depth = std::clamp(depth, dmin, dmax);
        label = seg ? 0.0 : depth;
      }
      // farther surfaces are lit less
      const double light = 1.0 - 0.45 * (depth - dmin) / range;
      for (int ch = 0; ch < 3; ++ch) s.image[(y * w + x) * 3 + ch] = std::clamp(c[ch] * light, 0.0, 1.0);
      s.label[y * w + x] = label;
    }
  }
  return s;
}

Sample render_sample(const SiteSpec& spec, std::uint64_t sample_seed) {
  return render_scene(spec, sample_scene(spec, sample_seed));
}

json to_json(const Manifest& m) {
  json samples = json::array();
  for (const SampleEntry& e : m.samples) {
    samples.push_back(json{{"index", e.index},
                           {"image", e.image_file},
                           {"label", e.label_file},
                           {"image_checksum", e.image_checksum},
                           {"label_checksum", e.label_checksum},
                           {"split", e.train ? "train" : "eval"}});
  }
  return json{{"format", "fedsurg-site-v1"}, {"spec", to_json(m.spec)}, {"samples", samples}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  try {
    m.spec = site_spec_from_json(j.at("spec"));
    for (const auto& e : j.at("samples")) {
      SampleEntry s;
      s.index = e.at("index").get<std::size_t>();
      s.image_file = e.at("image").get<std::string>();
      s.label_file = e.at("label").get<std::string>();
      s.image_checksum = e.at("image_checksum").get<std::string>();
      s.label_checksum = e.at("label_checksum").get<std::string>();
      const std::string split = e.at("split").get<std::string>();
      if (split != "train" && split != "eval") throw FormatError("unknown split '" + split + "'");
      s.train = split == "train";
      m.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("site manifest: ") + e.what());
  }
  return m;
}

std::vector<bool> split_assignment(std::uint64_t site_seed, std::size_t n) {
  std::vector<bool> train(n, true);
  if (n < 2) return train;
  std::size_t n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(site_seed, fnv1a64("split")));
  rng.shuffle(order);
  for (std::size_t i = n_train; i < n; ++i) train[order[i]] = false;
  return train;
}

Manifest generate_site_dataset(const SiteSpec& spec, std::size_t n, const std::filesystem::path& dir) {
  spec.validate();
  if (n == 0) throw InputError("dataset needs at least one sample");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());

  Manifest m;
  m.spec = spec;
  m.samples.resize(n);
  const std::vector<bool> train = split_assignment(spec.site_seed, n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      const Sample s = render_sample(spec, i);
      SampleEntry& e = m.samples[i];
      e.index = i;
      e.image_file = sample_name(i, "image");
      e.label_file = sample_name(i, "label");
      tdf::write(dir / e.image_file, s.image);
      tdf::write(dir / e.label_file, s.label);
      e.image_checksum = tdf::hex64(fnv1a64(tdf::encode(s.image)));
      e.label_checksum = tdf::hex64(fnv1a64(tdf::encode(s.label)));
      e.train = train[i];
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (const std::string& err : errors)
    if (!err.empty()) throw IoError(err);

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << to_json(m).dump(2) << '\n';
  if (!out) throw IoError("failed writing " + (dir / "manifest.json").string());
  return m;
}

SiteDataset load_site_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing dataset manifest " + (dir / "manifest.json").string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("dataset manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
  const Manifest m = manifest_from_json(j);
  SiteDataset ds;
  ds.spec = m.spec;
  const Shape image_shape{m.spec.height, m.spec.width, 3}, label_shape{m.spec.height, m.spec.width};
  for (const SampleEntry& e : m.samples) {
    if (tdf::file_checksum(dir / e.image_file) != e.image_checksum ||
        tdf::file_checksum(dir / e.label_file) != e.label_checksum) {
      throw FormatError("checksum mismatch for sample " + std::to_string(e.index) + " in " + dir.string());
    }
    Sample s{tdf::read(dir / e.image_file), tdf::read(dir / e.label_file)};
    if (s.image.shape() != image_shape || s.label.shape() != label_shape) {
      throw FormatError("sample " + std::to_string(e.index) + " has unexpected shape in " + dir.string());
    }
    (e.train ? ds.train : ds.eval).push_back(std::move(s));
  }
  if (ds.train.empty()) throw InputError("dataset " + dir.string() + " has no training samples");
  return ds;
}

}  // namespace fedsurg::synth
