#include "vsdepth/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "vsdepth/error.hpp"

namespace vsdepth {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFarHit = 600.0;

enum ClassId : int { kSky = 0, kGround = 1, kBuilding = 2, kObject = 3 };

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

struct Wall {
  double x;          // plane position
  double facing;     // +1 faces +x, -1 faces -x
  double z0, z1;     // extent along the street
  double top;        // y of the roof edge (y points down)
  Vec3 color;
  uint64_t salt;
};

struct Box {
  Vec3 lo, hi;
  Vec3 color;
  uint64_t salt;
};

struct Scene {
  double ground_y;
  std::vector<Wall> walls;
  std::vector<Box> boxes;
};

struct Style {
  Vec3 ground;
  std::array<Vec3, 4> buildings;
  std::array<Vec3, 4> objects;
  Vec3 sky_horizon, sky_zenith;
  double gamma = 1.0, gain = 1.0;
  Vec3 tint;
};

Style blended_style(double gap) {
  const Style v{{0.42, 0.42, 0.45},
                {{{0.75, 0.55, 0.45}, {0.60, 0.60, 0.65}, {0.80, 0.75, 0.60}, {0.50, 0.55, 0.60}}},
                {{{0.85, 0.15, 0.10}, {0.10, 0.30, 0.80}, {0.90, 0.80, 0.10}, {0.90, 0.90, 0.90}}},
                {0.75, 0.85, 0.95},
                {0.35, 0.55, 0.90},
                1.0,
                1.0,
                {0, 0, 0}};
  const Style r{{0.50, 0.45, 0.38},
                {{{0.55, 0.45, 0.35}, {0.45, 0.42, 0.38}, {0.62, 0.55, 0.45}, {0.40, 0.38, 0.36}}},
                {{{0.50, 0.20, 0.18}, {0.25, 0.30, 0.40}, {0.55, 0.50, 0.30}, {0.60, 0.60, 0.58}}},
                {0.85, 0.85, 0.82},
                {0.60, 0.65, 0.72},
                1.25,
                0.9,
                {0.06, 0.03, -0.02}};
  Style s;
  s.ground = lerp(v.ground, r.ground, gap);
  for (size_t i = 0; i < 4; ++i) {
    s.buildings[i] = lerp(v.buildings[i], r.buildings[i], gap);
    s.objects[i] = lerp(v.objects[i], r.objects[i], gap);
  }
  s.sky_horizon = lerp(v.sky_horizon, r.sky_horizon, gap);
  s.sky_zenith = lerp(v.sky_zenith, r.sky_zenith, gap);
  s.gamma = 1.0 + (r.gamma - 1.0) * gap;
  s.gain = 1.0 + (r.gain - 1.0) * gap;
  s.tint = r.tint * gap;
  return s;
}

uint64_t mix(uint64_t h) {
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

double lattice(int64_t i, int64_t j, uint64_t salt) {
  const uint64_t h = mix(static_cast<uint64_t>(i) * 0x9E3779B97F4A7C15ULL ^ mix(static_cast<uint64_t>(j) + salt));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double value_noise(double s, double t, uint64_t salt) {
  const double fs = std::floor(s), ft = std::floor(t);
  const auto i = static_cast<int64_t>(fs), j = static_cast<int64_t>(ft);
  double a = s - fs, b = t - ft;
  a = a * a * (3 - 2 * a);
  b = b * b * (3 - 2 * b);
  const double v00 = lattice(i, j, salt), v10 = lattice(i + 1, j, salt);
  const double v01 = lattice(i, j + 1, salt), v11 = lattice(i + 1, j + 1, salt);
  return (v00 * (1 - a) + v10 * a) * (1 - b) + (v01 * (1 - a) + v11 * a) * b;
}

// Three octaves of value noise (wavelengths 2 m, 1 m, 0.5 m). An octave fades
// out only once its wavelength drops below about one pixel footprint, so the
// texture stays fixed in world space for all but the most distant surfaces.
double band_limited_noise(double s, double t, double footprint, uint64_t salt) {
  double sum = 0.5, freq = 0.5;
  for (int octave = 0; octave < 3; ++octave) {
    const double wavelength_px = 1.0 / (freq * footprint);
    const double w = std::clamp((wavelength_px - 0.5) / 0.5, 0.0, 1.0);
    if (w <= 0) break;
    sum += 0.5 * w * (value_noise(s * freq, t * freq, salt + 7919 * octave) - 0.5) * 1.3;
    freq *= 2.0;
  }
  return std::clamp(sum, 0.0, 1.0);
}

struct Hit {
  double lambda = std::numeric_limits<double>::infinity();
  int cls = kSky;
  Vec3 normal;
  Vec3 color;
  uint64_t salt = 0;
  int plane = 0;  // 0: (x,z) 1: (z,y) 2: (x,y)
};

Hit intersect(const Scene& scene, const Vec3& origin, const Vec3& dir, const Style& style) {
  Hit best;
  if (dir.y > 1e-12) {
    const double l = (scene.ground_y - origin.y) / dir.y;
    if (l > 1e-3 && l < best.lambda) best = {l, kGround, {0, -1, 0}, style.ground, 17, 0};
  }
  if (std::abs(dir.x) > 1e-12) {
    for (const auto& w : scene.walls) {
      const double l = (w.x - origin.x) / dir.x;
      if (l <= 1e-3 || l >= best.lambda) continue;
      if (dir.x * w.facing > 0) continue;  // back face
      const Vec3 p = origin + dir * l;
      if (p.z < w.z0 || p.z > w.z1 || p.y < w.top || p.y > scene.ground_y) continue;
      best = {l, kBuilding, {w.facing, 0, 0}, w.color, w.salt, 1};
    }
  }
  for (const auto& b : scene.boxes) {
    double t0 = 1e-3, t1 = best.lambda;
    int axis = -1;
    double sign = 0;
    bool miss = false;
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double lo[3] = {b.lo.x, b.lo.y, b.lo.z};
    const double hi[3] = {b.hi.x, b.hi.y, b.hi.z};
    for (int k = 0; k < 3 && !miss; ++k) {
      if (std::abs(d[k]) < 1e-12) {
        if (o[k] < lo[k] || o[k] > hi[k]) miss = true;
        continue;
      }
      double ta = (lo[k] - o[k]) / d[k], tb = (hi[k] - o[k]) / d[k];
      double s = -1;
      if (ta > tb) {
        std::swap(ta, tb);
        s = 1;
      }
      if (ta > t0) {
        t0 = ta;
        axis = k;
        sign = s;
      }
      t1 = std::min(t1, tb);
      if (t0 > t1) miss = true;
    }
    if (miss || axis < 0 || t0 >= best.lambda) continue;
    Vec3 n{0, 0, 0};
    (axis == 0 ? n.x : axis == 1 ? n.y : n.z) = sign;
    best = {t0, kObject, n, b.color, b.salt, axis == 0 ? 1 : axis == 1 ? 0 : 2};
  }
  if (best.lambda > kFarHit) best = Hit{};
  return best;
}

Vec3 shade(const Hit& hit, const Vec3& origin, const Vec3& dir, double footprint_per_unit, const Style& style) {
  if (hit.cls == kSky) {
    const double elevation = -dir.y / dir.norm();
    return lerp(style.sky_horizon, style.sky_zenith, std::clamp(elevation * 2.0, 0.0, 1.0));
  }
  const Vec3 p = origin + dir * hit.lambda;
  const double cos_inc = std::max(0.1, std::abs(hit.normal.dot(dir)) / dir.norm());
  const double footprint = hit.lambda * footprint_per_unit / cos_inc;
  double s = 0, t = 0;
  switch (hit.plane) {
    case 0: s = p.x; t = p.z; break;
    case 1: s = p.z; t = p.y; break;
    default: s = p.x; t = p.y; break;
  }
  const double n = band_limited_noise(s, t, footprint, hit.salt);
  static const Vec3 sun = [] {
    Vec3 l{0.35, -0.85, -0.4};
    return l * (1.0 / l.norm());
  }();
  const double light = 0.45 + 0.55 * std::max(0.0, hit.normal.dot(sun));
  return hit.color * ((0.45 + 1.1 * n) * light);
}

Vec3 develop(const Vec3& c, const Style& style) {
  auto channel = [&](double v, double tint) {
    v = std::clamp(v, 0.0, 1.0);
    return std::clamp(style.gain * std::pow(v, style.gamma) + tint, 0.0, 1.0);
  };
  return {channel(c.x, style.tint.x), channel(c.y, style.tint.y), channel(c.z, style.tint.z)};
}

Scene make_scene(std::mt19937_64& rng, const SceneSpec& spec, const Style& style) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };
  Scene scene;
  scene.ground_y = spec.camera_height;
  const double street_end = spec.frames * spec.speed + 150.0;

  for (double facing : {1.0, -1.0}) {
    const double half_width = uni(4.5, 7.5);
    double z = -20.0;
    while (z < street_end) {
      const double len = uni(6.0, 16.0);
      if (U(rng) > 0.12) {
        Wall w;
        w.x = -facing * (half_width + uni(0.0, 1.5));
        w.facing = facing;
        w.z0 = z;
        w.z1 = z + len;
        w.top = scene.ground_y - uni(4.0, 14.0);
        w.color = style.buildings[static_cast<size_t>(rng() % 4)];
        w.salt = rng();
        scene.walls.push_back(w);
      }
      z += len;
    }
  }

  const int n_boxes = 4 + static_cast<int>(rng() % 7);
  for (int i = 0; i < n_boxes; ++i) {
    const double w = uni(1.5, 2.0), h = uni(1.2, 1.8), l = uni(3.0, 4.5);
    const double side = (rng() % 2) ? 1.0 : -1.0;
    const double xc = side * uni(2.6, 3.4);
    const double zc = uni(6.0, spec.frames * spec.speed + 40.0);
    Box b;
    b.lo = {xc - w / 2, scene.ground_y - h, zc - l / 2};
    b.hi = {xc + w / 2, scene.ground_y, zc + l / 2};
    b.color = style.objects[static_cast<size_t>(rng() % 4)];
    b.salt = rng();
    scene.boxes.push_back(b);
  }
  return scene;
}

std::vector<CameraPose> make_path(std::mt19937_64& rng, const SceneSpec& spec) {
  std::uniform_real_distribution<double> U(0.0, 2 * kPi);
  const double phase_yaw = U(rng), phase_x = U(rng);
  std::vector<CameraPose> path;
  for (int t = 0; t < spec.frames; ++t) {
    const double yaw = spec.yaw_amplitude * std::sin(2 * kPi * t / 40.0 + phase_yaw);
    const double lateral = spec.speed > 0 ? 0.3 * std::sin(2 * kPi * t / 60.0 + phase_x) : 0.0;
    CameraPose p;
    const double c = std::cos(yaw), s = std::sin(yaw);
    p.rotation = {c, 0, s, 0, 1, 0, -s, 0, c};
    p.position = {lateral, 0.0, spec.speed * t};
    path.push_back(p);
  }
  return path;
}

struct Render {
  torch::Tensor rgb;    // [3,H,W] float32, 8-bit quantized
  DepthMap depth;
  torch::Tensor classes;  // [H,W] int64
};

// Colour is rendered on a supersampled grid, blurred by a Gaussian lens
// blur and box-averaged back to the pixel grid; depth and class come from
// the ray through each pixel center.
Render render(const Scene& scene, const CameraPose& pose, const Intrinsics& K, const Style& style, int ss,
              double blur_sigma) {
  const int W = K.width, H = K.height;
  auto hi = torch::empty({3, H * ss, W * ss}, torch::kFloat64);
  auto depth = torch::zeros({H, W}, torch::kFloat64);
  auto cls = torch::zeros({H, W}, torch::kInt64);
  auto hi_a = hi.accessor<double, 3>();
  auto depth_a = depth.accessor<double, 2>();
  auto cls_a = cls.accessor<int64_t, 2>();

  const auto& R = pose.rotation;
  const Vec3 origin{pose.position[0], pose.position[1], pose.position[2]};
  auto world_dir = [&](double u, double v) {
    const Vec3 c{(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0};
    return Vec3{R[0] * c.x + R[1] * c.y + R[2] * c.z, R[3] * c.x + R[4] * c.y + R[5] * c.z,
                R[6] * c.x + R[7] * c.y + R[8] * c.z};
  };
  const double footprint_per_unit = 1.0 / std::min(K.fx, K.fy);

  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const Hit center = intersect(scene, origin, world_dir(u, v), style);
      if (center.cls != kSky) depth_a[v][u] = center.lambda;
      cls_a[v][u] = center.cls;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const double du = (sx + 0.5) / ss - 0.5, dv = (sy + 0.5) / ss - 0.5;
          const Vec3 d = world_dir(u + du, v + dv);
          const Vec3 c = shade(intersect(scene, origin, d, style), origin, d, footprint_per_unit, style);
          hi_a[0][v * ss + sy][u * ss + sx] = c.x;
          hi_a[1][v * ss + sy][u * ss + sx] = c.y;
          hi_a[2][v * ss + sy][u * ss + sx] = c.z;
        }
      }
    }
  }

  auto img = hi.unsqueeze(0);
  if (blur_sigma > 0) {
    const double s = blur_sigma * ss;
    const int radius = static_cast<int>(std::ceil(3 * s));
    auto x = torch::arange(-radius, radius + 1, torch::kFloat64);
    auto g = torch::exp(-(x * x) / (2 * s * s));
    g = g / g.sum();
    namespace F = torch::nn::functional;
    img = F::pad(img, F::PadFuncOptions({radius, radius, radius, radius}).mode(torch::kReplicate));
    img = F::conv2d(img, g.view({1, 1, 1, -1}).expand({3, 1, 1, 2 * radius + 1}), F::Conv2dFuncOptions().groups(3));
    img = F::conv2d(img, g.view({1, 1, -1, 1}).expand({3, 1, 2 * radius + 1, 1}), F::Conv2dFuncOptions().groups(3));
  }
  img = torch::avg_pool2d(img, ss).squeeze(0);

  auto rgb = torch::empty({3, H, W}, torch::kFloat32);
  auto img_a = img.accessor<double, 3>();
  auto rgb_a = rgb.accessor<float, 3>();
  for (int v = 0; v < H; ++v)
    for (int u = 0; u < W; ++u) {
      const Vec3 c = develop({img_a[0][v][u], img_a[1][v][u], img_a[2][v][u]}, style);
      rgb_a[0][v][u] = static_cast<float>(std::round(c.x * 255.0) / 255.0);
      rgb_a[1][v][u] = static_cast<float>(std::round(c.y * 255.0) / 255.0);
      rgb_a[2][v][u] = static_cast<float>(std::round(c.z * 255.0) / 255.0);
    }
  return {rgb, DepthMap::from_values(depth), cls};
}

std::array<double, 3> log_rotation(const std::array<double, 9>& m) {
  const double tr = m[0] + m[4] + m[8];
  const double cos_t = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(cos_t);
  const std::array<double, 3> v{m[7] - m[5], m[2] - m[6], m[3] - m[1]};
  const double k = theta < 1e-8 ? 0.5 : theta / (2.0 * std::sin(theta));
  return {v[0] * k, v[1] * k, v[2] * k};
}

}  // namespace

void SceneSpec::validate() const {
  if (scenes < 1) throw InvalidInput("scene spec: need at least one scene");
  if (frames < 1) throw InvalidInput("scene spec: need at least one frame");
  if (width < 8 || height < 8) throw InvalidInput("scene spec: resolution below 8x8");
  if (!std::isfinite(speed) || speed < 0) throw InvalidInput("scene spec: degenerate camera path (speed)");
  if (!std::isfinite(yaw_amplitude) || std::abs(yaw_amplitude) > 0.5)
    throw InvalidInput("scene spec: degenerate camera path (yaw amplitude)");
  if (!(camera_height > 0.1)) throw InvalidInput("scene spec: camera must be above the ground");
  if (!(blur_sigma >= 0 && blur_sigma <= 4)) throw InvalidInput("scene spec: blur_sigma must lie in [0,4]");
  if (supersample < 1) throw InvalidInput("scene spec: supersample must be >= 1");
  if (!(domain_gap >= 0 && domain_gap <= 1)) throw InvalidInput("scene spec: domain_gap must lie in [0,1]");
}

PoseTransform relative_pose(const CameraPose& target, const CameraPose& source) {
  const auto& a = target.rotation;
  const auto& b = source.rotation;
  std::array<double, 9> rel{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += b[k * 3 + i] * a[k * 3 + j];
      rel[i * 3 + j] = s;
    }
  std::array<double, 3> dp{target.position[0] - source.position[0], target.position[1] - source.position[1],
                           target.position[2] - source.position[2]};
  std::array<double, 3> t{};
  for (int i = 0; i < 3; ++i) t[i] = b[0 * 3 + i] * dp[0] + b[1 * 3 + i] * dp[1] + b[2 * 3 + i] * dp[2];
  const auto w = log_rotation(rel);
  return {torch::tensor({w[0], w[1], w[2]}, torch::kFloat64).view({1, 3}),
          torch::tensor({t[0], t[1], t[2]}, torch::kFloat64).view({1, 3})};
}

ClassLegend toy_legend() { return {{kSky, "sky"}, {kGround, "ground"}, {kBuilding, "building"}, {kObject, "object"}}; }

std::map<std::string, double> toy_class_weights() {
  return {{"sky", 0.0}, {"ground", 0.5}, {"building", 0.5}, {"object", 1.0}};
}

ToyWorld generate_toy_world(const SceneSpec& spec) {
  spec.validate();
  ToyWorld world;
  world.legend = toy_legend();
  world.real = Dataset(Domain::kReal, world.legend);
  world.virtual_ = Dataset(Domain::kVirtual, world.legend);

  const Intrinsics K{0.6 * spec.width, 0.6 * spec.width, (spec.width - 1) / 2.0, (spec.height - 1) / 2.0,
                     spec.width, spec.height};

  for (Domain domain : {Domain::kVirtual, Domain::kReal}) {
    const Style style = blended_style(domain == Domain::kReal ? spec.domain_gap : 0.0);
    std::mt19937_64 rng(mix(spec.seed * 2 + (domain == Domain::kReal ? 1 : 0)));
    for (int s = 0; s < spec.scenes; ++s) {
      const Scene scene = make_scene(rng, spec, style);
      const auto path = make_path(rng, spec);
      Sequence seq;
      char name[32];
      std::snprintf(name, sizeof(name), "seq_%04d", s);
      seq.name = name;
      seq.intrinsics = K;
      std::vector<DepthMap> depth;
      for (const auto& pose : path) {
        Render r = render(scene, pose, K, style, spec.supersample, spec.blur_sigma);
        seq.frames.push_back(r.rgb);
        depth.push_back(r.depth);
        if (domain == Domain::kVirtual) seq.semantics.push_back(r.classes);
      }
      if (domain == Domain::kVirtual) {
        seq.depth = std::move(depth);
        world.virtual_.add_sequence(std::move(seq));
        world.virtual_poses.push_back(path);
      } else {
        world.real_depth.push_back(std::move(depth));
        world.real.add_sequence(std::move(seq));
        world.real_poses.push_back(path);
      }
    }
  }
  return world;
}

void write_toy_world(const ToyWorld& world, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  write_legend(root / "classes.txt", world.legend);
  for (const auto* ds : {&world.real, &world.virtual_})
    for (const auto& seq : ds->sequences()) write_sequence(root / to_string(ds->domain()) / seq.name, seq, ds->domain());
}

}  // namespace vsdepth
