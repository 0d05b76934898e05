#include "frid/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "frid/common.hpp"

namespace frid {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(sep);
    out += v[i];
  }
  return out;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Rgb {
  double r, g, b;
};

Rgb random_color(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

// Deterministic look of one identity: textures, build and gait.
struct SpriteIdentity {
  Rgb torso_a, torso_b, head, legs;
  double band_period, band_phase;
  double scale;
  double gait_freq, gait_amp, gait_phase;
  double speed;
  double bob_amp;

  static SpriteIdentity make(std::uint64_t dataset_seed, int identity) {
    std::mt19937_64 rng(derive_seed(dataset_seed, 0x1d, identity));
    SpriteIdentity id;
    id.torso_a = random_color(rng, 0.15, 0.95);
    id.torso_b = random_color(rng, 0.15, 0.95);
    id.head = random_color(rng, 0.35, 0.9);
    id.legs = random_color(rng, 0.15, 0.8);
    id.band_period = uniform(rng, 4.0, 9.0);
    id.band_phase = uniform(rng, 0.0, 2.0 * kPi);
    id.scale = uniform(rng, 0.85, 1.1);
    id.gait_freq = uniform(rng, 0.05, 0.12);
    id.gait_amp = uniform(rng, 0.15, 0.35);
    id.gait_phase = uniform(rng, 0.0, 2.0 * kPi);
    id.speed = uniform(rng, 0.5, 1.4);
    id.bob_amp = uniform(rng, 0.2, 0.6);
    return id;
  }
};

// Soft coverage helpers (edges feathered over ~1.2 px so classical flow
// sees smooth gradients rather than aliasing flicker).
double soft_step(double signed_dist, double soft = 1.2) {
  return std::clamp(0.5 - signed_dist / soft, 0.0, 1.0);
}

double rect_coverage(double y, double x, double cy, double cx, double hh,
                     double hw) {
  const double dy = std::abs(y - cy) - hh;
  const double dx = std::abs(x - cx) - hw;
  return soft_step(std::max(dy, dx));
}

double disk_coverage(double y, double x, double cy, double cx, double r) {
  const double d = std::hypot(y - cy, x - cx) - r;
  return soft_step(d);
}

// Distance-to-segment capsule, for legs.
double capsule_coverage(double y, double x, double y0, double x0, double y1,
                        double x1, double radius) {
  const double vy = y1 - y0, vx = x1 - x0;
  const double len2 = vy * vy + vx * vx;
  double t = len2 > 0 ? ((y - y0) * vy + (x - x0) * vx) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double d = std::hypot(y - (y0 + t * vy), x - (x0 + t * vx)) - radius;
  return soft_step(d);
}

struct ClipPlan {
  double x0, cy0, dir, speed;   // rigid path cx(t) = x0 + dir*speed*t
  double phase_offset;           // clip-level gait phase jitter
  double bg_period, bg_phase, bg_wobble;
  Rgb bg_a, bg_b;
  double occ_gray;
  std::vector<bool> occluded;    // per frame
  Array2d noise;                 // static per-clip sensor pattern

  double cx(int t) const { return x0 + dir * speed * t; }
  double cy(const SpriteIdentity& id, int t) const {
    return cy0 + id.bob_amp *
                     std::sin(2.0 * kPi * id.gait_freq * t + id.gait_phase +
                              phase_offset);
  }
};

ClipPlan plan_clip(const GenParams& p, const SpriteIdentity& id, int identity,
                   int camera, int k) {
  std::mt19937_64 rng(
      derive_seed(p.seed, 0xc11b, static_cast<std::uint64_t>(identity),
                  static_cast<std::uint64_t>(camera) * 1000 +
                      static_cast<std::uint64_t>(k)));
  ClipPlan c;
  const double half_extent = 8.7 * id.scale + 1.0;
  const double xmin = half_extent, xmax = p.width - half_extent;
  const double travel = std::max(1.0, xmax - xmin);
  c.speed = std::min(id.speed, travel / std::max(1, p.frames_per_clip - 1));
  c.dir = rng() % 2 == 0 ? 1.0 : -1.0;
  const double slack =
      travel - c.speed * std::max(1, p.frames_per_clip - 1);
  const double start = uniform(rng, 0.0, std::max(1e-9, slack));
  c.x0 = c.dir > 0 ? xmin + start : xmax - start;
  c.cy0 = p.height * 0.45 + uniform(rng, -1.5, 1.5);
  c.phase_offset = uniform(rng, 0.0, 2.0 * kPi);

  // camera-specific background family; instance varies per clip
  if (camera == 0) {
    c.bg_a = {uniform(rng, 0.10, 0.30), uniform(rng, 0.30, 0.55),
              uniform(rng, 0.40, 0.70)};
    c.bg_b = {uniform(rng, 0.15, 0.35), uniform(rng, 0.45, 0.70),
              uniform(rng, 0.25, 0.50)};
    c.bg_period = uniform(rng, 7.0, 13.0);
  } else {
    c.bg_a = {uniform(rng, 0.45, 0.75), uniform(rng, 0.25, 0.45),
              uniform(rng, 0.10, 0.30)};
    c.bg_b = {uniform(rng, 0.60, 0.85), uniform(rng, 0.40, 0.60),
              uniform(rng, 0.20, 0.40)};
    c.bg_period = uniform(rng, 5.0, 10.0);
  }
  c.bg_phase = uniform(rng, 0.0, 2.0 * kPi);
  c.bg_wobble = uniform(rng, 1.0, 3.0);
  c.occ_gray = uniform(rng, 0.40, 0.52);

  c.occluded.resize(static_cast<std::size_t>(p.frames_per_clip));
  for (int t = 0; t < p.frames_per_clip; ++t)
    c.occluded[static_cast<std::size_t>(t)] =
        uniform(rng, 0.0, 1.0) < p.occlusion_prob;

  c.noise = Array2d(p.height, p.width);
  std::normal_distribution<double> noise_dist(0.0, 0.015);
  for (Eigen::Index y = 0; y < p.height; ++y)
    for (Eigen::Index x = 0; x < p.width; ++x) c.noise(y, x) = noise_dist(rng);
  return c;
}

struct RenderedFrame {
  ImageRgb image;
  ImageGray visible_mask;  // sprite pixels not hidden by the occluder
};

RenderedFrame render_frame(const GenParams& p, const SpriteIdentity& id,
                           const ClipPlan& clip, int camera, int t) {
  const Eigen::Index H = p.height, W = p.width;
  const double s = id.scale;
  const double cx = clip.cx(t);
  const double cy = clip.cy(id, t);
  const double theta =
      id.gait_amp * std::sin(2.0 * kPi * id.gait_freq * t + id.gait_phase +
                             clip.phase_offset);

  // leg endpoints (anti-phase swing around vertical)
  const double hip_y = cy + 8.0 * s, leg_len = 13.0 * s;
  const double lx0 = cx - 3.0 * s, rx0 = cx + 3.0 * s;
  const double l_tip_x = lx0 + leg_len * std::sin(theta);
  const double l_tip_y = hip_y + leg_len * std::cos(theta);
  const double r_tip_x = rx0 - leg_len * std::sin(theta);
  const double r_tip_y = hip_y + leg_len * std::cos(theta);

  ImageRgb im{Array2d(H, W), Array2d(H, W), Array2d(H, W)};
  ImageGray mask{Array2d::Zero(H, W)};

  const bool occluded = clip.occluded[static_cast<std::size_t>(t)];
  const double occ_cx = cx, occ_cy = cy - 2.0 * s;
  const double occ_hw = 7.5 * s, occ_hh = 14.0 * s;

  for (Eigen::Index yi = 0; yi < H; ++yi) {
    for (Eigen::Index xi = 0; xi < W; ++xi) {
      const double y = static_cast<double>(yi), x = static_cast<double>(xi);

      // background
      double wave;
      if (camera == 0)
        wave = std::sin(2.0 * kPi *
                            (y + clip.bg_wobble *
                                     std::sin(2.0 * kPi * x / W * 1.3)) /
                            clip.bg_period +
                        clip.bg_phase);
      else
        wave = std::sin(2.0 * kPi *
                            (x + clip.bg_wobble *
                                     std::sin(2.0 * kPi * y / H * 1.1)) /
                            clip.bg_period +
                        clip.bg_phase);
      const double mixw = 0.5 + 0.5 * wave;
      double r = clip.bg_a.r + mixw * (clip.bg_b.r - clip.bg_a.r);
      double g = clip.bg_a.g + mixw * (clip.bg_b.g - clip.bg_a.g);
      double b = clip.bg_a.b + mixw * (clip.bg_b.b - clip.bg_a.b);

      // sprite, back to front: legs, torso, head
      double sprite_cov = 0.0;
      const double leg_cov = std::max(
          capsule_coverage(y, x, hip_y, lx0, l_tip_y, l_tip_x, 1.6 * s),
          capsule_coverage(y, x, hip_y, rx0, r_tip_y, r_tip_x, 1.6 * s));
      if (leg_cov > 0.0) {
        r += leg_cov * (id.legs.r - r);
        g += leg_cov * (id.legs.g - g);
        b += leg_cov * (id.legs.b - b);
        sprite_cov = std::max(sprite_cov, leg_cov);
      }
      const double torso_cov =
          rect_coverage(y, x, cy - 1.0 * s, cx, 9.0 * s, 6.5 * s);
      if (torso_cov > 0.0) {
        const double band =
            0.5 + 0.5 * std::sin(2.0 * kPi * (y - cy) / (id.band_period * s) +
                                 id.band_phase);
        const double tr = id.torso_a.r + band * (id.torso_b.r - id.torso_a.r);
        const double tg = id.torso_a.g + band * (id.torso_b.g - id.torso_a.g);
        const double tb = id.torso_a.b + band * (id.torso_b.b - id.torso_a.b);
        r += torso_cov * (tr - r);
        g += torso_cov * (tg - g);
        b += torso_cov * (tb - b);
        sprite_cov = std::max(sprite_cov, torso_cov);
      }
      const double head_cov =
          disk_coverage(y, x, cy - 14.5 * s, cx, 4.2 * s);
      if (head_cov > 0.0) {
        r += head_cov * (id.head.r - r);
        g += head_cov * (id.head.g - g);
        b += head_cov * (id.head.b - b);
        sprite_cov = std::max(sprite_cov, head_cov);
      }

      // occluder hides whatever lies underneath it
      double occ_cov = 0.0;
      if (occluded) {
        occ_cov = rect_coverage(y, x, occ_cy, occ_cx, occ_hh, occ_hw);
        if (occ_cov > 0.0) {
          r += occ_cov * (clip.occ_gray - r);
          g += occ_cov * (clip.occ_gray - g);
          b += occ_cov * (clip.occ_gray - b);
        }
      }

      // camera 1 applies a global illumination shift
      if (camera == 1) {
        r = r * 0.82 + 0.03;
        g = g * 0.82 + 0.03;
        b = b * 0.82 + 0.03;
      }
      const double n = clip.noise(yi, xi);
      im.r(yi, xi) = std::clamp(r + n, 0.0, 1.0);
      im.g(yi, xi) = std::clamp(g + n, 0.0, 1.0);
      im.b(yi, xi) = std::clamp(b + n, 0.0, 1.0);
      mask.v(yi, xi) = sprite_cov * (1.0 - occ_cov) > 0.5 ? 1.0 : 0.0;
    }
  }
  return {std::move(im), std::move(mask)};
}

}  // namespace

int Manifest::num_identities() const {
  int n = 0;
  for (const ManifestRecord& r : records) n = std::max(n, r.identity + 1);
  return n;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open manifest: " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string header;
  if (!std::getline(is, header))
    throw IoError("empty manifest: " + path.string());
  std::istringstream hs(header);
  std::string magic, version, seed_kv, frames_kv;
  hs >> magic >> version >> seed_kv >> frames_kv;
  if (magic != "FRID-MANIFEST" || version != "v1" ||
      seed_kv.rfind("seed=", 0) != 0 || frames_kv.rfind("frames=", 0) != 0)
    throw IoError("bad manifest header: " + header);
  m.seed = std::stoull(seed_kv.substr(5));
  const auto hw = split_on(frames_kv.substr(7), 'x');
  if (hw.size() != 2) throw IoError("bad manifest frame extent: " + frames_kv);
  m.frame_h = std::stoll(hw[0]);
  m.frame_w = std::stoll(hw[1]);

  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split_on(line, '\t');
    if (fields.size() != 6)
      throw IoError("manifest record needs 6 tab-separated fields: " + line);
    ManifestRecord rec;
    rec.clip_id = fields[0];
    rec.identity = std::stoi(fields[1]);
    rec.camera = std::stoi(fields[2]);
    rec.frame_paths = split_on(fields[3], ',');
    rec.flow_paths = split_on(fields[4], ',');
    if (fields[5] != "-") rec.mask_paths = split_on(fields[5], ',');
    if (rec.camera != 0 && rec.camera != 1)
      throw IoError("manifest camera must be 0 or 1: " + line);
    if (rec.flow_paths.size() != rec.frame_paths.size())
      throw IoError("manifest clip " + rec.clip_id +
                    ": flow count does not match frame count");
    m.records.push_back(std::move(rec));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  os << "FRID-MANIFEST v1 seed=" << m.seed << " frames=" << m.frame_h << "x"
     << m.frame_w << "\n";
  for (const ManifestRecord& r : m.records) {
    os << r.clip_id << '\t' << r.identity << '\t' << r.camera << '\t'
       << join(r.frame_paths, ',') << '\t' << join(r.flow_paths, ',') << '\t'
       << (r.mask_paths.empty() ? "-" : join(r.mask_paths, ',')) << "\n";
  }
  if (!os) throw IoError("manifest write failed: " + path.string());
}

bool is_train_identity(int identity, int num_identities) {
  return identity < num_identities / 2;
}

std::vector<const ManifestRecord*> split_records(const Manifest& m,
                                                 const std::string& split) {
  const int n = m.num_identities();
  const bool want_train = split == "train";
  if (!want_train && split != "test" && split != "query" &&
      split != "gallery")
    throw UsageError("unknown split '" + split +
                     "' (expected train|test|query|gallery)");
  std::vector<const ManifestRecord*> out;
  for (const ManifestRecord& r : m.records)
    if (is_train_identity(r.identity, n) == want_train) out.push_back(&r);
  return out;
}

std::vector<int> evenly_spaced_indices(int n, int k) {
  if (k < 1 || n < 1 || k > n)
    throw UsageError("evenly_spaced_indices: cannot pick " +
                     std::to_string(k) + " of " + std::to_string(n));
  std::vector<int> idx(static_cast<std::size_t>(k));
  if (k == 1) {
    idx[0] = 0;
    return idx;
  }
  for (int i = 0; i < k; ++i)
    idx[static_cast<std::size_t>(i)] =
        static_cast<int>(static_cast<long long>(i) * (n - 1) / (k - 1));
  return idx;
}

LoadedClip load_clip(const Manifest& m, const ManifestRecord& rec,
                     int seq_len, ClipSampling sampling, std::mt19937_64* rng,
                     bool want_masks) {
  const int n = static_cast<int>(rec.frame_paths.size());
  if (seq_len < 1) throw UsageError("load_clip: seq_len must be >= 1");
  if (n < seq_len)
    throw UsageError("load_clip: tracklet " + rec.clip_id + " has " +
                     std::to_string(n) + " frames, need " +
                     std::to_string(seq_len));
  std::vector<int> idx;
  if (sampling == ClipSampling::kEvenlySpaced) {
    idx = evenly_spaced_indices(n, seq_len);
  } else {
    if (!rng)
      throw UsageError("load_clip: random-contiguous sampling needs an RNG");
    std::uniform_int_distribution<int> dist(0, n - seq_len);
    const int start = dist(*rng);
    for (int i = 0; i < seq_len; ++i) idx.push_back(start + i);
  }

  LoadedClip clip;
  clip.clip_id = rec.clip_id;
  clip.identity = rec.identity;
  clip.camera = rec.camera;
  for (int i : idx) {
    ImageRgb im = read_ppm(m.root / rec.frame_paths[static_cast<std::size_t>(i)]);
    if (im.height() != m.frame_h || im.width() != m.frame_w)
      im = resize_bilinear(im, m.frame_h, m.frame_w);
    clip.frames.push_back(std::move(im));
    FlowField f = read_flo(m.root / rec.flow_paths[static_cast<std::size_t>(i)]);
    if (f.height() != m.frame_h || f.width() != m.frame_w)
      throw IoError("flow extent mismatch for clip " + rec.clip_id);
    clip.flows.push_back(std::move(f));
    if (want_masks && !rec.mask_paths.empty())
      clip.masks.push_back(
          read_pgm(m.root / rec.mask_paths[static_cast<std::size_t>(i)]));
  }
  return clip;
}

namespace {

Array2d flip_cols(const Array2d& a) {
  return a.rowwise().reverse();
}

Array2d shift_clamped(const Array2d& a, int dy, int dx) {
  const Eigen::Index h = a.rows(), w = a.cols();
  Array2d out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    const Eigen::Index sy = std::clamp<Eigen::Index>(y + dy, 0, h - 1);
    for (Eigen::Index x = 0; x < w; ++x) {
      const Eigen::Index sx = std::clamp<Eigen::Index>(x + dx, 0, w - 1);
      out(y, x) = a(sy, sx);
    }
  }
  return out;
}

}  // namespace

void augment_clip(LoadedClip& clip, std::mt19937_64& rng) {
  const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  std::uniform_int_distribution<int> shift(-2, 2);
  const int dx = shift(rng), dy = shift(rng);
  for (ImageRgb& im : clip.frames) {
    if (flip) {
      im.r = flip_cols(im.r);
      im.g = flip_cols(im.g);
      im.b = flip_cols(im.b);
    }
    im.r = shift_clamped(im.r, dy, dx);
    im.g = shift_clamped(im.g, dy, dx);
    im.b = shift_clamped(im.b, dy, dx);
  }
  for (FlowField& f : clip.flows) {
    if (flip) {
      f.u = -flip_cols(f.u);  // horizontal motion reverses under mirroring
      f.v = flip_cols(f.v);
    }
    f.u = shift_clamped(f.u, dy, dx);
    f.v = shift_clamped(f.v, dy, dx);
  }
  for (ImageGray& msk : clip.masks) {
    if (flip) msk.v = flip_cols(msk.v);
    msk.v = shift_clamped(msk.v, dy, dx);
  }
}

Array2d smooth_noise_image(std::uint64_t seed, Eigen::Index h, Eigen::Index w,
                           Eigen::Index grid) {
  std::mt19937_64 rng(seed);
  const Eigen::Index gh = h / grid + 3, gw = w / grid + 3;
  Array2d coarse(gh, gw);
  for (Eigen::Index y = 0; y < gh; ++y)
    for (Eigen::Index x = 0; x < gw; ++x) coarse(y, x) = uniform(rng, 0.15, 0.85);
  Array2d out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const double fy = static_cast<double>(y) / grid;
      const double fx = static_cast<double>(x) / grid;
      const Eigen::Index y0 = static_cast<Eigen::Index>(fy);
      const Eigen::Index x0 = static_cast<Eigen::Index>(fx);
      const double wy = fy - y0, wx = fx - x0;
      // smoothstep weights keep the surface C1 so flow linearization holds
      const double sy = wy * wy * (3 - 2 * wy), sx = wx * wx * (3 - 2 * wx);
      out(y, x) = (1 - sy) * ((1 - sx) * coarse(y0, x0) +
                              sx * coarse(y0, x0 + 1)) +
                  sy * ((1 - sx) * coarse(y0 + 1, x0) +
                        sx * coarse(y0 + 1, x0 + 1));
    }
  return out;
}

std::pair<Array2d, Array2d> translated_pair(std::uint64_t seed,
                                            Eigen::Index h, Eigen::Index w,
                                            int dx, int dy) {
  const Eigen::Index margin =
      std::max(std::abs(dx), std::abs(dy)) + 2;
  Array2d canvas = smooth_noise_image(seed, h + 2 * margin, w + 2 * margin);
  Array2d a(h, w), b(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      a(y, x) = canvas(y + margin, x + margin);
      b(y, x) = canvas(y + margin - dy, x + margin - dx);
    }
  return {std::move(a), std::move(b)};
}

Manifest generate_dataset(const GenParams& p,
                          const std::filesystem::path& out_dir) {
  if (p.num_identities < 1)
    throw UsageError("generate: need at least 1 identity");
  if (p.clips_per_identity < 1 || p.frames_per_clip < 2)
    throw UsageError("generate: need >= 1 clip per identity and >= 2 frames");
  if (p.height < 32 || p.width < 16)
    throw UsageError("generate: extent must be at least 32x16");
  if (p.occlusion_prob < 0.0 || p.occlusion_prob > 1.0)
    throw UsageError("generate: occlusion_prob must lie in [0,1]");

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "frames", ec);
  fs::create_directories(out_dir / "flow_gt", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError("cannot create dataset directories under " +
                        out_dir.string() + ": " + ec.message());

  struct ClipTask {
    int identity, camera, k;
    std::string clip_id;
  };
  std::vector<ClipTask> tasks;
  for (int id = 0; id < p.num_identities; ++id)
    for (int cam = 0; cam < 2; ++cam)
      for (int k = 0; k < p.clips_per_identity; ++k) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "id%03d_c%d_k%d", id, cam, k);
        tasks.push_back({id, cam, k, buf});
      }

  Manifest m;
  m.seed = p.seed;
  m.frame_h = p.height;
  m.frame_w = p.width;
  m.root = out_dir;
  m.records.resize(tasks.size());

  auto render_clip = [&](const ClipTask& task, ManifestRecord& rec) {
    const SpriteIdentity id = SpriteIdentity::make(p.seed, task.identity);
    const ClipPlan plan = plan_clip(p, id, task.identity, task.camera, task.k);
    rec.clip_id = task.clip_id;
    rec.identity = task.identity;
    rec.camera = task.camera;

    std::vector<RenderedFrame> rendered;
    rendered.reserve(static_cast<std::size_t>(p.frames_per_clip));
    for (int t = 0; t < p.frames_per_clip; ++t)
      rendered.push_back(render_frame(p, id, plan, task.camera, t));

    for (int t = 0; t < p.frames_per_clip; ++t) {
      char suffix[32];
      std::snprintf(suffix, sizeof suffix, "_t%02d", t);
      const std::string stem = task.clip_id + suffix;
      const std::string frame_rel = "frames/" + stem + ".ppm";
      const std::string mask_rel = "masks/" + stem + ".pgm";
      const std::string flow_rel = "flow_gt/" + stem + ".flo";
      write_ppm(out_dir / frame_rel, rendered[static_cast<std::size_t>(t)].image);
      write_pgm(out_dir / mask_rel,
                rendered[static_cast<std::size_t>(t)].visible_mask);

      // exact flow: rigid sprite displacement inside the visible mask,
      // zero elsewhere; the final field replicates its predecessor
      const int src = std::min(t, p.frames_per_clip - 2);
      FlowField flow = FlowField::zero(p.height, p.width);
      const double du = plan.cx(src + 1) - plan.cx(src);
      const double dv = plan.cy(id, src + 1) - plan.cy(id, src);
      const Array2d& msk =
          rendered[static_cast<std::size_t>(src)].visible_mask.v;
      flow.u = msk * du;
      flow.v = msk * dv;
      write_flo(out_dir / flow_rel, flow);

      rec.frame_paths.push_back(frame_rel);
      rec.flow_paths.push_back(flow_rel);
      rec.mask_paths.push_back(mask_rel);
    }
  };

  int workers = p.workers > 0
                    ? p.workers
                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      render_clip(tasks[i], m.records[i]);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(static_cast<std::size_t>(workers));
    for (int wi = 0; wi < workers; ++wi)
      pool.emplace_back([&, wi] {
        try {
          for (std::size_t i = next.fetch_add(1); i < tasks.size();
               i = next.fetch_add(1))
            render_clip(tasks[i], m.records[i]);
        } catch (const std::exception& e) {
          errors[static_cast<std::size_t>(wi)] = e.what();
        }
      });
    for (auto& th : pool) th.join();
    for (const std::string& e : errors)
      if (!e.empty()) throw IoError("dataset generation failed: " + e);
  }

  write_manifest(out_dir / "manifest.txt", m);
  return m;
}

}  // namespace frid
