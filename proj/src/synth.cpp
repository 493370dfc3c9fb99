#include "retssl/synth.hpp"

#include "retssl/image.hpp"
#include "retssl/png_io.hpp"
#include "retssl/retina_mask.hpp"
#include "retssl/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace retssl::synth {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTau = 2.0 * kPi;

void SynthSpecCheck(const SynthSpec& s) {
  if (s.n_patients < 1) throw std::invalid_argument("n_patients must be >= 1");
  if (s.scanners != 1 && s.scanners != 2) throw std::invalid_argument("scanners must be 1 or 2");
  if (s.image_size < 64) throw std::invalid_argument("image_size too small");
  if (!(s.radius_fraction > 0 && s.radius_fraction <= 0.5))
    throw std::invalid_argument("radius_fraction must be in (0, 0.5]");
  if (!(s.age_min >= 0 && s.age_max > s.age_min))
    throw std::invalid_argument("age range invalid");
  if (s.curvature_gain < 0 || s.stripe_amplitude < 0 || s.noise_sigma < 0)
    throw std::invalid_argument("signal strengths must be >= 0");
  if (s.lesion_max < 0 || s.disease_threshold < 0)
    throw std::invalid_argument("lesion controls must be >= 0");
}

struct PatientDraws {
  double age;
  Gender gender;
  int lesion_count;
  double base_r, base_g, base_b;
  double tex_fx, tex_fy, tex_phase_x, tex_phase_y;
  double stripe_phase;
  double disc_angle;
};

// Paints the shared left-eye base texture and returns the accumulated
// vessel-curvature statistic.
double paint_base(Image& im, const SynthSpec& spec, const PatientDraws& d, Rng& rng) {
  const int n = spec.image_size;
  const double cx = (n - 1) / 2.0, cy = (n - 1) / 2.0;
  const double radius = spec.radius_fraction * n;
  const double age_norm = d.age / 100.0;

  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dist = std::hypot(x - cx, y - cy);
      const double cov = std::clamp(radius + 0.5 - dist, 0.0, 1.0);  // anti-aliased rim
      double rgb[3] = {0.02, 0.02, 0.02};
      if (cov > 0) {
        const double radial = 1.0 - 0.35 * (dist / radius) * (dist / radius);
        const double tex =
            1.0 + 0.06 * std::sin(kTau * (d.tex_fx * x / n + d.tex_phase_x)) *
                      std::sin(kTau * (d.tex_fy * y / n + d.tex_phase_y));
        double stripe = 0.0;
        if (d.gender == Gender::kFemale) {
          const double theta = std::atan2(y - cy, x - cx);
          stripe = spec.stripe_amplitude * std::sin(24.0 * theta + d.stripe_phase);
        }
        const double base[3] = {d.base_r, d.base_g, d.base_b};
        for (int c = 0; c < 3; ++c) {
          const double v = std::clamp(base[c] * radial * tex + stripe, 0.0, 1.0);
          rgb[c] = 0.02 * (1.0 - cov) + v * cov;
        }
      }
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = static_cast<float>(rgb[c]);
    }

  // vessels: seeded walks from an off-center origin, heading change per step
  // uniform within +-max_turn, tortuosity scaled by (1 + gain * age_norm)
  const int n_vessels = 6 + rng.uniform_int(5);
  const double max_turn = 0.16 * (1.0 + spec.curvature_gain * age_norm);
  double abs_turn_sum = 0;
  long turn_count = 0;
  const double disc_r = 0.55 * radius;
  const double disc_x = cx + disc_r * std::cos(d.disc_angle);
  const double disc_y = cy + disc_r * std::sin(d.disc_angle);

  auto stamp = [&](double px, double py) {
    for (int oy = -2; oy <= 2; ++oy)
      for (int ox = -2; ox <= 2; ++ox) {
        const int ix = static_cast<int>(std::floor(px)) + ox;
        const int iy = static_cast<int>(std::floor(py)) + oy;
        if (ix < 0 || iy < 0 || ix >= n || iy >= n) continue;
        const double dd = std::hypot(ix - px, iy - py);
        const double w = std::exp(-dd * dd / (2.0 * 0.9 * 0.9));
        im.at(iy, ix, 0) *= static_cast<float>(1.0 - 0.35 * w);
        im.at(iy, ix, 1) *= static_cast<float>(1.0 - 0.55 * w);
        im.at(iy, ix, 2) *= static_cast<float>(1.0 - 0.55 * w);
      }
  };

  for (int vsl = 0; vsl < n_vessels; ++vsl) {
    double px = disc_x + rng.uniform(-3.0, 3.0);
    double py = disc_y + rng.uniform(-3.0, 3.0);
    double heading = rng.uniform(0.0, kTau);
    for (int step = 0; step < 256; ++step) {
      const double turn = rng.uniform(-max_turn, max_turn);
      heading += turn;
      abs_turn_sum += std::abs(turn);
      ++turn_count;
      px += 1.5 * std::cos(heading);
      py += 1.5 * std::sin(heading);
      if (std::hypot(px - cx, py - cy) > 0.97 * radius) break;
      stamp(px, py);
    }
  }

  // lesions: small bright blobs well inside the disc
  for (int k = 0; k < d.lesion_count; ++k) {
    const double ang = rng.uniform(0.0, kTau);
    const double rr = radius * (0.15 + 0.6 * rng.uniform());
    const double lx = cx + rr * std::cos(ang), ly = cy + rr * std::sin(ang);
    for (int oy = -6; oy <= 6; ++oy)
      for (int ox = -6; ox <= 6; ++ox) {
        const int ix = static_cast<int>(std::lround(lx)) + ox;
        const int iy = static_cast<int>(std::lround(ly)) + oy;
        if (ix < 0 || iy < 0 || ix >= n || iy >= n) continue;
        const double dd = (ix - lx) * (ix - lx) + (iy - ly) * (iy - ly);
        const float add = static_cast<float>(0.30 * std::exp(-dd / (2.0 * 2.5 * 2.5)));
        for (int c = 0; c < 3; ++c)
          im.at(iy, ix, c) = std::min(1.0f, im.at(iy, ix, c) + add);
      }
  }

  return turn_count > 0 ? abs_turn_sum / static_cast<double>(turn_count) : 0.0;
}

Image add_noise(const Image& base, double sigma, std::uint64_t seed) {
  Image out = base;
  Rng rng(seed);
  for (auto& v : out.data)
    v = std::clamp(v + static_cast<float>(rng.normal() * sigma), 0.0f, 1.0f);
  return out;
}

Image scanner_b_transform(const Image& in) {
  Image out = in;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = std::pow(static_cast<double>(in.at(y, x, c)), 1.3);
        if (c == 1) v += 0.05;
        out.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return out;
}

std::string patient_name(long index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%04ld", index + 1);
  return buf;
}

}  // namespace

void SynthSpec::validate() const { SynthSpecCheck(*this); }

Mask analytic_retina_mask(const SynthSpec& spec) {
  return inscribed_circle_mask(spec.image_size, spec.image_size, spec.radius_fraction);
}

SynthPatient generate_patient(long patient_index, const SynthSpec& spec) {
  spec.validate();
  Rng rng(derive_seed({spec.seed, RngStream::kSynth, patient_index}));

  PatientDraws d;
  d.age = rng.uniform(spec.age_min, spec.age_max);
  d.gender = rng.bernoulli(0.5) ? Gender::kFemale : Gender::kMale;
  d.lesion_count = rng.uniform_int(spec.lesion_max + 1);
  d.base_r = 0.55 + 0.10 * rng.uniform();
  d.base_g = 0.33 + 0.08 * rng.uniform();
  d.base_b = 0.16 + 0.06 * rng.uniform();
  d.tex_fx = 2.0 + 3.0 * rng.uniform();
  d.tex_fy = 2.0 + 3.0 * rng.uniform();
  d.tex_phase_x = rng.uniform();
  d.tex_phase_y = rng.uniform();
  d.stripe_phase = rng.uniform(0.0, kTau);
  d.disc_angle = rng.uniform(0.0, kTau);

  Image left_base(spec.image_size, spec.image_size, 3);
  const double curvature = paint_base(left_base, spec, d, rng);
  const Image right_base = hflip(left_base);
  const Mask retina = analytic_retina_mask(spec);

  SynthPatient out;
  out.truth.age_years = d.age;
  out.truth.gender = d.gender;
  out.truth.lesion_count = d.lesion_count;
  out.truth.disease = d.lesion_count >= spec.disease_threshold;
  out.truth.mean_abs_curvature = curvature;
  out.truth.center_x = (spec.image_size - 1) / 2.0;
  out.truth.center_y = (spec.image_size - 1) / 2.0;
  out.truth.radius = spec.radius_fraction * spec.image_size;

  const std::string pid = patient_name(patient_index);
  std::vector<FundusImage> images;
  int image_ordinal = 0;
  for (int eye = 0; eye < 2; ++eye) {
    const Image& base = eye == 0 ? left_base : right_base;
    for (int sc = 0; sc < spec.scanners; ++sc) {
      const Image staged = sc == 0 ? base : scanner_b_transform(base);
      Image pixels = add_noise(
          staged, spec.noise_sigma,
          derive_seed({spec.seed, RngStream::kSynth, patient_index, 100 + image_ordinal}));
      images.emplace_back(pid, eye == 0 ? Eye::kLeft : Eye::kRight, sc == 0 ? "A" : "B",
                          std::move(pixels), retina);
      ++image_ordinal;
    }
  }
  MetadataLabels labels{d.age, d.gender};
  out.record = PatientRecord(pid, std::move(images), labels);
  return out;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    default: return "test";
  }
}

std::array<long, 3> split_counts(long n) {
  const double quota[3] = {0.70 * n, 0.15 * n, 0.15 * n};
  std::array<long, 3> counts{};
  double rem[3];
  long assigned = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = static_cast<long>(std::floor(quota[i]));
    rem[i] = quota[i] - counts[i];
    assigned += counts[i];
  }
  long leftover = n - assigned;
  while (leftover-- > 0) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] >= rem[best]) best = i;  // ties resolve to the later split
    counts[best]++;
    rem[best] = -1;
  }
  return counts;
}

Split split_of(long patient_index, long n_patients) {
  const auto counts = split_counts(n_patients);
  if (patient_index < counts[0]) return Split::kTrain;
  if (patient_index < counts[0] + counts[1]) return Split::kVal;
  return Split::kTest;
}

DatasetPaths generate_dataset(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir))
    throw SynthError("output directory not empty: " + out_dir.string());
  fs::create_directories(out_dir / "images");

  auto open = [](const fs::path& p) {
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw SynthError("cannot write " + p.string());
    return f;
  };

  DatasetPaths paths;
  paths.manifest = out_dir / "manifest.csv";
  paths.labels = out_dir / "labels.csv";
  const char* kHeader = "patient_id,image_path,eye,scanner_id,age_years,gender\n";

  auto manifest = open(paths.manifest);
  manifest << kHeader;
  std::ofstream split_files[3];
  for (int i = 0; i < 3; ++i) {
    paths.split_manifests[i] =
        out_dir / ("manifest_" + std::string(split_name(static_cast<Split>(i))) + ".csv");
    split_files[i] = open(paths.split_manifests[i]);
    split_files[i] << kHeader;
  }
  auto labels = open(paths.labels);
  labels << "patient_id,split,age_years,gender,disease\n";

  char agebuf[32];
  for (long p = 0; p < spec.n_patients; ++p) {
    const SynthPatient sp = generate_patient(p, spec);
    const Split split = split_of(p, spec.n_patients);
    std::snprintf(agebuf, sizeof agebuf, "%.6g", sp.truth.age_years);

    for (const auto& img : sp.record.images) {
      const std::string rel = "images/" + img.patient_id + "_" +
                              std::string(1, eye_letter(img.eye)) + "_" + img.scanner_id +
                              ".png";
      write_png_rgb8(out_dir / rel, img.pixels);
      const std::string row = img.patient_id + "," + rel + "," + eye_letter(img.eye) + "," +
                              img.scanner_id + "," + agebuf + "," +
                              gender_letter(sp.truth.gender) + "\n";
      manifest << row;
      split_files[static_cast<int>(split)] << row;
      ++paths.n_images;
    }
    labels << sp.record.patient_id << "," << split_name(split) << "," << agebuf << ","
           << gender_letter(sp.truth.gender) << "," << (sp.truth.disease ? 1 : 0) << "\n";
  }
  return paths;
}

}  // namespace retssl::synth
