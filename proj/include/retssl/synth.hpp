#pragma once

#include "retssl/types.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace retssl::synth {

struct SynthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Generator controls. The planted signals live in mid-frequency structure:
// age drives vessel tortuosity, gender an angular stripe texture, disease a
// lesion count; nothing informative sits in global brightness.
struct SynthSpec {
  long n_patients = 200;
  int scanners = 2;  // 1 = scanner A only, 2 = A and B
  int image_size = 224;
  double radius_fraction = 0.45;
  double age_min = 20.0;
  double age_max = 90.0;
  double curvature_gain = 2.0;     // tortuosity multiplier per unit normalized age
  double stripe_amplitude = 0.03;  // female-only angular texture
  int lesion_max = 5;              // count uniform in [0, lesion_max]
  int disease_threshold = 3;       // disease = 1 iff count >= threshold
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruth {
  double age_years = 0;
  Gender gender = Gender::kFemale;
  int lesion_count = 0;
  bool disease = false;
  double mean_abs_curvature = 0;  // radians per vessel step, averaged
  double center_x = 0, center_y = 0, radius = 0;
};

struct SynthPatient {
  PatientRecord record;
  GroundTruth truth;
};

// Pure function of (spec, patient_index). Images come with the analytic
// retina disc attached as their mask.
SynthPatient generate_patient(long patient_index, const SynthSpec& spec);

// Exact disc the generator draws; the IoU oracle for the mask estimator.
Mask analytic_retina_mask(const SynthSpec& spec);

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split s);

// 70:15:15 patient-level split by largest-remainder rounding; remainder ties
// go to the later split.
std::array<long, 3> split_counts(long n_patients);
Split split_of(long patient_index, long n_patients);

struct DatasetPaths {
  std::filesystem::path manifest;
  std::filesystem::path labels;
  std::filesystem::path split_manifests[3];
  long n_images = 0;
};

// Writes images plus manifest.csv, per-split manifest_{train,val,test}.csv
// and labels.csv (patient_id,split,age_years,gender,disease). Refuses to
// write into a non-empty directory.
DatasetPaths generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace retssl::synth
