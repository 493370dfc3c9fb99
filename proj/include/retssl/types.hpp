#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "retssl/image.hpp"

namespace retssl {

constexpr int kImageSize = 224;

enum class Eye { kLeft, kRight };

inline Eye opposite(Eye e) { return e == Eye::kLeft ? Eye::kRight : Eye::kLeft; }
inline char eye_letter(Eye e) { return e == Eye::kLeft ? 'L' : 'R'; }
Eye parse_eye(const std::string& s);

enum class Gender { kFemale, kMale };

inline int gender_class(Gender g) { return g == Gender::kFemale ? 0 : 1; }
inline char gender_letter(Gender g) { return g == Gender::kFemale ? 'F' : 'M'; }
Gender parse_gender(const std::string& s);

// Age in years mapped to the unit the meta regression head predicts.
// Fixed divisor so checkpoints stay comparable across datasets.
double normalize_age(double age_years);

struct MetadataLabels {
  double age_years = 0.0;
  Gender gender = Gender::kFemale;

  MetadataLabels() = default;
  MetadataLabels(double age, Gender g);

  double age_normalized() const { return normalize_age(age_years); }

  bool operator==(const MetadataLabels& o) const {
    return age_years == o.age_years && gender == o.gender;
  }
};

// One color fundus photograph. Pixel tensor is always 224x224x3 in [0,1];
// constructors reject anything else instead of resizing silently.
struct FundusImage {
  std::string patient_id;
  Eye eye = Eye::kLeft;
  // After augmentation flips this may differ from `eye`; mirror
  // correspondence in the consistency loss keys on it.
  Eye effective_eye = Eye::kLeft;
  std::string scanner_id;
  Image pixels;
  std::optional<Mask> retina_mask;

  FundusImage() = default;
  FundusImage(std::string pid, Eye e, std::string scanner, Image px,
              std::optional<Mask> mask = std::nullopt);
};

struct PatientRecord {
  std::string patient_id;
  std::vector<FundusImage> images;
  MetadataLabels labels;

  PatientRecord() = default;
  PatientRecord(std::string pid, std::vector<FundusImage> imgs, MetadataLabels lab);
};

// Two same-patient views with roles fixed: the masked view is disrupted and
// reconstructed from the visible one.
struct PairSample {
  FundusImage view_visible;
  FundusImage view_masked;
  MetadataLabels labels;
  bool cross_laterality = false;

  PairSample() = default;
  PairSample(FundusImage visible, FundusImage masked, MetadataLabels lab);
};

}  // namespace retssl
