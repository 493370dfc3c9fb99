#include "retssl/types.hpp"

#include <algorithm>
#include <cmath>

namespace retssl {

Eye parse_eye(const std::string& s) {
  if (s == "L" || s == "l") return Eye::kLeft;
  if (s == "R" || s == "r") return Eye::kRight;
  throw std::invalid_argument("eye must be L or R, got '" + s + "'");
}

Gender parse_gender(const std::string& s) {
  if (s == "F" || s == "f") return Gender::kFemale;
  if (s == "M" || s == "m") return Gender::kMale;
  throw std::invalid_argument("gender must be F or M, got '" + s + "'");
}

double normalize_age(double age_years) {
  if (age_years < 0.0 || !std::isfinite(age_years))
    throw std::invalid_argument("age_years must be finite and non-negative");
  return std::clamp(age_years / 100.0, 0.0, 1.2);
}

MetadataLabels::MetadataLabels(double age, Gender g) : age_years(age), gender(g) {
  if (age < 0.0 || age > 120.0 || !std::isfinite(age))
    throw std::invalid_argument("age_years out of [0,120]: " + std::to_string(age));
}

FundusImage::FundusImage(std::string pid, Eye e, std::string scanner, Image px,
                         std::optional<Mask> mask)
    : patient_id(std::move(pid)),
      eye(e),
      effective_eye(e),
      scanner_id(std::move(scanner)),
      pixels(std::move(px)),
      retina_mask(std::move(mask)) {
  if (patient_id.empty()) throw std::invalid_argument("patient_id must be non-empty");
  if (pixels.height != kImageSize || pixels.width != kImageSize || pixels.channels != 3)
    throw std::invalid_argument("fundus image must be 224x224x3, got " +
                                std::to_string(pixels.height) + "x" +
                                std::to_string(pixels.width) + "x" +
                                std::to_string(pixels.channels));
  for (float v : pixels.data)
    if (!(v >= 0.f && v <= 1.f))
      throw std::invalid_argument("fundus pixel values must lie in [0,1]");
  if (retina_mask) {
    if (retina_mask->height != pixels.height || retina_mask->width != pixels.width)
      throw std::invalid_argument("retina_mask dimensions must match the image");
    for (std::uint8_t v : retina_mask->data)
      if (v > 1) throw std::invalid_argument("retina_mask values must be 0 or 1");
  }
}

PatientRecord::PatientRecord(std::string pid, std::vector<FundusImage> imgs, MetadataLabels lab)
    : patient_id(std::move(pid)), images(std::move(imgs)), labels(lab) {
  if (images.empty()) throw std::invalid_argument("patient record needs at least one image");
  for (const auto& img : images)
    if (img.patient_id != patient_id)
      throw std::invalid_argument("image patient_id '" + img.patient_id +
                                  "' does not match record '" + patient_id + "'");
}

PairSample::PairSample(FundusImage visible, FundusImage masked, MetadataLabels lab)
    : view_visible(std::move(visible)), view_masked(std::move(masked)), labels(lab) {
  if (view_visible.patient_id != view_masked.patient_id)
    throw std::invalid_argument("pair views must share a patient");
  const bool same_image = view_visible.eye == view_masked.eye &&
                          view_visible.scanner_id == view_masked.scanner_id &&
                          view_visible.pixels.data == view_masked.pixels.data;
  if (same_image) throw std::invalid_argument("pair views must be distinct images");
  cross_laterality = view_visible.eye != view_masked.eye;
}

}  // namespace retssl
