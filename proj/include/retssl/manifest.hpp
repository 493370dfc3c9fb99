#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "retssl/types.hpp"

namespace retssl {

// Raised with row-level context for any malformed manifest input.
class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestRow {
  std::string patient_id;
  std::string image_path;  // relative paths resolve against the manifest directory
  Eye eye = Eye::kLeft;
  std::string scanner_id;
  double age_years = 0.0;
  Gender gender = Gender::kFemale;
  int line_number = 0;
};

// Header must be exactly:
//   patient_id,image_path,eye,scanner_id,age_years,gender
std::vector<ManifestRow> parse_manifest(const std::string& path);

struct LoadOptions {
  // Estimate retina masks at ingestion and cache them next to the images
  // as <image>.retina.png keyed by content hash.
  bool with_retina_masks = true;
  bool write_mask_cache = true;
};

// One record per distinct patient, ordered by patient_id; images resized to
// 224x224 and kept in manifest row order within each patient.
std::vector<PatientRecord> load_manifest(const std::string& path, const LoadOptions& opts = {});

// Cache-aware single-image mask lookup: reads <image_path>.retina.png when
// its stored hash matches, otherwise recomputes (and rewrites if requested).
Mask retina_mask_for(const Image& image, const std::string& image_path, bool write_cache);

}  // namespace retssl
