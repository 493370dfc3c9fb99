#include "retssl/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "retssl/png_io.hpp"
#include "retssl/retina_mask.hpp"

namespace fs = std::filesystem;

namespace retssl {

namespace {

constexpr char kHeader[] = "patient_id,image_path,eye,scanner_id,age_years,gender";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

[[noreturn]] void row_error(const std::string& path, int line, const std::string& what) {
  throw ManifestError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<ManifestRow> parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ManifestError("manifest has no header: " + path);
  if (strip_cr(line) != kHeader)
    throw ManifestError(path + ": header mismatch, expected '" + kHeader + "'");

  std::vector<ManifestRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 6)
      row_error(path, line_no, "expected 6 fields, got " + std::to_string(fields.size()));
    ManifestRow row;
    row.line_number = line_no;
    row.patient_id = fields[0];
    row.image_path = fields[1];
    if (row.patient_id.empty()) row_error(path, line_no, "empty patient_id");
    if (row.image_path.empty()) row_error(path, line_no, "empty image_path");
    try {
      row.eye = parse_eye(fields[2]);
      row.scanner_id = fields[3];
      row.age_years = std::stod(fields[4]);
      row.gender = parse_gender(fields[5]);
    } catch (const std::exception& e) {
      row_error(path, line_no, e.what());
    }
    if (!std::isfinite(row.age_years) || row.age_years < 0 || row.age_years > 120)
      row_error(path, line_no, "age_years out of [0,120]");
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    std::cerr << "warning: manifest is empty: " << path << "\n";
  return rows;
}

Mask retina_mask_for(const Image& image, const std::string& image_path, bool write_cache) {
  const std::uint64_t hash = content_hash(image);
  const std::string cache_path = image_path + ".retina.png";

  if (auto cached = read_png_mask1(cache_path)) {
    if (cached->source_hash == hash && cached->mask.height == image.height &&
        cached->mask.width == image.width)
      return std::move(cached->mask);
  }
  Mask mask = estimate_retina_mask(image);
  if (write_cache) {
    try {
      write_png_mask1(cache_path, mask, hash);
    } catch (const std::exception& e) {
      std::cerr << "warning: could not write mask cache " << cache_path << ": " << e.what()
                << "\n";
    }
  }
  return mask;
}

std::vector<PatientRecord> load_manifest(const std::string& path, const LoadOptions& opts) {
  const auto rows = parse_manifest(path);
  const fs::path base = fs::path(path).parent_path();

  // Ordered map gives the deterministic by-patient ordering directly.
  std::map<std::string, std::vector<const ManifestRow*>> by_patient;
  for (const auto& row : rows) by_patient[row.patient_id].push_back(&row);

  std::vector<PatientRecord> records;
  records.reserve(by_patient.size());
  for (const auto& [pid, patient_rows] : by_patient) {
    const ManifestRow* first = patient_rows.front();
    for (const ManifestRow* row : patient_rows) {
      if (row->age_years != first->age_years || row->gender != first->gender)
        row_error(path, row->line_number,
                  "metadata mismatch for patient '" + pid + "' (age/gender must agree with line " +
                      std::to_string(first->line_number) + ")");
    }
    std::vector<FundusImage> images;
    images.reserve(patient_rows.size());
    for (const ManifestRow* row : patient_rows) {
      const fs::path img_path =
          fs::path(row->image_path).is_absolute() ? fs::path(row->image_path) : base / row->image_path;
      Image px;
      try {
        px = read_png_rgb(img_path.string());
      } catch (const std::exception& e) {
        row_error(path, row->line_number, e.what());
      }
      px = resize_bilinear(px, kImageSize, kImageSize);
      for (float& v : px.data) v = std::clamp(v, 0.f, 1.f);
      std::optional<Mask> mask;
      if (opts.with_retina_masks)
        mask = retina_mask_for(px, img_path.string(), opts.write_mask_cache);
      images.emplace_back(pid, row->eye, row->scanner_id, std::move(px), std::move(mask));
    }
    records.emplace_back(pid, std::move(images),
                         MetadataLabels(first->age_years, first->gender));
  }
  return records;
}

}  // namespace retssl
