#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pneumoseg {

enum class Sex { kMale, kFemale, kUnknown };
enum class ViewPosition { kAP, kPA, kUnknown };

// The narrow slice of a DICOM file this project reads: identity, the two
// metadata attributes the dataset statistics use, and the raw pixel plane.
struct DicomLite {
    std::string image_id;  // (0008,0018) SOP Instance UID
    int rows = 0;
    int columns = 0;
    int bits_allocated = 8;  // 8 or 16
    Sex patient_sex = Sex::kUnknown;
    ViewPosition view_position = ViewPosition::kUnknown;
    std::vector<std::uint16_t> pixel_data;  // row-major grayscale
};

// Explicit VR Little Endian, uncompressed, MONOCHROME2 only. Unknown tags
// are skipped by length; compressed transfer syntaxes are rejected.
DicomLite parse_dicom(const std::vector<std::uint8_t>& bytes);
DicomLite parse_dicom_file(const std::string& path);

// Serializes a DicomLite back into the supported subset. Fixture generator
// for tests and `fixtures`; parse_dicom(write_dicom(d)) == d on all covered
// fields. `transfer_syntax_uid` overrides the default Explicit VR LE UID so
// tests can synthesize unsupported files.
std::vector<std::uint8_t> write_dicom(const DicomLite& d,
                                      const std::string& transfer_syntax_uid = "");
void write_dicom_file(const DicomLite& d, const std::string& path);

// Plain-image fallback: binary 8-bit PGM (P5). Values are rescaled to 0..255
// when maxval differs; metadata comes back unknown and image_id empty (the
// caller typically uses the file stem).
DicomLite load_pgm(const std::string& path);
void save_pgm(const std::vector<std::uint8_t>& pixels, int rows, int cols,
              const std::string& path);

const char* to_string(Sex s);
const char* to_string(ViewPosition v);

}  // namespace pneumoseg
