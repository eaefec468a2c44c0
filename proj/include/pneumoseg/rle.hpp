#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pneumoseg {

// H x W {0,1} map; the unit of ground truth and prediction.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // row-major, values in {0,1}

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }

    std::int64_t popcount() const;
    bool operator==(const BinaryMask& other) const = default;
};

// Traversal order mapping flat RLE indices to (row, col). The challenge's
// reference decoder walks columns top-to-bottom, left-to-right.
enum class PixelOrder { kColumnMajor, kRowMajor };

struct RleRun {
    std::int64_t offset = 0;  // relative to the previous run's end
    std::int64_t length = 0;  // strictly positive
    bool operator==(const RleRun&) const = default;
};

// One annotation row: empty `runs` is the "-1" sentinel.
struct RleRecord {
    std::string image_id;
    std::vector<RleRun> runs;

    bool empty() const { return runs.empty(); }
    bool operator==(const RleRecord&) const = default;
};

BinaryMask rle_decode(const RleRecord& record, int height, int width,
                      PixelOrder order = PixelOrder::kColumnMajor);

// Canonical form: maximal runs in traversal order; all-zero mask -> sentinel.
RleRecord rle_encode(const BinaryMask& mask, const std::string& image_id = "",
                     PixelOrder order = PixelOrder::kColumnMajor);

// Pixelwise OR of all decoded payloads; records must share one image_id.
BinaryMask union_masks(const std::vector<RleRecord>& records, int height, int width,
                       PixelOrder order = PixelOrder::kColumnMajor);

// Space-separated "offset length ..." payload, or "-1" when empty.
std::string format_rle_payload(const RleRecord& record);
RleRecord parse_rle_payload(const std::string& image_id, const std::string& payload);

// CSV with header `ImageId,EncodedPixels`. Parsing tolerates stray spaces
// after the comma; the writer emits the exact competition schema.
std::vector<RleRecord> parse_annotation_csv(const std::string& path);
void write_submission_csv(const std::vector<RleRecord>& records, const std::string& path);

}  // namespace pneumoseg
