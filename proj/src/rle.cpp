#include "pneumoseg/rle.hpp"

#include <fstream>
#include <sstream>

#include "pneumoseg/errors.hpp"

namespace pneumoseg {

namespace {

// Flat traversal index -> row-major pixel offset.
inline std::int64_t flat_to_pixel(std::int64_t flat, int height, int width, PixelOrder order) {
    if (order == PixelOrder::kColumnMajor) {
        const std::int64_t col = flat / height;
        const std::int64_t row = flat % height;
        return row * width + col;
    }
    (void)width;
    return flat;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::int64_t BinaryMask::popcount() const {
    std::int64_t n = 0;
    for (std::uint8_t p : pixels) n += p;
    return n;
}

BinaryMask rle_decode(const RleRecord& record, int height, int width, PixelOrder order) {
    if (height <= 0 || width <= 0) throw CodecError("rle_decode: mask dimensions must be positive");
    BinaryMask mask(height, width);
    const std::int64_t total = static_cast<std::int64_t>(height) * width;
    std::int64_t cursor = 0;
    for (std::size_t i = 0; i < record.runs.size(); ++i) {
        const RleRun& run = record.runs[i];
        if (run.offset < 0) {
            throw CodecError("rle_decode: negative offset at pair " + std::to_string(i) +
                             " of image " + record.image_id);
        }
        if (run.length <= 0) {
            throw CodecError("rle_decode: non-positive run length at pair " + std::to_string(i) +
                             " of image " + record.image_id);
        }
        cursor += run.offset;
        if (cursor + run.length > total) {
            throw CodecError("rle_decode: run at pair " + std::to_string(i) + " ends at " +
                             std::to_string(cursor + run.length) + ", past " +
                             std::to_string(total) + " pixels (image " + record.image_id + ")");
        }
        for (std::int64_t k = 0; k < run.length; ++k) {
            mask.pixels[static_cast<std::size_t>(flat_to_pixel(cursor + k, height, width, order))] = 1;
        }
        cursor += run.length;
    }
    return mask;
}

RleRecord rle_encode(const BinaryMask& mask, const std::string& image_id, PixelOrder order) {
    RleRecord record;
    record.image_id = image_id;
    const std::int64_t total = static_cast<std::int64_t>(mask.height) * mask.width;
    std::int64_t prev_end = 0;
    std::int64_t flat = 0;
    while (flat < total) {
        while (flat < total &&
               mask.pixels[static_cast<std::size_t>(flat_to_pixel(flat, mask.height, mask.width, order))] == 0) {
            ++flat;
        }
        if (flat >= total) break;
        const std::int64_t start = flat;
        while (flat < total &&
               mask.pixels[static_cast<std::size_t>(flat_to_pixel(flat, mask.height, mask.width, order))] != 0) {
            ++flat;
        }
        record.runs.push_back({start - prev_end, flat - start});
        prev_end = flat;
    }
    return record;
}

BinaryMask union_masks(const std::vector<RleRecord>& records, int height, int width,
                       PixelOrder order) {
    BinaryMask out(height, width);
    for (const RleRecord& r : records) {
        if (r.image_id != records.front().image_id) {
            throw CodecError("union_masks: mixed image ids '" + records.front().image_id +
                             "' and '" + r.image_id + "'");
        }
        BinaryMask m = rle_decode(r, height, width, order);
        for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] |= m.pixels[i];
    }
    return out;
}

std::string format_rle_payload(const RleRecord& record) {
    if (record.empty()) return "-1";
    std::ostringstream os;
    for (std::size_t i = 0; i < record.runs.size(); ++i) {
        if (i) os << ' ';
        os << record.runs[i].offset << ' ' << record.runs[i].length;
    }
    return os.str();
}

RleRecord parse_rle_payload(const std::string& image_id, const std::string& payload) {
    RleRecord record;
    record.image_id = image_id;
    const std::string body = trim(payload);
    if (body == "-1" || body.empty()) return record;

    std::vector<std::int64_t> tokens;
    std::size_t pos = 0;
    while (pos < body.size()) {
        while (pos < body.size() && body[pos] == ' ') ++pos;
        if (pos >= body.size()) break;
        std::size_t end = pos;
        while (end < body.size() && body[end] != ' ') ++end;
        const std::string tok = body.substr(pos, end - pos);
        try {
            std::size_t used = 0;
            tokens.push_back(std::stoll(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw CodecError("rle payload for image " + image_id + ": non-integer token '" + tok +
                             "' at byte " + std::to_string(pos));
        }
        pos = end;
    }
    if (tokens.size() % 2 != 0) {
        throw CodecError("rle payload for image " + image_id + ": odd token count " +
                         std::to_string(tokens.size()));
    }
    for (std::size_t i = 0; i < tokens.size(); i += 2) {
        record.runs.push_back({tokens[i], tokens[i + 1]});
    }
    return record;
}

std::vector<RleRecord> parse_annotation_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open annotation csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    if (trim(line) != "ImageId,EncodedPixels") {
        throw ParseError(path + ": expected header 'ImageId,EncodedPixels', got '" + trim(line) + "'");
    }
    std::vector<RleRecord> records;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError(path + ": row " + std::to_string(row) + " has no comma");
        }
        const std::string id = trim(line.substr(0, comma));
        if (id.empty()) throw ParseError(path + ": row " + std::to_string(row) + " has empty ImageId");
        try {
            records.push_back(parse_rle_payload(id, line.substr(comma + 1)));
        } catch (const CodecError& e) {
            throw ParseError(path + ": row " + std::to_string(row) + ": " + e.what());
        }
    }
    return records;
}

void write_submission_csv(const std::vector<RleRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // no CRLF translation
    if (!out) throw ParseError("cannot write csv: " + path);
    out << "ImageId,EncodedPixels\n";
    for (const RleRecord& r : records) {
        out << r.image_id << ',' << format_rle_payload(r) << '\n';
    }
    if (!out) throw ParseError("write failed: " + path);
}

}  // namespace pneumoseg
