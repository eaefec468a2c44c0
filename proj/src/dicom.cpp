#include "pneumoseg/dicom.hpp"

#include <cctype>
#include <cstring>
#include <fstream>

#include "pneumoseg/errors.hpp"

namespace pneumoseg {

namespace {

constexpr const char* kExplicitVrLittleEndian = "1.2.840.10008.1.2.1";

struct Cursor {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    std::size_t remaining() const { return bytes.size() - pos; }

    void need(std::size_t n, const std::string& what) const {
        if (remaining() < n) {
            throw ParseError("dicom: truncated while reading " + what + " at offset " +
                             std::to_string(pos));
        }
    }

    std::uint16_t u16() {
        need(2, "u16");
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }

    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                          (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                          (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                          (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
        pos += 4;
        return v;
    }
};

std::string tag_string(std::uint16_t group, std::uint16_t element) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "(%04X,%04X)", group, element);
    return buf;
}

bool long_form_vr(const char vr[2]) {
    // VRs whose explicit encoding carries 2 reserved bytes + 32-bit length.
    static const char* kLong[] = {"OB", "OW", "OF", "SQ", "UT", "UN"};
    for (const char* v : kLong) {
        if (vr[0] == v[0] && vr[1] == v[1]) return true;
    }
    return false;
}

std::string trim_padding(const std::uint8_t* data, std::size_t len) {
    while (len > 0 && (data[len - 1] == '\0' || data[len - 1] == ' ')) --len;
    return std::string(reinterpret_cast<const char*>(data), len);
}

// One Explicit-VR element: returns tag and value span inside the buffer.
struct Element {
    std::uint16_t group = 0;
    std::uint16_t element = 0;
    char vr[3] = {0, 0, 0};
    std::size_t value_offset = 0;
    std::uint32_t value_length = 0;
};

Element read_element(Cursor& cur) {
    Element e;
    const std::size_t start = cur.pos;
    e.group = cur.u16();
    e.element = cur.u16();
    cur.need(2, "VR of " + tag_string(e.group, e.element));
    e.vr[0] = static_cast<char>(cur.bytes[cur.pos]);
    e.vr[1] = static_cast<char>(cur.bytes[cur.pos + 1]);
    cur.pos += 2;
    if (!std::isupper(static_cast<unsigned char>(e.vr[0])) ||
        !std::isupper(static_cast<unsigned char>(e.vr[1]))) {
        throw ParseError("dicom: element " + tag_string(e.group, e.element) + " at offset " +
                         std::to_string(start) + " has no explicit VR (implicit encoding?)");
    }
    if (long_form_vr(e.vr)) {
        cur.u16();  // reserved
        e.value_length = cur.u32();
    } else {
        e.value_length = cur.u16();
    }
    if (e.value_length == 0xFFFFFFFFu) {
        throw UnsupportedTransferSyntax("dicom: element " + tag_string(e.group, e.element) +
                                        " has undefined length (encapsulated pixel data)");
    }
    cur.need(e.value_length, "value of " + tag_string(e.group, e.element));
    e.value_offset = cur.pos;
    cur.pos += e.value_length;
    return e;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_element(std::vector<std::uint8_t>& out, std::uint16_t group, std::uint16_t element,
                 const char vr[2], const std::vector<std::uint8_t>& value) {
    put_u16(out, group);
    put_u16(out, element);
    out.push_back(static_cast<std::uint8_t>(vr[0]));
    out.push_back(static_cast<std::uint8_t>(vr[1]));
    char v[3] = {vr[0], vr[1], 0};
    if (long_form_vr(v)) {
        put_u16(out, 0);
        put_u32(out, static_cast<std::uint32_t>(value.size()));
    } else {
        put_u16(out, static_cast<std::uint16_t>(value.size()));
    }
    out.insert(out.end(), value.begin(), value.end());
}

std::vector<std::uint8_t> padded_string(const std::string& s, char pad) {
    std::vector<std::uint8_t> v(s.begin(), s.end());
    if (v.size() % 2 != 0) v.push_back(static_cast<std::uint8_t>(pad));
    return v;
}

}  // namespace

const char* to_string(Sex s) {
    switch (s) {
        case Sex::kMale: return "M";
        case Sex::kFemale: return "F";
        default: return "unknown";
    }
}

const char* to_string(ViewPosition v) {
    switch (v) {
        case ViewPosition::kAP: return "AP";
        case ViewPosition::kPA: return "PA";
        default: return "unknown";
    }
}

DicomLite parse_dicom(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 132 || std::memcmp(bytes.data() + 128, "DICM", 4) != 0) {
        throw ParseError("dicom: missing 128-byte preamble + DICM magic");
    }
    Cursor cur{bytes, 132};

    // File meta group (0002,xxxx) is always Explicit VR LE.
    std::string transfer_syntax;
    while (cur.remaining() >= 8) {
        const std::size_t mark = cur.pos;
        Cursor peek = cur;
        const std::uint16_t group = peek.u16();
        if (group != 0x0002) {
            cur.pos = mark;
            break;
        }
        Element e = read_element(cur);
        if (e.element == 0x0010) {
            transfer_syntax = trim_padding(bytes.data() + e.value_offset, e.value_length);
        }
    }
    if (transfer_syntax.empty()) {
        throw ParseError("dicom: file meta lacks (0002,0010) TransferSyntaxUID");
    }
    if (transfer_syntax != kExplicitVrLittleEndian) {
        throw UnsupportedTransferSyntax("dicom: unsupported transfer syntax '" + transfer_syntax +
                                        "' (only Explicit VR Little Endian " +
                                        kExplicitVrLittleEndian + " is handled)");
    }

    DicomLite d;
    std::vector<std::uint8_t> raw_pixels;
    while (cur.remaining() >= 8) {
        Element e = read_element(cur);
        const std::uint8_t* val = bytes.data() + e.value_offset;
        if (e.group == 0x0008 && e.element == 0x0018) {
            d.image_id = trim_padding(val, e.value_length);
        } else if (e.group == 0x0010 && e.element == 0x0040) {
            const std::string s = trim_padding(val, e.value_length);
            d.patient_sex = (s == "M") ? Sex::kMale : (s == "F") ? Sex::kFemale : Sex::kUnknown;
        } else if (e.group == 0x0018 && e.element == 0x5101) {
            const std::string s = trim_padding(val, e.value_length);
            d.view_position =
                (s == "AP") ? ViewPosition::kAP : (s == "PA") ? ViewPosition::kPA : ViewPosition::kUnknown;
        } else if (e.group == 0x0028 && e.element == 0x0010) {
            if (e.value_length != 2) throw ParseError("dicom: (0028,0010) Rows must be US");
            d.rows = val[0] | (val[1] << 8);
        } else if (e.group == 0x0028 && e.element == 0x0011) {
            if (e.value_length != 2) throw ParseError("dicom: (0028,0011) Columns must be US");
            d.columns = val[0] | (val[1] << 8);
        } else if (e.group == 0x0028 && e.element == 0x0100) {
            if (e.value_length != 2) throw ParseError("dicom: (0028,0100) BitsAllocated must be US");
            d.bits_allocated = val[0] | (val[1] << 8);
        } else if (e.group == 0x7FE0 && e.element == 0x0010) {
            raw_pixels.assign(val, val + e.value_length);
        }
        // anything else: skipped by length
    }

    if (d.bits_allocated != 8 && d.bits_allocated != 16) {
        throw ParseError("dicom: BitsAllocated must be 8 or 16, got " +
                         std::to_string(d.bits_allocated));
    }
    if (d.rows <= 0 || d.columns <= 0) {
        throw ParseError("dicom: missing or invalid Rows/Columns");
    }
    const std::size_t expected =
        static_cast<std::size_t>(d.rows) * static_cast<std::size_t>(d.columns) *
        (d.bits_allocated == 16 ? 2 : 1);
    // Odd 8-bit planes carry one pad byte (element lengths must be even).
    const bool padded_ok = d.bits_allocated == 8 && expected % 2 == 1 &&
                           raw_pixels.size() == expected + 1;
    if (raw_pixels.size() != expected && !padded_ok) {
        throw ParseError("dicom: pixel data has " + std::to_string(raw_pixels.size()) +
                         " bytes, expected " + std::to_string(expected));
    }
    d.pixel_data.resize(static_cast<std::size_t>(d.rows) * d.columns);
    if (d.bits_allocated == 8) {
        for (std::size_t i = 0; i < d.pixel_data.size(); ++i) d.pixel_data[i] = raw_pixels[i];
    } else {
        for (std::size_t i = 0; i < d.pixel_data.size(); ++i) {
            d.pixel_data[i] =
                static_cast<std::uint16_t>(raw_pixels[2 * i] | (raw_pixels[2 * i + 1] << 8));
        }
    }
    return d;
}

DicomLite parse_dicom_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open dicom file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    try {
        return parse_dicom(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::vector<std::uint8_t> write_dicom(const DicomLite& d, const std::string& transfer_syntax_uid) {
    const std::string ts = transfer_syntax_uid.empty() ? kExplicitVrLittleEndian : transfer_syntax_uid;

    std::vector<std::uint8_t> out(128, 0);
    out.insert(out.end(), {'D', 'I', 'C', 'M'});

    // File meta: group length first, so build the group body up front.
    std::vector<std::uint8_t> meta;
    put_element(meta, 0x0002, 0x0010, "UI", padded_string(ts, '\0'));
    std::vector<std::uint8_t> group_len;
    put_u32(group_len, static_cast<std::uint32_t>(meta.size()));
    put_element(out, 0x0002, 0x0000, "UL", group_len);
    out.insert(out.end(), meta.begin(), meta.end());

    put_element(out, 0x0008, 0x0018, "UI", padded_string(d.image_id, '\0'));
    put_element(out, 0x0010, 0x0040, "CS",
                padded_string(d.patient_sex == Sex::kUnknown ? "" : to_string(d.patient_sex), ' '));
    if (d.view_position != ViewPosition::kUnknown) {
        put_element(out, 0x0018, 0x5101, "CS", padded_string(to_string(d.view_position), ' '));
    }
    std::vector<std::uint8_t> us(2);
    us[0] = static_cast<std::uint8_t>(d.rows & 0xFF);
    us[1] = static_cast<std::uint8_t>(d.rows >> 8);
    put_element(out, 0x0028, 0x0010, "US", us);
    us[0] = static_cast<std::uint8_t>(d.columns & 0xFF);
    us[1] = static_cast<std::uint8_t>(d.columns >> 8);
    put_element(out, 0x0028, 0x0011, "US", us);
    us[0] = static_cast<std::uint8_t>(d.bits_allocated & 0xFF);
    us[1] = static_cast<std::uint8_t>(d.bits_allocated >> 8);
    put_element(out, 0x0028, 0x0100, "US", us);

    std::vector<std::uint8_t> pixels;
    if (d.bits_allocated == 8) {
        pixels.reserve(d.pixel_data.size());
        for (std::uint16_t p : d.pixel_data) pixels.push_back(static_cast<std::uint8_t>(p & 0xFF));
        if (pixels.size() % 2 != 0) pixels.push_back(0);
        put_element(out, 0x7FE0, 0x0010, "OB", pixels);
    } else {
        pixels.reserve(d.pixel_data.size() * 2);
        for (std::uint16_t p : d.pixel_data) {
            pixels.push_back(static_cast<std::uint8_t>(p & 0xFF));
            pixels.push_back(static_cast<std::uint8_t>(p >> 8));
        }
        put_element(out, 0x7FE0, 0x0010, "OW", pixels);
    }
    return out;
}

void write_dicom_file(const DicomLite& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write dicom file: " + path);
    const std::vector<std::uint8_t> bytes = write_dicom(d);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

DicomLite load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open pgm file: " + path);

    auto next_token = [&in, &path]() -> std::string {
        std::string tok;
        int c;
        while ((c = in.get()) != EOF) {
            if (c == '#') {  // comment to end of line
                while ((c = in.get()) != EOF && c != '\n') {}
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        if (tok.empty()) throw ParseError(path + ": truncated pgm header");
        return tok;
    };

    if (next_token() != "P5") throw ParseError(path + ": not a binary PGM (P5) file");
    int cols, rows, maxval;
    try {
        cols = std::stoi(next_token());
        rows = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw ParseError(path + ": malformed pgm header");
    }
    if (cols <= 0 || rows <= 0 || maxval <= 0 || maxval > 255) {
        throw ParseError(path + ": pgm must be 8-bit with positive dimensions");
    }

    std::vector<std::uint8_t> raw(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw ParseError(path + ": pgm pixel data truncated");
    }

    DicomLite d;
    d.rows = rows;
    d.columns = cols;
    d.bits_allocated = 8;
    d.pixel_data.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        int v = raw[i];
        if (maxval != 255) v = (v * 255 + maxval / 2) / maxval;
        d.pixel_data[i] = static_cast<std::uint16_t>(v);
    }
    return d;
}

void save_pgm(const std::vector<std::uint8_t>& pixels, int rows, int cols,
              const std::string& path) {
    if (static_cast<std::size_t>(rows) * cols != pixels.size()) {
        throw ParseError("save_pgm: pixel count does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write pgm file: " + path);
    out << "P5\n" << cols << " " << rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
}

}  // namespace pneumoseg
