#include "pneumoseg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "pneumoseg/errors.hpp"

namespace pneumoseg {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'S', '1'};
constexpr std::uint8_t kDtypeFloat32 = 0;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > bytes.size()) {
            throw CheckpointFormatError(std::string("checkpoint truncated reading ") + what);
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint8_t>(bytes[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor<float>>& tensors) {
    if (tensors.size() > 0xffffffffull) {
        throw CheckpointFormatError("checkpoint: too many tensors");
    }
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& nt : tensors) {
        if (nt.name.size() > 0xffff) {
            throw CheckpointFormatError("checkpoint: tensor name too long: " + nt.name);
        }
        put_u16(out, static_cast<std::uint16_t>(nt.name.size()));
        out.append(nt.name);
        out.push_back(static_cast<char>(kDtypeFloat32));
        out.push_back(static_cast<char>(nt.tensor.rank()));
        for (int i = 0; i < nt.tensor.rank(); ++i) {
            put_u32(out, static_cast<std::uint32_t>(nt.tensor.dim(i)));
        }
        const std::size_t payload = sizeof(float) * static_cast<std::size_t>(nt.tensor.numel());
        const std::size_t at = out.size();
        out.resize(at + payload);
        std::memcpy(out.data() + at, nt.tensor.data(), payload);
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("checkpoint: cannot open " + tmp + " for writing");
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw Error("checkpoint: write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("checkpoint: rename to " + path + " failed: " + ec.message());
}

std::vector<NamedTensor<float>> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{bytes};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointFormatError("checkpoint: bad magic in " + path);
    }
    r.pos = 4;
    const std::uint32_t count = r.u32("tensor count");

    std::vector<NamedTensor<float>> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16("name length");
        r.need(name_len, "name");
        std::string name = bytes.substr(r.pos, name_len);
        r.pos += name_len;

        const std::uint8_t dtype = r.u8("dtype");
        if (dtype != kDtypeFloat32) {
            throw CheckpointFormatError("checkpoint: unsupported dtype " + std::to_string(dtype) +
                                        " for tensor " + name);
        }
        const std::uint8_t rank = r.u8("rank");
        if (rank > 4) {
            throw CheckpointFormatError("checkpoint: rank " + std::to_string(rank) +
                                        " out of range for tensor " + name);
        }
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint32_t e = r.u32("extent");
            shape[static_cast<std::size_t>(d)] = static_cast<int>(e);
            numel *= e;
        }
        r.need(numel * sizeof(float), ("payload of " + name).c_str());
        std::vector<float> values(numel);
        std::memcpy(values.data(), bytes.data() + r.pos, numel * sizeof(float));
        r.pos += numel * sizeof(float);
        out.push_back({std::move(name), Tensor<float>::from_data(shape, std::move(values)), false});
    }
    if (r.pos != bytes.size()) {
        throw CheckpointFormatError("checkpoint: trailing bytes after last tensor in " + path);
    }
    return out;
}

void load_checkpoint_into(const std::string& path, ResNet34UNet<float>& model) {
    auto loaded = load_checkpoint(path);
    std::unordered_map<std::string, Tensor<float>> by_name;
    for (auto& nt : loaded) by_name.emplace(nt.name, nt.tensor);

    auto targets = model.named_tensors();
    for (auto& nt : targets) {
        auto it = by_name.find(nt.name);
        if (it == by_name.end()) {
            throw CheckpointFormatError("checkpoint: missing tensor " + nt.name);
        }
        if (it->second.shape() != nt.tensor.shape()) {
            throw CheckpointFormatError("checkpoint: shape mismatch for " + nt.name + ": file has " +
                                        shape_string(it->second.shape()) + ", model expects " +
                                        shape_string(nt.tensor.shape()));
        }
        nt.tensor.values() = it->second.values();
        by_name.erase(it);
    }
    if (!by_name.empty()) {
        throw CheckpointFormatError("checkpoint: unexpected tensor " + by_name.begin()->first);
    }
}

}  // namespace pneumoseg
