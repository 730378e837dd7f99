#include "usr/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace usr::train {

namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const unsigned char* p;
    std::size_t n;
    std::size_t pos = 0;

    void need(std::size_t k) const {
        if (pos + k > n) throw DataError("checkpoint truncated");
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    unsigned char u8() {
        need(1);
        return p[pos++];
    }
    std::string str(std::size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const std::vector<nn::Parameter>& params) {
    std::vector<unsigned char> out;
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        if (p.name.size() > 0xFFFF) throw DataError("parameter name too long: " + p.name);
        put_u16(out, static_cast<std::uint16_t>(p.name.size()));
        out.insert(out.end(), p.name.begin(), p.name.end());
        out.push_back(1);  // f64
        const auto& t = *p.tensor;
        out.push_back(static_cast<unsigned char>(t.shape.size()));
        for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        const std::size_t bytes = t.data.size() * sizeof(double);
        const std::size_t off = out.size();
        out.resize(off + bytes);
        std::memcpy(out.data() + off, t.data.data(), bytes);
    }
    const uLong crc = crc32(0L, out.data() + 4, static_cast<uInt>(out.size() - 4));
    put_u32(out, static_cast<std::uint32_t>(crc));
    return out;
}

void deserialize_checkpoint(const std::vector<unsigned char>& bytes,
                            std::vector<nn::Parameter>& params) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw DataError("not a checkpoint file (bad magic)");
    const std::uint32_t stored_crc =
        static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
        (static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8) |
        (static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16) |
        (static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24);
    const uLong crc = crc32(0L, bytes.data() + 4, static_cast<uInt>(bytes.size() - 8));
    if (static_cast<std::uint32_t>(crc) != stored_crc)
        throw DataError("checkpoint CRC mismatch (corrupt file)");

    Reader r{bytes.data(), bytes.size() - 4, 4};
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    if (count != params.size())
        throw DataError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                        std::to_string(params.size()));

    // Stage everything before mutating the model so failures leave it intact.
    std::vector<std::vector<double>> staged(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        if (name != params[i].name)
            throw DataError("checkpoint incompatibility at entry " + std::to_string(i) +
                            ": found '" + name + "', model expects '" + params[i].name + "'");
        const unsigned char dtype = r.u8();
        if (dtype != 0 && dtype != 1) throw DataError("unknown dtype in checkpoint entry " + name);
        const unsigned char ndim = r.u8();
        nn::Shape shape(ndim);
        for (unsigned char d = 0; d < ndim; ++d) shape[d] = static_cast<int>(r.u32());
        if (shape != params[i].tensor->shape)
            throw DataError("checkpoint shape mismatch for '" + name + "': file " +
                            nn::shape_str(shape) + ", model " +
                            nn::shape_str(params[i].tensor->shape));
        const std::int64_t n = nn::shape_size(shape);
        staged[i].resize(static_cast<std::size_t>(n));
        if (dtype == 1) {
            r.need(static_cast<std::size_t>(n) * sizeof(double));
            std::memcpy(staged[i].data(), r.p + r.pos, static_cast<std::size_t>(n) * sizeof(double));
            r.pos += static_cast<std::size_t>(n) * sizeof(double);
        } else {
            r.need(static_cast<std::size_t>(n) * sizeof(float));
            for (std::int64_t j = 0; j < n; ++j) {
                float f;
                std::memcpy(&f, r.p + r.pos + static_cast<std::size_t>(j) * sizeof(float), sizeof(float));
                staged[i][static_cast<std::size_t>(j)] = static_cast<double>(f);
            }
            r.pos += static_cast<std::size_t>(n) * sizeof(float);
        }
    }
    if (r.pos != r.n) throw DataError("checkpoint has trailing bytes");

    for (std::uint32_t i = 0; i < count; ++i) params[i].tensor->data = std::move(staged[i]);
}

void save_checkpoint(const std::vector<nn::Parameter>& params, const std::string& path) {
    const auto bytes = serialize_checkpoint(params);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open checkpoint for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("failed writing checkpoint: " + path);
}

void load_checkpoint(const std::string& path, std::vector<nn::Parameter>& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    deserialize_checkpoint(bytes, params);
}

}  // namespace usr::train
