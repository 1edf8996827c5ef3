#include "skrl/checkpoint.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace skrl {

static const char CKPT_MAGIC[4] = {'S', 'K', 'R', 'L'};

static void put_u16(std::string & buf, uint16_t v) {
    buf.push_back((char) (v & 0xff));
    buf.push_back((char) (v >> 8));
}

static void put_u32(std::string & buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back((char) ((v >> (8 * i)) & 0xff));
    }
}

static void put_f32(std::string & buf, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

void save_checkpoint(const ParamStore & ps, const std::string & path) {
    std::string buf;
    buf.append(CKPT_MAGIC, 4);
    put_u32(buf, CHECKPOINT_VERSION);
    put_u32(buf, (uint32_t) ps.all().size());
    for (const Param & p : ps.all()) {
        if (p.name.size() > 0xffff) {
            throw config_error("save_checkpoint: tensor name too long: " + p.name);
        }
        put_u16(buf, (uint16_t) p.name.size());
        buf.append(p.name);
        buf.push_back((char) (uint8_t) p.label);
        buf.push_back((char) (uint8_t) p.value.shape.size());
        for (int d : p.value.shape) {
            put_u32(buf, (uint32_t) d);
        }
        for (float v : p.value.data) {
            put_f32(buf, v);
        }
    }
    uint32_t crc = (uint32_t) crc32(0, (const Bytef *) buf.data(), (uInt) buf.size());
    put_u32(buf, crc);

    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw config_error("save_checkpoint: cannot open " + tmp);
        }
        f.write(buf.data(), (std::streamsize) buf.size());
        if (!f) {
            throw config_error("save_checkpoint: write failed: " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw config_error("save_checkpoint: rename failed: " + path);
    }
}

namespace {

struct reader {
    const std::string & buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) {
            throw corruption_error("checkpoint truncated");
        }
    }

    uint16_t u16() {
        need(2);
        uint16_t v = (uint16_t) ((uint8_t) buf[pos] | ((uint8_t) buf[pos + 1] << 8));
        pos += 2;
        return v;
    }

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= (uint32_t) (uint8_t) buf[pos + i] << (8 * i);
        }
        pos += 4;
        return v;
    }

    uint8_t u8() {
        need(1);
        return (uint8_t) buf[pos++];
    }

    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

ParamStore load_checkpoint(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw config_error("load_checkpoint: cannot open " + path);
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    std::string buf = ss.str();

    if (buf.size() < 4 + 4 + 4 + 4) {
        throw corruption_error("checkpoint truncated");
    }
    reader r{buf};
    if (std::memcmp(buf.data(), CKPT_MAGIC, 4) != 0) {
        throw corruption_error("checkpoint magic mismatch");
    }
    r.pos = 4;
    uint32_t version = r.u32();
    if (version != CHECKPOINT_VERSION) {
        throw version_error("checkpoint format version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(CHECKPOINT_VERSION) +
                            ")");
    }

    // verify trailing CRC over everything before it
    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i) {
        stored_crc |= (uint32_t) (uint8_t) buf[buf.size() - 4 + i] << (8 * i);
    }
    uint32_t crc = (uint32_t) crc32(0, (const Bytef *) buf.data(), (uInt) (buf.size() - 4));
    if (crc != stored_crc) {
        throw corruption_error("checkpoint CRC mismatch");
    }

    uint32_t count = r.u32();
    ParamStore ps;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t name_len = r.u16();
        std::string name = r.bytes(name_len);
        uint8_t label = r.u8();
        if (label > (uint8_t) ModuleLabel::decoder) {
            throw corruption_error("checkpoint: bad module label for tensor " + name);
        }
        uint8_t rank = r.u8();
        std::vector<int> shape(rank);
        int64_t n = 1;
        for (int d = 0; d < rank; ++d) {
            uint32_t dim = r.u32();
            if (dim > (uint32_t) 1 << 28) {
                throw corruption_error("checkpoint: implausible dimension for tensor " + name);
            }
            shape[d] = (int) dim;
            n *= dim;
        }
        Tensor t(shape);
        for (int64_t j = 0; j < n; ++j) {
            uint32_t bits = r.u32();
            std::memcpy(&t.data[j], &bits, 4);
        }
        ps.add(name, (ModuleLabel) label, std::move(t));
    }
    if (r.pos != buf.size() - 4) {
        throw corruption_error("checkpoint has trailing garbage");
    }
    return ps;
}

void load_checkpoint_into(ParamStore & ps, const std::string & path) {
    ParamStore loaded = load_checkpoint(path);
    if (loaded.all().size() != ps.all().size()) {
        throw shape_error("checkpoint tensor count " + std::to_string(loaded.all().size()) +
                          " does not match policy (" + std::to_string(ps.all().size()) + ")");
    }
    for (const Param & lp : loaded.all()) {
        if (!ps.has(lp.name)) {
            throw shape_error("checkpoint tensor " + lp.name + " unknown to this policy");
        }
        Param & dst = ps.get(lp.name);
        if (dst.value.shape != lp.value.shape) {
            throw shape_error("checkpoint tensor " + lp.name + " has mismatched shape");
        }
        dst.value.data = lp.value.data;
    }
}

std::string checkpoint_summary(const ParamStore & ps) {
    std::ostringstream out;
    for (const Param & p : ps.all()) {
        out << p.name << " " << module_label_name(p.label) << " [";
        for (size_t i = 0; i < p.value.shape.size(); ++i) {
            out << (i ? "," : "") << p.value.shape[i];
        }
        out << "] " << p.value.data.size() << "\n";
    }
    return out.str();
}

} // namespace skrl
