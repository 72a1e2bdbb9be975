#include "pairplan/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "pairplan/util/errors.hpp"

namespace pairplan::nn {

namespace {

void put_u64(std::string& buf, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    buf.append(bytes, 8);
}

void put_u8(std::string& buf, std::uint8_t v) {
    buf.push_back(static_cast<char>(v));
}

void put_string(std::string& buf, const std::string& s) {
    put_u64(buf, s.size());
    buf.append(s);
}

void put_doubles(std::string& buf, const std::vector<double>& values) {
    put_u64(buf, values.size());
    const std::size_t bytes = values.size() * sizeof(double);
    const std::size_t start = buf.size();
    buf.resize(start + bytes);
    if (bytes > 0) std::memcpy(buf.data() + start, values.data(), bytes);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw FormatError("truncated checkpoint file");
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
                 << (8 * i);
        pos += 8;
        return v;
    }

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }

    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }

    std::vector<double> doubles() {
        const std::uint64_t n = u64();
        need(n * sizeof(double));
        std::vector<double> values(n);
        if (n > 0) std::memcpy(values.data(), buf.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
        return values;
    }
};

}  // namespace

void save_checkpoint_file(const std::string& path, const CheckpointData& data) {
    std::string buf;
    put_string(buf, kCheckpointFormat);
    put_string(buf, data.role);
    put_u64(buf, data.rng_seed);
    put_u64(buf, data.step_count);
    put_string(buf, data.meta_json);
    put_doubles(buf, data.params);
    put_u8(buf, data.has_optimizer ? 1 : 0);
    if (data.has_optimizer) {
        put_u64(buf, data.opt_step);
        put_doubles(buf, data.opt_m);
        put_doubles(buf, data.opt_v);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r{buf};
    const std::string format = r.str();
    if (format != kCheckpointFormat)
        throw FormatError("checkpoint format mismatch: expected '" +
                          std::string(kCheckpointFormat) + "', found '" + format + "'");
    CheckpointData data;
    data.role = r.str();
    data.rng_seed = r.u64();
    data.step_count = r.u64();
    data.meta_json = r.str();
    data.params = r.doubles();
    data.has_optimizer = r.u8() != 0;
    if (data.has_optimizer) {
        data.opt_step = r.u64();
        data.opt_m = r.doubles();
        data.opt_v = r.doubles();
        if (data.opt_m.size() != data.params.size() ||
            data.opt_v.size() != data.params.size())
            throw FormatError("checkpoint optimizer moments misaligned with parameters");
    }
    if (r.pos != buf.size()) throw FormatError("trailing bytes in checkpoint file");
    return data;
}

}  // namespace pairplan::nn
