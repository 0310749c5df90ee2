#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eqlift/compute.hpp"
#include "eqlift/data.hpp"
#include "eqlift/errors.hpp"
#include "eqlift/model.hpp"

namespace eqlift {

// EQLF checkpoint container:
//   magic "EQLF" | version u32 LE | tensor count u32 LE |
//   per tensor: name len u16 LE, UTF-8 name, rank u8, dims u32 LE each,
//               values f64 LE |
//   CRC32 (IEEE) of all preceding bytes, u32 LE.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> data;

    static NamedTensor scalar(const std::string& name, double v) {
        return {name, {1}, {v}};
    }
    static NamedTensor from_u64(const std::string& name, std::uint64_t v) {
        double d;
        static_assert(sizeof(d) == sizeof(v));
        std::memcpy(&d, &v, sizeof(d));  // store the raw bit pattern
        return {name, {1}, {d}};
    }
    std::uint64_t as_u64() const {
        std::uint64_t v;
        std::memcpy(&v, data.data(), sizeof(v));
        return v;
    }
};

namespace ckpt_detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t n,
                           std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? 0xEDB88320U ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (std::size_t i = 0; i < n; ++i)
        crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

inline void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xFF));
    buf.push_back(static_cast<char>((v >> 8) & 0xFF));
}
inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i)
        buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

struct Reader {
    const unsigned char* p;
    std::size_t n;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t k) const {
        if (pos + k > n) throw ParseError(path + ": truncated checkpoint");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return p[pos++];
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
};

}  // namespace ckpt_detail

inline std::string serialize_checkpoint(const std::vector<NamedTensor>& tensors) {
    using namespace ckpt_detail;
    std::string buf;
    buf.append("EQLF");
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        put_u16(buf, static_cast<std::uint16_t>(t.name.size()));
        buf.append(t.name);
        buf.push_back(static_cast<char>(t.dims.size()));
        std::size_t count = 1;
        for (std::uint32_t d : t.dims) {
            put_u32(buf, d);
            count *= d;
        }
        if (count != t.data.size())
            throw SchemaMismatch("checkpoint: tensor " + t.name + " dims/data mismatch");
        for (double v : t.data) put_f64(buf, v);
    }
    std::uint32_t crc =
        crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size());
    put_u32(buf, crc);
    return buf;
}

inline std::vector<NamedTensor> deserialize_checkpoint(const std::string& buf,
                                                       const std::string& path = "") {
    using namespace ckpt_detail;
    if (buf.size() < 16) throw ParseError(path + ": checkpoint too short");
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(
                      static_cast<unsigned char>(buf[buf.size() - 4 + static_cast<std::size_t>(i)]))
                  << (8 * i);
    std::uint32_t actual = crc32(reinterpret_cast<const unsigned char*>(buf.data()),
                                 buf.size() - 4);
    if (stored != actual)
        throw ChecksumError(path + ": checkpoint CRC mismatch");

    Reader r{reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4, 0, path};
    if (r.str(4) != "EQLF") throw ParseError(path + ": bad magic");
    std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw SchemaVersionMismatch(path + ": checkpoint version " +
                                    std::to_string(version));
    std::uint32_t count = r.u32();
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str(r.u16());
        std::uint8_t rank = r.u8();
        std::size_t total = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            t.dims.push_back(r.u32());
            total *= t.dims.back();
        }
        t.data.resize(total);
        for (std::size_t k = 0; k < total; ++k) t.data[k] = r.f64();
        tensors.push_back(std::move(t));
    }
    return tensors;
}

// Atomic write: temp file in the target directory, then rename.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DiskError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DiskError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw DiskError("rename failed: " + target.string() + ": " + ec.message());
}

inline void write_checkpoint(const std::string& path,
                             const std::vector<NamedTensor>& tensors) {
    write_file_atomic(path, serialize_checkpoint(tensors));
}

inline std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DiskError("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    return deserialize_checkpoint(buf, path);
}

// ---------------------------------------------------------------------------
// Model <-> tensor mapping.

struct TrainerState {
    Adam adam;
    RngStream rng;
    int next_epoch = 0;
    int best_epoch = -1;
};

namespace ckpt_detail {

inline NamedTensor mat_tensor(const std::string& name, const Mat& m) {
    NamedTensor t;
    t.name = name;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
    return t;
}

inline NamedTensor vec_tensor(const std::string& name, const Vec& v) {
    NamedTensor t;
    t.name = name;
    t.dims = {static_cast<std::uint32_t>(v.size())};
    t.data.assign(v.data(), v.data() + v.size());
    return t;
}

inline void load_mat(const NamedTensor& t, Mat& m) {
    if (t.dims.size() != 2 || static_cast<Eigen::Index>(t.dims[0]) != m.rows() ||
        static_cast<Eigen::Index>(t.dims[1]) != m.cols())
        throw SchemaMismatch("checkpoint: tensor " + t.name + " has unexpected shape");
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[k++];
}

inline void load_vec(const NamedTensor& t, Vec& v) {
    if (t.dims.size() != 1 || static_cast<Eigen::Index>(t.dims[0]) != v.size())
        throw SchemaMismatch("checkpoint: tensor " + t.name + " has unexpected shape");
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = t.data[static_cast<std::size_t>(i)];
}

inline void collect_bn(std::vector<std::pair<std::string, Vec*>>& out,
                       BatchNormState& bn, const std::string& name) {
    out.emplace_back(name + ".running_mean", &bn.running_mean);
    out.emplace_back(name + ".running_var", &bn.running_var);
}

inline std::vector<std::pair<std::string, Vec*>> model_buffers(LiftingModel& model) {
    std::vector<std::pair<std::string, Vec*>> out;
    collect_bn(out, model.enc_block.bn1, "enc_block.bn1");
    collect_bn(out, model.enc_block.bn2, "enc_block.bn2");
    collect_bn(out, model.dec_block.bn1, "dec_block.bn1");
    collect_bn(out, model.dec_block.bn2, "dec_block.bn2");
    return out;
}

}  // namespace ckpt_detail

// Every Param value plus Adam moments, batchnorm running stats, and enough
// trainer state to resume deterministically.
inline std::vector<NamedTensor> model_to_tensors(LiftingModel& model,
                                                 const NormStats& stats,
                                                 const TrainerState* trainer = nullptr) {
    using namespace ckpt_detail;
    std::vector<NamedTensor> out;
    out.push_back(NamedTensor::scalar("meta.m", model.cfg.embedding.m));
    out.push_back(NamedTensor::scalar("meta.hidden", model.cfg.hidden));
    out.push_back(NamedTensor::scalar("meta.norm_epsilon", model.cfg.embedding.norm_epsilon));
    out.push_back(NamedTensor::scalar("meta.dropout", model.cfg.dropout));
    out.push_back(NamedTensor::scalar("meta.lrelu_slope", model.cfg.lrelu_slope));
    for (Param* p : model.params()) {
        out.push_back(mat_tensor(p->name, p->value));
        out.push_back(mat_tensor(p->name + ".adam_m", p->adam_m));
        out.push_back(mat_tensor(p->name + ".adam_v", p->adam_v));
    }
    for (auto& [name, vec] : model_buffers(model)) out.push_back(vec_tensor(name, *vec));
    out.push_back(vec_tensor("stats.mean2d", stats.mean2d));
    out.push_back(vec_tensor("stats.std2d", stats.std2d));
    out.push_back(vec_tensor("stats.mean3d", stats.mean3d));
    out.push_back(vec_tensor("stats.std3d", stats.std3d));
    out.push_back(NamedTensor::from_u64("stats.fitted_on", stats.fitted_on));
    if (trainer) {
        out.push_back(NamedTensor::scalar("opt.step",
                                          static_cast<double>(trainer->adam.step_count)));
        out.push_back(NamedTensor::from_u64("rng.seed", trainer->rng.seed()));
        out.push_back(NamedTensor::from_u64("rng.counter", trainer->rng.counter()));
        out.push_back(NamedTensor::scalar("train.next_epoch", trainer->next_epoch));
        out.push_back(NamedTensor::scalar("train.best_epoch", trainer->best_epoch));
    }
    return out;
}

inline const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors,
                                      const std::string& name) {
    for (const NamedTensor& t : tensors)
        if (t.name == name) return t;
    throw SchemaMismatch("checkpoint: missing tensor " + name);
}

inline bool has_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
    for (const NamedTensor& t : tensors)
        if (t.name == name) return true;
    return false;
}

// `model` must already be constructed with the matching config.
inline void tensors_to_model(const std::vector<NamedTensor>& tensors,
                             LiftingModel& model, NormStats& stats,
                             TrainerState* trainer = nullptr) {
    using namespace ckpt_detail;
    if (static_cast<int>(find_tensor(tensors, "meta.m").data[0]) != model.cfg.embedding.m)
        throw SchemaMismatch("checkpoint: embedding size M differs from config");
    if (static_cast<int>(find_tensor(tensors, "meta.hidden").data[0]) != model.cfg.hidden)
        throw SchemaMismatch("checkpoint: hidden width differs from config");
    for (Param* p : model.params()) {
        load_mat(find_tensor(tensors, p->name), p->value);
        load_mat(find_tensor(tensors, p->name + ".adam_m"), p->adam_m);
        load_mat(find_tensor(tensors, p->name + ".adam_v"), p->adam_v);
    }
    for (auto& [name, vec] : model_buffers(model))
        load_vec(find_tensor(tensors, name), *vec);
    stats.mean2d.resize(2 * kJoints);
    stats.std2d.resize(2 * kJoints);
    stats.mean3d.resize(3 * kJoints);
    stats.std3d.resize(3 * kJoints);
    load_vec(find_tensor(tensors, "stats.mean2d"), stats.mean2d);
    load_vec(find_tensor(tensors, "stats.std2d"), stats.std2d);
    load_vec(find_tensor(tensors, "stats.mean3d"), stats.mean3d);
    load_vec(find_tensor(tensors, "stats.std3d"), stats.std3d);
    stats.fitted_on = find_tensor(tensors, "stats.fitted_on").as_u64();
    if (trainer) {
        if (!has_tensor(tensors, "opt.step"))
            throw SchemaMismatch("checkpoint: no trainer state to resume from");
        trainer->adam.step_count =
            static_cast<std::int64_t>(find_tensor(tensors, "opt.step").data[0]);
        trainer->rng = RngStream(find_tensor(tensors, "rng.seed").as_u64(),
                                 find_tensor(tensors, "rng.counter").as_u64());
        trainer->next_epoch =
            static_cast<int>(find_tensor(tensors, "train.next_epoch").data[0]);
        trainer->best_epoch =
            static_cast<int>(find_tensor(tensors, "train.best_epoch").data[0]);
    }
}

}  // namespace eqlift
