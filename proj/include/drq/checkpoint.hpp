#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "drq/array.hpp"
#include "drq/errors.hpp"
#include "drq/nets.hpp"

namespace drq {

// Versioned binary container of named, typed, shaped arrays. Little-endian
// payloads written byte-for-byte, so save -> load round-trips bit-exactly.
//
// Layout: magic "DRQCKPT1" | u32 version | u64 entry count | entries.
// Entry:  u16 name length | name | u8 dtype | u8 ndim | u64 dims[ndim] | payload.
class Checkpoint {
  public:
    enum class DType : uint8_t { F32 = 0, F64 = 1, U64 = 2, I64 = 3 };

    struct Entry {
        DType dtype;
        std::vector<uint64_t> dims;
        std::vector<char> bytes;

        uint64_t elems() const {
            uint64_t n = 1;
            for (uint64_t d : dims) n *= d;
            return n;
        }
    };

    void put_f32(const std::string& name, const float* p, std::vector<uint64_t> dims) {
        put(name, DType::F32, p, sizeof(float), std::move(dims));
    }
    void put_f64(const std::string& name, const double* p, std::vector<uint64_t> dims) {
        put(name, DType::F64, p, sizeof(double), std::move(dims));
    }
    void put_u64(const std::string& name, const uint64_t* p, std::vector<uint64_t> dims) {
        put(name, DType::U64, p, sizeof(uint64_t), std::move(dims));
    }
    void put_i64(const std::string& name, const int64_t* p, std::vector<uint64_t> dims) {
        put(name, DType::I64, p, sizeof(int64_t), std::move(dims));
    }

    void put_scalar_u64(const std::string& name, uint64_t x) { put_u64(name, &x, {1}); }
    void put_scalar_i64(const std::string& name, int64_t x) { put_i64(name, &x, {1}); }
    void put_scalar_f64(const std::string& name, double x) { put_f64(name, &x, {1}); }

    template <typename T>
    void put_vec(const std::string& name, const std::vector<T>& v) {
        if constexpr (std::is_same_v<T, float>)
            put_f32(name, v.data(), {v.size()});
        else if constexpr (std::is_same_v<T, double>)
            put_f64(name, v.data(), {v.size()});
        else if constexpr (std::is_same_v<T, uint64_t>)
            put_u64(name, v.data(), {v.size()});
        else
            put_i64(name, v.data(), {v.size()});
    }

    template <typename T>
    void put_mat(const std::string& name, const Mat<T>& m) {
        static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
        if constexpr (std::is_same_v<T, float>)
            put_f32(name, m.data(), {static_cast<uint64_t>(m.rows),
                                     static_cast<uint64_t>(m.cols)});
        else
            put_f64(name, m.data(), {static_cast<uint64_t>(m.rows),
                                     static_cast<uint64_t>(m.cols)});
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    const Entry& get(const std::string& name, DType expect) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw input_error("checkpoint: missing entry " + name);
        if (it->second.dtype != expect)
            throw input_error("checkpoint: dtype mismatch for " + name);
        return it->second;
    }

    template <typename T>
    std::vector<T> get_vec(const std::string& name) const {
        DType d = std::is_same_v<T, float>      ? DType::F32
                  : std::is_same_v<T, double>   ? DType::F64
                  : std::is_same_v<T, uint64_t> ? DType::U64
                                                : DType::I64;
        const Entry& e = get(name, d);
        std::vector<T> out(e.elems());
        std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
        return out;
    }

    uint64_t get_scalar_u64(const std::string& name) const {
        auto v = get_vec<uint64_t>(name);
        if (v.size() != 1) throw input_error("checkpoint: " + name + " is not scalar");
        return v[0];
    }
    int64_t get_scalar_i64(const std::string& name) const {
        auto v = get_vec<int64_t>(name);
        if (v.size() != 1) throw input_error("checkpoint: " + name + " is not scalar");
        return v[0];
    }
    double get_scalar_f64(const std::string& name) const {
        auto v = get_vec<double>(name);
        if (v.size() != 1) throw input_error("checkpoint: " + name + " is not scalar");
        return v[0];
    }

    template <typename T>
    void get_mat(const std::string& name, Mat<T>& m) const {
        const Entry& e = get(name, std::is_same_v<T, float> ? DType::F32 : DType::F64);
        if (e.dims.size() != 2 || e.dims[0] != static_cast<uint64_t>(m.rows) ||
            e.dims[1] != static_cast<uint64_t>(m.cols))
            throw input_error("checkpoint: shape mismatch for " + name);
        std::memcpy(m.data(), e.bytes.data(), e.bytes.size());
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw input_error("checkpoint: cannot open for write: " + path);
        f.write(kMagic, 8);
        write_pod(f, kVersion);
        write_pod(f, static_cast<uint64_t>(entries_.size()));
        for (const auto& [name, e] : entries_) {
            write_pod(f, static_cast<uint16_t>(name.size()));
            f.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_pod(f, static_cast<uint8_t>(e.dtype));
            write_pod(f, static_cast<uint8_t>(e.dims.size()));
            for (uint64_t d : e.dims) write_pod(f, d);
            f.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
        }
        if (!f) throw input_error("checkpoint: write failed: " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw input_error("checkpoint: cannot open: " + path);
        char magic[8];
        f.read(magic, 8);
        if (!f || std::memcmp(magic, kMagic, 8) != 0)
            throw input_error("checkpoint: bad magic in " + path);
        uint32_t version = read_pod<uint32_t>(f);
        if (version != kVersion) throw input_error("checkpoint: unsupported version");
        const uint64_t count = read_pod<uint64_t>(f);
        Checkpoint ck;
        for (uint64_t i = 0; i < count; ++i) {
            const uint16_t nl = read_pod<uint16_t>(f);
            std::string name(nl, '\0');
            f.read(name.data(), nl);
            Entry e;
            e.dtype = static_cast<DType>(read_pod<uint8_t>(f));
            const uint8_t nd = read_pod<uint8_t>(f);
            e.dims.resize(nd);
            for (auto& d : e.dims) d = read_pod<uint64_t>(f);
            const size_t width = e.dtype == DType::F32 ? 4 : 8;
            e.bytes.resize(e.elems() * width);
            f.read(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
            if (!f) throw input_error("checkpoint: truncated file " + path);
            ck.entries_.emplace(std::move(name), std::move(e));
        }
        return ck;
    }

    // Strings ride along as u64-widened bytes so the container stays 4-dtype.
    void put_text(const std::string& name, const std::string& text) {
        std::vector<uint64_t> wide(text.size());
        for (size_t i = 0; i < text.size(); ++i)
            wide[i] = static_cast<uint64_t>(static_cast<unsigned char>(text[i]));
        put_u64(name, wide.data(), {wide.size()});
    }

    std::string get_text(const std::string& name) const {
        auto wide = get_vec<uint64_t>(name);
        std::string text(wide.size(), '\0');
        for (size_t i = 0; i < wide.size(); ++i)
            text[i] = static_cast<char>(static_cast<unsigned char>(wide[i]));
        return text;
    }

    // ParamStore round-trip: values, both moments, step counter.
    template <typename T>
    void put_store(const std::string& prefix, const ParamStore<T>& ps) {
        for (size_t i = 0; i < ps.count(); ++i) {
            put_mat(prefix + "/" + ps.names[i], ps.vals[i]);
            put_mat(prefix + "/" + ps.names[i] + ".m", ps.m[i]);
            put_mat(prefix + "/" + ps.names[i] + ".v", ps.v[i]);
        }
        put_scalar_i64(prefix + "/__step", ps.step);
    }

    template <typename T>
    void get_store(const std::string& prefix, ParamStore<T>& ps) const {
        for (size_t i = 0; i < ps.count(); ++i) {
            get_mat(prefix + "/" + ps.names[i], ps.vals[i]);
            get_mat(prefix + "/" + ps.names[i] + ".m", ps.m[i]);
            get_mat(prefix + "/" + ps.names[i] + ".v", ps.v[i]);
        }
        ps.step = get_scalar_i64(prefix + "/__step");
    }

  private:
    static constexpr const char* kMagic = "DRQCKPT1";
    static constexpr uint32_t kVersion = 1;

    void put(const std::string& name, DType dtype, const void* p, size_t width,
             std::vector<uint64_t> dims) {
        Entry e;
        e.dtype = dtype;
        e.dims = std::move(dims);
        e.bytes.resize(e.elems() * width);
        std::memcpy(e.bytes.data(), p, e.bytes.size());
        entries_[name] = std::move(e);
    }

    template <typename P>
    static void write_pod(std::ofstream& f, P x) {
        f.write(reinterpret_cast<const char*>(&x), sizeof(P));
    }
    template <typename P>
    static P read_pod(std::ifstream& f) {
        P x{};
        f.read(reinterpret_cast<char*>(&x), sizeof(P));
        return x;
    }

    std::map<std::string, Entry> entries_;
};

} // namespace drq
