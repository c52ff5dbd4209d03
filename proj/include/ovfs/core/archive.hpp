#pragma once

// Parameter archive: an ordered map from dotted parameter names to
// (shape, raw little-endian f64 payload), with a versioned header and a
// small string-to-string metadata section. Round-trips are bit-exact.
//
// layout:
//   magic "OVFSPRM\0" | u32 version | u32 n_meta | n_meta * (str, str)
//   u32 n_entries | n_entries * (str name, u32 ndim, i64 dims[], f64 data[])
// strings are u32 length + bytes.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ovfs/core/error.hpp"
#include "ovfs/core/tensor.hpp"

namespace ovfs {

class ParamArchive {
public:
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, std::string> meta;

    void put(const std::string& name, const Tensor& t) {
        if (entries_.count(name)) throw IoError("archive: duplicate parameter " + name);
        entries_[name] = {t.shape(), t.data()};
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    const Shape& shape_of(const std::string& name) const { return find(name).shape; }

    Tensor get(const std::string& name) const {
        const auto& e = find(name);
        return Tensor::from_vec(e.shape, e.data);
    }

    // Copies the stored payload into an existing tensor; shapes must agree.
    void load_into(const std::string& name, Tensor& t) const {
        const auto& e = find(name);
        if (e.shape != t.shape())
            throw IoError("archive: shape mismatch for " + name + ": stored " + shape_str(e.shape) + " vs expected " +
                          shape_str(t.shape()));
        t.data_mut() = e.data;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, v] : entries_) out.push_back(k);
        return out;
    }

    std::size_t size() const { return entries_.size(); }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("archive: cannot open for write: " + path);
        f.write(kMagic, 8);
        write_u32(f, kVersion);
        write_u32(f, std::uint32_t(meta.size()));
        for (const auto& [k, v] : meta) {
            write_str(f, k);
            write_str(f, v);
        }
        write_u32(f, std::uint32_t(entries_.size()));
        for (const auto& [name, e] : entries_) {
            write_str(f, name);
            write_u32(f, std::uint32_t(e.shape.size()));
            for (long d : e.shape) {
                std::int64_t d64 = d;
                f.write(reinterpret_cast<const char*>(&d64), 8);
            }
            f.write(reinterpret_cast<const char*>(e.data.data()), std::streamsize(e.data.size() * 8));
        }
        if (!f) throw IoError("archive: write failed: " + path);
    }

    static ParamArchive load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("archive: cannot open: " + path);
        char magic[8];
        f.read(magic, 8);
        if (!f || std::memcmp(magic, kMagic, 8) != 0) throw IoError("archive: bad magic in " + path);
        std::uint32_t version = read_u32(f);
        if (version != kVersion)
            throw IoError("archive: unsupported format version " + std::to_string(version) + " in " + path);
        ParamArchive a;
        std::uint32_t n_meta = read_u32(f);
        for (std::uint32_t i = 0; i < n_meta; ++i) {
            std::string k = read_str(f);
            a.meta[k] = read_str(f);
        }
        std::uint32_t n = read_u32(f);
        for (std::uint32_t i = 0; i < n; ++i) {
            std::string name = read_str(f);
            std::uint32_t ndim = read_u32(f);
            Shape shape(ndim);
            for (auto& d : shape) {
                std::int64_t d64 = 0;
                f.read(reinterpret_cast<char*>(&d64), 8);
                d = long(d64);
            }
            long n_el = shape_numel(shape);
            std::vector<double> data(std::size_t(n_el));
            f.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * 8));
            if (!f) throw IoError("archive: truncated payload for " + name + " in " + path);
            a.entries_[name] = {std::move(shape), std::move(data)};
        }
        return a;
    }

private:
    struct Entry {
        Shape shape;
        std::vector<double> data;
    };

    static constexpr const char kMagic[9] = "OVFSPRM\0";

    const Entry& find(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw IoError("archive: missing parameter " + name);
        return it->second;
    }

    static void write_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

    static void write_str(std::ofstream& f, const std::string& s) {
        write_u32(f, std::uint32_t(s.size()));
        f.write(s.data(), std::streamsize(s.size()));
    }

    static std::uint32_t read_u32(std::ifstream& f) {
        std::uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        if (!f) throw IoError("archive: truncated header");
        return v;
    }

    static std::string read_str(std::ifstream& f) {
        std::uint32_t n = read_u32(f);
        if (n > (1u << 20)) throw IoError("archive: implausible string length");
        std::string s(n, '\0');
        f.read(s.data(), n);
        if (!f) throw IoError("archive: truncated string");
        return s;
    }

    std::map<std::string, Entry> entries_;
};

}  // namespace ovfs
