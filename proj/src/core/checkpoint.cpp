#include "checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "config.hpp"

namespace salfuse {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'C', 'K'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw Error::io("truncated checkpoint: " + path);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw Error::io("truncated checkpoint: " + path);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

Checkpoint snapshot_parameters(const ParameterStore& store, std::uint64_t config_hash) {
    Checkpoint ckpt;
    ckpt.config_hash = config_hash;
    for (const Parameter* p : store.all()) {
        ckpt.entries.push_back({p->name, p->tensor.shape(), p->tensor.values()});
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error::io("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_u32(out, ckpt.version);
    write_u64(out, ckpt.config_hash);
    write_u32(out, static_cast<std::uint32_t>(ckpt.entries.size()));
    for (const auto& e : ckpt.entries) {
        write_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u32(out, 4);
        write_u32(out, static_cast<std::uint32_t>(e.shape.n));
        write_u32(out, static_cast<std::uint32_t>(e.shape.c));
        write_u32(out, static_cast<std::uint32_t>(e.shape.h));
        write_u32(out, static_cast<std::uint32_t>(e.shape.w));
        for (double v : e.values) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            write_u64(out, bits);
        }
    }
    if (!out) throw Error::io("write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error::io("cannot open checkpoint: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw Error::config("not a checkpoint file (bad magic): " + path);
    }
    Checkpoint ckpt;
    ckpt.version = read_u32(in, path);
    if (ckpt.version != 1) {
        throw Error::config("unsupported checkpoint version " + std::to_string(ckpt.version) +
                            " in " + path);
    }
    ckpt.config_hash = read_u64(in, path);
    const std::uint32_t count = read_u32(in, path);
    ckpt.entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const std::uint32_t name_len = read_u32(in, path);
        e.name.resize(name_len);
        if (!in.read(e.name.data(), name_len)) throw Error::io("truncated checkpoint: " + path);
        const std::uint32_t ndim = read_u32(in, path);
        if (ndim != 4) throw Error::config("checkpoint entry with ndim != 4 in " + path);
        e.shape.n = static_cast<int>(read_u32(in, path));
        e.shape.c = static_cast<int>(read_u32(in, path));
        e.shape.h = static_cast<int>(read_u32(in, path));
        e.shape.w = static_cast<int>(read_u32(in, path));
        const std::int64_t numel = e.shape.numel();
        e.values.resize(static_cast<std::size_t>(numel));
        for (std::int64_t k = 0; k < numel; ++k) {
            const std::uint64_t bits = read_u64(in, path);
            double v;
            std::memcpy(&v, &bits, 8);
            e.values[static_cast<std::size_t>(k)] = v;
        }
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, ParameterStore& store) {
    std::ostringstream diff;
    for (const auto& e : ckpt.entries) {
        const Parameter* p = store.find(e.name);
        if (p == nullptr) {
            diff << "  extra in checkpoint: " << e.name << " " << e.shape.str() << "\n";
        } else if (!(p->tensor.shape() == e.shape)) {
            diff << "  shape mismatch: " << e.name << " checkpoint " << e.shape.str()
                 << " vs network " << p->tensor.shape().str() << "\n";
        }
    }
    for (const Parameter* p : store.all()) {
        if (ckpt.find(p->name) == nullptr) {
            diff << "  missing from checkpoint: " << p->name << " "
                 << p->tensor.shape().str() << "\n";
        }
    }
    const std::string d = diff.str();
    if (!d.empty()) {
        throw Error::config("checkpoint does not match network architecture:\n" + d);
    }
    for (const auto& e : ckpt.entries) {
        store.find(e.name)->tensor.values() = e.values;
    }
}

std::size_t apply_checkpoint_mapped(const Checkpoint& ckpt, ParameterStore& store,
                                    const std::string& from_prefix,
                                    const std::string& to_prefix) {
    std::size_t applied = 0;
    for (const auto& e : ckpt.entries) {
        if (e.name.rfind(from_prefix, 0) != 0) continue;
        const std::string target = to_prefix + e.name.substr(from_prefix.size());
        Parameter* p = store.find(target);
        if (p == nullptr) {
            throw Error::config("checkpoint entry " + e.name + " has no target parameter " +
                                target);
        }
        if (!(p->tensor.shape() == e.shape)) {
            throw Error::config("checkpoint entry " + e.name + " shape " + e.shape.str() +
                                " does not match parameter " + target + " shape " +
                                p->tensor.shape().str());
        }
        p->tensor.values() = e.values;
        ++applied;
    }
    return applied;
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error::io("cannot open file for hashing: " + path);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

}  // namespace salfuse
