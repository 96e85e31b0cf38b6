#include "pixeldiff/params.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace pxd {

static const char kMagic[4] = {'P', 'X', 'D', 'F'};
static const uint32_t kVersion = 1;

bool valid_param_name(const std::string& name) {
    static const std::set<std::string> groups = {"text_enc",        "core",           "time_enc",
                                                 "entry",           "shallow_encoder", "shallow_decoder",
                                                 "out_head",        "encoder",        "decoder"};
    std::vector<std::string> parts;
    size_t pos = 0;
    while (true) {
        size_t dot = name.find('.', pos);
        if (dot == std::string::npos) {
            parts.push_back(name.substr(pos));
            break;
        }
        parts.push_back(name.substr(pos, dot - pos));
        pos = dot + 1;
    }
    if (parts.size() != 4) return false;
    for (const auto& p : parts)
        if (p.empty()) return false;
    return groups.count(parts[0]) > 0;
}

void validate_tree_names(const ParameterTree& tree) {
    for (const auto& [name, t] : tree.entries)
        if (!valid_param_name(name))
            throw std::invalid_argument("parameter name violates grammar: " + name);
}

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_all(FILE* f, const void* p, size_t n, const std::string& path) {
    if (fwrite(p, 1, n, f) != n) throw CheckpointError("short write: " + path);
}

void read_all(FILE* f, void* p, size_t n, const std::string& path) {
    if (fread(p, 1, n, f) != n) throw CheckpointError("truncated checkpoint: " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterTree& tree) {
    json manifest;
    manifest["meta"] = tree.metadata;
    json tensors = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tree.entries) {
        tensors.push_back(json{{"name", name},
                               {"shape", t.shape},
                               {"dtype", "f32"},
                               {"offset", offset},
                               {"frozen", tree.is_frozen(name)}});
        offset += (uint64_t)t.numel() * sizeof(Real);
    }
    manifest["tensors"] = tensors;
    std::string mstr = manifest.dump();

    FilePtr f(fopen(path.c_str(), "wb"));
    if (!f) throw CheckpointError("cannot open for write: " + path);
    write_all(f.get(), kMagic, 4, path);
    write_all(f.get(), &kVersion, 4, path);
    uint64_t mlen = mstr.size();
    write_all(f.get(), &mlen, 8, path);
    write_all(f.get(), mstr.data(), mstr.size(), path);
    for (const auto& [name, t] : tree.entries)
        write_all(f.get(), t.data(), (size_t)t.numel() * sizeof(Real), path);
}

ParameterTree load_checkpoint(const std::string& path) {
    FilePtr f(fopen(path.c_str(), "rb"));
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    uint32_t ver = 0;
    uint64_t mlen = 0;
    read_all(f.get(), magic, 4, path);
    if (memcmp(magic, kMagic, 4) != 0) throw CheckpointError("bad magic: " + path);
    read_all(f.get(), &ver, 4, path);
    if (ver != kVersion) throw CheckpointError("unsupported checkpoint version: " + path);
    read_all(f.get(), &mlen, 8, path);
    std::string mstr(mlen, '\0');
    read_all(f.get(), mstr.data(), mlen, path);
    json manifest;
    try {
        manifest = json::parse(mstr);
    } catch (const std::exception& e) {
        throw CheckpointError("corrupt manifest in " + path + ": " + e.what());
    }

    ParameterTree tree;
    tree.metadata = manifest.value("meta", json::object());
    for (const auto& tj : manifest.at("tensors")) {
        std::string name = tj.at("name").get<std::string>();
        std::vector<int> shape = tj.at("shape").get<std::vector<int>>();
        if (tj.at("dtype").get<std::string>() != "f32")
            throw CheckpointError("unsupported dtype for " + name + " in " + path);
        Tensor t(shape);
        read_all(f.get(), t.data(), (size_t)t.numel() * sizeof(Real), path);
        if (tj.value("frozen", false)) tree.frozen.insert(name);
        tree.entries.emplace(std::move(name), std::move(t));
    }
    return tree;
}

}  // namespace pxd
