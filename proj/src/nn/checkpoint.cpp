#include "mre/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mre/error.hpp"

namespace mre::nn {

namespace {
constexpr char kMagic[8] = {'M', 'R', 'E', 'C', 'K', 'P', 'T', '\0'};
}

const Mat* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return &m;
    return nullptr;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open checkpoint for writing: " + path.string());

    nlohmann::json manifest;
    manifest["version"] = version;
    manifest["meta"] = meta;
    auto& shapes = manifest["tensors"] = nlohmann::json::array();
    for (const auto& [name, m] : tensors)
        shapes.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    const std::string mstr = manifest.dump();

    os.write(kMagic, sizeof(kMagic));
    const std::uint32_t ver = version;
    os.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    const std::uint64_t mlen = mstr.size();
    os.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    os.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (const auto& [name, m] : tensors)
        os.write(reinterpret_cast<const char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    if (!os) throw Error("short write while saving checkpoint: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint: " + path.string());

    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CorruptCheckpoint("bad magic in " + path.string());
    std::uint32_t ver = 0;
    is.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (!is) throw CorruptCheckpoint("truncated header in " + path.string());
    if (ver != kCheckpointVersion)
        throw VersionMismatch("checkpoint version " + std::to_string(ver) + ", expected " +
                              std::to_string(kCheckpointVersion));
    std::uint64_t mlen = 0;
    is.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    if (!is) throw CorruptCheckpoint("truncated header in " + path.string());
    std::string mstr(mlen, '\0');
    is.read(mstr.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw CorruptCheckpoint("truncated manifest in " + path.string());

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mstr);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("manifest parse failure: ") + e.what());
    }

    Checkpoint ck;
    ck.version = ver;
    ck.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
        const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
        Mat m(rows, cols);
        is.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
        if (!is) throw CorruptCheckpoint("truncated tensor data for " + name);
        ck.tensors.emplace_back(name, std::move(m));
    }
    return ck;
}

}  // namespace mre::nn
