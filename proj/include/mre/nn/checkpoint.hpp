#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mre/nn/parameter.hpp"

namespace mre::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned named-tensor container: a JSON shape manifest followed by raw
// little-endian doubles. `meta` carries RNG states, counters and the config
// echo; semantic grouping of tensors is by name prefix (param/..., adam.*).
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, Mat>> tensors;

    void add(const std::string& name, const Mat& value) { tensors.emplace_back(name, value); }
    const Mat* find(const std::string& name) const;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace mre::nn
