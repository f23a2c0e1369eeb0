#pragma once

// Checkpoint container shared by both networks: magic "ACKP", a length
// prefixed JSON text header (kind, architecture hyperparameters, training
// seed, epoch/iteration, array directory) and raw little-endian f64 arrays.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cyclevc/autodiff.hpp"

namespace cyclevc {

struct Checkpoint {
    nlohmann::json header;                 // everything except the array directory
    std::map<std::string, Mat> arrays;     // named parameter values
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& [name, m] : ckpt.arrays)
        dir.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    nlohmann::json header = ckpt.header;
    header["arrays"] = dir;
    const std::string htext = header.dump(2);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f.write("ACKP", 4);
    const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
    f.write(reinterpret_cast<const char*>(&hlen), 4);
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [name, m] : ckpt.arrays)
        f.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "ACKP", 4) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path.string());
    std::uint32_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 4);
    std::string htext(hlen, '\0');
    f.read(htext.data(), hlen);
    if (!f) throw std::runtime_error("truncated checkpoint header: " + path.string());

    Checkpoint ckpt;
    ckpt.header = nlohmann::json::parse(htext);
    for (const auto& entry : ckpt.header.at("arrays")) {
        const std::string name = entry.at("name");
        const Eigen::Index rows = entry.at("rows");
        const Eigen::Index cols = entry.at("cols");
        Mat m(rows, cols);
        f.read(reinterpret_cast<char*>(m.data()),
               static_cast<std::streamsize>(sizeof(double) * m.size()));
        if (!f) throw std::runtime_error("truncated checkpoint arrays: " + path.string());
        ckpt.arrays.emplace(name, std::move(m));
    }
    ckpt.header.erase("arrays");
    return ckpt;
}

// Fill existing params by name; shapes must match.
inline void restore_params(const Checkpoint& ckpt, const std::vector<ad::Param*>& params) {
    for (auto* p : params) {
        auto it = ckpt.arrays.find(p->name);
        if (it == ckpt.arrays.end())
            throw std::runtime_error("checkpoint missing array: " + p->name);
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
            throw std::runtime_error("checkpoint shape mismatch for: " + p->name);
        p->value = it->second;
        p->zero_grad();
    }
}

inline Checkpoint snapshot_params(nlohmann::json header, const std::vector<ad::Param*>& params) {
    Checkpoint ckpt;
    ckpt.header = std::move(header);
    for (const auto* p : params) ckpt.arrays.emplace(p->name, p->value);
    return ckpt;
}

}  // namespace cyclevc
