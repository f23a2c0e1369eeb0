#pragma once

// Flat binary container for mel-spectrograms: 16-byte header (magic "MELS",
// version u16, frames u32, mel_bins u16, reserved) followed by row-major
// little-endian f32 values. Sample rate, hop and speaker id live in an
// adjacent "<file>.meta" key = value sidecar.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cyclevc/dsp.hpp"

namespace cyclevc {

constexpr std::uint16_t kMelFileVersion = 1;

inline void write_mel_file(const std::filesystem::path& path, const MelSpectrogram& mel,
                           const std::string& speaker_id = "") {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());

    const std::uint32_t frames = static_cast<std::uint32_t>(mel.frames());
    const std::uint16_t bins = static_cast<std::uint16_t>(mel.mel_bins());
    char header[16] = {};
    std::memcpy(header, "MELS", 4);
    std::memcpy(header + 4, &kMelFileVersion, 2);
    std::memcpy(header + 6, &frames, 4);
    std::memcpy(header + 10, &bins, 2);
    f.write(header, 16);

    std::vector<float> row(bins);
    for (Eigen::Index t = 0; t < mel.frames(); ++t) {
        for (Eigen::Index m = 0; m < mel.mel_bins(); ++m)
            row[static_cast<std::size_t>(m)] = static_cast<float>(mel.values(t, m));
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(sizeof(float) * row.size()));
    }
    if (!f) throw std::runtime_error("write failed: " + path.string());
    f.close();

    std::ofstream meta(path.string() + ".meta");
    meta << "sample_rate_hz = " << mel.sample_rate_hz << "\n";
    meta << "hop_length_samples = " << mel.hop_length_samples << "\n";
    if (!speaker_id.empty()) meta << "speaker_id = " << speaker_id << "\n";
}

inline MelSpectrogram read_mel_file(const std::filesystem::path& path,
                                    std::string* speaker_id = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open mel file: " + path.string());

    char header[16];
    f.read(header, 16);
    if (!f || std::memcmp(header, "MELS", 4) != 0)
        throw std::runtime_error("bad mel file magic: " + path.string());
    std::uint16_t version = 0;
    std::uint32_t frames = 0;
    std::uint16_t bins = 0;
    std::memcpy(&version, header + 4, 2);
    std::memcpy(&frames, header + 6, 4);
    std::memcpy(&bins, header + 10, 2);
    if (version != kMelFileVersion)
        throw std::runtime_error("unsupported mel file version: " + path.string());
    if (frames == 0 || bins == 0)
        throw std::runtime_error("empty mel file: " + path.string());

    MelSpectrogram mel;
    mel.values.resize(frames, bins);
    std::vector<float> row(bins);
    for (std::uint32_t t = 0; t < frames; ++t) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(sizeof(float) * row.size()));
        if (!f) throw std::runtime_error("truncated mel file: " + path.string());
        for (std::uint16_t m = 0; m < bins; ++m) mel.values(t, m) = row[m];
    }

    std::ifstream meta(path.string() + ".meta");
    if (meta) {
        std::string line;
        while (std::getline(meta, line)) {
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto trim = [](std::string s) {
                const char* ws = " \t\r";
                auto a = s.find_first_not_of(ws);
                auto b = s.find_last_not_of(ws);
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            std::string key = trim(line.substr(0, eq));
            std::string val = trim(line.substr(eq + 1));
            if (key == "sample_rate_hz") mel.sample_rate_hz = std::stoi(val);
            else if (key == "hop_length_samples") mel.hop_length_samples = std::stoi(val);
            else if (key == "speaker_id" && speaker_id) *speaker_id = val;
        }
    }
    if (!all_finite(mel.values))
        throw std::runtime_error("non-finite values in mel file: " + path.string());
    return mel;
}

// Round mel values to f32 precision in place. Generated corpora pass through
// this so in-memory values match what a save/load round trip produces.
inline void quantize_to_f32(Mat& values) {
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index j = 0; j < values.cols(); ++j)
            values(i, j) = static_cast<double>(static_cast<float>(values(i, j)));
}

}  // namespace cyclevc
