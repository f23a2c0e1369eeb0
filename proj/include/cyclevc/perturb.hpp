#pragma once

// Speaker-encoder input perturbation: time-axis random shuffling of fixed
// length chunks plus channel-axis stacking. Destroys time order while keeping
// the multiset of frames (and so the global statistics) intact.

#include <stdexcept>

#include "cyclevc/dsp.hpp"
#include "cyclevc/rng.hpp"

namespace cyclevc {

struct PerturbConfig {
    int chunk_len_frames = 8;
    std::uint64_t rng_seed = 0;
};

// Output shape is (floor(frames/chunk_len), chunk_len * mel_bins). Trailing
// frames that do not fill a chunk are dropped. With identity_permutation the
// chunks keep their original order (stacking only), used at inference.
inline MelSpectrogram shuffle_stack(const MelSpectrogram& mel, const PerturbConfig& cfg,
                                    bool identity_permutation = false) {
    if (cfg.chunk_len_frames < 1)
        throw std::invalid_argument("chunk_len_frames must be >= 1");
    const Eigen::Index chunk = cfg.chunk_len_frames;
    if (mel.frames() < chunk)
        throw std::invalid_argument("input too short to perturb");

    const Eigen::Index n_chunks = mel.frames() / chunk;
    const Eigen::Index bins = mel.mel_bins();

    std::vector<std::size_t> order(static_cast<std::size_t>(n_chunks));
    if (identity_permutation) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    } else {
        Rng rng(cfg.rng_seed);
        order = rng.permutation(static_cast<std::size_t>(n_chunks));
    }

    MelSpectrogram out;
    out.sample_rate_hz = mel.sample_rate_hz;
    out.hop_length_samples = mel.hop_length_samples * static_cast<int>(chunk);
    out.values.resize(n_chunks, chunk * bins);
    for (Eigen::Index c = 0; c < n_chunks; ++c) {
        const Eigen::Index src = static_cast<Eigen::Index>(order[static_cast<std::size_t>(c)]);
        for (Eigen::Index i = 0; i < chunk; ++i)
            out.values.block(c, i * bins, 1, bins) = mel.values.row(src * chunk + i);
    }
    return out;
}

}  // namespace cyclevc
