#pragma once

// Data ingestion and generation: WAV loading, preprocessing (resample +
// pitch/energy silence trimming), train/test splitting, and a deterministic
// synthetic multi-speaker corpus generator.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclevc/dsp.hpp"
#include "cyclevc/mel_io.hpp"
#include "cyclevc/rng.hpp"

namespace cyclevc {

// ---------------------------------------------------------------- handle

struct Utterance {
    std::string id;
    MelSpectrogram mel;
    std::string split;  // "train" or "test"
};

struct CorpusHandle {
    std::vector<std::string> speakers;
    std::map<std::string, std::vector<Utterance>> utterances;

    struct Ref {
        int speaker_index;
        const std::string* speaker;
        const Utterance* utt;
    };

    std::vector<Ref> select(const std::string& split) const {
        std::vector<Ref> out;
        for (int s = 0; s < static_cast<int>(speakers.size()); ++s) {
            auto it = utterances.find(speakers[s]);
            if (it == utterances.end()) continue;
            for (const auto& u : it->second)
                if (split.empty() || u.split == split)
                    out.push_back(Ref{s, &speakers[s], &u});
        }
        return out;
    }

    std::size_t total_utterances() const {
        std::size_t n = 0;
        for (const auto& [_, v] : utterances) n += v.size();
        return n;
    }
};

// ---------------------------------------------------------------- wav io

inline Waveform read_wav_pcm16(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open wav: " + path.string());
    char riff[12];
    f.read(riff, 12);
    if (!f || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(riff + 8, "WAVE", 4) != 0)
        throw std::runtime_error("not a RIFF/WAVE file: " + path.string());

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    std::vector<char> data;
    while (f) {
        char id[4];
        std::uint32_t size = 0;
        f.read(id, 4);
        f.read(reinterpret_cast<char*>(&size), 4);
        if (!f) break;
        if (std::memcmp(id, "fmt ", 4) == 0) {
            std::vector<char> fmt(size);
            f.read(fmt.data(), size);
            std::memcpy(&format, fmt.data(), 2);
            std::memcpy(&channels, fmt.data() + 2, 2);
            std::memcpy(&sample_rate, fmt.data() + 4, 4);
            std::memcpy(&bits, fmt.data() + 14, 2);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data.resize(size);
            f.read(data.data(), size);
            break;
        } else {
            f.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (format != 1 || bits != 16)
        throw std::runtime_error("only 16-bit PCM wav supported: " + path.string());
    if (channels != 1)
        throw std::runtime_error("only mono wav supported: " + path.string());
    if (data.empty()) throw std::runtime_error("wav has no data chunk: " + path.string());

    Waveform w;
    w.sample_rate_hz = static_cast<int>(sample_rate);
    const std::size_t n = data.size() / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::int16_t s;
        std::memcpy(&s, data.data() + 2 * i, 2);
        w.samples[i] = static_cast<double>(s) / 32768.0;
    }
    return w;
}

inline void write_wav_pcm16(const std::filesystem::path& path, const Waveform& wave) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    const std::uint32_t n = static_cast<std::uint32_t>(wave.samples.size());
    const std::uint32_t data_size = n * 2;
    const std::uint32_t sr = static_cast<std::uint32_t>(wave.sample_rate_hz);
    const std::uint32_t byte_rate = sr * 2;
    std::uint32_t riff_size = 36 + data_size;
    f.write("RIFF", 4);
    f.write(reinterpret_cast<const char*>(&riff_size), 4);
    f.write("WAVEfmt ", 8);
    std::uint32_t fmt_size = 16;
    std::uint16_t format = 1, channels = 1, block_align = 2, bits = 16;
    f.write(reinterpret_cast<const char*>(&fmt_size), 4);
    f.write(reinterpret_cast<const char*>(&format), 2);
    f.write(reinterpret_cast<const char*>(&channels), 2);
    f.write(reinterpret_cast<const char*>(&sr), 4);
    f.write(reinterpret_cast<const char*>(&byte_rate), 4);
    f.write(reinterpret_cast<const char*>(&block_align), 2);
    f.write(reinterpret_cast<const char*>(&bits), 2);
    f.write("data", 4);
    f.write(reinterpret_cast<const char*>(&data_size), 4);
    for (double s : wave.samples) {
        double c = std::clamp(s, -1.0, 1.0);
        std::int16_t q = static_cast<std::int16_t>(std::lround(c * 32767.0));
        f.write(reinterpret_cast<const char*>(&q), 2);
    }
}

inline Waveform resample_linear(const Waveform& in, int target_rate) {
    if (in.sample_rate_hz == target_rate) return in;
    Waveform out;
    out.sample_rate_hz = target_rate;
    const double ratio = static_cast<double>(in.sample_rate_hz) / target_rate;
    const std::size_t n_out = static_cast<std::size_t>(
        std::floor(static_cast<double>(in.samples.size() - 1) / ratio)) + 1;
    out.samples.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double pos = i * ratio;
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, in.samples.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        out.samples[i] = in.samples[lo] * (1.0 - frac) + in.samples[hi] * frac;
    }
    return out;
}

// ---------------------------------------------------------------- trimming

struct TrimConfig {
    int block_len = 256;      // decision granularity (samples)
    int analysis_win = 512;   // centered analysis window
    double energy_db_below_peak = 40.0;
    double voicing_threshold = 0.3;
    double f_min_hz = 60.0;
    double f_max_hz = 400.0;
};

namespace detail {

// Normalized autocorrelation pitch over one window. Returns (f0_hz, peak_corr);
// f0 is 0 when unvoiced.
inline std::pair<double, double> window_pitch(const double* x, int len, int sample_rate,
                                              double f_min, double f_max) {
    const int lag_min = std::max(2, static_cast<int>(sample_rate / f_max));
    const int lag_max = std::min(len - 8, static_cast<int>(sample_rate / f_min));
    if (lag_max <= lag_min) return {0.0, 0.0};

    double best_r = 0.0;
    std::vector<double> corr(static_cast<std::size_t>(lag_max + 1), 0.0);
    for (int lag = lag_min; lag <= lag_max; ++lag) {
        double num = 0.0, e0 = 0.0, e1 = 0.0;
        const int m = len - lag;
        for (int t = 0; t < m; ++t) {
            num += x[t] * x[t + lag];
            e0 += x[t] * x[t];
            e1 += x[t + lag] * x[t + lag];
        }
        const double den = std::sqrt(e0 * e1);
        const double r = den > 1e-12 ? num / den : 0.0;
        corr[static_cast<std::size_t>(lag)] = r;
        best_r = std::max(best_r, r);
    }
    if (best_r <= 0.0) return {0.0, 0.0};
    // smallest lag close to the global peak, to avoid subharmonic octaves
    for (int lag = lag_min; lag <= lag_max; ++lag) {
        if (corr[static_cast<std::size_t>(lag)] >= 0.9 * best_r)
            return {static_cast<double>(sample_rate) / lag, best_r};
    }
    return {0.0, best_r};
}

}  // namespace detail

// Drops blocks whose energy is below the relative threshold and where no
// pitch is detected; concatenates what is kept.
inline Waveform trim_silence(const Waveform& wave, const TrimConfig& cfg = {}) {
    const std::size_t n = wave.samples.size();
    if (n == 0) throw std::invalid_argument("no speech content");
    const int block = cfg.block_len;
    const std::size_t n_blocks = (n + block - 1) / block;

    std::vector<double> energy(n_blocks, 0.0);
    double peak = 0.0;
    const int half_extra = (cfg.analysis_win - block) / 2;
    auto window_bounds = [&](std::size_t b) {
        std::int64_t lo = static_cast<std::int64_t>(b) * block - half_extra;
        std::int64_t hi = lo + cfg.analysis_win;
        lo = std::max<std::int64_t>(lo, 0);
        hi = std::min<std::int64_t>(hi, static_cast<std::int64_t>(n));
        return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(lo),
                                                   static_cast<std::size_t>(hi));
    };
    for (std::size_t b = 0; b < n_blocks; ++b) {
        auto [lo, hi] = window_bounds(b);
        double e = 0.0;
        for (std::size_t t = lo; t < hi; ++t) e += wave.samples[t] * wave.samples[t];
        energy[b] = e / static_cast<double>(hi - lo);
        peak = std::max(peak, energy[b]);
    }
    if (peak < 1e-10) throw std::invalid_argument("no speech content");

    const double threshold = peak * std::pow(10.0, -cfg.energy_db_below_peak / 10.0);
    Waveform out;
    out.sample_rate_hz = wave.sample_rate_hz;
    out.samples.reserve(n);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        bool keep = energy[b] >= threshold;
        if (!keep && energy[b] > 1e-12) {
            auto [lo, hi] = window_bounds(b);
            auto [f0, r] = detail::window_pitch(wave.samples.data() + lo,
                                                static_cast<int>(hi - lo),
                                                wave.sample_rate_hz, cfg.f_min_hz, cfg.f_max_hz);
            keep = f0 > 0.0 && r >= cfg.voicing_threshold;
        }
        if (keep) {
            const std::size_t lo = b * block;
            const std::size_t hi = std::min(n, lo + block);
            out.samples.insert(out.samples.end(), wave.samples.begin() + lo,
                               wave.samples.begin() + hi);
        }
    }
    if (out.samples.empty()) throw std::invalid_argument("no speech content");
    return out;
}

// Median pitch over voiced analysis windows; 0 when nothing is voiced.
inline double estimate_utterance_pitch_hz(const Waveform& wave, const TrimConfig& cfg = {}) {
    const int win = cfg.analysis_win;
    const int hop = cfg.block_len;
    std::vector<double> f0s;
    for (std::size_t off = 0; off + win <= wave.samples.size();
         off += static_cast<std::size_t>(hop)) {
        auto [f0, r] = detail::window_pitch(wave.samples.data() + off, win,
                                            wave.sample_rate_hz, cfg.f_min_hz, cfg.f_max_hz);
        if (f0 > 0.0 && r >= cfg.voicing_threshold) f0s.push_back(f0);
    }
    if (f0s.empty()) return 0.0;
    std::sort(f0s.begin(), f0s.end());
    return f0s[f0s.size() / 2];
}

// ---------------------------------------------------------------- synthesis

struct SynthSpeakerSpec {
    double base_pitch_hz = 150.0;
    double pitch_jitter = 0.003;     // random-walk step per block
    double formant_tilt = -6.0;      // harmonic rolloff, dB/octave
    int harmonic_count = 30;
    double noise_floor = 0.003;
    std::uint64_t rng_seed = 0;
};

inline Waveform synthesize_utterance(const SynthSpeakerSpec& spec, double seconds,
                                     int sample_rate, std::uint64_t utt_seed) {
    Rng rng(utt_seed);
    const std::size_t n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
    const int block = 256;
    const std::size_t n_blocks = (n + block - 1) / block;

    // pitch contour: per-utterance offset plus a clamped random walk
    std::vector<double> f0(n_blocks);
    const double offset = rng.uniform(-0.03, 0.03);
    double walk = 0.0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        walk += rng.normal(0.0, spec.pitch_jitter);
        walk = std::clamp(walk, -0.04, 0.04);
        f0[b] = spec.base_pitch_hz * (1.0 + offset + walk);
    }

    // syllable-like amplitude envelope over a low base level
    std::vector<double> env(n, 0.08);
    double t = rng.uniform(0.0, 0.06);
    while (t < seconds) {
        const double dur = rng.uniform(0.12, 0.28);
        const double amp = rng.uniform(0.5, 1.0);
        const std::size_t lo = static_cast<std::size_t>(t * sample_rate);
        const std::size_t hi =
            std::min(n, static_cast<std::size_t>((t + dur) * sample_rate));
        for (std::size_t i = lo; i < hi; ++i) {
            const double ph = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
            env[i] += amp * 0.5 * (1.0 - std::cos(2.0 * M_PI * ph));
        }
        t += dur + rng.uniform(0.04, 0.12);
    }

    // harmonic stack shaped by the spectral tilt
    const double max_f0 = spec.base_pitch_hz * 1.1;
    const int h_cap = std::max(1, static_cast<int>((sample_rate * 0.45) / max_f0));
    const int n_harm = std::min(spec.harmonic_count, h_cap);
    std::vector<double> amp(n_harm), phase(n_harm);
    double norm = 0.0;
    for (int h = 0; h < n_harm; ++h) {
        amp[h] = std::pow(10.0, spec.formant_tilt * std::log2(static_cast<double>(h + 1)) / 20.0);
        norm += amp[h] * amp[h];
        phase[h] = rng.uniform(0.0, 2.0 * M_PI);
    }
    norm = std::sqrt(norm);
    for (double& a : amp) a /= norm;

    Waveform w;
    w.sample_rate_hz = sample_rate;
    w.samples.resize(n);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = f0[i / block];
        double s = 0.0;
        for (int h = 0; h < n_harm; ++h) {
            phase[h] += 2.0 * M_PI * (h + 1) * f / sample_rate;
            s += amp[h] * std::sin(phase[h]);
        }
        s = env[i] * s + spec.noise_floor * rng.normal() * (0.3 + 0.7 * env[i]);
        w.samples[i] = s;
        peak = std::max(peak, std::abs(s));
    }
    if (peak > 0.0)
        for (double& s : w.samples) s *= 0.78 / peak;
    return w;
}

inline std::vector<SynthSpeakerSpec> default_speaker_specs(int n, std::uint64_t base_seed) {
    const double pitches[] = {110.0, 150.0, 210.0, 280.0};
    const double tilts[] = {-3.0, -12.0, -6.0, -9.0};
    std::vector<SynthSpeakerSpec> specs;
    for (int i = 0; i < n; ++i) {
        SynthSpeakerSpec s;
        if (i < 4) {
            s.base_pitch_hz = pitches[i];
        } else {
            s.base_pitch_hz = 100.0 * std::pow(1.26, i - 3);
            if (s.base_pitch_hz > 390.0) s.base_pitch_hz = 390.0 - 7.0 * i;
            s.base_pitch_hz = std::clamp(s.base_pitch_hz, 62.0, 395.0);
        }
        s.formant_tilt = tilts[i % 4] - 0.5 * (i / 4);
        s.rng_seed = derive_seed(base_seed, 0x5eed, static_cast<std::uint64_t>(i));
        specs.push_back(s);
    }
    return specs;
}

inline CorpusHandle generate_synthetic_corpus(const std::vector<SynthSpeakerSpec>& specs,
                                              int utts_per_speaker, double utt_seconds,
                                              double train_fraction = 0.9,
                                              int sample_rate = kDefaultSampleRate,
                                              int mel_bins = kDefaultMelBins) {
    if (specs.size() < 2) throw std::invalid_argument("need at least 2 speaker specs");
    for (std::size_t i = 0; i < specs.size(); ++i)
        for (std::size_t j = i + 1; j < specs.size(); ++j)
            if (specs[i].rng_seed == specs[j].rng_seed)
                throw std::invalid_argument("duplicate seeds");
    if (utts_per_speaker < 1) throw std::invalid_argument("utts_per_speaker must be >= 1");

    int n_train = static_cast<int>(std::lround(train_fraction * utts_per_speaker));
    if (utts_per_speaker >= 2)
        n_train = std::clamp(n_train, 1, utts_per_speaker - 1);
    else
        n_train = 1;

    CorpusHandle corpus;
    for (std::size_t s = 0; s < specs.size(); ++s) {
        char name[16];
        std::snprintf(name, sizeof(name), "spk%02zu", s);
        corpus.speakers.emplace_back(name);
        auto& utts = corpus.utterances[name];
        for (int j = 0; j < utts_per_speaker; ++j) {
            Waveform wave = synthesize_utterance(
                specs[s], utt_seconds, sample_rate,
                derive_seed(specs[s].rng_seed, static_cast<std::uint64_t>(j)));
            Utterance u;
            char uid[32];
            std::snprintf(uid, sizeof(uid), "%s_utt%03d", name, j);
            u.id = uid;
            u.mel = melspectrogram(wave, mel_bins);
            quantize_to_f32(u.mel.values);
            u.split = j < n_train ? "train" : "test";
            utts.push_back(std::move(u));
        }
    }
    return corpus;
}

// ---------------------------------------------------------------- save/load

inline void save_corpus(const CorpusHandle& corpus, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "mels");
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
    for (const auto& spk : corpus.speakers) {
        fs::create_directories(dir / "mels" / spk);
        for (const auto& u : corpus.utterances.at(spk)) {
            const std::string rel = "mels/" + spk + "/" + u.id + ".mel";
            write_mel_file(dir / rel, u.mel, spk);
            manifest << spk << " " << rel << " " << u.split << " " << u.mel.frames() << "\n";
        }
    }
}

inline CorpusHandle load_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    CorpusHandle corpus;
    auto add_speaker = [&](const std::string& spk) {
        if (std::find(corpus.speakers.begin(), corpus.speakers.end(), spk) ==
            corpus.speakers.end())
            corpus.speakers.push_back(spk);
    };

    const fs::path manifest_path = dir / "manifest.txt";
    if (fs::exists(manifest_path)) {
        std::ifstream manifest(manifest_path);
        if (!manifest) throw std::runtime_error("cannot read " + manifest_path.string());
        std::string line;
        int line_no = 0;
        while (std::getline(manifest, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string spk, rel, split;
            long frames = -1;
            ss >> spk >> rel >> split >> frames;
            if (spk.empty() || rel.empty() || (split != "train" && split != "test") ||
                frames < 1) {
                std::ostringstream err;
                err << manifest_path.string() << ":" << line_no << ": malformed manifest line";
                throw std::runtime_error(err.str());
            }
            const fs::path mel_path = dir / rel;
            if (!fs::exists(mel_path))
                throw std::runtime_error("missing mel file referenced by manifest: " +
                                         mel_path.string());
            Utterance u;
            u.mel = read_mel_file(mel_path);
            if (u.mel.frames() != frames) {
                std::ostringstream err;
                err << manifest_path.string() << ":" << line_no
                    << ": frame count mismatch for " << rel;
                throw std::runtime_error(err.str());
            }
            u.id = fs::path(rel).stem().string();
            u.split = split;
            add_speaker(spk);
            corpus.utterances[spk].push_back(std::move(u));
        }
    }

    // Optional raw-audio subtree: audio/<speaker>/*.wav, preprocessed on load.
    const fs::path audio_dir = dir / "audio";
    if (fs::exists(audio_dir)) {
        std::vector<fs::path> spk_dirs;
        for (const auto& e : fs::directory_iterator(audio_dir))
            if (e.is_directory()) spk_dirs.push_back(e.path());
        std::sort(spk_dirs.begin(), spk_dirs.end());
        for (const auto& sd : spk_dirs) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(sd))
                if (e.path().extension() == ".wav") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            const std::string spk = sd.filename().string();
            for (const auto& p : files) {
                Waveform w = read_wav_pcm16(p);
                w = resample_linear(w, kDefaultSampleRate);
                w = trim_silence(w);
                Utterance u;
                u.id = spk + "_" + p.stem().string();
                u.mel = melspectrogram(w);
                quantize_to_f32(u.mel.values);
                u.split = "train";
                add_speaker(spk);
                corpus.utterances[spk].push_back(std::move(u));
            }
        }
    }

    if (corpus.speakers.empty())
        throw std::runtime_error("no utterances found under " + dir.string());
    for (const auto& spk : corpus.speakers) {
        bool has_train = false;
        for (const auto& u : corpus.utterances[spk]) has_train |= u.split == "train";
        if (!has_train)
            throw std::runtime_error("speaker without train utterances: " + spk);
    }
    return corpus;
}

}  // namespace cyclevc
