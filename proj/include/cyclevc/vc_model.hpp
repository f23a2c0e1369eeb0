#pragma once

// Conversion network: content encoder (convs with instance normalization and
// a bidirectional recurrent bottleneck, time-downsampled), decoder conditioned
// on a broadcast speaker embedding, and a refining postnet.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclevc/autodiff.hpp"
#include "cyclevc/checkpoint.hpp"
#include "cyclevc/speaker_encoder.hpp"

namespace cyclevc {

// Per-channel standardization over time, no learned affine.
inline Mat instance_norm(const Mat& features, double epsilon) {
    Vec mu = features.colwise().mean();
    Vec var = Vec(((features.rowwise() - mu).array().square().colwise().mean()).matrix());
    Vec inv_s = Vec(((var.array() + epsilon).sqrt().inverse()).matrix());
    return Mat(((features.rowwise() - mu).array().rowwise() * inv_s.array()).matrix());
}

struct ContentCode {
    Mat values;  // steps x dim

    Eigen::Index steps() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }
};

struct VcNetConfig {
    int mel_bins = kDefaultMelBins;
    int enc_channels = 80;
    int enc_kernel = 5;
    int bottleneck = 128;  // content-code dim; the ablation axis
    int downsample = 16;
    int dec_gru_hidden = 160;
    int dec_channels = 160;
    int dec_kernel = 5;
    int postnet_channels = 80;
    int postnet_kernel = 5;
    int postnet_layers = 5;
    int emb_dim = 256;
    double in_eps = 1e-5;
};

struct VcNet {
    VcNetConfig cfg;
    ad::Param enc_w1, enc_b1, enc_w2, enc_b2, enc_w3, enc_b3;
    ad::GruParams enc_fwd, enc_bwd;
    ad::GruParams dec_gru;
    ad::Param dec_w1, dec_b1, dec_w2, dec_b2, dec_w3, dec_b3;
    ad::Param out_w, out_b;
    std::vector<ad::Param> post_w, post_b;

    explicit VcNet(const VcNetConfig& c, std::uint64_t seed) : cfg(c) {
        if (cfg.bottleneck % 2 != 0)
            throw std::invalid_argument("bottleneck must be even");
        if (cfg.downsample < 1) throw std::invalid_argument("downsample must be >= 1");
        Rng rng(derive_seed(seed, 0xc0de));
        const int k = cfg.enc_kernel;
        const int ch = cfg.enc_channels;
        enc_w1 = ad::make_param("vc.enc1.w", rng, k * cfg.mel_bins, ch);
        enc_b1 = ad::make_zero_param("vc.enc1.b", 1, ch);
        enc_w2 = ad::make_param("vc.enc2.w", rng, k * ch, ch);
        enc_b2 = ad::make_zero_param("vc.enc2.b", 1, ch);
        enc_w3 = ad::make_param("vc.enc3.w", rng, k * ch, ch);
        enc_b3 = ad::make_zero_param("vc.enc3.b", 1, ch);
        enc_fwd.init("vc.enc_fwd", rng, ch, cfg.bottleneck / 2);
        enc_bwd.init("vc.enc_bwd", rng, ch, cfg.bottleneck / 2);

        dec_gru.init("vc.dec_gru", rng, cfg.bottleneck + cfg.emb_dim, cfg.dec_gru_hidden);
        const int dk = cfg.dec_kernel;
        dec_w1 = ad::make_param("vc.dec1.w", rng, dk * cfg.dec_gru_hidden, cfg.dec_channels);
        dec_b1 = ad::make_zero_param("vc.dec1.b", 1, cfg.dec_channels);
        dec_w2 = ad::make_param("vc.dec2.w", rng, dk * cfg.dec_channels, cfg.dec_channels);
        dec_b2 = ad::make_zero_param("vc.dec2.b", 1, cfg.dec_channels);
        dec_w3 = ad::make_param("vc.dec3.w", rng, dk * cfg.dec_channels, cfg.dec_channels);
        dec_b3 = ad::make_zero_param("vc.dec3.b", 1, cfg.dec_channels);
        out_w = ad::make_param("vc.out.w", rng, cfg.dec_channels, cfg.mel_bins);
        out_b = ad::make_zero_param("vc.out.b", 1, cfg.mel_bins);

        const int pk = cfg.postnet_kernel;
        for (int i = 0; i < cfg.postnet_layers; ++i) {
            const int in = (i == 0) ? cfg.mel_bins : cfg.postnet_channels;
            const int out = (i == cfg.postnet_layers - 1) ? cfg.mel_bins : cfg.postnet_channels;
            const std::string tag = "vc.post" + std::to_string(i);
            post_w.push_back(ad::make_param(tag + ".w", rng, pk * in, out));
            post_b.push_back(ad::make_zero_param(tag + ".b", 1, out));
        }
    }

    std::vector<ad::Param*> params() {
        std::vector<ad::Param*> out{&enc_w1, &enc_b1, &enc_w2, &enc_b2, &enc_w3, &enc_b3};
        enc_fwd.collect(out);
        enc_bwd.collect(out);
        dec_gru.collect(out);
        out.push_back(&dec_w1);
        out.push_back(&dec_b1);
        out.push_back(&dec_w2);
        out.push_back(&dec_b2);
        out.push_back(&dec_w3);
        out.push_back(&dec_b3);
        out.push_back(&out_w);
        out.push_back(&out_b);
        for (std::size_t i = 0; i < post_w.size(); ++i) {
            out.push_back(&post_w[i]);
            out.push_back(&post_b[i]);
        }
        return out;
    }

    ad::Var encode(ad::Tape& tape, ad::Var x) {
        if (x.rows() % cfg.downsample != 0)
            throw std::invalid_argument("frames not aligned to downsample factor");
        ad::Var h = tape.relu(tape.instance_norm(
            tape.conv1d(x, enc_w1, enc_b1, cfg.enc_kernel), cfg.in_eps));
        h = tape.relu(tape.instance_norm(
            tape.conv1d(h, enc_w2, enc_b2, cfg.enc_kernel), cfg.in_eps));
        h = tape.relu(tape.instance_norm(
            tape.conv1d(h, enc_w3, enc_b3, cfg.enc_kernel), cfg.in_eps));
        ad::Var f = tape.gru(h, enc_fwd, false);
        ad::Var b = tape.gru(h, enc_bwd, true);
        return tape.slice_rows_stride(tape.concat_cols(f, b), cfg.downsample);
    }

    struct Decoded {
        ad::Var pre;
        ad::Var post;
    };

    Decoded decode(ad::Tape& tape, ad::Var code, const Vec& spk_embedding) {
        if (spk_embedding.cols() != cfg.emb_dim)
            throw std::invalid_argument("speaker embedding dim mismatch");
        if (code.cols() != cfg.bottleneck)
            throw std::invalid_argument("content code dim mismatch");
        ad::Var up = tape.repeat_rows(code, cfg.downsample);
        ad::Var e = tape.broadcast_row(tape.input(spk_embedding), up.rows());
        ad::Var h = tape.gru(tape.concat_cols(up, e), dec_gru, false);
        h = tape.relu(tape.conv1d(h, dec_w1, dec_b1, cfg.dec_kernel));
        h = tape.relu(tape.conv1d(h, dec_w2, dec_b2, cfg.dec_kernel));
        h = tape.relu(tape.conv1d(h, dec_w3, dec_b3, cfg.dec_kernel));
        ad::Var pre = tape.linear(h, out_w, out_b);
        ad::Var r = pre;
        for (std::size_t i = 0; i < post_w.size(); ++i) {
            r = tape.conv1d(r, post_w[i], post_b[i], cfg.postnet_kernel);
            if (i + 1 < post_w.size()) r = tape.tanh(r);
        }
        return Decoded{pre, tape.add(pre, r)};
    }
};

// Right-pad rows to a multiple of factor with the log floor value.
inline Mat pad_rows_to_multiple(const Mat& values, int factor, double pad_value) {
    const Eigen::Index rem = values.rows() % factor;
    if (rem == 0) return values;
    const Eigen::Index extra = factor - rem;
    Mat out(values.rows() + extra, values.cols());
    out.topRows(values.rows()) = values;
    out.bottomRows(extra).setConstant(pad_value);
    return out;
}

inline ContentCode encode_content(VcNet& net, const MelSpectrogram& mel) {
    ad::Tape tape;
    ad::Var code = net.encode(tape, tape.input(mel.values));
    return ContentCode{code.val()};
}

// First post-norm activation of the content encoder, for inspection.
inline Mat content_encoder_first_norm(VcNet& net, const Mat& mel_values) {
    ad::Tape tape;
    ad::Var h = tape.instance_norm(
        tape.conv1d(tape.input(mel_values), net.enc_w1, net.enc_b1, net.cfg.enc_kernel),
        net.cfg.in_eps);
    return h.val();
}

inline std::pair<MelSpectrogram, MelSpectrogram> decode(VcNet& net, const ContentCode& code,
                                                        const SpeakerEmbedding& spk) {
    ad::Tape tape;
    auto d = net.decode(tape, tape.input(code.values), spk.values);
    MelSpectrogram pre, post;
    pre.values = d.pre.val();
    post.values = d.post.val();
    return {pre, post};
}

// source content + target voice; output has the source's frame count.
inline MelSpectrogram convert(VcNet& net, SpeakerEncoderNet& se,
                              const MelSpectrogram& source_mel,
                              const MelSpectrogram& target_mel) {
    SpeakerEmbedding emb = embed_eval(se, target_mel);
    Mat padded = pad_rows_to_multiple(source_mel.values, net.cfg.downsample, mel_log_floor());
    ad::Tape tape;
    ad::Var code = net.encode(tape, tape.input(padded));
    auto d = net.decode(tape, code, emb.values);
    MelSpectrogram out;
    out.sample_rate_hz = source_mel.sample_rate_hz;
    out.hop_length_samples = source_mel.hop_length_samples;
    out.values = d.post.val().topRows(source_mel.frames());
    return out;
}

// ---------------------------------------------------------------- persistence

inline void save_vc_net(const std::filesystem::path& path, VcNet& net, std::uint64_t seed,
                        long iteration) {
    nlohmann::json header{{"kind", "vc"},
                          {"mel_bins", net.cfg.mel_bins},
                          {"enc_channels", net.cfg.enc_channels},
                          {"enc_kernel", net.cfg.enc_kernel},
                          {"bottleneck", net.cfg.bottleneck},
                          {"downsample", net.cfg.downsample},
                          {"dec_gru_hidden", net.cfg.dec_gru_hidden},
                          {"dec_channels", net.cfg.dec_channels},
                          {"dec_kernel", net.cfg.dec_kernel},
                          {"postnet_channels", net.cfg.postnet_channels},
                          {"postnet_kernel", net.cfg.postnet_kernel},
                          {"postnet_layers", net.cfg.postnet_layers},
                          {"emb_dim", net.cfg.emb_dim},
                          {"in_eps", net.cfg.in_eps},
                          {"seed", seed},
                          {"iteration", iteration}};
    save_checkpoint(path, snapshot_params(header, net.params()));
}

inline VcNet load_vc_net(const std::filesystem::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.header.value("kind", "") != "vc")
        throw std::runtime_error("not a vc checkpoint: " + path.string());
    VcNetConfig cfg;
    cfg.mel_bins = ckpt.header.at("mel_bins");
    cfg.enc_channels = ckpt.header.at("enc_channels");
    cfg.enc_kernel = ckpt.header.at("enc_kernel");
    cfg.bottleneck = ckpt.header.at("bottleneck");
    cfg.downsample = ckpt.header.at("downsample");
    cfg.dec_gru_hidden = ckpt.header.at("dec_gru_hidden");
    cfg.dec_channels = ckpt.header.at("dec_channels");
    cfg.dec_kernel = ckpt.header.at("dec_kernel");
    cfg.postnet_channels = ckpt.header.at("postnet_channels");
    cfg.postnet_kernel = ckpt.header.at("postnet_kernel");
    cfg.postnet_layers = ckpt.header.at("postnet_layers");
    cfg.emb_dim = ckpt.header.at("emb_dim");
    cfg.in_eps = ckpt.header.at("in_eps");
    VcNet net(cfg, 0);
    restore_params(ckpt, net.params());
    return net;
}

}  // namespace cyclevc
