#pragma once

// ConvBank speaker encoder: trained as a speaker classifier with label
// smoothing on shuffle-stacked mels, then frozen and used to emit
// time-invariant unit-norm speaker embeddings.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclevc/autodiff.hpp"
#include "cyclevc/checkpoint.hpp"
#include "cyclevc/corpus.hpp"
#include "cyclevc/optim.hpp"
#include "cyclevc/perturb.hpp"

namespace cyclevc {

struct SpeakerEmbedding {
    Vec values;  // 1 x dim, unit L2 norm

    Eigen::Index dim() const { return values.cols(); }
};

// y_k = (1-alpha) * onehot_k + alpha / K
inline Mat smooth_labels(int class_index, int num_classes, double alpha) {
    if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
    if (class_index < 0 || class_index >= num_classes)
        throw std::invalid_argument("class index out of range");
    if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("alpha must be in [0, 1)");
    Mat y = Mat::Constant(1, num_classes, alpha / num_classes);
    y(0, class_index) += 1.0 - alpha;
    return y;
}

struct SpeakerEncoderConfig {
    int mel_bins = kDefaultMelBins;
    int chunk_len = 8;
    std::vector<int> kernel_widths = {1, 3, 5, 7};
    int conv_channels = 128;  // per kernel width
    int pool_width = 2;
    int hidden = 256;
    int embed_dim = 256;
    int num_classes = 2;

    int input_channels() const { return chunk_len * mel_bins; }
};

struct SpeakerEncoderNet {
    SpeakerEncoderConfig cfg;
    std::vector<ad::Param> conv_w, conv_b;
    ad::Param lin1_w, lin1_b, lin2_w, lin2_b;
    ad::Param head_w, head_b;  // classifier, training only

    SpeakerEncoderNet(const SpeakerEncoderConfig& c, std::uint64_t seed) : cfg(c) {
        Rng rng(derive_seed(seed, 0x5e));
        const int cin = cfg.input_channels();
        for (std::size_t i = 0; i < cfg.kernel_widths.size(); ++i) {
            const int k = cfg.kernel_widths[i];
            const std::string tag = "se.conv" + std::to_string(i);
            conv_w.push_back(ad::make_param(tag + ".w", rng, k * cin, cfg.conv_channels));
            conv_b.push_back(ad::make_zero_param(tag + ".b", 1, cfg.conv_channels));
        }
        const int bank = cfg.conv_channels * static_cast<int>(cfg.kernel_widths.size());
        lin1_w = ad::make_param("se.lin1.w", rng, bank, cfg.hidden);
        lin1_b = ad::make_zero_param("se.lin1.b", 1, cfg.hidden);
        lin2_w = ad::make_param("se.lin2.w", rng, cfg.hidden, cfg.embed_dim);
        lin2_b = ad::make_zero_param("se.lin2.b", 1, cfg.embed_dim);
        head_w = ad::make_param("se.head.w", rng, cfg.embed_dim, cfg.num_classes);
        head_b = ad::make_zero_param("se.head.b", 1, cfg.num_classes);
    }

    std::vector<ad::Param*> params() {
        std::vector<ad::Param*> out;
        for (std::size_t i = 0; i < conv_w.size(); ++i) {
            out.push_back(&conv_w[i]);
            out.push_back(&conv_b[i]);
        }
        out.push_back(&lin1_w);
        out.push_back(&lin1_b);
        out.push_back(&lin2_w);
        out.push_back(&lin2_b);
        out.push_back(&head_w);
        out.push_back(&head_b);
        return out;
    }

    // ConvBank -> ReLU -> max-pool -> linears -> mean over time. 1 x embed_dim.
    ad::Var forward_pooled(ad::Tape& tape, const Mat& perturbed) {
        ad::Var x = tape.input(perturbed);
        ad::Var cat;
        for (std::size_t i = 0; i < conv_w.size(); ++i) {
            ad::Var c = tape.conv1d(x, conv_w[i], conv_b[i], cfg.kernel_widths[i]);
            cat = (i == 0) ? c : tape.concat_cols(cat, c);
        }
        ad::Var a = tape.relu(cat);
        if (cfg.pool_width > 1) a = tape.maxpool_rows(a, cfg.pool_width);
        ad::Var h1 = tape.relu(tape.linear(a, lin1_w, lin1_b));
        ad::Var h2 = tape.linear(h1, lin2_w, lin2_b);
        return tape.mean_rows(h2);
    }

    ad::Var logits(ad::Tape& tape, ad::Var pooled) {
        return tape.linear(pooled, head_w, head_b);
    }
};

// Perturb (random permutation in training, stacking only in eval), run the
// bank, mean-pool, L2 normalize.
inline SpeakerEmbedding embed(SpeakerEncoderNet& net, const MelSpectrogram& mel,
                              const PerturbConfig& cfg, bool eval_mode) {
    PerturbConfig pc = cfg;
    pc.chunk_len_frames = net.cfg.chunk_len;
    MelSpectrogram perturbed = shuffle_stack(mel, pc, eval_mode);
    ad::Tape tape;
    ad::Var pooled = net.forward_pooled(tape, perturbed.values);
    SpeakerEmbedding e;
    e.values = pooled.val().row(0);
    const double n = e.values.norm();
    if (n > 0.0) e.values /= n;
    return e;
}

inline SpeakerEmbedding embed_eval(SpeakerEncoderNet& net, const MelSpectrogram& mel) {
    return embed(net, mel, PerturbConfig{net.cfg.chunk_len, 0}, true);
}

// ---------------------------------------------------------------- training

struct SpeakerTrainConfig {
    int epochs = 15;
    double lr = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double alpha = 0.1;  // label smoothing
    bool shuffle_chunks = true;
    std::uint64_t seed = 1;
    SpeakerEncoderConfig net;
};

struct SpeakerEpochStats {
    int epoch;
    double mean_loss;
    double train_accuracy;
    double heldout_accuracy;
};

struct SpeakerTrainLog {
    std::vector<SpeakerEpochStats> epochs;
};

inline double speaker_classifier_accuracy(SpeakerEncoderNet& net,
                                          const std::vector<CorpusHandle::Ref>& items) {
    if (items.empty()) return 0.0;
    int correct = 0;
    for (const auto& it : items) {
        MelSpectrogram p = shuffle_stack(it.utt->mel,
                                         PerturbConfig{net.cfg.chunk_len, 0}, true);
        ad::Tape tape;
        ad::Var logits = net.logits(tape, net.forward_pooled(tape, p.values));
        Eigen::Index best;
        logits.val().row(0).maxCoeff(&best);
        correct += (static_cast<int>(best) == it.speaker_index);
    }
    return static_cast<double>(correct) / static_cast<double>(items.size());
}

inline SpeakerEncoderNet train_speaker_encoder(const CorpusHandle& corpus,
                                               const SpeakerTrainConfig& cfg,
                                               SpeakerTrainLog* log = nullptr) {
    if (corpus.speakers.size() < 2)
        throw std::invalid_argument("classification requires >=2 speakers");

    SpeakerEncoderConfig net_cfg = cfg.net;
    net_cfg.num_classes = static_cast<int>(corpus.speakers.size());
    SpeakerEncoderNet net(net_cfg, cfg.seed);

    const auto train_items = corpus.select("train");
    const auto test_items = corpus.select("test");
    Adam opt(net.params(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng(derive_seed(cfg.seed, 0xe0, static_cast<std::uint64_t>(epoch)));
        auto order = order_rng.permutation(train_items.size());

        double loss_sum = 0.0;
        int correct = 0;
        for (std::size_t step = 0; step < order.size(); ++step) {
            const auto& item = train_items[order[step]];
            PerturbConfig pc{net_cfg.chunk_len,
                             derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1,
                                         order[step])};
            MelSpectrogram perturbed =
                shuffle_stack(item.utt->mel, pc, !cfg.shuffle_chunks);

            ad::Tape tape;
            ad::Var logits = net.logits(tape, net.forward_pooled(tape, perturbed.values));
            const Mat target =
                smooth_labels(item.speaker_index, net_cfg.num_classes, cfg.alpha);
            ad::Var loss = tape.softmax_ce(logits, target);
            tape.backward(loss);
            opt.step();

            loss_sum += loss.scalar();
            Eigen::Index best;
            logits.val().row(0).maxCoeff(&best);
            correct += (static_cast<int>(best) == item.speaker_index);
        }
        if (log) {
            SpeakerEpochStats st;
            st.epoch = epoch;
            st.mean_loss = loss_sum / static_cast<double>(train_items.size());
            st.train_accuracy =
                static_cast<double>(correct) / static_cast<double>(train_items.size());
            st.heldout_accuracy = speaker_classifier_accuracy(net, test_items);
            log->epochs.push_back(st);
        }
    }
    return net;
}

// ---------------------------------------------------------------- persistence

inline void save_speaker_encoder(const std::filesystem::path& path, SpeakerEncoderNet& net,
                                 std::uint64_t seed, int epochs, double alpha) {
    nlohmann::json header{{"kind", "speaker_encoder"},
                          {"mel_bins", net.cfg.mel_bins},
                          {"chunk_len", net.cfg.chunk_len},
                          {"kernel_widths", net.cfg.kernel_widths},
                          {"conv_channels", net.cfg.conv_channels},
                          {"pool_width", net.cfg.pool_width},
                          {"hidden", net.cfg.hidden},
                          {"embed_dim", net.cfg.embed_dim},
                          {"num_classes", net.cfg.num_classes},
                          {"seed", seed},
                          {"epochs", epochs},
                          {"alpha", alpha}};
    save_checkpoint(path, snapshot_params(header, net.params()));
}

inline SpeakerEncoderNet load_speaker_encoder(const std::filesystem::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.header.value("kind", "") != "speaker_encoder")
        throw std::runtime_error("not a speaker-encoder checkpoint: " + path.string());
    SpeakerEncoderConfig cfg;
    cfg.mel_bins = ckpt.header.at("mel_bins");
    cfg.chunk_len = ckpt.header.at("chunk_len");
    cfg.kernel_widths = ckpt.header.at("kernel_widths").get<std::vector<int>>();
    cfg.conv_channels = ckpt.header.at("conv_channels");
    cfg.pool_width = ckpt.header.at("pool_width");
    cfg.hidden = ckpt.header.at("hidden");
    cfg.embed_dim = ckpt.header.at("embed_dim");
    cfg.num_classes = ckpt.header.at("num_classes");
    SpeakerEncoderNet net(cfg, 0);
    restore_params(ckpt, net.params());
    return net;
}

}  // namespace cyclevc
