#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qbv/barkgram.hpp"
#include "qbv/features.hpp"
#include "qbv/layers.hpp"
#include "qbv/manifest.hpp"
#include "qbv/rng.hpp"
#include "qbv/tensor.hpp"

namespace qbv {

using StridePair = std::pair<int, int>;  // (frequency, time)

/// One of the 11 published encoder/decoder configurations, or a custom
/// scaled instance built for tests.
struct CaeArchitecture {
    int variant_id = 0;  // 1..11, or 0 for custom builds
    std::pair<int, int> outer_kernel;            // encoder L1, decoder L8
    std::pair<int, int> inner_kernel = {10, 10};
    std::array<StridePair, 4> encoder_strides;   // (freq, time) per layer
    std::array<int, 4> encoder_channels = {8, 16, 24, 32};
    int input_h = 128, input_w = 128;

    std::pair<int, int> encoded_shape() const {
        int h = input_h, w = input_w;
        for (const auto& [sf, st] : encoder_strides) {
            h = (h + sf - 1) / sf;
            w = (w + st - 1) / st;
        }
        return {h, w};
    }
    int encoded_size() const {
        auto [h, w] = encoded_shape();
        return encoder_channels[3] * h * w;
    }
};

/// Exact Table-driven configuration for variants 1..11.
CaeArchitecture build_cae(int variant_id);

template <typename T>
struct Param {
    std::vector<T> value, grad, m, v;  // value + gradient + Adam moments

    void init(size_t n) {
        value.assign(n, T(0));
        grad.assign(n, T(0));
        m.assign(n, T(0));
        v.assign(n, T(0));
    }
};

template <typename T>
struct ConvBlock {
    int in_ch, out_ch, kh, kw, sh, sw;
    Param<T> weight, bias;
};

template <typename T>
struct BnBlock {
    int channels;
    Param<T> gamma, beta;
    std::vector<T> running_mean, running_var;
};

/// Intermediate activations of one forward pass, kept for backward.
template <typename T>
struct ForwardCache {
    Tensor4<T> input;
    std::array<Tensor4<T>, 4> enc_conv_in;   // inputs to encoder convs
    std::array<Tensor4<T>, 4> enc_conv_out;  // pre-BN
    std::array<Tensor4<T>, 4> enc_act;       // post-ReLU
    std::array<Tensor4<T>, 4> dec_conv_in;   // post-upsample
    std::array<Tensor4<T>, 4> dec_conv_out;
    std::array<Tensor4<T>, 4> dec_act;
    std::array<BnCache<T>, 4> enc_bn, dec_bn;
    Tensor4<T> reconstruction;
};

template <typename T>
class CaeModel {
  public:
    CaeArchitecture arch;
    std::array<ConvBlock<T>, 4> enc_conv;
    std::array<BnBlock<T>, 4> enc_bn;
    std::array<ConvBlock<T>, 4> dec_conv;
    std::array<BnBlock<T>, 4> dec_bn;
    ConvBlock<T> out_conv;

    // training metadata
    uint64_t seed = 0;
    int epochs_run = 0;
    int best_epoch = 0;
    double best_val_loss = 0;
    bool trained = false;

    explicit CaeModel(const CaeArchitecture& a, uint64_t init_seed = 0);

    /// Encoder + decoder. Returns (reconstruction, encoded); fills
    /// `cache` when a backward pass will follow.
    std::pair<Tensor4<T>, Tensor4<T>> forward(const Tensor4<T>& x, BnMode mode,
                                              ForwardCache<T>* cache = nullptr);

    /// Encoder only (infer mode).
    Tensor4<T> encode(const Tensor4<T>& x);

    /// Accumulates parameter gradients from d(loss)/d(reconstruction).
    void backward(const ForwardCache<T>& cache, const Tensor4<T>& d_recon);

    std::vector<Param<T>*> params();
    void zero_grad();

  private:
    void init_params(uint64_t init_seed);
};

/// Adam with bias correction; lr 0.001, beta1 0.9, beta2 0.999, eps 1e-8.
template <typename T>
struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long t = 0;

    void step(std::vector<Param<T>*> params) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, double(t));
        const double bc2 = 1.0 - std::pow(beta2, double(t));
        for (Param<T>* p : params)
            for (size_t i = 0; i < p->value.size(); ++i) {
                p->m[i] = T(beta1) * p->m[i] + T(1 - beta1) * p->grad[i];
                p->v[i] =
                    T(beta2) * p->v[i] + T(1 - beta2) * p->grad[i] * p->grad[i];
                const double mhat = p->m[i] / bc1;
                const double vhat = p->v[i] / bc2;
                p->value[i] -= T(lr * mhat / (std::sqrt(vhat) + eps));
            }
    }
};

/// Strict-improvement early stopping: update() returns true while
/// training should continue, false once `patience` consecutive epochs
/// brought no improvement.
class EarlyStopping {
  public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    bool update(double val_loss) {
        ++epoch_;
        if (epoch_ == 1 || val_loss < best_) {
            best_ = val_loss;
            best_epoch_ = epoch_;
            stale_ = 0;
        } else {
            ++stale_;
        }
        return stale_ < patience_;
    }

    int best_epoch() const { return best_epoch_; }
    double best() const { return best_; }

  private:
    int patience_, epoch_ = 0, stale_ = 0, best_epoch_ = 0;
    double best_ = 0;
};

/// One training example: a unit-normalized fixed-size barkgram plus the
/// corpus kind used for 50/50 batch stratification.
struct TrainItem {
    std::vector<float> values;  // input_h * input_w, row-major
    EntryKind kind = EntryKind::sample;
};

struct TrainConfig {
    uint64_t seed = 0;
    int batch_size = 128;  // composed as half imitations, half samples
    double learning_rate = 1e-3;
    int patience = 10;
    int max_epochs = 1000;
    double target_train_mse = 0;  // > 0: stop once train MSE reaches it
    // test hook: observes (imitations, samples) per assembled batch
    std::function<void(int, int)> batch_observer;
};

struct EpochStats {
    int epoch;
    double train_mse, val_mse;
};

/// Adam + MSE training with stratified batches and early stopping; the
/// best-validation-loss parameters are restored before returning.
std::vector<EpochStats> train_cae(CaeModel<float>& model,
                                  const std::vector<TrainItem>& train_set,
                                  const std::vector<TrainItem>& val_set,
                                  const TrainConfig& config);

/// Encoder features of a 128x128 unit-normalized barkgram, flattened
/// (channel, band, frame). Throws if the model is untrained.
FeatureVector encode_features(CaeModel<float>& model, const Barkgram& bg);

// Checkpoint I/O ("CAE1" container). Loading validates every parameter
// shape against build_cae(variant_id).
void save_checkpoint(const std::string& path, const CaeModel<float>& model);
CaeModel<float> load_checkpoint(const std::string& path);

extern template class CaeModel<float>;
extern template class CaeModel<double>;

}  // namespace qbv
