#include "qbv/cae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace qbv {

CaeArchitecture build_cae(int variant_id) {
    struct Row {
        std::pair<int, int> kernel;
        std::array<StridePair, 4> strides;
    };
    static const std::array<Row, 11> table = {{
        // Square
        {{5, 5}, {{{2, 2}, {2, 2}, {2, 2}, {2, 2}}}},  // 1: (8,8) 2048
        {{5, 5}, {{{2, 2}, {2, 2}, {2, 2}, {4, 4}}}},  // 2: (4,4) 512
        {{5, 5}, {{{2, 2}, {2, 2}, {4, 4}, {4, 4}}}},  // 3: (2,2) 128
        // Tall (preserve frequency)
        {{5, 3}, {{{2, 2}, {2, 2}, {2, 2}, {2, 4}}}},  // 4: (8,4) 1024
        {{5, 3}, {{{2, 2}, {2, 2}, {2, 4}, {2, 4}}}},  // 5: (8,2) 512
        {{5, 3}, {{{2, 2}, {2, 4}, {2, 4}, {2, 4}}}},  // 6: (8,1) 256
        {{5, 3}, {{{2, 2}, {2, 4}, {2, 4}, {4, 4}}}},  // 7: (4,1) 128
        // Wide (preserve time)
        {{3, 5}, {{{2, 2}, {2, 2}, {2, 2}, {4, 2}}}},  // 8: (4,8) 1024
        {{3, 5}, {{{2, 2}, {2, 2}, {4, 2}, {4, 2}}}},  // 9: (2,8) 512
        {{3, 5}, {{{2, 2}, {4, 2}, {4, 2}, {4, 2}}}},  // 10: (1,8) 256
        {{3, 5}, {{{2, 2}, {4, 2}, {4, 2}, {4, 4}}}},  // 11: (1,4) 128
    }};
    if (variant_id < 1 || variant_id > 11)
        throw std::invalid_argument("build_cae: unknown variant " +
                                    std::to_string(variant_id));
    CaeArchitecture arch;
    arch.variant_id = variant_id;
    arch.outer_kernel = table[variant_id - 1].kernel;
    arch.encoder_strides = table[variant_id - 1].strides;
    return arch;
}

template <typename T>
CaeModel<T>::CaeModel(const CaeArchitecture& a, uint64_t init_seed) : arch(a) {
    const auto [okh, okw] = arch.outer_kernel;
    const auto [ikh, ikw] = arch.inner_kernel;
    const auto& ch = arch.encoder_channels;
    for (int l = 0; l < 4; ++l) {
        auto& c = enc_conv[l];
        c.in_ch = l == 0 ? 1 : ch[l - 1];
        c.out_ch = ch[l];
        c.kh = l == 0 ? okh : ikh;
        c.kw = l == 0 ? okw : ikw;
        c.sh = arch.encoder_strides[l].first;
        c.sw = arch.encoder_strides[l].second;
        enc_bn[l].channels = ch[l];
    }
    // decoder mirrors the encoder: channel counts [32, 24, 16, 8],
    // stride-1 convs, outer kernel on the last one
    for (int l = 0; l < 4; ++l) {
        auto& c = dec_conv[l];
        c.in_ch = l == 0 ? ch[3] : ch[3 - l + 1];
        c.out_ch = ch[3 - l];
        c.kh = l == 3 ? okh : ikh;
        c.kw = l == 3 ? okw : ikw;
        c.sh = c.sw = 1;
        dec_bn[l].channels = c.out_ch;
    }
    out_conv.in_ch = ch[0];
    out_conv.out_ch = 1;
    out_conv.kh = ikh;
    out_conv.kw = ikw;
    out_conv.sh = out_conv.sw = 1;
    init_params(init_seed);
}

template <typename T>
void CaeModel<T>::init_params(uint64_t init_seed) {
    auto eng = make_engine(init_seed, 0xCAE);
    auto init_conv = [&](ConvBlock<T>& c) {
        const size_t n = size_t(c.out_ch) * c.in_ch * c.kh * c.kw;
        c.weight.init(n);
        c.bias.init(c.out_ch);
        const double fan_in = double(c.in_ch) * c.kh * c.kw;
        const double fan_out = double(c.out_ch) * c.kh * c.kw;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (T& w : c.weight.value) w = T(dist(eng));
    };
    auto init_bn = [](BnBlock<T>& bn) {
        bn.gamma.init(bn.channels);
        std::fill(bn.gamma.value.begin(), bn.gamma.value.end(), T(1));
        bn.beta.init(bn.channels);
        bn.running_mean.assign(bn.channels, T(0));
        bn.running_var.assign(bn.channels, T(1));
    };
    for (int l = 0; l < 4; ++l) {
        init_conv(enc_conv[l]);
        init_bn(enc_bn[l]);
        init_conv(dec_conv[l]);
        init_bn(dec_bn[l]);
    }
    init_conv(out_conv);
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> CaeModel<T>::forward(const Tensor4<T>& x,
                                                       BnMode mode,
                                                       ForwardCache<T>* cache) {
    if (x.c != 1 || x.h != arch.input_h || x.w != arch.input_w)
        throw std::invalid_argument("cae: wrong input shape");
    if (cache) cache->input = x;
    Tensor4<T> a = x;
    for (int l = 0; l < 4; ++l) {
        auto& c = enc_conv[l];
        if (cache) cache->enc_conv_in[l] = a;
        Tensor4<T> z = conv2d_forward(a, c.weight.value, c.bias.value, c.out_ch,
                                      c.kh, c.kw, c.sh, c.sw);
        if (cache) cache->enc_conv_out[l] = z;
        auto& bn = enc_bn[l];
        Tensor4<T> h = batchnorm_forward(z, bn.gamma.value, bn.beta.value,
                                         bn.running_mean, bn.running_var, mode,
                                         cache ? &cache->enc_bn[l] : nullptr);
        relu_inplace(h);
        if (cache) cache->enc_act[l] = h;
        a = std::move(h);
    }
    Tensor4<T> encoded = a;

    for (int l = 0; l < 4; ++l) {
        // upsample factor mirrors the encoder stride of layer 3-l
        const auto [fh, fw] = arch.encoder_strides[3 - l];
        Tensor4<T> u = upsample_nearest(a, fh, fw);
        if (cache) cache->dec_conv_in[l] = u;
        auto& c = dec_conv[l];
        Tensor4<T> z = conv2d_forward(u, c.weight.value, c.bias.value, c.out_ch,
                                      c.kh, c.kw, 1, 1);
        if (cache) cache->dec_conv_out[l] = z;
        auto& bn = dec_bn[l];
        Tensor4<T> h = batchnorm_forward(z, bn.gamma.value, bn.beta.value,
                                         bn.running_mean, bn.running_var, mode,
                                         cache ? &cache->dec_bn[l] : nullptr);
        relu_inplace(h);
        if (cache) cache->dec_act[l] = h;
        a = std::move(h);
    }
    Tensor4<T> recon =
        conv2d_forward(a, out_conv.weight.value, out_conv.bias.value, 1,
                       out_conv.kh, out_conv.kw, 1, 1);
    if (cache) cache->reconstruction = recon;
    return {std::move(recon), std::move(encoded)};
}

template <typename T>
Tensor4<T> CaeModel<T>::encode(const Tensor4<T>& x) {
    Tensor4<T> a = x;
    for (int l = 0; l < 4; ++l) {
        auto& c = enc_conv[l];
        Tensor4<T> z = conv2d_forward(a, c.weight.value, c.bias.value, c.out_ch,
                                      c.kh, c.kw, c.sh, c.sw);
        auto& bn = enc_bn[l];
        Tensor4<T> h =
            batchnorm_forward(z, bn.gamma.value, bn.beta.value, bn.running_mean,
                              bn.running_var, BnMode::infer);
        relu_inplace(h);
        a = std::move(h);
    }
    return a;
}

template <typename T>
void CaeModel<T>::backward(const ForwardCache<T>& cache,
                           const Tensor4<T>& d_recon) {
    Tensor4<T> dx;
    conv2d_backward(cache.dec_act[3], out_conv.weight.value, 1, out_conv.kh,
                    out_conv.kw, 1, 1, d_recon, out_conv.weight.grad,
                    out_conv.bias.grad, &dx);
    Tensor4<T> grad = std::move(dx);
    for (int l = 3; l >= 0; --l) {
        grad = relu_backward(cache.dec_act[l], grad);
        grad = batchnorm_backward(cache.dec_conv_out[l], dec_bn[l].gamma.value,
                                  cache.dec_bn[l], grad, dec_bn[l].gamma.grad,
                                  dec_bn[l].beta.grad);
        auto& c = dec_conv[l];
        conv2d_backward(cache.dec_conv_in[l], c.weight.value, c.out_ch, c.kh,
                        c.kw, 1, 1, grad, c.weight.grad, c.bias.grad, &dx);
        const auto [fh, fw] = arch.encoder_strides[3 - l];
        grad = upsample_nearest_backward(dx, fh, fw);
    }
    for (int l = 3; l >= 0; --l) {
        grad = relu_backward(cache.enc_act[l], grad);
        grad = batchnorm_backward(cache.enc_conv_out[l], enc_bn[l].gamma.value,
                                  cache.enc_bn[l], grad, enc_bn[l].gamma.grad,
                                  enc_bn[l].beta.grad);
        auto& c = enc_conv[l];
        conv2d_backward(cache.enc_conv_in[l], c.weight.value, c.out_ch, c.kh,
                        c.kw, c.sh, c.sw, grad, c.weight.grad, c.bias.grad,
                        l > 0 ? &dx : nullptr);
        if (l > 0) grad = std::move(dx);
    }
}

template <typename T>
std::vector<Param<T>*> CaeModel<T>::params() {
    std::vector<Param<T>*> out;
    auto add_conv = [&](ConvBlock<T>& c) {
        out.push_back(&c.weight);
        out.push_back(&c.bias);
    };
    auto add_bn = [&](BnBlock<T>& bn) {
        out.push_back(&bn.gamma);
        out.push_back(&bn.beta);
    };
    for (int l = 0; l < 4; ++l) {
        add_conv(enc_conv[l]);
        add_bn(enc_bn[l]);
    }
    for (int l = 0; l < 4; ++l) {
        add_conv(dec_conv[l]);
        add_bn(dec_bn[l]);
    }
    add_conv(out_conv);
    return out;
}

template <typename T>
void CaeModel<T>::zero_grad() {
    for (Param<T>* p : params())
        std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template class CaeModel<float>;
template class CaeModel<double>;

namespace {

// Shuffled cycling over one kind's item indices.
class KindCycler {
  public:
    KindCycler(std::vector<int> indices, uint64_t seed, uint64_t stream)
        : indices_(std::move(indices)), eng_(make_engine(seed, stream)) {
        std::shuffle(indices_.begin(), indices_.end(), eng_);
    }

    int next() {
        if (pos_ == indices_.size()) {
            std::shuffle(indices_.begin(), indices_.end(), eng_);
            pos_ = 0;
        }
        return indices_[pos_++];
    }

    size_t size() const { return indices_.size(); }

  private:
    std::vector<int> indices_;
    std::mt19937_64 eng_;
    size_t pos_ = 0;
};

Tensor4<float> make_batch(const std::vector<TrainItem>& items,
                          const std::vector<int>& ids, int h, int w) {
    Tensor4<float> x(int(ids.size()), 1, h, w);
    for (size_t b = 0; b < ids.size(); ++b)
        std::copy(items[ids[b]].values.begin(), items[ids[b]].values.end(),
                  x.sample(int(b)));
    return x;
}

double mse(const Tensor4<float>& a, const Tensor4<float>& b) {
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = double(a.v[i]) - double(b.v[i]);
        acc += d * d;
    }
    return acc / double(a.size());
}

struct Snapshot {
    std::vector<std::vector<float>> values;
    std::vector<std::vector<float>> running;
};

Snapshot snapshot(CaeModel<float>& m) {
    Snapshot s;
    for (Param<float>* p : m.params()) s.values.push_back(p->value);
    for (auto* bns : {&m.enc_bn, &m.dec_bn})
        for (auto& bn : *bns) {
            s.running.push_back(bn.running_mean);
            s.running.push_back(bn.running_var);
        }
    return s;
}

void restore(CaeModel<float>& m, const Snapshot& s) {
    auto params = m.params();
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = s.values[i];
    size_t r = 0;
    for (auto* bns : {&m.enc_bn, &m.dec_bn})
        for (auto& bn : *bns) {
            bn.running_mean = s.running[r++];
            bn.running_var = s.running[r++];
        }
}

}  // namespace

std::vector<EpochStats> train_cae(CaeModel<float>& model,
                                  const std::vector<TrainItem>& train_set,
                                  const std::vector<TrainItem>& val_set,
                                  const TrainConfig& config) {
    std::vector<int> train_imit, train_samp;
    for (int i = 0; i < int(train_set.size()); ++i)
        (train_set[i].kind == EntryKind::imitation ? train_imit : train_samp)
            .push_back(i);
    if (train_imit.empty() || train_samp.empty())
        throw std::runtime_error("train_cae: a kind partition is empty");
    if (val_set.empty()) throw std::runtime_error("train_cae: empty val set");

    const int h = model.arch.input_h, w = model.arch.input_w;
    const int half = config.batch_size / 2;
    const int steps_per_epoch =
        int((std::max(train_imit.size(), train_samp.size()) + half - 1) /
            size_t(half));

    KindCycler imit_cycle(train_imit, config.seed, 1);
    KindCycler samp_cycle(train_samp, config.seed, 2);

    Tensor4<float> val_x = [&] {
        std::vector<int> ids(val_set.size());
        for (size_t i = 0; i < ids.size(); ++i) ids[i] = int(i);
        return make_batch(val_set, ids, h, w);
    }();

    Adam<float> opt;
    opt.lr = config.learning_rate;
    EarlyStopping stopper(config.patience);
    Snapshot best = snapshot(model);
    std::vector<EpochStats> history;
    ForwardCache<float> cache;

    model.seed = config.seed;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        double train_loss = 0;
        long long train_count = 0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<int> ids;
            ids.reserve(config.batch_size);
            for (int i = 0; i < half; ++i) ids.push_back(imit_cycle.next());
            for (int i = 0; i < config.batch_size - half; ++i)
                ids.push_back(samp_cycle.next());
            if (config.batch_observer) {
                int n_imit = 0;
                for (int id : ids)
                    if (train_set[id].kind == EntryKind::imitation) ++n_imit;
                config.batch_observer(n_imit, int(ids.size()) - n_imit);
            }
            Tensor4<float> x = make_batch(train_set, ids, h, w);

            model.zero_grad();
            auto [recon, encoded] = model.forward(x, BnMode::train, &cache);
            const double loss = mse(recon, x);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_cae: diverged at epoch " +
                                         std::to_string(epoch));
            Tensor4<float> d_recon(recon.n, recon.c, recon.h, recon.w);
            const float scale = 2.0f / float(recon.size());
            for (size_t i = 0; i < recon.size(); ++i)
                d_recon.v[i] = scale * (recon.v[i] - x.v[i]);
            model.backward(cache, d_recon);
            opt.step(model.params());

            train_loss += loss;
            ++train_count;
        }

        auto [val_recon, val_enc] = model.forward(val_x, BnMode::infer);
        const double val_loss = mse(val_recon, val_x);
        if (!std::isfinite(val_loss))
            throw std::runtime_error("train_cae: diverged at epoch " +
                                     std::to_string(epoch));
        history.push_back({epoch, train_loss / train_count, val_loss});

        const bool keep_going = stopper.update(val_loss);
        if (stopper.best_epoch() == epoch) best = snapshot(model);
        model.epochs_run = epoch;
        if (!keep_going) break;
        if (config.target_train_mse > 0 &&
            train_loss / train_count <= config.target_train_mse)
            break;
    }

    restore(model, best);
    model.best_epoch = stopper.best_epoch();
    model.best_val_loss = stopper.best();
    model.trained = true;
    return history;
}

FeatureVector encode_features(CaeModel<float>& model, const Barkgram& bg) {
    if (!model.trained)
        throw std::runtime_error("encode_features: model is untrained");
    if (bg.n_bands != model.arch.input_h || bg.n_frames != model.arch.input_w)
        throw std::invalid_argument("encode_features: barkgram shape mismatch");
    Tensor4<float> x(1, 1, bg.n_bands, bg.n_frames);
    for (size_t i = 0; i < bg.values.size(); ++i)
        x.v[i] = float(bg.values[i]);
    Tensor4<float> enc = model.encode(x);
    FeatureVector fv;
    fv.extractor_id = "cae-" + std::to_string(model.arch.variant_id);
    fv.values.assign(enc.v.begin(), enc.v.end());
    return fv;
}

namespace {

// Checkpoint layer tags.
enum : uint8_t {
    kTagConvWeight = 1,
    kTagConvBias = 2,
    kTagBnGamma = 3,
    kTagBnBeta = 4,
    kTagBnMean = 5,
    kTagBnVar = 6,
};

struct Block {
    uint8_t tag;
    std::vector<uint32_t> shape;
    const std::vector<float>* data;
    std::vector<float>* mut = nullptr;
};

template <typename Model>
std::vector<Block> checkpoint_blocks(Model& m) {
    std::vector<Block> blocks;
    auto conv = [&](auto& c) {
        blocks.push_back({kTagConvWeight,
                          {uint32_t(c.out_ch), uint32_t(c.in_ch),
                           uint32_t(c.kh), uint32_t(c.kw)},
                          &c.weight.value,
                          &c.weight.value});
        blocks.push_back(
            {kTagConvBias, {uint32_t(c.out_ch)}, &c.bias.value, &c.bias.value});
    };
    auto bn = [&](auto& b) {
        const std::vector<uint32_t> shape = {uint32_t(b.channels)};
        blocks.push_back({kTagBnGamma, shape, &b.gamma.value, &b.gamma.value});
        blocks.push_back({kTagBnBeta, shape, &b.beta.value, &b.beta.value});
        blocks.push_back({kTagBnMean, shape, &b.running_mean, &b.running_mean});
        blocks.push_back({kTagBnVar, shape, &b.running_var, &b.running_var});
    };
    for (int l = 0; l < 4; ++l) {
        conv(m.enc_conv[l]);
        bn(m.enc_bn[l]);
    }
    for (int l = 0; l < 4; ++l) {
        conv(m.dec_conv[l]);
        bn(m.dec_bn[l]);
    }
    conv(m.out_conv);
    return blocks;
}

}  // namespace

void save_checkpoint(const std::string& path, const CaeModel<float>& model) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
    f.write("CAE1", 4);
    const uint8_t version = 1;
    const uint8_t variant = uint8_t(model.arch.variant_id);
    f.put(char(version));
    f.put(char(variant));
    f.write(reinterpret_cast<const char*>(&model.seed), 8);
    const uint32_t best_epoch = uint32_t(model.best_epoch);
    f.write(reinterpret_cast<const char*>(&best_epoch), 4);
    auto blocks = checkpoint_blocks(const_cast<CaeModel<float>&>(model));
    const uint32_t n_blocks = uint32_t(blocks.size());
    f.write(reinterpret_cast<const char*>(&n_blocks), 4);
    for (const Block& b : blocks) {
        f.put(char(b.tag));
        f.put(char(b.shape.size()));
        for (uint32_t d : b.shape)
            f.write(reinterpret_cast<const char*>(&d), 4);
        f.write(reinterpret_cast<const char*>(b.data->data()),
                std::streamsize(b.data->size() * 4));
    }
}

CaeModel<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CAE1", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const int version = f.get();
    if (version != 1)
        throw std::runtime_error("checkpoint: unsupported version");
    const int variant = f.get();
    uint64_t seed;
    f.read(reinterpret_cast<char*>(&seed), 8);
    uint32_t best_epoch;
    f.read(reinterpret_cast<char*>(&best_epoch), 4);
    uint32_t n_blocks;
    f.read(reinterpret_cast<char*>(&n_blocks), 4);

    CaeModel<float> model(build_cae(variant));
    model.seed = seed;
    model.best_epoch = int(best_epoch);
    auto blocks = checkpoint_blocks(model);
    if (n_blocks != blocks.size())
        throw std::runtime_error("checkpoint: wrong block count in " + path);
    for (Block& b : blocks) {
        const int tag = f.get();
        const int ndim = f.get();
        if (tag != b.tag || ndim != int(b.shape.size()))
            throw std::runtime_error("checkpoint: layer tag mismatch in " +
                                     path);
        size_t count = 1;
        for (size_t d = 0; d < b.shape.size(); ++d) {
            uint32_t dim;
            f.read(reinterpret_cast<char*>(&dim), 4);
            if (dim != b.shape[d])
                throw std::runtime_error(
                    "checkpoint: parameter shape mismatch in " + path);
            count *= dim;
        }
        b.mut->resize(count);
        f.read(reinterpret_cast<char*>(b.mut->data()),
               std::streamsize(count * 4));
    }
    if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
    model.trained = true;
    return model;
}

}  // namespace qbv
