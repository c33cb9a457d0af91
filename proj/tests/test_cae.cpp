#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "qbv/cae.hpp"
#include "test_util.hpp"

using namespace qbv;

namespace {

// Downscaled architecture used where running a 128x128 model per test
// would be too slow; keeps the stride/upsample bookkeeping honest.
CaeArchitecture tiny_arch() {
    CaeArchitecture a;
    a.variant_id = 0;
    a.outer_kernel = {5, 5};
    a.inner_kernel = {3, 3};
    a.encoder_strides = {{{2, 2}, {2, 2}, {2, 2}, {1, 1}}};
    a.encoder_channels = {4, 6, 8, 8};
    a.input_h = a.input_w = 16;
    return a;
}

std::vector<TrainItem> tiny_items(int n, EntryKind kind, uint64_t seed,
                                  int hw = 16) {
    std::vector<TrainItem> items;
    auto eng = make_engine(seed, 9);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (int i = 0; i < n; ++i) {
        TrainItem it;
        it.kind = kind;
        it.values.resize(size_t(hw) * hw);
        // smooth blob with a random center so items differ but stay easy
        const float cy = 4 + 8 * dist(eng), cx = 4 + 8 * dist(eng);
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x)
                it.values[size_t(y) * hw + x] =
                    std::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) /
                             18.0f);
        items.push_back(std::move(it));
    }
    return items;
}

}  // namespace

TEST_CASE("published architectures: kernels, shapes and code sizes") {
    struct Expect {
        int variant;
        std::pair<int, int> kernel;
        std::pair<int, int> shape;
        int size;
    };
    const std::vector<Expect> table = {
        {1, {5, 5}, {8, 8}, 2048},  {2, {5, 5}, {4, 4}, 512},
        {3, {5, 5}, {2, 2}, 128},   {4, {5, 3}, {8, 4}, 1024},
        {5, {5, 3}, {8, 2}, 512},   {6, {5, 3}, {8, 1}, 256},
        {7, {5, 3}, {4, 1}, 128},   {8, {3, 5}, {4, 8}, 1024},
        {9, {3, 5}, {2, 8}, 512},   {10, {3, 5}, {1, 8}, 256},
        {11, {3, 5}, {1, 4}, 128},
    };
    for (const auto& e : table) {
        CAPTURE(e.variant);
        const CaeArchitecture a = build_cae(e.variant);
        CHECK(a.outer_kernel == e.kernel);
        CHECK(a.inner_kernel == std::pair{10, 10});
        CHECK(a.encoder_channels == std::array{8, 16, 24, 32});
        CHECK(a.encoded_shape() == e.shape);
        CHECK(a.encoded_size() == e.size);
        // stride products must take 128 to the encoded extent
        int ph = 1, pw = 1;
        for (auto [sf, st] : a.encoder_strides) {
            ph *= sf;
            pw *= st;
        }
        CHECK(128 / ph == e.shape.first);
        CHECK(128 / pw == e.shape.second);
    }
    CHECK_THROWS_AS(build_cae(0), std::invalid_argument);
    CHECK_THROWS_AS(build_cae(12), std::invalid_argument);
}

TEST_CASE("model wiring mirrors the encoder") {
    CaeModel<float> m(build_cae(5), 1);
    // encoder: 1 -> 8 -> 16 -> 24 -> 32, outer kernel first
    CHECK(m.enc_conv[0].in_ch == 1);
    CHECK(m.enc_conv[0].kh == 5);
    CHECK(m.enc_conv[0].kw == 3);
    CHECK(m.enc_conv[1].kh == 10);
    CHECK(m.enc_conv[3].out_ch == 32);
    // decoder: 32 -> 32 -> 24 -> 16 -> 8, stride 1, outer kernel last
    CHECK(m.dec_conv[0].in_ch == 32);
    CHECK(m.dec_conv[0].out_ch == 32);
    CHECK(m.dec_conv[1].in_ch == 32);
    CHECK(m.dec_conv[1].out_ch == 24);
    CHECK(m.dec_conv[3].in_ch == 16);
    CHECK(m.dec_conv[3].out_ch == 8);
    CHECK(m.dec_conv[3].kh == 5);
    CHECK(m.dec_conv[3].kw == 3);
    for (int l = 0; l < 4; ++l) {
        CHECK(m.dec_conv[l].sh == 1);
        CHECK(m.dec_conv[l].sw == 1);
    }
    CHECK(m.out_conv.out_ch == 1);
    CHECK(m.out_conv.kh == 10);
}

TEST_CASE("forward pass shapes on a real variant") {
    CaeModel<float> m(build_cae(9), 2);
    Tensor4<float> x(2, 1, 128, 128);
    auto eng = make_engine(3, 0);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (float& v : x.v) v = dist(eng);

    auto [recon, encoded] = m.forward(x, BnMode::train);
    CHECK(recon.n == 2);
    CHECK(recon.c == 1);
    CHECK(recon.h == 128);
    CHECK(recon.w == 128);
    CHECK(encoded.c == 32);
    CHECK(encoded.h == 2);
    CHECK(encoded.w == 8);

    Tensor4<float> bad(1, 1, 64, 128);
    CHECK_THROWS_AS(m.forward(bad, BnMode::infer), std::invalid_argument);
}

TEST_CASE("all-zero weights reconstruct the output bias everywhere") {
    CaeModel<float> m(tiny_arch(), 4);
    for (Param<float>* p : m.params())
        std::fill(p->value.begin(), p->value.end(), 0.0f);
    m.out_conv.bias.value[0] = 0.7f;
    Tensor4<float> x(2, 1, 16, 16);
    for (float& v : x.v) v = 0.3f;
    auto [recon, encoded] = m.forward(x, BnMode::infer);
    for (float v : recon.v) CHECK(v == doctest::Approx(0.7f));
}

TEST_CASE("initialization is seed-deterministic") {
    CaeModel<float> a(build_cae(1), 42), b(build_cae(1), 42),
        c(build_cae(1), 43);
    CHECK(a.enc_conv[0].weight.value == b.enc_conv[0].weight.value);
    CHECK(a.enc_conv[0].weight.value != c.enc_conv[0].weight.value);
    // Glorot bounds for the first inner conv: sqrt(6 / (800 + 1600))
    const double limit = std::sqrt(6.0 / (8 * 100 + 16 * 100));
    for (float w : a.enc_conv[1].weight.value) {
        CHECK(w <= limit);
        CHECK(w >= -limit);
    }
    for (float bv : a.enc_conv[0].bias.value) CHECK(bv == 0.0f);
    for (float g : a.enc_bn[0].gamma.value) CHECK(g == 1.0f);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Param<float> p;
    p.init(3);
    p.value = {1.0f, -2.0f, 0.5f};
    Adam<float> opt;
    opt.step({&p});
    CHECK(p.value == std::vector<float>{1.0f, -2.0f, 0.5f});
}

TEST_CASE("adam: first step with unit gradient moves by about lr") {
    Param<float> p;
    p.init(1);
    p.value[0] = 1.0f;
    p.grad[0] = 1.0f;
    Adam<float> opt;
    opt.step({&p});
    // bias correction makes mhat = vhat = 1, so the step is lr/(1+eps)
    CHECK(p.value[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("early stopping fires after exactly `patience` stale epochs") {
    EarlyStopping s(3);
    CHECK(s.update(1.0));   // epoch 1, best
    CHECK(s.update(0.9));   // epoch 2, best
    CHECK(s.update(0.95));  // stale 1
    CHECK(s.update(0.9));   // equal is not an improvement: stale 2
    CHECK(!s.update(0.91)); // stale 3 -> stop
    CHECK(s.best_epoch() == 2);
    CHECK(s.best() == 0.9);

    EarlyStopping t(2);
    CHECK(t.update(5.0));
    CHECK(t.update(4.0));
    CHECK(t.update(3.0));  // improvements reset the counter
    CHECK(t.update(3.5));
    CHECK(!t.update(3.5));
    CHECK(t.best_epoch() == 3);
}

TEST_CASE("training drives the loss down and restores the best epoch") {
    CaeModel<float> m(tiny_arch(), 7);
    auto train = tiny_items(12, EntryKind::imitation, 100);
    auto samp = tiny_items(12, EntryKind::sample, 101);
    train.insert(train.end(), samp.begin(), samp.end());
    auto val = tiny_items(6, EntryKind::imitation, 102);
    auto vs = tiny_items(6, EntryKind::sample, 103);
    val.insert(val.end(), vs.begin(), vs.end());

    TrainConfig cfg;
    cfg.seed = 11;
    cfg.batch_size = 8;
    cfg.max_epochs = 60;
    cfg.patience = 10;
    std::vector<std::pair<int, int>> batches;
    cfg.batch_observer = [&](int ni, int ns) { batches.push_back({ni, ns}); };

    auto history = train_cae(m, train, val, cfg);
    REQUIRE(!history.empty());
    CHECK(m.trained);
    CHECK(history.back().train_mse < history.front().train_mse);

    // batches are composed half and half throughout
    REQUIRE(!batches.empty());
    for (auto [ni, ns] : batches) {
        CHECK(ni == 4);
        CHECK(ns == 4);
    }

    // the reported best epoch carries the smallest recorded val loss
    double best = history[0].val_mse;
    int best_epoch = 1;
    for (const auto& e : history)
        if (e.val_mse < best) {
            best = e.val_mse;
            best_epoch = e.epoch;
        }
    CHECK(m.best_epoch == best_epoch);
    CHECK(m.best_val_loss == best);
    if (m.epochs_run < cfg.max_epochs)
        CHECK(m.epochs_run == m.best_epoch + cfg.patience);
}

TEST_CASE("target train mse short-circuits a long run") {
    CaeModel<float> m(tiny_arch(), 8);
    auto train = tiny_items(4, EntryKind::imitation, 110);
    auto samp = tiny_items(4, EntryKind::sample, 111);
    train.insert(train.end(), samp.begin(), samp.end());

    TrainConfig cfg;
    cfg.seed = 12;
    cfg.batch_size = 4;
    cfg.max_epochs = 500;
    cfg.target_train_mse = 1e9;  // trivially satisfied after epoch 1
    auto history = train_cae(m, train, train, cfg);
    CHECK(history.size() == 1);
}

TEST_CASE("training rejects degenerate inputs") {
    CaeModel<float> m(tiny_arch(), 9);
    auto imit = tiny_items(4, EntryKind::imitation, 120);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_epochs = 1;
    CHECK_THROWS_WITH_AS(train_cae(m, imit, imit, cfg),
                         doctest::Contains("kind partition"),
                         std::runtime_error);
}

TEST_CASE("encode_features requires a trained model and the right shape") {
    CaeModel<float> m(build_cae(3), 10);
    Barkgram bg;
    bg.n_bands = 128;
    bg.n_frames = 128;
    bg.values.assign(128 * 128, 0.1);
    CHECK_THROWS_WITH_AS(encode_features(m, bg),
                         doctest::Contains("untrained"), std::runtime_error);
    m.trained = true;
    FeatureVector fv = encode_features(m, bg);
    CHECK(fv.extractor_id == "cae-3");
    CHECK(fv.dim() == 128);

    Barkgram wrong = bg;
    wrong.n_frames = 64;
    wrong.values.resize(128 * 64);
    CHECK_THROWS_AS(encode_features(m, wrong), std::invalid_argument);
}

TEST_CASE("checkpoint round trip preserves every parameter bitwise") {
    auto dir = testutil::temp_dir("cae_ckpt");
    CaeModel<float> m(build_cae(7), 77);
    m.seed = 1234;
    m.best_epoch = 17;
    // make running stats non-trivial so they are exercised too
    for (auto& bn : m.enc_bn)
        for (size_t i = 0; i < bn.running_mean.size(); ++i) {
            bn.running_mean[i] = 0.01f * float(i);
            bn.running_var[i] = 1.0f + 0.02f * float(i);
        }
    const std::string path = (dir / "m.ckpt").string();
    save_checkpoint(path, m);
    CaeModel<float> back = load_checkpoint(path);
    CHECK(back.arch.variant_id == 7);
    CHECK(back.seed == 1234);
    CHECK(back.best_epoch == 17);
    CHECK(back.trained);
    for (int l = 0; l < 4; ++l) {
        CHECK(back.enc_conv[l].weight.value == m.enc_conv[l].weight.value);
        CHECK(back.dec_conv[l].weight.value == m.dec_conv[l].weight.value);
        CHECK(back.enc_bn[l].running_mean == m.enc_bn[l].running_mean);
        CHECK(back.enc_bn[l].running_var == m.enc_bn[l].running_var);
    }
    CHECK(back.out_conv.weight.value == m.out_conv.weight.value);

    // identical encodings after the round trip
    Tensor4<float> x(1, 1, 128, 128);
    auto eng = make_engine(5, 0);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (float& v : x.v) v = dist(eng);
    CHECK(m.encode(x).v == back.encode(x).v);
}

TEST_CASE("checkpoint corruption is detected") {
    auto dir = testutil::temp_dir("cae_ckpt_bad");
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "none.ckpt").string()),
                         doctest::Contains("cannot open"), std::runtime_error);
    {
        std::ofstream f((dir / "bad.ckpt").string(), std::ios::binary);
        f << "XXXX";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "bad.ckpt").string()),
                         doctest::Contains("bad magic"), std::runtime_error);

    CaeModel<float> m(build_cae(11), 1);
    const std::string good = (dir / "good.ckpt").string();
    save_checkpoint(good, m);
    // truncate the payload
    std::filesystem::resize_file(good, std::filesystem::file_size(good) / 2);
    CHECK_THROWS_AS(load_checkpoint(good), std::runtime_error);
}
