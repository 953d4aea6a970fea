#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "covidscreen/model.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using covidscreen::ClassifierModel;
using covidscreen::ConvNet;
using covidscreen::Tensor;

TEST_SUITE("model") {

TEST_CASE("registry lists the eight pretrained backbones plus TinyCNN") {
    const auto& reg = covidscreen::backbone_registry();
    CHECK(reg.size() == 9);
    for (const char* name : {"VGG16", "InceptionResNetV2", "ResNet50", "DenseNet201", "VGG19",
                             "MobileNetV2", "NasNetMobile", "ResNet15V2", "TinyCNN"}) {
        const auto& spec = covidscreen::find_backbone(name);
        CHECK(spec.name == name);
        CHECK(spec.input_c == 3);
        CHECK(spec.feature_dim > 0);
    }
    const auto& tiny = covidscreen::find_backbone("TinyCNN");
    CHECK(tiny.input_h == 32);
    CHECK(tiny.feature_dim == 16);
    CHECK(tiny.weights_source == "scratch");
    CHECK_THROWS(covidscreen::find_backbone("AlexNet"));
}

TEST_CASE("leaky activation slopes are exactly 0.01 and 1") {
    CHECK(covidscreen::leaky_relu(3.0) == 3.0);
    CHECK(covidscreen::leaky_relu(-2.0) == -0.02);
    CHECK(covidscreen::leaky_relu(0.0) == 0.0);
    Tensor t(1, 2, 1);
    t.at(0, 0, 0) = -4.0;
    t.at(0, 1, 0) = 5.0;
    const Tensor out = covidscreen::leaky_relu(t);
    CHECK(out.at(0, 0, 0) == -0.04);
    CHECK(out.at(0, 1, 0) == 5.0);
}

TEST_CASE("conv2d_reference equals the reversed-kernel oracle exactly") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        std::uniform_int_distribution<int> size(6, 18), ks(1, 4), st(1, 3);
        const int kh = ks(rng), kw = ks(rng);
        const int stride = st(rng);
        Tensor x(kh + size(rng), kw + size(rng), 1);
        Tensor k(kh, kw, 1);
        for (auto& v : x.values()) v = u(rng);
        for (auto& v : k.values()) v = u(rng);
        const Tensor got = covidscreen::conv2d_reference(x, k, stride);
        const Tensor want = oracle::conv2d(x, k, stride);
        REQUIRE(got.same_shape(want));
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got.values()[i] == want.values()[i]);
        }
    }
}

TEST_CASE("max pooling keeps window maxima and routes gradients to them") {
    covidscreen::MaxPoolLayer pool("p", 2);
    Tensor in(2, 4, 1);
    const double vals[] = {1, 5, 2, 2, 3, 4, 2, 2};
    std::copy(std::begin(vals), std::end(vals), in.values().begin());
    const Tensor out = pool.forward(in);
    REQUIRE(out.height() == 1);
    REQUIRE(out.width() == 2);
    CHECK(out.at(0, 0, 0) == 5.0);
    CHECK(out.at(0, 1, 0) == 2.0);

    Tensor grad(1, 2, 1);
    grad.at(0, 0, 0) = 1.0;
    grad.at(0, 1, 0) = 2.0;
    const Tensor back = pool.backward(in, grad);
    CHECK(back.at(0, 1, 0) == 1.0);  // the max of the left window
    // Tied window (all 2s): the first in raster order receives the gradient.
    CHECK(back.at(0, 2, 0) == 2.0);
    CHECK(back.at(1, 2, 0) == 0.0);
    CHECK(back.at(0, 3, 0) == 0.0);
}

TEST_CASE("global average pooling averages and spreads uniformly") {
    covidscreen::GlobalAvgPoolLayer gap("g");
    Tensor in(2, 2, 2);
    for (int i = 0; i < 8; ++i) in.values()[i] = i;
    const Tensor out = gap.forward(in);
    REQUIRE(out.height() == 1);
    REQUIRE(out.channels() == 2);
    CHECK(out.at(0, 0, 0) == doctest::Approx((0 + 2 + 4 + 6) / 4.0));
    CHECK(out.at(0, 0, 1) == doctest::Approx((1 + 3 + 5 + 7) / 4.0));

    Tensor grad(1, 1, 2);
    grad.at(0, 0, 0) = 4.0;
    grad.at(0, 0, 1) = 8.0;
    const Tensor back = gap.backward(in, grad);
    CHECK(back.at(1, 1, 0) == 1.0);
    CHECK(back.at(0, 1, 1) == 2.0);
}

TEST_CASE("TinyCNN produces a 16-feature embedding and is seed-deterministic") {
    const ClassifierModel a = covidscreen::build_classifier("TinyCNN", {256, 64}, 9);
    const ClassifierModel b = covidscreen::build_classifier("TinyCNN", {256, 64}, 9);
    const ClassifierModel c = covidscreen::build_classifier("TinyCNN", {256, 64}, 10);
    CHECK(a.backbone_checksum() == b.backbone_checksum());
    CHECK(a.backbone_checksum() != c.backbone_checksum());

    std::mt19937_64 rng(42);
    const Tensor in = testutil::random_image(32, 32, 3, rng);
    const auto feats = a.features(in);
    CHECK(feats.size() == 16);
    const auto pa = a.predict_one(in);
    const auto pb = b.predict_one(in);
    CHECK(pa[0] == pb[0]);
    CHECK(pa[0] + pa[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pa[0] > 0.0);
    CHECK(pa[1] > 0.0);
}

TEST_CASE("TinyCNN layer shapes follow the published chain") {
    const ClassifierModel m = covidscreen::build_classifier("TinyCNN", {256, 64}, 1);
    std::mt19937_64 rng(43);
    const Tensor in = testutil::random_image(32, 32, 3, rng);
    const auto trace = m.backbone().forward_trace(in);
    REQUIRE(trace.size() == 7);
    CHECK(trace[0].height() == 30);  // conv1
    CHECK(trace[0].channels() == 8);
    CHECK(trace[2].height() == 7);  // pool1
    CHECK(trace[3].height() == 5);  // conv2
    CHECK(trace[3].channels() == 16);
    CHECK(trace[5].height() == 1);  // pool2
    CHECK(trace[6].height() == 1);  // gap
    CHECK(trace[6].channels() == 16);
}

TEST_CASE("softmax2 is stable for extreme logits") {
    const auto p = covidscreen::softmax2(std::vector<double>{1000.0, -1000.0});
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(p[1] >= 0.0);
    const auto q = covidscreen::softmax2(std::vector<double>{3.0, 3.0});
    CHECK(q[0] == doctest::Approx(0.5));
}

TEST_CASE("head backward matches central finite differences") {
    std::mt19937_64 rng(44);
    covidscreen::DenseHead head(6, 10, 8, rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(6);
    for (auto& v : x) v = u(rng);
    const int label = 1;

    covidscreen::HeadCache cache;
    const auto probs = head.forward(x, &cache);
    covidscreen::DenseHead grads = head.zeros_like();
    std::array<double, 2> dlogits{probs[0], probs[1]};
    dlogits[label] -= 1.0;  // d(cross entropy)/d(logits)
    const auto dx = head.backward(cache, dlogits, grads);
    REQUIRE(dx.size() == 6);

    const auto loss = [&](const covidscreen::DenseHead& h, std::span<const double> in) {
        const auto p = h.forward(in);
        return -std::log(p[label]);
    };

    const double h = 1e-6;
    // Parameter gradients for every dense layer.
    auto mutable_head = head;
    auto grad_layers = grads.dense();
    auto layers = mutable_head.dense();
    for (int li = 0; li < 3; ++li) {
        auto& w = layers[li]->w;
        const auto& gw = grad_layers[li]->w;
        for (std::size_t i = 0; i < w.size(); i += 3) {
            const double keep = w[i];
            w[i] = keep + h;
            const double up = loss(mutable_head, x);
            w[i] = keep - h;
            const double down = loss(mutable_head, x);
            w[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            CHECK(gw[i] == doctest::Approx(numeric).epsilon(1e-5));
        }
        auto& b = layers[li]->b;
        const auto& gb = grad_layers[li]->b;
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double keep = b[i];
            b[i] = keep + h;
            const double up = loss(mutable_head, x);
            b[i] = keep - h;
            const double down = loss(mutable_head, x);
            b[i] = keep;
            CHECK(gb[i] == doctest::Approx((up - down) / (2.0 * h)).epsilon(1e-5));
        }
    }
    // Input gradient.
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss(head, x);
        x[i] = keep - h;
        const double down = loss(head, x);
        x[i] = keep;
        CHECK(dx[i] == doctest::Approx((up - down) / (2.0 * h)).epsilon(1e-5));
    }
}

TEST_CASE("conv layer backward matches finite differences on the input") {
    std::mt19937_64 rng(45);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> w(2 * 1 * 9), b(2);
    for (auto& v : w) v = u(rng);
    for (auto& v : b) v = u(rng);
    covidscreen::ConvLayer conv("c", 1, 2, 3, w, b);

    Tensor in = testutil::random_image(6, 6, 1, rng);
    const Tensor out = conv.forward(in);
    Tensor grad_out(out.height(), out.width(), out.channels());
    for (auto& v : grad_out.values()) v = u(rng);
    const Tensor din = conv.backward(in, grad_out);

    const auto objective = [&](const Tensor& t) {
        const Tensor o = conv.forward(t);
        double acc = 0.0;
        for (std::size_t i = 0; i < o.size(); ++i) acc += o.values()[i] * grad_out.values()[i];
        return acc;
    };
    const double h = 1e-6;
    for (int idx = 0; idx < 36; idx += 5) {
        Tensor up = in, down = in;
        up.values()[idx] += h;
        down.values()[idx] -= h;
        const double numeric = (objective(up) - objective(down)) / (2.0 * h);
        CHECK(din.values()[idx] == doctest::Approx(numeric).epsilon(1e-5));
    }
}

TEST_CASE("convnet json round trip preserves checksum and outputs") {
    const ClassifierModel m = covidscreen::build_classifier("TinyCNN", {32, 16}, 3);
    const ConvNet& net = m.backbone();
    const ConvNet back = ConvNet::from_json(net.to_json());
    CHECK(back.checksum() == net.checksum());

    std::mt19937_64 rng(46);
    const Tensor in = testutil::random_image(32, 32, 3, rng);
    const auto a = net.features(in);
    const auto b = back.features(in);
    CHECK(a == b);
}

TEST_CASE("classifier save/load round trip") {
    testutil::TempDir dir;
    const ClassifierModel m = covidscreen::build_classifier("TinyCNN", {256, 64}, 5);
    const auto path = dir.path / "model.json";
    m.save(path);
    const ClassifierModel back = ClassifierModel::load(path);
    CHECK(back.spec().name == "TinyCNN");
    CHECK(back.backbone_checksum() == m.backbone_checksum());

    std::mt19937_64 rng(47);
    const Tensor in = testutil::random_image(32, 32, 3, rng);
    const auto pa = m.predict_one(in);
    const auto pb = back.predict_one(in);
    CHECK(pa[0] == pb[0]);
    CHECK(pa[1] == pb[1]);
}

TEST_CASE("predict_proba rows sum to one") {
    const ClassifierModel m = covidscreen::build_classifier("TinyCNN", {256, 64}, 6);
    std::mt19937_64 rng(48);
    std::vector<Tensor> batch;
    for (int i = 0; i < 7; ++i) batch.push_back(testutil::random_image(32, 32, 3, rng));
    const auto probs = m.predict_proba(batch);
    REQUIRE(probs.size() == 7);
    for (const auto& p : probs) {
        CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(p[0] >= 0.0);
        CHECK(p[1] >= 0.0);
    }
}

TEST_CASE("missing pretrained weights fail with an actionable message") {
    testutil::TempDir dir;
    testutil::EnvVar env("COVIDSCREEN_WEIGHTS_DIR", (dir.path / "nowhere").string());
    try {
        (void)covidscreen::build_classifier("VGG16", {256, 64}, 0);
        FAIL("expected a missing-weights error");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("VGG16") != std::string::npos);
        CHECK(msg.find("imagenet:vgg16") != std::string::npos);
        CHECK(msg.find("COVIDSCREEN_WEIGHTS_DIR") != std::string::npos);
    }
}

TEST_CASE("pretrained weights load from COVIDSCREEN_WEIGHTS_DIR") {
    testutil::TempDir dir;
    testutil::EnvVar env("COVIDSCREEN_WEIGHTS_DIR", dir.path.string());

    // A stand-in VGG16 graph with the right signature: 224x224x3 -> 1x1x512.
    std::mt19937_64 rng(49);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    std::vector<double> w(512 * 3 * 1), b(512);
    for (auto& v : w) v = u(rng);
    for (auto& v : b) v = u(rng);
    std::vector<std::unique_ptr<covidscreen::Layer>> layers;
    layers.push_back(std::make_unique<covidscreen::MaxPoolLayer>("pool", 32));
    layers.push_back(std::make_unique<covidscreen::ConvLayer>("proj", 3, 512, 1, w, b));
    layers.push_back(std::make_unique<covidscreen::GlobalAvgPoolLayer>("gap"));
    const ConvNet net(std::move(layers));
    std::ofstream(dir.path / "imagenet_vgg16.json") << net.to_json().dump();

    const ClassifierModel m = covidscreen::build_classifier("VGG16", {256, 64}, 0);
    CHECK(m.spec().feature_dim == 512);
    CHECK(m.backbone_checksum() == net.checksum());
    std::mt19937_64 img_rng(50);
    const Tensor in = testutil::random_image(224, 224, 3, img_rng);
    const auto feats = m.features(in);
    CHECK(feats.size() == 512);
}

TEST_CASE("weight payloads with the wrong output shape are rejected") {
    testutil::TempDir dir;
    testutil::EnvVar env("COVIDSCREEN_WEIGHTS_DIR", dir.path.string());
    std::vector<std::unique_ptr<covidscreen::Layer>> layers;
    layers.push_back(std::make_unique<covidscreen::GlobalAvgPoolLayer>("gap"));
    const ConvNet net(std::move(layers));  // 224x224x3 -> 1x1x3, not 512
    std::ofstream(dir.path / "imagenet_vgg16.json") << net.to_json().dump();
    CHECK_THROWS(covidscreen::build_classifier("VGG16", {256, 64}, 0));
}

}  // TEST_SUITE
