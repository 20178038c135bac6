#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "redbench/errors.hpp"
#include "redbench/micronet/model.hpp"
#include "redbench/micronet/serialize.hpp"
#include "redbench/micronet/train.hpp"
#include "redbench/rng.hpp"

using namespace redbench;
using namespace redbench::micronet;

namespace {

Image random_image(Shape shape, Rng& rng) {
    Image img(shape);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform01();
    return img;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("zero logits give a uniform posterior") {
    Shape shape{1, 4, 4};
    ClassifierModel m(shape, make_architecture("linear", shape, 5));
    // parameters default to zero, so the dense layer emits all-zero logits
    auto p = m.forward(Image(shape, 0.3));
    REQUIRE(p.size() == 5);
    for (double v : p) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("linear model posterior matches hand-computed softmax") {
    Shape shape{1, 1, 2};
    ClassifierModel m(shape, make_architecture("linear", shape, 3));
    // dense: W is (out_dim x in_dim) row-major, then out_dim biases
    auto& p0 = m.params()[0];
    REQUIRE(p0.size() == 3 * 2 + 3);
    const float W[6] = {0.5f, -1.0f, 0.25f, 0.75f, -0.5f, 0.0f};
    const float b[3] = {0.1f, -0.2f, 0.0f};
    for (int i = 0; i < 6; ++i) p0[i] = W[i];
    for (int i = 0; i < 3; ++i) p0[6 + i] = b[i];

    Image x(shape);
    x.at(0, 0, 0) = 0.8;
    x.at(0, 0, 1) = 0.3;

    double logits[3];
    for (int k = 0; k < 3; ++k)
        logits[k] = double(W[2 * k]) * 0.8 + double(W[2 * k + 1]) * 0.3 + double(b[k]);
    double mx = std::max({logits[0], logits[1], logits[2]});
    double z = 0.0;
    for (double& l : logits) z += std::exp(l - mx);

    auto p = m.forward(x);
    for (int k = 0; k < 3; ++k)
        CHECK(p[k] == doctest::Approx(std::exp(logits[k] - mx) / z).epsilon(1e-12));
}

TEST_CASE("posteriors normalize across architectures") {
    Rng rng(99);
    for (const char* arch : {"linear", "mlp", "cnn-tiny"}) {
        Shape shape{3, 8, 8};
        ClassifierModel m(shape, make_architecture(arch, shape, 7));
        initialize_parameters(m, 17);
        for (int trial = 0; trial < 5; ++trial) {
            auto p = m.forward(random_image(shape, rng));
            double sum = 0.0;
            for (double v : p) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("posterior of a zero-parameter model ignores the input") {
    Shape shape{1, 4, 4};
    ClassifierModel m(shape, make_architecture("linear", shape, 4));
    Rng rng(5);
    Tensor g = input_log_posterior_gradient(m, random_image(shape, rng), 2);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("input gradient matches central finite differences") {
    Rng rng(31);
    for (const char* arch : {"mlp", "cnn-tiny"}) {
        Shape shape{3, 8, 8};
        ClassifierModel m(shape, make_architecture(arch, shape, 5));
        initialize_parameters(m, 23);
        Image x = random_image(shape, rng);
        const int t = 3;
        Tensor g = input_log_posterior_gradient(m, x, t);

        const double h = 1e-4;
        int checked = 0;
        for (std::size_t i = 0; i < x.size(); i += 37) {
            Image xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const double fd =
                (std::log(m.forward(xp)[t]) - std::log(m.forward(xm)[t])) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
            CHECK(std::abs(fd - g[i]) / denom < 1e-4);
            ++checked;
        }
        CHECK(checked >= 5);
    }
}

TEST_CASE("linear-softmax input gradient equals (e_t - p)^T W") {
    Shape shape{1, 2, 2};
    ClassifierModel m(shape, make_architecture("linear", shape, 3));
    initialize_parameters(m, 41);
    Rng rng(8);
    Image x = random_image(shape, rng);
    const int t = 1;

    auto p = m.forward(x);
    const auto& theta = m.params()[0];
    Tensor g = input_log_posterior_gradient(m, x, t);
    for (int i = 0; i < 4; ++i) {
        double expect = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double coeff = (k == t ? 1.0 : 0.0) - p[k];
            expect += coeff * double(theta[k * 4 + i]);
        }
        CHECK(g[i] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("non-finite activation reports the offending layer") {
    Shape shape{1, 4, 4};
    ClassifierModel m(shape, make_architecture("mlp", shape, 3));
    initialize_parameters(m, 2);
    m.params()[0][0] = std::numeric_limits<float>::infinity();
    Rng rng(3);
    CHECK_THROWS_AS((void)m.forward(random_image(shape, rng)), NumericError);
}

TEST_CASE("training separates a linearly separable two-class set") {
    Shape shape{1, 2, 2};
    LabeledDataset data(2, shape);
    Rng rng(77);
    for (int i = 0; i < 60; ++i) {
        Image img(shape);
        const int label = i % 2;
        for (std::size_t j = 0; j < img.size(); ++j)
            img[j] = (label ? 0.75 : 0.25) + 0.08 * (rng.uniform01() - 0.5);
        data.add(std::move(img), label);
    }
    ClassifierModel m(shape, make_architecture("linear", shape, 2));
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.5;
    cfg.pad_crop = false;
    cfg.hflip = false;
    TrainStats stats = train_classifier(m, data, cfg);
    CHECK(stats.train_accuracy >= 0.99);
    CHECK(evaluate_accuracy(m, data) >= 0.99);
}

TEST_CASE("training twice with one seed is bit-identical") {
    Shape shape{1, 4, 4};
    LabeledDataset data(3, shape);
    Rng rng(13);
    for (int i = 0; i < 45; ++i) {
        Image img = random_image(shape, rng);
        data.add(std::move(img), i % 3);
    }
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;

    ClassifierModel a(shape, make_architecture("mlp", shape, 3));
    ClassifierModel b(shape, make_architecture("mlp", shape, 3));
    train_classifier(a, data, cfg);
    train_classifier(b, data, cfg);
    REQUIRE(a.params().size() == b.params().size());
    for (std::size_t l = 0; l < a.params().size(); ++l)
        CHECK(a.params()[l] == b.params()[l]);
}

TEST_CASE("augmentation changes the trajectory but stays deterministic") {
    Shape shape{1, 8, 8};
    LabeledDataset data(2, shape);
    Rng rng(19);
    for (int i = 0; i < 24; ++i) data.add(random_image(shape, rng), i % 2);

    TrainConfig plain;
    plain.epochs = 2;
    plain.pad_crop = false;
    plain.hflip = false;
    TrainConfig aug;
    aug.epochs = 2;

    ClassifierModel mp(shape, make_architecture("mlp", shape, 2));
    ClassifierModel ma(shape, make_architecture("mlp", shape, 2));
    ClassifierModel ma2(shape, make_architecture("mlp", shape, 2));
    train_classifier(mp, data, plain);
    train_classifier(ma, data, aug);
    train_classifier(ma2, data, aug);
    CHECK(ma.params() == ma2.params());
    CHECK(mp.params() != ma.params());
}

TEST_CASE("evaluate_accuracy degenerate datasets") {
    Shape shape{1, 2, 2};
    ClassifierModel m(shape, make_architecture("linear", shape, 3));
    // bias the first logit so every input lands in class 0
    m.params()[0][3 * 4 + 0] = 5.0f;

    LabeledDataset zeros(3, shape);
    LabeledDataset others(3, shape);
    Rng rng(4);
    for (int i = 0; i < 10; ++i) {
        zeros.add(random_image(shape, rng), 0);
        others.add(random_image(shape, rng), 1 + (i % 2));
    }
    CHECK(evaluate_accuracy(m, zeros) == 1.0);
    CHECK(evaluate_accuracy(m, others) == 0.0);
    CHECK_THROWS_AS((void)evaluate_accuracy(m, LabeledDataset(3, shape)), InputError);
}

TEST_CASE("model round-trip preserves forward outputs bit-exactly") {
    Shape shape{3, 8, 8};
    ClassifierModel m(shape, make_architecture("cnn-tiny", shape, 6));
    initialize_parameters(m, 55);
    const auto path = temp_file("roundtrip.lrmd");
    save_model(m, path);
    ClassifierModel loaded = load_model(path);
    CHECK(loaded.same_architecture(m));
    CHECK(loaded.params() == m.params());

    Rng rng(6);
    Image probe = random_image(shape, rng);
    CHECK(m.forward(probe) == loaded.forward(probe));
    std::filesystem::remove(path);
}

TEST_CASE("malformed model files are rejected with offsets") {
    Shape shape{1, 4, 4};
    ClassifierModel m(shape, make_architecture("linear", shape, 3));
    initialize_parameters(m, 9);
    const auto path = temp_file("mangle.lrmd");
    save_model(m, path);

    auto bytes = [&] {
        std::ifstream in(path, std::ios::binary);
        return std::vector<char>((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
    }();

    SUBCASE("truncation") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        CHECK_THROWS_AS((void)load_model(path), FormatError);
    }
    SUBCASE("flipped payload byte breaks the checksum") {
        bytes[bytes.size() / 2] ^= 0x40;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS((void)load_model(path), FormatError);
    }
    SUBCASE("wrong magic") {
        bytes[0] = 'X';
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS((void)load_model(path), FormatError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("tensor round-trip and corruption") {
    Tensor t(Shape{2, 3, 3});
    Rng rng(12);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    const auto path = temp_file("roundtrip.lrtn");
    save_tensor(t, path);
    Tensor back = load_tensor(path);
    REQUIRE(back.shape() == t.shape());
    // storage is float32, so compare after the same narrowing
    for (std::size_t i = 0; i < t.size(); ++i)
        CHECK(back[i] == double(static_cast<float>(t[i])));

    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put('\0');
    out.close();
    CHECK_THROWS_AS((void)load_tensor(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("architecture construction is validated") {
    Shape shape{3, 16, 16};
    CHECK_THROWS_AS((void)make_architecture("resnet", shape, 8), InputError);
    CHECK_THROWS_AS((void)make_architecture("cnn-small", Shape{3, 10, 10}, 8), InputError);

    // dense dimension must match the flattened activation entering it
    std::vector<LayerSpec> bad{LayerSpec::dense(7, 4), LayerSpec::softmax()};
    CHECK_THROWS_AS(ClassifierModel(Shape{1, 2, 2}, bad), InputError);

    // softmax must close the stack
    std::vector<LayerSpec> nosoft{LayerSpec::dense(4, 4)};
    CHECK_THROWS_AS(ClassifierModel(Shape{1, 2, 2}, nosoft), InputError);
}

TEST_CASE("forward rejects mismatched input shapes") {
    Shape shape{3, 8, 8};
    ClassifierModel m(shape, make_architecture("cnn-tiny", shape, 4));
    initialize_parameters(m, 1);
    CHECK_THROWS_AS((void)m.forward(Image(Shape{1, 8, 8}, 0.5)), InputError);
}
