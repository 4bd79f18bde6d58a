#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "helpers.hpp"

using namespace advkit;
using namespace testutil;

namespace {

/// Two linearly separable blobs in a 1x1x2 "image".
LabeledBatch separable_toy(std::size_t n, std::uint64_t seed) {
    LabeledBatch b;
    b.images = Tensor({n, 1, 1, 2});
    b.labels.resize(n);
    Prng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        int y = static_cast<int>(i % 2);
        b.labels[i] = y;
        double cx = y == 0 ? 0.25 : 0.75;
        b.images.data[i * 2 + 0] = cx + 0.08 * rng.normal() * 0.5;
        b.images.data[i * 2 + 1] = 0.5 + 0.08 * rng.normal() * 0.5;
        b.images.data[i * 2 + 0] = std::clamp(b.images.data[i * 2 + 0], 0.0, 1.0);
        b.images.data[i * 2 + 1] = std::clamp(b.images.data[i * 2 + 1], 0.0, 1.0);
    }
    return b;
}

ParamSet snapshot(const Model& m) { return m.net.params; }

} // namespace

TEST_CASE("standard training solves a separable toy") {
    Model m = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 3});
    LabeledBatch data = separable_toy(60, 8);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.5;
    cfg.seed = 2;
    TrainResult hist = train_standard(m, data, cfg);
    REQUIRE(hist.epoch_loss.size() == 50);
    REQUIRE(hist.epoch_loss.back() < hist.epoch_loss.front());
    REQUIRE(accuracy(m, data) == 1.0);
}

TEST_CASE("zero learning rate leaves parameters untouched and the loss flat") {
    Model m = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 4});
    ParamSet before = snapshot(m);
    LabeledBatch data = separable_toy(40, 9);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.0;
    cfg.seed = 3;
    TrainResult hist = train_standard(m, data, cfg);
    for (std::size_t p = 0; p < before.size(); ++p)
        REQUIRE(m.net.params[p].data == before[p].data);
    for (double l : hist.epoch_loss)
        REQUIRE(l == Catch::Approx(hist.epoch_loss.front()).margin(1e-12));
}

TEST_CASE("training is deterministic in the seed") {
    LabeledBatch data = separable_toy(40, 10);
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.3;
    cfg.seed = 21;
    Model a = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 5});
    Model b = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 5});
    train_standard(a, data, cfg);
    train_standard(b, data, cfg);
    for (std::size_t p = 0; p < a.net.params.size(); ++p)
        REQUIRE(a.net.params[p].data == b.net.params[p].data);
}

TEST_CASE("training divergence raises the dedicated error") {
    // a blown-up parameter makes the next batch loss non-finite; the loop
    // must detect it instead of continuing on garbage
    Model m = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 6});
    m.net.params[0].data[0] = std::numeric_limits<double>::infinity();
    LabeledBatch data = separable_toy(40, 11);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.1;
    cfg.seed = 4;
    REQUIRE_THROWS_AS(train_standard(m, data, cfg), TrainingDivergedError);
}

TEST_CASE("training does not mutate the input dataset") {
    Model m = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 7});
    LabeledBatch data = separable_toy(30, 12);
    Tensor images_before = data.images;
    std::vector<int> labels_before = data.labels;
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.2;
    cfg.mode = TrainMode::nat;
    cfg.attack.epsilon = 0.1;
    cfg.attack.step_size = 0.1;
    run_training(m, data, cfg);
    REQUIRE(data.images.data == images_before.data);
    REQUIRE(data.labels == labels_before);
}

TEST_CASE("nat and static pat with epsilon 0 equal standard training on duplicated data") {
    LabeledBatch data = separable_toy(30, 13);
    LabeledBatch duplicated = concat(data, data);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.25;
    cfg.seed = 31;
    cfg.attack.epsilon = 0.0;
    cfg.attack.step_size = 0.1;
    cfg.attack.steps = 3;

    for (TrainMode mode : {TrainMode::nat, TrainMode::pat}) {
        Model augmented = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 8});
        Model reference = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 8});
        TrainConfig run_cfg = cfg;
        run_cfg.mode = mode;
        run_cfg.pat_style = PatStyle::augment_static;
        run_training(augmented, data, run_cfg);
        TrainConfig std_cfg = cfg;
        std_cfg.mode = TrainMode::standard;
        train_standard(reference, duplicated, std_cfg);
        for (std::size_t p = 0; p < augmented.net.params.size(); ++p)
            REQUIRE(augmented.net.params[p].data == reference.net.params[p].data);
    }
}

TEST_CASE("per-batch pat with one step and alpha=epsilon is fgsm training") {
    LabeledBatch data = separable_toy(30, 14);
    TrainConfig cfg;
    cfg.mode = TrainMode::pat;
    cfg.pat_style = PatStyle::per_batch;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.2;
    cfg.seed = 41;
    cfg.attack.epsilon = 0.12;
    cfg.attack.step_size = 0.12;
    cfg.attack.steps = 1;
    cfg.attack.random_start = false;

    Model pat_model = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 9});
    pat_train(pat_model, data, cfg);

    // reference loop: craft fgsm per minibatch against the live model
    Model ref = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 9});
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Prng shuffle_rng(cfg.seed);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.index(i)]);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t stop = std::min(order.size(),
                                        start + static_cast<std::size_t>(cfg.batch_size));
            LabeledBatch batch = gather(data, std::span(order.data() + start, stop - start));
            batch.images = fgsm(ref, batch.images, batch.labels, cfg.attack.epsilon);
            ParamSet grads = grad_params(ref.net, batch);
            sgd_update(ref.net.params, grads, cfg.learning_rate);
        }
    }
    for (std::size_t p = 0; p < ref.net.params.size(); ++p)
        REQUIRE(pat_model.net.params[p].data == ref.net.params[p].data);
}

TEST_CASE("per-batch pat is invariant to the worker count") {
    LabeledBatch data = separable_toy(40, 15);
    TrainConfig cfg;
    cfg.mode = TrainMode::pat;
    cfg.pat_style = PatStyle::per_batch;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.2;
    cfg.seed = 51;
    cfg.attack.epsilon = 0.1;
    cfg.attack.step_size = 0.05;
    cfg.attack.steps = 4;
    cfg.attack.random_start = true;
    cfg.attack.seed = 3;

    Model a = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 10});
    Model b = build_model({Architecture::mlp, 1, 1, 2, 2, 1, 10});
    TrainConfig cfg1 = cfg;
    cfg1.workers = 1;
    TrainConfig cfg4 = cfg;
    cfg4.workers = 4;
    pat_train(a, data, cfg1);
    pat_train(b, data, cfg4);
    for (std::size_t p = 0; p < a.net.params.size(); ++p)
        REQUIRE(a.net.params[p].data == b.net.params[p].data);
}

TEST_CASE("train config validation") {
    TrainConfig bad;
    bad.epochs = 0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad.epochs = 1;
    bad.batch_size = 0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad.batch_size = 1;
    bad.learning_rate = -0.1;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}
