#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace advkit;

TEST_CASE("kv parser handles sections, comments, and value types") {
    KvConfig kv = KvConfig::parse(R"(
# experiment
seed = 42
name = "hello world"   # trailing comment

[attack]
epsilon = 0.3
random_start = true
steps = 40
)");
    REQUIRE(kv.get_u64("", "seed", 0) == 42);
    REQUIRE(kv.get_string("", "name", "") == "hello world");
    REQUIRE(kv.get_double("attack", "epsilon", 0) == 0.3);
    REQUIRE(kv.get_bool("attack", "random_start", false));
    REQUIRE(kv.get_int("attack", "steps", 0) == 40);
    REQUIRE(kv.get_int("attack", "missing", 7) == 7);
}

TEST_CASE("kv parser reports line numbers on malformed input") {
    try {
        KvConfig::parse("a = 1\nnot a kv line\n", "test.toml");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(std::string(e.what()).find("test.toml:2") != std::string::npos);
    }
    REQUIRE_THROWS_AS(KvConfig::parse("[unclosed\n"), ConfigError);
    REQUIRE_THROWS_AS(KvConfig::parse("x = \"unterminated\n"), ConfigError);
    REQUIRE_THROWS_AS(KvConfig::parse_file("/nonexistent/path.toml"), ConfigError);
}

TEST_CASE("typed getters reject junk values") {
    KvConfig kv = KvConfig::parse("[a]\nx = 1.5kg\nb = maybe\n");
    REQUIRE_THROWS_AS(kv.get_double("a", "x", 0), ConfigError);
    REQUIRE_THROWS_AS(kv.get_bool("a", "b", false), ConfigError);
}

TEST_CASE("experiment config rejects unknown keys") {
    KvConfig kv = KvConfig::parse("[attack]\nepsilonn = 0.3\n");
    REQUIRE_THROWS_AS(ExperimentConfig::from_kv(kv), ConfigError);
}

TEST_CASE("pixel255 scale divides epsilon and step size at load time") {
    KvConfig kv = KvConfig::parse(R"(
[attack]
epsilon = 8
step_size = 2
epsilon_scale = "pixel255"
steps = 10
)");
    ExperimentConfig cfg = ExperimentConfig::from_kv(kv);
    REQUIRE(cfg.attack.epsilon == Catch::Approx(8.0 / 255.0).margin(1e-15));
    REQUIRE(cfg.attack.step_size == Catch::Approx(2.0 / 255.0).margin(1e-15));
    REQUIRE(cfg.attack.steps == 10);
}

TEST_CASE("defense attack inherits the evaluation attack by default") {
    KvConfig kv = KvConfig::parse(R"(
[attack]
epsilon = 0.25
step_size = 0.03
steps = 5

[defense]
mode = "nat"
)");
    ExperimentConfig cfg = ExperimentConfig::from_kv(kv);
    REQUIRE(cfg.defense.mode == TrainMode::nat);
    REQUIRE(cfg.defense.attack.epsilon == 0.25);
    REQUIRE(cfg.defense.attack.step_size == 0.03);

    KvConfig kv2 = KvConfig::parse(R"(
[attack]
epsilon = 0.25

[defense]
mode = "pat"
pat_style = "per_batch"

[defense.attack]
epsilon = 0.4
)");
    ExperimentConfig cfg2 = ExperimentConfig::from_kv(kv2);
    REQUIRE(cfg2.defense.attack.epsilon == 0.4);
    REQUIRE(cfg2.defense.pat_style == PatStyle::per_batch);
    REQUIRE(cfg2.attack.epsilon == 0.25);
}

TEST_CASE("seeds derive from the experiment seed unless given explicitly") {
    KvConfig a = KvConfig::parse("seed = 5\n");
    ExperimentConfig ca = ExperimentConfig::from_kv(a);
    KvConfig b = KvConfig::parse("seed = 5\n");
    ExperimentConfig cb = ExperimentConfig::from_kv(b);
    REQUIRE(ca.model_seed == cb.model_seed);
    REQUIRE(ca.train.seed == cb.train.seed);
    REQUIRE(ca.attack.seed == cb.attack.seed);
    REQUIRE(ca.model_seed != ca.train.seed);

    KvConfig c = KvConfig::parse("seed = 5\n[model]\nseed = 99\n");
    ExperimentConfig cc = ExperimentConfig::from_kv(c);
    REQUIRE(cc.model_seed == 99);
    REQUIRE(cc.train.seed == ca.train.seed);
}

TEST_CASE("canonical form is idempotent and drives the hash") {
    KvConfig kv = KvConfig::parse(R"(
seed = 11
workers = 3
out_dir = "somewhere"

[dataset]
kind = "synthetic"
classes = 3
train_count = 60

[model]
architecture = "convnet"
width_factor = 2

[attack]
epsilon = 0.2
steps = 7

[defense]
mode = "pat"
)");
    ExperimentConfig cfg = ExperimentConfig::from_kv(kv);
    std::string canon = cfg.canonical();
    ExperimentConfig reparsed = ExperimentConfig::from_kv(KvConfig::parse(canon));
    REQUIRE(reparsed.canonical() == canon);
    REQUIRE(reparsed.hash_hex() == cfg.hash_hex());
}

TEST_CASE("workers and out_dir do not change the config hash") {
    KvConfig a = KvConfig::parse("seed = 3\nworkers = 1\nout_dir = \"x\"\n");
    KvConfig b = KvConfig::parse("seed = 3\nworkers = 4\nout_dir = \"y\"\n");
    REQUIRE(ExperimentConfig::from_kv(a).hash_hex() == ExperimentConfig::from_kv(b).hash_hex());
    KvConfig c = KvConfig::parse("seed = 4\n");
    REQUIRE(ExperimentConfig::from_kv(a).hash_hex() != ExperimentConfig::from_kv(c).hash_hex());
}
