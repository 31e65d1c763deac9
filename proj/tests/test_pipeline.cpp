#include <doctest.h>

#include <cstdlib>

#include "error.hpp"
#include "pipeline.hpp"

using namespace tailcast;
using namespace tailcast::pipeline;

TEST_SUITE("pipeline") {
  TEST_CASE("defaults are valid and pick the loss from the mode") {
    RunConfig c;
    CHECK(validate(c).empty());
    CHECK(effective_loss(c) == training::LossKind::WeightedF1);
    c.mode = dataset::FeatureMode::Baseline;
    CHECK(effective_loss(c) == training::LossKind::Bce);
    set_option(c, "loss", "weighted_f1");
    CHECK(effective_loss(c) == training::LossKind::WeightedF1);
  }

  TEST_CASE("canonical text reproduces the configuration") {
    RunConfig c;
    set_option(c, "hidden_dim", "24");
    set_option(c, "mode", "baseline");
    set_option(c, "learning_rate", "0.0025");
    set_option(c, "train_end", "2020-12-31");
    set_option(c, "sparsify_threshold", "0.15");
    const auto text = config_text(c);
    RunConfig back;
    apply_config_text(back, text);
    CHECK(config_text(back) == text);
    CHECK(back.hidden_dim == 24);
    CHECK(back.learning_rate == 0.0025);
    CHECK(get_option(back, "train_end") == "2020-12-31");
  }

  TEST_CASE("later sources override earlier ones") {
    RunConfig c;
    apply_config_text(c, "# comment\nout_dir = from_file\nseed = 5\n");
    CHECK(c.out_dir == "from_file");
    ::setenv("TAILCAST_OUT", "from_env", 1);
    apply_environment(c);
    ::unsetenv("TAILCAST_OUT");
    CHECK(c.out_dir == "from_env");
    set_option(c, "out_dir", "from_flag");
    CHECK(c.out_dir == "from_flag");
    CHECK(c.seed == 5);
    CHECK(c.explicit_keys.count("seed") == 1);
  }

  TEST_CASE("unknown keys and unparsable values are configuration errors") {
    RunConfig c;
    for (auto [k, v] : {std::pair{"no_such_key", "1"}, std::pair{"hidden_dim", "many"}, std::pair{"mode", "fancy"},
                        std::pair{"train_end", "2020-13-01"}}) {
      CAPTURE(k);
      try {
        set_option(c, k, v);
        FAIL("expected InvalidConfig");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidConfig);
      }
    }
  }

  TEST_CASE("features that disagree with the mode are rejected with both counts") {
    RunConfig c;
    set_option(c, "mode", "baseline");
    set_option(c, "features", "di");
    const auto why = validate(c);
    CHECK(why.find("18") != std::string::npos);
    CHECK(why.find("13") != std::string::npos);
    CHECK_THROWS_AS(require_valid(c), Error);
  }

  TEST_CASE("range checks") {
    RunConfig c;
    c.learning_rate = 0.0;
    CHECK_FALSE(validate(c).empty());
    c = RunConfig{};
    c.evt_quantile = 0.3;
    CHECK_FALSE(validate(c).empty());
    c = RunConfig{};
    c.train_end = Date(2020, 1, 1);
    c.val_start = Date(2019, 1, 1);
    CHECK_FALSE(validate(c).empty());
    c = RunConfig{};
    c.n_heads = 0;
    CHECK_FALSE(validate(c).empty());
  }

  TEST_CASE("model configuration follows the mode") {
    RunConfig c;
    CHECK(model_config(c).n_features == dataset::kDiFeatures);
    c.mode = dataset::FeatureMode::Baseline;
    CHECK(model_config(c).n_features == dataset::kBaseFeatures);
    c.learning_rate = 0.004;
    CHECK(schedule(c).learning_rate == 0.004);
  }
}
