#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "traffic/config.hpp"
#include "traffic/error.hpp"

using namespace traffic;
namespace fs = std::filesystem;

TEST_CASE("key=value parsing with comments and whitespace") {
  auto cfg = RunConfig::from_string(
      "# a run\n"
      "seed = 7\n"
      "\n"
      "arch=VGG_S\n"
      "  epochs = 3  \n");
  CHECK(cfg.values.size() == 3);
  CHECK(cfg.values.at("seed") == "7");
  CHECK(cfg.values.at("arch") == "VGG_S");
  CHECK(cfg.values.at("epochs") == "3");
}

TEST_CASE("lines without '=' are parse errors with line numbers") {
  CHECK_THROWS_WITH_AS(RunConfig::from_string("seed=1\nbogus line\n", "cfg"),
                       doctest::Contains("cfg:2"), ConfigError);
}

TEST_CASE("emission is sorted and byte-stable") {
  RunConfig cfg;
  cfg.set("zebra", "1");
  cfg.set("alpha", "2");
  cfg.set("mid", "3");
  CHECK(cfg.to_string() == "alpha=2\nmid=3\nzebra=1\n");
  auto path = fs::temp_directory_path() / "traffic_cfg.txt";
  cfg.write(path);
  auto parsed = RunConfig::from_file(path);
  CHECK(parsed.values == cfg.values);
}

TEST_CASE("reader rejects unknown keys and collects every problem at once") {
  RunConfig cfg;
  cfg.set("seed", "7");
  cfg.set("epochs", "zero");
  cfg.set("mystery", "1");
  cfg.set("other_mystery", "2");
  ConfigReader reader(cfg, {"seed", "epochs", "batch_size"});
  reader.integer("epochs", 1, 1, 1000);
  reader.seed("seed", 0);
  try {
    reader.finish();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("mystery") != std::string::npos);
    CHECK(msg.find("other_mystery") != std::string::npos);
    CHECK(msg.find("epochs") != std::string::npos);
  }
}

TEST_CASE("typed getters: ranges, flags, fallbacks") {
  RunConfig cfg;
  cfg.set("epochs", "70");
  cfg.set("lr", "0.00005");
  cfg.set("shuffle", "false");
  ConfigReader reader(cfg, {"epochs", "lr", "shuffle"});
  CHECK(reader.integer("epochs", 1, 1, 1000) == 70);
  CHECK(reader.number("lr", 0.1, 0.0, 1.0) == doctest::Approx(0.00005));
  CHECK(reader.flag("shuffle", true) == false);
  CHECK(reader.integer("absent", 5, 1, 10) == 5);
  reader.finish();  // no problems

  ConfigReader bad(cfg, {"epochs", "lr", "shuffle"});
  bad.integer("epochs", 1, 1, 10);  // 70 out of range
  CHECK_THROWS_AS(bad.finish(), ConfigError);
}
