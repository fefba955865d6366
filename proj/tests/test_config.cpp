#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lwe/config.hpp"
#include "lwe/util.hpp"

using namespace lwe;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << text;
  return path;
}

}  // namespace

TEST_CASE("parsing: comments, blanks, whitespace and later-wins override") {
  const Config config = Config::from_text(
      "# experiment settings\n"
      "\n"
      "  mu = 2500  \n"
      "depth=1000\n"
      "tag=run=a\n"
      "mu=1500\n");
  CHECK(config.get("mu", "") == "1500");
  CHECK(config.get("depth", "") == "1000");
  // only the first '=' splits; the value keeps the rest
  CHECK(config.get("tag", "") == "run=a");
  CHECK(config.entries().size() == 3);
}

TEST_CASE("parsing rejects lines without a key or an equals sign") {
  CHECK_THROWS_AS(Config::from_text("mu 2500\n", "bad.cfg"), DataError);
  CHECK_THROWS_AS(Config::from_text("=value\n", "bad.cfg"), DataError);
  try {
    Config::from_text("ok=1\nbroken\n", "bad.cfg");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    // errors carry file:line context
    CHECK(std::string(e.what()).find("bad.cfg:2") != std::string::npos);
  }
}

TEST_CASE("file round trip and the missing-file error") {
  auto path = write_temp("lwe_test_config.cfg", "seed=7\r\nlambda=0.3\n");
  const Config config = Config::from_file(path.string());
  CHECK(config.get_u64("seed", 0) == 7);
  CHECK(config.get_double("lambda", 0.0) == 0.3);
  CHECK_THROWS_AS(Config::from_file("/nonexistent/lwe.cfg"), DataError);
}

TEST_CASE("set overrides and has/require") {
  Config config = Config::from_text("a=1\n");
  CHECK(config.has("a"));
  CHECK(!config.has("b"));
  config.set("a", "2");
  config.set("b", "x");
  CHECK(config.get("a", "") == "2");
  CHECK(config.require("b") == "x");
  CHECK_THROWS_AS(config.require("c"), UsageError);
}

TEST_CASE("typed getters parse and validate") {
  const Config config = Config::from_text(
      "d=2.5\n"
      "n=42\n"
      "neg=-3\n"
      "frac=2.5\n"
      "big=18446744073709551615\n"
      "flag_on=yes\n"
      "flag_off=0\n"
      "junk=abc\n"
      "grid=5, 10,25\n"
      "empty_list=,\n");

  SUBCASE("doubles") {
    CHECK(config.get_double("d", 0.0) == 2.5);
    CHECK(config.get_double("absent", 1.5) == 1.5);
    CHECK_THROWS_AS(config.get_double("junk", 0.0), UsageError);
  }
  SUBCASE("sizes reject negatives and fractions") {
    CHECK(config.get_size("n", 0) == 42);
    CHECK(config.get_size("absent", 9) == 9);
    CHECK_THROWS_AS(config.get_size("neg", 0), UsageError);
    CHECK_THROWS_AS(config.get_size("frac", 0), UsageError);
  }
  SUBCASE("u64 covers the full range") {
    CHECK(config.get_u64("big", 0) == 18446744073709551615ULL);
    CHECK(config.get_u64("absent", 3) == 3);
    CHECK_THROWS_AS(config.get_u64("junk", 0), UsageError);
    CHECK_THROWS_AS(config.get_u64("neg", 0), UsageError);
  }
  SUBCASE("booleans accept the usual spellings") {
    CHECK(config.get_bool("flag_on", false));
    CHECK(!config.get_bool("flag_off", true));
    CHECK(config.get_bool("absent", true));
    CHECK_THROWS_AS(config.get_bool("junk", false), UsageError);
  }
  SUBCASE("comma lists") {
    CHECK(config.get_list("grid", {}) == std::vector<double>{5.0, 10.0, 25.0});
    CHECK(config.get_list("absent", {1.0}) == std::vector<double>{1.0});
    CHECK_THROWS_AS(config.get_list("empty_list", {}), UsageError);
    CHECK_THROWS_AS(config.get_list("junk", {}), UsageError);
  }
}

TEST_CASE("hash depends on the mapping, not on insertion order") {
  Config a;
  a.set("x", "1");
  a.set("y", "2");
  Config b;
  b.set("y", "2");
  b.set("x", "1");
  CHECK(a.hash() == b.hash());

  Config changed = a;
  changed.set("y", "3");
  CHECK(changed.hash() != a.hash());

  Config extended = a;
  extended.set("z", "0");
  CHECK(extended.hash() != a.hash());

  // a key=value pair cannot be confused with a differently split spelling
  Config split1;
  split1.set("ab", "c");
  Config split2;
  split2.set("a", "bc");
  CHECK(split1.hash() != split2.hash());
}
