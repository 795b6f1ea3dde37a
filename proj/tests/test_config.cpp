#include <gtest/gtest.h>

#include <fstream>
#include <string>
#include <vector>

#include "dtvit/config.hpp"

using namespace dtvit;

namespace {

std::string write_tmp(const std::string& name, const std::string& body) {
  std::string path = ::testing::TempDir() + "/" + name;
  std::ofstream f(path);
  f << body;
  return path;
}

}  // namespace

TEST(Config, DefaultsArePresent) {
  Config c = default_config();
  EXPECT_EQ(c.get_string("model.preset"), "tiny");
  EXPECT_EQ(c.get_int("train.epochs"), 10);
  EXPECT_DOUBLE_EQ(c.get_double("train.lr"), 2e-5);
  EXPECT_TRUE(c.get_bool("data.balance"));
  EXPECT_EQ(c.get_u64("seed"), 0u);
  EXPECT_EQ(c.get_string("data.index"), "");
  EXPECT_EQ(c.get_int("phantom.size"), 256);
}

TEST(Config, SetOverridesAndUnknownKeyRejected) {
  Config c = default_config();
  c.set("train.epochs", "3");
  EXPECT_EQ(c.get_int("train.epochs"), 3);
  EXPECT_THROW(c.set("train.epoch", "3"), ConfigError);
  EXPECT_THROW(c.get_string("no.such.key"), ConfigError);
  EXPECT_TRUE(c.has("train.epochs"));
  EXPECT_FALSE(c.has("train.epoch"));
}

TEST(Config, TypedGetterErrors) {
  Config c = default_config();
  c.set("train.epochs", "ten");
  EXPECT_THROW(c.get_int("train.epochs"), ConfigError);
  c.set("train.epochs", "3.5");
  EXPECT_THROW(c.get_int("train.epochs"), ConfigError);
  c.set("train.lr", "fast");
  EXPECT_THROW(c.get_double("train.lr"), ConfigError);
  c.set("data.balance", "maybe");
  EXPECT_THROW(c.get_bool("data.balance"), ConfigError);
  c.set("seed", "-1");
  EXPECT_THROW(c.get_u64("seed"), ConfigError);
}

TEST(Config, BoolSpellings) {
  Config c = default_config();
  for (const char* s : {"true", "1", "on", "yes"}) {
    c.set("data.augment", s);
    EXPECT_TRUE(c.get_bool("data.augment")) << s;
  }
  for (const char* s : {"false", "0", "off", "no"}) {
    c.set("data.augment", s);
    EXPECT_FALSE(c.get_bool("data.augment")) << s;
  }
}

TEST(Config, DoubleListParsing) {
  Config c = default_config();
  std::vector<double> v = c.get_doubles("data.split", 3);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_DOUBLE_EQ(v[0], 0.8);
  EXPECT_DOUBLE_EQ(v[1], 0.1);
  EXPECT_DOUBLE_EQ(v[2], 0.1);
  c.set("data.split", "1, 0 ,0");  // spaces around items are fine
  v = c.get_doubles("data.split", 3);
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  EXPECT_THROW(c.get_doubles("data.split", 2), ConfigError);
  c.set("data.split", "0.5,oops,0.5");
  EXPECT_THROW(c.get_doubles("data.split", 3), ConfigError);
}

TEST(Config, LoadFileAppliesValues) {
  std::string path = write_tmp("cfg_ok.txt",
                               "# a comment line\n"
                               "\n"
                               "train.epochs = 7\n"
                               "train.lr= 1e-3  # trailing comment\n"
                               "  model.preset =large\n");
  Config c = default_config();
  c.load_file(path);
  EXPECT_EQ(c.get_int("train.epochs"), 7);
  EXPECT_DOUBLE_EQ(c.get_double("train.lr"), 1e-3);
  EXPECT_EQ(c.get_string("model.preset"), "large");
}

TEST(Config, LoadFileRejectsUnknownKeyAndBadLines) {
  Config c = default_config();
  EXPECT_THROW(c.load_file(write_tmp("cfg_unk.txt", "train.speed = 9\n")), ConfigError);
  try {
    Config d = default_config();
    d.load_file(write_tmp("cfg_noeq.txt", "train.epochs = 1\njust words\n"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
  }
  EXPECT_THROW(c.load_file(write_tmp("cfg_nokey.txt", " = 5\n")), ConfigError);
  EXPECT_THROW(c.load_file(::testing::TempDir() + "/does_not_exist.cfg"), ConfigError);
}

TEST(Config, RenderEchoesStateWithDocs) {
  Config c = default_config();
  c.set("train.epochs", "42");
  std::string out = c.render();
  EXPECT_NE(out.find("train.epochs = 42"), std::string::npos);
  EXPECT_NE(out.find("model.preset = tiny"), std::string::npos);
  EXPECT_NE(out.find("# training epochs"), std::string::npos);
  EXPECT_NE(out.find("(default: 10)"), std::string::npos);
  EXPECT_NE(out.find("(default: <empty>)"), std::string::npos);  // data.index
  // render parses back to an identical config
  std::string path = write_tmp("cfg_echo.txt", out);
  Config d = default_config();
  d.load_file(path);
  EXPECT_EQ(d.render(), out);
}

TEST(Config, RegistryIsDocumented) {
  Config c = default_config();
  EXPECT_GT(c.registry().size(), 40u);
  for (const ConfigKey& k : c.registry()) {
    EXPECT_FALSE(k.key.empty());
    EXPECT_FALSE(k.doc.empty()) << k.key;
  }
}

TEST(Config, DuplicateRegistrationRejected) {
  Config c;
  c.register_key("a.b", "1", "doc");
  EXPECT_THROW(c.register_key("a.b", "2", "doc"), ConfigError);
}
