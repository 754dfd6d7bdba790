#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "mdvit/config.hpp"
#include "mdvit/errors.hpp"
#include "test_util.hpp"

using namespace mdvit;

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = parse_config("num_domains=4\n");
  EXPECT_EQ(c.model.num_domains, 4);
  EXPECT_EQ(c.model, ModelConfig{});
  EXPECT_EQ(c.train, TrainConfig{});
}

TEST(Config, DefaultChannels) {
  const auto c = parse_config("");
  const std::array<int64_t, 4> expected{64, 128, 320, 512};
  EXPECT_EQ(c.model.encoder_channels, expected);
  EXPECT_EQ(c.model.image_size[0], 256);
  EXPECT_DOUBLE_EQ(c.train.base_lr, 1e-4);
  EXPECT_EQ(c.train.batch_size, 16);
}

TEST(Config, ImageSizeMustBeMultipleOf32) {
  EXPECT_THROW(parse_config("image_size=250,250"), ValidationError);
  EXPECT_NO_THROW(parse_config("image_size=32,64"));
}

TEST(Config, ChannelsMustSplitAcrossHeads) {
  EXPECT_THROW(parse_config("encoder_channels=64,128,320,500"), ValidationError);
}

TEST(Config, OtherInvariants) {
  EXPECT_THROW(parse_config("num_domains=0"), ValidationError);
  EXPECT_THROW(parse_config("alpha=-0.1"), ValidationError);
  EXPECT_THROW(parse_config("lr_gamma=0"), ValidationError);
  EXPECT_THROW(parse_config("lr_gamma=1.5"), ValidationError);
  EXPECT_THROW(parse_config("da_reduction=0"), ValidationError);
  // 16 samples cannot be split evenly over 3 domains.
  EXPECT_THROW(parse_config("num_domains=3"), ValidationError);
  EXPECT_NO_THROW(parse_config("num_domains=3\nparadigm=st"));
}

TEST(Config, MalformedInput) {
  EXPECT_THROW(parse_config("no_equals_sign"), ParseError);
  EXPECT_THROW(parse_config("unknown_key=1"), ParseError);
  EXPECT_THROW(parse_config("num_heads=eight"), ParseError);
  EXPECT_THROW(parse_config("da_enabled=maybe"), ParseError);
  EXPECT_THROW(parse_config("paradigm=xx"), ParseError);
}

TEST(Config, CommentsAndWhitespace) {
  const auto c = parse_config("# header\n  num_heads = 4   # trailing\n\n");
  EXPECT_EQ(c.model.num_heads, 4);
}

TEST(Config, SerializeRoundTrip) {
  auto c = parse_config("");
  c.model = test_util::tiny_config(4, 64);
  c.model.alpha = 0.25;
  c.train.base_lr = 3.5e-4;
  c.train.augment.rotate_max_deg = 12.5;
  c.train.paradigm = Paradigm::kJoint;
  c.train.batch_size = 8;
  const auto text = serialize_config(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(serialize_config(parse_config(text)), text);
}

TEST(Config, TokenCount) {
  EXPECT_EQ(token_count(1, 256, 256), 4096);
  EXPECT_EQ(token_count(4, 256, 256), 64);
  EXPECT_EQ(token_count(1, 32, 32), 64);
  EXPECT_EQ(token_count(2, 256, 256), 1024);
}

TEST(Config, HeadAndAdapterDims) {
  const ModelConfig c;
  EXPECT_EQ(c.head_dim(0), 8);
  EXPECT_EQ(c.head_dim(3), 64);
  EXPECT_EQ(c.adapter_dim(2), 20);
}

TEST(Config, ParadigmNames) {
  for (const auto p : {Paradigm::kSeparate, Paradigm::kJoint, Paradigm::kMultiDomainAdaptive}) {
    EXPECT_EQ(parse_paradigm(paradigm_name(p)), p);
  }
}

TEST(Config, ResolveDefaultKeyword) {
  EXPECT_EQ(resolve_config("default"), ExperimentConfig{});
  test_util::TempDir dir("cfg");
  const auto path = dir.path() / "c.cfg";
  {
    std::ofstream(path) << "num_heads=4\n";
  }
  EXPECT_EQ(resolve_config(path.string()).model.num_heads, 4);
  ::setenv("MDVIT_CONFIG", path.c_str(), 1);
  EXPECT_EQ(resolve_config("").model.num_heads, 4);
  ::unsetenv("MDVIT_CONFIG");
  EXPECT_EQ(resolve_config(""), ExperimentConfig{});
  EXPECT_THROW(resolve_config((dir.path() / "missing.cfg").string()), DataError);
}
