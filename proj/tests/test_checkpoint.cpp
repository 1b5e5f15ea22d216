#include <gtest/gtest.h>

#include <filesystem>
#include <cstring>
#include <fstream>

#include "aeanet/checkpoint.hpp"
#include "aeanet/error.hpp"

using namespace aeanet;

namespace {

Checkpoint sample() {
  Checkpoint c;
  c.model.base_channels = 2;
  c.model.ref_size = 4;
  c.params = Model<float>(c.model, 5).parameters();
  for (const auto& [n, t] : c.params) {
    c.adam_m.emplace(n, Tensor<float>::full(t.shape(), 0.25f));
    c.adam_v.emplace(n, Tensor<float>::full(t.shape(), 1e-3f));
  }
  c.step = 1234;
  c.config_text = "train.seed = 7\n";
  return c;
}

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("aeanet_ckpt_" + name);
}

}  // namespace

TEST(Checkpoint, HeaderAndDeterministicBytes) {
  const std::string a = encode_checkpoint(sample()), b = encode_checkpoint(sample());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.substr(0, 4), "AEAN");
  EXPECT_EQ(a[4], 1);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint c = sample();
  save_checkpoint(c, tmp("rt.ckpt"));
  const Checkpoint d = load_checkpoint(tmp("rt.ckpt"));
  EXPECT_EQ(d.step, 1234u);
  EXPECT_EQ(d.config_text, c.config_text);
  EXPECT_EQ(d.model.ref_size, 4u);
  ASSERT_EQ(d.params.size(), c.params.size());
  for (const auto& [n, t] : c.params) {
    EXPECT_EQ(std::memcmp(t.ptr(), d.params.at(n).ptr(), t.numel() * sizeof(float)), 0) << n;
  }
  save_checkpoint(d, tmp("rt2.ckpt"));
  std::ifstream f1(tmp("rt.ckpt"), std::ios::binary), f2(tmp("rt2.ckpt"), std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
}

TEST(Checkpoint, CorruptionIsDetected) {
  std::string bytes = encode_checkpoint(sample());
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), IoError);
  EXPECT_THROW(decode_checkpoint(bytes + "zz"), IoError);
  EXPECT_THROW(load_checkpoint(tmp("missing.ckpt")), IoError);
}
