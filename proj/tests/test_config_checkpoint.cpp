#include "vadvae/checkpoint.hpp"
#include "vadvae/config.hpp"
#include "vadvae/errors.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace vadvae;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("vadvae_cfg_" + name);
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  const TrainConfig c;
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(c.latent_total(), 128);
  EXPECT_TRUE(c.uses_mi());
  EXPECT_EQ(default_batch_size("iemocap"), 4);
  EXPECT_EQ(default_batch_size("meld"), 4);
  EXPECT_EQ(default_batch_size("dailydialog"), 16);
}

TEST(Config, JsonRoundTripCoversEveryField) {
  TrainConfig c;
  c.d_c = 50;
  c.mu_mi = 0.25;
  c.no_decoder = true;
  c.lexicon = "meld";
  const auto j = to_json(c);
  EXPECT_EQ(j.size(), config_fields().size());
  EXPECT_EQ(config_from_json(j), c);
  const auto path = temp_path("c.json");
  save_config(path, c);
  EXPECT_EQ(load_config(path), c);
  std::filesystem::remove(path);
}

TEST(Config, PartialJsonKeepsBase) {
  TrainConfig base;
  base.epochs = 3;
  const TrainConfig c = config_from_json(nlohmann::json{{"mu_i", 0.0}}, base);
  EXPECT_EQ(c.epochs, 3);
  EXPECT_EQ(c.mu_i, 0.0);
}

TEST(Config, SchemaErrors) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"bogus", 1}}), SchemaError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"epochs", "ten"}}), SchemaError);
  EXPECT_THROW(config_from_json(nlohmann::json::array()), SchemaError);
  EXPECT_THROW(load_config(temp_path("absent.json")), FileError);
}

TEST(Config, ValidationRejectsBadValues) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.d_v = 0; })), UsageError);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.mu_e = -1.0; })), UsageError);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.dropout = 1.0; })), UsageError);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.window_past = -2; })), UsageError);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.label_noise = 0.7; })), UsageError);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.batch_size = 0; })), UsageError);
}

TEST(Config, HashTracksContent) {
  TrainConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash_hex(a).size(), 16u);
}

TEST(Config, AblationPredicates) {
  TrainConfig c;
  c.entangled_baseline = true;
  EXPECT_FALSE(c.uses_vad_heads());
  EXPECT_FALSE(c.uses_mi());
  c = TrainConfig{};
  c.mu_mi = 0.0;
  EXPECT_FALSE(c.uses_mi());
  c = TrainConfig{};
  c.no_decoder = true;
  EXPECT_FALSE(c.uses_decoder());
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(3);
  Tensor a = Tensor::parameter(rng.normal_matrix(3, 4));
  Tensor b = Tensor::parameter(rng.normal_matrix(1, 7));
  const ParameterList params{{"a", a}, {"b", b}};
  const auto path = temp_path("ck.bin");
  save_checkpoint(path, {{"seed", 5}}, params);

  const CheckpointData data = read_checkpoint(path);
  EXPECT_EQ(data.header.at("seed"), 5);
  ASSERT_EQ(data.arrays.size(), 2u);
  EXPECT_EQ(data.arrays[0].first, "a");

  Tensor a2 = Tensor::parameter(Matrix::Zero(3, 4));
  Tensor b2 = Tensor::parameter(Matrix::Zero(1, 7));
  load_parameters(data, {{"a", a2}, {"b", b2}});
  EXPECT_EQ(a2.value(), a.value());
  EXPECT_EQ(b2.value(), b.value());
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsMismatchesAndCorruption) {
  Tensor a = Tensor::parameter(Matrix::Ones(2, 2));
  const auto path = temp_path("ck2.bin");
  save_checkpoint(path, nlohmann::json::object(), {{"a", a}});
  const CheckpointData data = read_checkpoint(path);
  Tensor wrong_shape = Tensor::parameter(Matrix::Zero(2, 3));
  EXPECT_THROW(load_parameters(data, {{"a", wrong_shape}}), SchemaError);
  EXPECT_THROW(load_parameters(data, {{"z", a}}), SchemaError);
  EXPECT_THROW(load_parameters(data, {{"a", a}, {"b", a}}), SchemaError);

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(read_checkpoint(path), SchemaError);
  std::ofstream(path) << "garbage!garbage!";
  EXPECT_THROW(read_checkpoint(path), SchemaError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_checkpoint(path), FileError);
}
