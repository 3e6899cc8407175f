#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "contour_adapt/layers.hpp"
#include "contour_adapt/param.hpp"
#include "contour_adapt/rng.hpp"
#include "contour_adapt/tape.hpp"
#include "contour_adapt/tensor.hpp"

namespace ca::nn {

enum class ArchKind { DeconvNet, UNet };

// How much of the network stays fixed during fine-tuning. Base freezes
// everything (the source model applied as-is); Encoder frees the whole
// decoder; Dec1..Dec3 additionally freeze decoder stages 1..3, leaving the
// suffix trainable.
enum class FreezeLevel { Base, Encoder, Dec1, Dec2, Dec3 };

const char* arch_name(ArchKind k);
const char* freeze_name(FreezeLevel f);
ArchKind arch_from_name(const std::string& s);
FreezeLevel freeze_from_name(const std::string& s);

// Unit of freezing: encoder, the four decoder stages (deconv_j + conv_{5+j}),
// and the final 1x1 conv.
enum class BlockGroup { Encoder, DecStage1, DecStage2, DecStage3, DecStage4, Final };

struct ModelConfig {
  ArchKind arch = ArchKind::UNet;
  int base_channels = 16;
  int height = 128;
  int width = 128;
  float dropout_rate = 0.5f;
};

struct ForwardOptions {
  // Feed zeros into the skip concatenations (UNet ablation hook).
  bool zero_skips = false;
  // When set, receives (block name, output shape) per block.
  std::vector<std::pair<std::string, Shape>>* shape_trace = nullptr;
};

// 3x3 same-padding conv + batchnorm; relu applied by the caller.
struct ConvUnit {
  Parameter w, b;
  BatchNormState bn;
  ConvSpec spec;
};

struct DoubleConv {
  ConvUnit c1, c2;
};

struct DeconvUnit {
  Parameter w, b;  // [cin][cout][2][2]
};

// Encoder-decoder segmentation net: 9 double-conv blocks (conv1..conv5 down,
// conv6..conv9 up), 4 maxpools, 4 transposed convs, final 1x1 conv +
// sigmoid. UNet additionally concatenates encoder block outputs into the
// matching decoder stage.
class Model {
 public:
  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::optional<FreezeLevel> freeze_level() const { return freeze_; }

  // Trainable-capable parameters (conv/deconv weights and biases, bn
  // gamma/beta) in canonical order. Running buffers are not parameters.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t trainable_count() const;
  std::size_t parameter_elements() const;
  void zero_grads();

  void set_freeze(FreezeLevel level);
  BlockGroup group_of(const Parameter& p) const;
  bool group_frozen(BlockGroup g) const;

  // batch: [n][1][H][W]. Train mode records onto tape (when given), applies
  // dropout and batch statistics; infer mode uses running stats and identity
  // dropout. Output: [n][1][H][W] probabilities in (0,1).
  Tensor forward(const Tensor& batch, Mode mode, Rng* rng, Tape* tape,
                 const ForwardOptions& opts = {});

  // Serialization entries in file order: every parameter plus bn running
  // buffers (".running_mean"/".running_var").
  struct Entry {
    std::string name;
    Shape shape;
    std::span<const float> data;
  };
  std::vector<Entry> entries() const;

  void save(const std::string& path) const;
  static Model load(const std::string& path, float dropout_rate = 0.5f);

  // Deep snapshot/restore of all entries (weights + running stats).
  std::vector<std::vector<float>> snapshot_state() const;
  void restore_state(const std::vector<std::vector<float>>& state);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

 private:
  Model() = default;
  void init_params(std::uint64_t seed);
  struct MutableEntry {
    std::string name;
    Shape shape;
    std::span<float> data;
  };
  std::vector<MutableEntry> mutable_entries();
  Tensor double_conv(DoubleConv& blk, const Tensor& x, Mode mode, Tape* tape, bool frozen);

  ModelConfig cfg_;
  std::optional<FreezeLevel> freeze_;

  std::array<DoubleConv, 5> enc_;     // conv1..conv5 (conv5 = bottleneck)
  std::array<DeconvUnit, 4> deconv_;  // deconv1..deconv4
  std::array<DoubleConv, 4> dec_;     // conv6..conv9
  Parameter final_w_, final_b_;       // 1x1 conv to 1 channel
};

// Weight file format (version 1): magic "UTCW", version byte, arch byte,
// u32 base_channels, u32 H, u32 W, u32 entry count; per entry u16 name
// length + UTF-8 name, u8 ndim, u32 dims, raw little-endian f32 data.
inline constexpr char kWeightMagic[4] = {'U', 'T', 'C', 'W'};
inline constexpr std::uint8_t kWeightVersion = 1;

}  // namespace ca::nn
