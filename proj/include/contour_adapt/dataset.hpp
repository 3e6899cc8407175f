#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "contour_adapt/batch_source.hpp"
#include "contour_adapt/pgm.hpp"
#include "contour_adapt/rng.hpp"

namespace ca::data {

struct SampleRef {
  std::string image;             // path relative to the dataset root
  std::string mask;
  std::string origin_id;         // pre-augmentation source frame
  std::string split = "unassigned";  // train | val | test | unassigned
};

// Synthetic phantom distribution: a bright curved band (the contour target)
// over speckle, fan shadows, and a gamma/contrast profile. Two instances of
// this struct define the two study domains.
struct DomainParams {
  double amp_lo = 0.10, amp_hi = 0.25;        // arch height, fraction of H
  double tilt_lo = -0.08, tilt_hi = 0.08;     // end-to-end slope of the band
  double offset_lo = 0.38, offset_hi = 0.52;  // endpoint height, fraction of H
  int band_halfwidth = 4;                     // mask half-width, pixels
  double band_peak = 0.85;                    // band brightness before speckle
  double speckle_sigma = 0.25;                // multiplicative speckle strength
  double gamma = 1.0;                         // intensity gamma
  int shadow_count = 2;                       // fan shadows from the apex
  double shadow_depth = 0.35;                 // attenuation inside a wedge
  double background = 0.08;                   // base background level
  double noise = 0.02;                        // additive noise amplitude

  void validate() const;
};

// Calibrated study defaults; "A" is the source-style domain, "B" the
// shifted target-style domain.
DomainParams domain_preset(const std::string& name);

struct UndersampleInfo {
  std::string metric = "l2";
  int n_hi = 0, n_lo = 0;
};

struct AugmentParams {
  double rotate_deg = 10.0;      // uniform in [-rotate_deg, +rotate_deg]
  double zoom_lo = 0.9, zoom_hi = 1.1;
  bool flip = true;              // horizontal flip with probability 0.5
  int factor = 0;                // copies per sample (0 = not an augmented set)
};

struct SplitInfo {
  double train = 0.0, val = 0.0, test = 0.0;
  std::uint64_t seed = 0;
};

// On-disk dataset: <root>/images/*.pgm, <root>/masks/*.pgm,
// <root>/manifest.json.
struct Manifest {
  int schema_version = 1;
  std::string domain;
  std::uint64_t seed = 0;
  int height = 0, width = 0;
  DomainParams params;
  std::optional<UndersampleInfo> undersample;
  std::optional<AugmentParams> augmented;
  std::optional<SplitInfo> split_info;
  std::vector<SampleRef> samples;
  std::string root;  // not serialized

  std::vector<std::string> origin_order() const;  // distinct ids, first appearance
  std::vector<std::size_t> split_indices(const std::string& split) const;
};

Manifest gen_synthetic(const DomainParams& params, const std::string& domain_label, int n,
                       int height, int width, std::uint64_t seed, const std::string& out_dir);

// Per-pixel mean over all images, values in [0,1].
std::vector<float> mean_image(const Manifest& m);

// Keeps the n_hi highest- and n_lo lowest-scoring frames, score = L2 distance
// of the normalized image to the dataset mean; ties break by origin_id.
// Output manifest preserves descending-rank order.
Manifest informed_undersample(const Manifest& m, int n_hi, int n_lo, const std::string& out_dir);

// Emits factor augmented copies per sample plus the byte-identical original;
// copies share the source's origin_id.
Manifest augment(const Manifest& m, int factor, const AugmentParams& p, std::uint64_t seed,
                 const std::string& out_dir);

// Grouped split: distinct origin_ids are shuffled and assigned by cumulative
// ratio (floor, then remainder by largest fraction); every sample of an
// origin lands in one split, and val/test each get at least one origin.
void assign_splits(Manifest& m, double train, double val, double test, std::uint64_t seed);

void save_manifest(const Manifest& m);           // writes <root>/manifest.json
Manifest load_manifest(const std::string& dir);  // accepts the dir or the json path

struct LoadedSample {
  PgmImage image, mask;
};
// Reads and validates one image/mask pair (equal dims, strictly binary mask).
LoadedSample load_sample(const Manifest& m, const SampleRef& ref);

// Deterministic affine resample. Rotation and zoom are about the image
// center; flip mirrors horizontally. Out-of-frame reads are 0.
struct WarpSpec {
  double rotate_deg = 0.0;
  double zoom = 1.0;
  bool flip = false;
};
PgmImage warp_bilinear(const PgmImage& src, const WarpSpec& spec);
PgmImage warp_nearest(const PgmImage& src, const WarpSpec& spec);  // + re-binarize
PgmImage flip_horizontal(const PgmImage& src);

// BatchSource over a manifest subset; PGMs are read on demand.
class ManifestSource : public BatchSource {
 public:
  ManifestSource(const Manifest& m, const std::string& split);
  ManifestSource(const Manifest& m, std::vector<std::size_t> indices);

  std::size_t size() const override { return indices_.size(); }
  int height() const override { return manifest_->height; }
  int width() const override { return manifest_->width; }
  void sample(std::size_t index, std::span<float> image, std::span<float> mask) const override;

  const Manifest& manifest() const { return *manifest_; }
  const std::vector<std::size_t>& indices() const { return indices_; }

 private:
  const Manifest* manifest_;
  std::vector<std::size_t> indices_;
};

// Origin-grouped subsample of one split to exactly `count` samples, returned
// in manifest order (the full split comes back unchanged when count equals
// its size). Origins are taken in seeded shuffle order; the last origin may
// contribute only part of its samples to hit the count.
std::vector<std::size_t> subsample_grouped(const Manifest& m, const std::string& split, int count,
                                           std::uint64_t seed);

}  // namespace ca::data
