#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xaigan/rng.hpp"
#include "xaigan/tensor.hpp"

namespace xaigan::data {

// pixels: [3,H,W], values in [-1,1]
struct ImageSample {
    Tensor pixels;
    char domain = 'A';
    std::string id;
};

struct DomainDataset {
    std::vector<ImageSample> samples;
    char domain = 'A';
    uint64_t shuffle_seed = 0;

    int size() const { return static_cast<int>(samples.size()); }
    // Deterministic per (shuffle_seed, epoch).
    std::vector<int> epoch_order(int epoch) const;
};

enum class SyntheticKind { stripes, tint, blobs };

SyntheticKind synthetic_kind_from_string(const std::string& s);
const char* to_string(SyntheticKind k);

// Unpaired two-domain toy data:
//   stripes: A horizontal / B vertical bands, random width 2-4 px and phase
//   tint:    random rectangles, A red-shifted / B green-shifted
//   blobs:   A filled discs / B ring outlines
std::pair<DomainDataset, DomainDataset> gen_synthetic_domains(SyntheticKind kind, int n, int size,
                                                              uint64_t seed);

// i.i.d. normal(1.0, 0.02) soft mask, [1,h,w]
Tensor sample_noise_mask(int h, int w, Rng& stream);
// batched form, [n,1,h,w]; consumes the stream sample-by-sample
Tensor sample_noise_mask_batch(int n, int h, int w, Rng& stream);

// P6 binary, maxval 255. Bytes map to values via v/127.5 - 1; saving clamps
// to [-1,1] and rounds back, so save/load round-trips byte-exactly.
ImageSample load_ppm(const std::string& path);
void save_ppm(const Tensor& pixels, const std::string& path);

// P5 grayscale for attribution maps: linear [0,1] -> [0,255].
Tensor load_pgm(const std::string& path);  // returns [1,H,W] in [0,1]
void save_pgm(const Tensor& map, const std::string& path);

// <root>/trainA/*.ppm and <root>/trainB/*.ppm, sorted by filename
DomainDataset load_domain_dir(const std::string& dir, char domain);

// Gathers samples into a [N,3,H,W] batch.
Tensor stack_batch(const DomainDataset& ds, const std::vector<int>& indices);

}  // namespace xaigan::data
