#pragma once

#include <cstdint>
#include <string>

#include "gradmorph/io.hpp"
#include "gradmorph/sample.hpp"

namespace gradmorph {

enum class ShapeFamily { Ellipses, Blobs };
std::string to_string(ShapeFamily f);
ShapeFamily shape_family_from_string(const std::string& s);

// Synthetic foreground-shape-on-noisy-background task. Contrast and noise
// defaults are calibrated so a briefly trained model lands in an imperfect
// Dice band and leaves headroom for input perturbation.
struct SynthConfig {
    int count = 320;
    int image_size = 64;
    ShapeFamily family = ShapeFamily::Blobs;
    double contrast = 0.18;      // foreground minus background intensity
    double noise_stddev = 0.30;
    bool texture = false;        // low-frequency intensity modulation
    double split_ratio = 0.8;    // train fraction
    std::uint64_t seed = 1;

    void validate() const;
};

struct SynthDataset {
    SampleSet train;
    SampleSet test;
};

// Reproducible from the seed; every sample has 3%..60% foreground and
// image values in [0,1]; train/test ids are disjoint.
SynthDataset generate_synthetic(const SynthConfig& cfg);

double foreground_fraction(const LabelMap& mask, int positive_class = 1);

// Pairs images with masks by filename stem. Images may be PGM or PPM
// (PPM is converted to grayscale); masks are PGM binarized at 0.5.
SampleSet load_directory(const fs::path& images_dir, const fs::path& masks_dir, int num_classes = 2);

// <split_dir>/images/<id>.pgm + <split_dir>/masks/<id>.pgm
void save_sampleset(const fs::path& split_dir, const SampleSet& samples, int num_classes = 2);
SampleSet load_sampleset(const fs::path& split_dir, int num_classes = 2);

}  // namespace gradmorph
