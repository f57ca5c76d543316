#pragma once

#include <string>
#include <vector>

#include "gradmorph/tensor.hpp"

namespace gradmorph {

// One dataset element: image in [0,1] at load time plus its label mask.
struct Sample {
    std::string id;
    Tensor image;   // [C,H,W]
    LabelMap mask;  // [H,W]
};

using SampleSet = std::vector<Sample>;

}  // namespace gradmorph
