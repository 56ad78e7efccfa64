#pragma once

#include <string>

#include "sgn/autodiff.hpp"

namespace sgn::ckpt {

// Versioned checkpoint container: named tensors with a shape manifest and
// an arbitrary JSON metadata blob (the resolved config stamp).
void save(const ad::ParamStore& params, const std::string& meta_json,
          const std::string& path);
ad::ParamStore load(const std::string& path,
                    std::string* meta_json = nullptr);

}  // namespace sgn::ckpt
