#pragma once

#include <map>
#include <string>
#include <string_view>

#include "ldr/tensor.hpp"

namespace ldr {

/// Named parameters, "component.block.tensor" → Tensor, ordered by name.
using NetParams = std::map<std::string, Tensor>;

/// Glob match where '*' matches any run of characters (including dots).
bool glob_match(std::string_view pattern, std::string_view name);

Index parameter_count(const NetParams& params);

/// Fresh leaves holding copies of every value.
NetParams clone_params(const NetParams& params);

void set_requires_grad(NetParams& params, bool on);
void zero_grad(NetParams& params);

/// Byte-level equality of names, shapes and values.
bool bit_equal(const NetParams& a, const NetParams& b);

}  // namespace ldr
