#include "ldr/params.hpp"

#include <cstring>

namespace ldr {

bool glob_match(std::string_view pattern, std::string_view name) {
  std::size_t p = 0, n = 0, star = std::string_view::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (p < pattern.size() && pattern[p] == name[n]) {
      ++p;
      ++n;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

Index parameter_count(const NetParams& params) {
  Index n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

NetParams clone_params(const NetParams& params) {
  NetParams out;
  for (const auto& [name, t] : params) {
    Tensor c = t.clone();
    c.set_requires_grad(t.requires_grad());
    out.emplace(name, c);
  }
  return out;
}

void set_requires_grad(NetParams& params, bool on) {
  for (auto& [name, t] : params) t.set_requires_grad(on);
}

void zero_grad(NetParams& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

bool bit_equal(const NetParams& a, const NetParams& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape() != ib->second.shape()) return false;
    const auto bytes = static_cast<std::size_t>(ia->second.size()) * sizeof(Scalar);
    if (std::memcmp(ia->second.data().data(), ib->second.data().data(), bytes) != 0) return false;
  }
  return true;
}

}  // namespace ldr
