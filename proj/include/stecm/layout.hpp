#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stecm {

/// One named block of a flat parameter vector. Matrices are stored
/// column-major: element (r, c) lives at offset + c * rows + r.
struct ParamBlock {
  std::string name;
  int rows = 1;
  int cols = 1;
  int offset = 0;

  int size() const { return rows * cols; }
  int index(int r, int c = 0) const { return offset + c * rows + r; }
};

/// Flat-vector layout: ordered named blocks with offsets. Emitted verbatim
/// in draw-file headers so downstream tools can address parameters by name.
class ParamLayout {
 public:
  int add(const std::string& name, int rows, int cols = 1) {
    const int off = dim_;
    blocks_.push_back({name, rows, cols, off});
    dim_ += rows * cols;
    return off;
  }

  const ParamBlock* find(const std::string& name) const {
    for (const auto& b : blocks_)
      if (b.name == name) return &b;
    return nullptr;
  }

  const ParamBlock& block(const std::string& name) const {
    const ParamBlock* b = find(name);
    if (!b) throw std::invalid_argument("unknown parameter block: " + name);
    return *b;
  }

  int dim() const { return dim_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  bool empty() const { return blocks_.empty(); }

 private:
  std::vector<ParamBlock> blocks_;
  int dim_ = 0;
};

}  // namespace stecm
