#include "surgseg/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace surgseg {

Tensor Tensor::reshaped(Shape s) const {
    if (count(s) != numel()) {
        throw std::invalid_argument("reshape: element count mismatch (" + shape_str() + ")");
    }
    Tensor t;
    t.shape = std::move(s);
    t.data = data;
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

}  // namespace surgseg
