#include "gradmorph/tensor.hpp"

#include <cmath>
#include <sstream>

#include "gradmorph/errors.hpp"

namespace gradmorph {

std::int64_t shape_product(const std::vector<int>& s) {
    std::int64_t p = 1;
    for (int d : s) p *= d;
    return p;
}

std::string shape_to_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
    for (int d : shape)
        if (d <= 0) throw ContractViolation("tensor dimension must be positive, got shape " + shape_to_string(shape));
    data.assign(static_cast<std::size_t>(shape_product(shape)), fill);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    for (int d : shape)
        if (d <= 0) throw ContractViolation("tensor dimension must be positive, got shape " + shape_to_string(shape));
    if (shape_product(shape) != static_cast<std::int64_t>(data.size()))
        throw ContractViolation("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_to_string(shape));
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::linf() const {
    double m = 0.0;
    for (double v : data) {
        const double a = std::fabs(v);
        if (a > m) m = a;
    }
    return m;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

int LabelMap::max_label() const {
    int m = 0;
    for (int l : labels)
        if (l > m) m = l;
    return m;
}

}  // namespace gradmorph
