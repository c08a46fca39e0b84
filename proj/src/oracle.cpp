#include "probprec/oracle.hpp"

#include <sstream>

#include "probprec/errors.hpp"

namespace probprec {

ExactQuadraticOracle::ExactQuadraticOracle(Matrix B, Vector b, std::size_t charge_per_call)
    : B_(std::move(B)), b_(std::move(b)), charge_(charge_per_call) {
  if (B_.rows() != B_.cols() || B_.rows() != b_.size()) {
    std::ostringstream os;
    os << "quadratic oracle: B is " << B_.rows() << "x" << B_.cols() << " but b has length "
       << b_.size();
    throw InvalidArgument(os.str());
  }
}

Batch ExactQuadraticOracle::draw_batch() {
  charge(charge_);
  return Batch{};
}

Vector ExactQuadraticOracle::gradient(const Vector& w, const Batch&) const {
  if (w.size() != B_.rows()) throw InvalidArgument("quadratic oracle: w has the wrong length");
  return B_ * w - b_;
}

Vector ExactQuadraticOracle::hvp(const Vector&, const Vector& s, const Batch&) const {
  if (s.size() != B_.rows()) throw InvalidArgument("quadratic oracle: s has the wrong length");
  return B_ * s;
}

}  // namespace probprec
