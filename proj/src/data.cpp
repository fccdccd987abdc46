#include "robmiss/data.hpp"

#include <stdexcept>

namespace robmiss {

Eigen::VectorXd Dataset::column(const std::string& name) const {
  if (name == "x1") return X.col(0);
  if (name == "x2") return X.col(1);
  if (name == "x3") return X.col(2);
  if (name == "v1") return V.col(0);
  if (name == "v2") return V.col(1);
  if (name == "v3") return V.col(2);
  throw std::invalid_argument("unknown covariate: " + name);
}

Eigen::MatrixXd build_design(const Dataset& data,
                             const std::vector<std::string>& columns) {
  Eigen::MatrixXd M(data.n(), static_cast<int>(columns.size()) + 1);
  M.col(0).setOnes();
  for (std::size_t j = 0; j < columns.size(); ++j)
    M.col(static_cast<int>(j) + 1) = data.column(columns[j]);
  return M;
}

std::vector<std::string> covariate_set(const std::string& set_name) {
  if (set_name == "X") return {"x1", "x2", "x3"};
  if (set_name == "XV") return {"x1", "x2", "x3", "v1", "v2", "v3"};
  if (set_name == "X_") return {"x2", "x3"};
  if (set_name == "X_V") return {"x2", "x3", "v1", "v2", "v3"};
  if (set_name == "V") return {"v1", "v2", "v3"};
  throw std::invalid_argument("unknown covariate set: " + set_name);
}

}  // namespace robmiss
