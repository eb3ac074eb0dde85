#include "neuroclip/metrics.hpp"

#include <iomanip>
#include <json.hpp>

namespace neuroclip {

std::string RetrievalReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json top = nlohmann::ordered_json::object();
  for (const auto& [k, acc] : top_k) top["top" + std::to_string(k)] = acc;
  j["top_k"] = top;
  j["mAP"] = map;
  j["n"] = ranks.size();
  j["ranks"] = ranks;
  if (!similarity_path.empty()) j["similarity"] = similarity_path;
  return j.dump(2);
}

void write_similarity_csv(std::ostream& os, const Matrix& s) {
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (j) os << ',';
      os << s(i, j);
    }
    os << '\n';
  }
}

}  // namespace neuroclip
