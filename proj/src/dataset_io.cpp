#include "lfr/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace lfr {

void Dataset::validate() const {
  if (u.rows() != y.rows()) throw DataError("dataset: u and y have different lengths");
  if (u.rows() == 0) throw DataError("dataset '" + split + "' is empty");
  if (!(Ts > 0.0)) throw DataError("dataset: sampling time must be positive");
  if (y_clean.size() > 0 && (y_clean.rows() != y.rows() || y_clean.cols() != y.cols())) {
    throw DataError("dataset: y_clean does not match y");
  }
  if (x_base.size() > 0 && x_base.rows() != u.rows()) throw DataError("dataset: x_base length mismatch");
  if (!u.allFinite() || !y.allFinite()) throw DataError("dataset '" + split + "' has non-finite samples");
}

Dataset Dataset::head(Index n) const {
  if (n > size()) throw DataError("dataset: requested more samples than available");
  Dataset d = *this;
  d.u = u.topRows(n);
  d.y = y.topRows(n);
  if (y_clean.size() > 0) d.y_clean = y_clean.topRows(n);
  if (x_base.size() > 0) d.x_base = x_base.topRows(n);
  return d;
}

void write_dataset_csv(const Dataset& d, const std::string& path) {
  if (d.n_u() != 1 || d.n_y() != 1) throw DataError("CSV export supports one input and one output channel");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "k,u,y,y_clean\n";
  char buf[128];
  const bool clean = d.y_clean.size() > 0;
  for (Index k = 0; k < d.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(k), d.u(k, 0),
                  d.y(k, 0), clean ? d.y_clean(k, 0) : d.y(k, 0));
    out << buf;
  }
  if (!out) throw DataError("write failed for " + path);

  nlohmann::json side = d.meta;
  side["Ts"] = d.Ts;
  side["split"] = d.split;
  side["samples"] = d.size();
  std::ofstream js(path + ".json");
  if (!js) throw DataError("cannot write " + path + ".json");
  js << side.dump(2) << "\n";
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (line.rfind("k,u,y", 0) != 0) throw DataError(path + ": expected header k,u,y,y_clean");
  const bool has_clean = line.find("y_clean") != std::string::npos;
  std::vector<double> u, y, yc;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (vals.size() < 3 || (has_clean && vals.size() < 4)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": too few columns");
    }
    u.push_back(vals[1]);
    y.push_back(vals[2]);
    if (has_clean) yc.push_back(vals[3]);
  }
  Dataset d;
  const Index n = static_cast<Index>(u.size());
  d.u = Eigen::Map<const Mat>(u.data(), n, 1);
  d.y = Eigen::Map<const Mat>(y.data(), n, 1);
  if (has_clean) d.y_clean = Eigen::Map<const Mat>(yc.data(), n, 1);

  std::ifstream js(path + ".json");
  if (js) {
    try {
      d.meta = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ".json: " + e.what());
    }
    d.Ts = d.meta.value("Ts", d.Ts);
    d.split = d.meta.value("split", d.split);
  }
  d.validate();
  return d;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace lfr
