#include "lfr/checkpoint.hpp"

#include "lfr/benchmark.hpp"
#include "lfr/json_util.hpp"
#include "lfr/model_tape.hpp"

#include <fstream>
#include <map>
#include <mutex>

namespace lfr {

namespace {

std::mutex& factory_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, BaselineFactory>& factories() {
  static std::map<std::string, BaselineFactory> f = [] {
    std::map<std::string, BaselineFactory> d;
    d["affine"] = [](const nlohmann::json& j) -> BaselinePtr {
      return std::make_shared<AffineBaseline>(
          json_util::matrix_from_json(j.at("A")), json_util::matrix_from_json(j.at("B")),
          json_util::matrix_from_json(j.at("C")), json_util::matrix_from_json(j.at("D")));
    };
    d["msd2"] = [](const nlohmann::json& j) -> BaselinePtr {
      const auto v = j.at("theta0").get<std::vector<double>>();
      if (v.size() != 6) throw ConfigError("msd2: theta0 needs 6 entries");
      std::array<double, 6> th{};
      std::copy(v.begin(), v.end(), th.begin());
      return std::make_shared<msd::Msd2Baseline>(th, j.at("Ts").get<double>());
    };
    d["normalized"] = [](const nlohmann::json& j) -> BaselinePtr {
      NormalizationTransforms t;
      t.u_mean = json_util::vector_from_json(j.at("u_mean"));
      t.u_std = json_util::vector_from_json(j.at("u_std"));
      t.y_mean = json_util::vector_from_json(j.at("y_mean"));
      t.y_std = json_util::vector_from_json(j.at("y_std"));
      t.x_std = json_util::vector_from_json(j.at("x_std"));
      return std::make_shared<NormalizedBaseline>(baseline_from_json(j.at("inner")), t);
    };
    return d;
  }();
  return f;
}

nlohmann::json norm_to_json(const NormalizationTransforms& t) {
  return {{"u_mean", json_util::vector_to_json(t.u_mean)}, {"u_std", json_util::vector_to_json(t.u_std)},
          {"y_mean", json_util::vector_to_json(t.y_mean)}, {"y_std", json_util::vector_to_json(t.y_std)},
          {"x_std", json_util::vector_to_json(t.x_std)}};
}

NormalizationTransforms norm_from_json(const nlohmann::json& j) {
  NormalizationTransforms t;
  t.u_mean = json_util::vector_from_json(j.at("u_mean"));
  t.u_std = json_util::vector_from_json(j.at("u_std"));
  t.y_mean = json_util::vector_from_json(j.at("y_mean"));
  t.y_std = json_util::vector_from_json(j.at("y_std"));
  t.x_std = json_util::vector_from_json(j.at("x_std"));
  return t;
}

std::vector<Index> hidden_of(const ResNet& n) {
  if (n.widths.size() < 2) return {};
  return {n.widths.begin() + 1, n.widths.end() - 1};
}

}  // namespace

void register_baseline(const std::string& id, BaselineFactory f) {
  std::lock_guard<std::mutex> lock(factory_mutex());
  factories()[id] = std::move(f);
}

BaselinePtr baseline_from_json(const nlohmann::json& j) {
  const std::string id = j.at("id").get<std::string>();
  BaselineFactory f;
  {
    std::lock_guard<std::mutex> lock(factory_mutex());
    auto it = factories().find(id);
    if (it == factories().end()) throw ConfigError("unknown baseline id '" + id + "'");
    f = it->second;
  }
  return f(j);
}

nlohmann::json model_to_json(const AugmentedModel& m) {
  m.validate();
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["structure"] = m.structure;
  j["dims"] = {{"n_x_b", m.dims.n_x_b}, {"n_x_a", m.dims.n_x_a}, {"n_u", m.dims.n_u},
               {"n_y", m.dims.n_y},     {"n_z_a", m.dims.n_z_a}, {"n_w_a", m.dims.n_w_a}};
  j["mode"] = to_string(m.mode);
  nlohmann::json tr = nlohmann::json::object();
  for (int i = 0; i < kNumBlocks; ++i) tr[block_name(static_cast<Blk>(i))] = m.trainable[i];
  j["trainable"] = tr;
  j["baseline"] = m.base->describe();
  j["theta_base0"] = json_util::vector_to_json(m.theta_base0);
  j["theta_base_trainable"] = m.theta_base_trainable;
  j["norm"] = norm_to_json(m.norm);

  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : m.aug.blocks) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : b.heads) heads.push_back({{"role", h.role}, {"offset", h.offset}, {"size", h.size}});
    blocks.push_back({{"name", b.name},
                      {"z_offset", b.z_offset},
                      {"z_size", b.z_size},
                      {"w_offset", b.w_offset},
                      {"w_size", b.w_size},
                      {"hidden", hidden_of(b.net)},
                      {"heads", heads}});
  }
  j["aug_blocks"] = blocks;

  if (!m.encoder.base_head.widths.empty()) {
    j["encoder"] = {{"n_a", m.encoder.n_a},
                    {"n_b", m.encoder.n_b},
                    {"hidden", hidden_of(m.encoder.base_head)}};
  } else {
    j["encoder"] = nullptr;
  }

  const ad::ParamVector p = pack_params(m);
  nlohmann::json params = nlohmann::json::object();
  for (const auto& s : p.slices()) params[s.name] = json_util::matrix_to_json(p.get(s.name));
  j["params"] = params;
  return j;
}

AugmentedModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != kCheckpointFormat) {
    throw ConfigError(std::string("checkpoint format must be ") + kCheckpointFormat);
  }
  AugmentedModel m;
  const auto& d = j.at("dims");
  m.dims = Dimensions{d.at("n_x_b").get<Index>(), d.at("n_x_a").get<Index>(), d.at("n_u").get<Index>(),
                      d.at("n_y").get<Index>(),   d.at("n_z_a").get<Index>(), d.at("n_w_a").get<Index>()};
  m.dims.validate();
  m.mode = parse_dzw_mode(j.at("mode").get<std::string>());
  m.structure = j.value("structure", std::string("flexible"));
  m.trainable.fill(false);
  for (auto it = j.at("trainable").begin(); it != j.at("trainable").end(); ++it) {
    m.trainable[static_cast<int>(parse_block(it.key()))] = it.value().get<bool>();
  }
  m.base = baseline_from_json(j.at("baseline"));
  m.theta_base0 = json_util::vector_from_json(j.at("theta_base0"));
  m.theta_base = m.theta_base0;
  m.theta_base_trainable = j.value("theta_base_trainable", true);
  m.norm = norm_from_json(j.at("norm"));
  m.W = LfrMatrix::zeros(m.dims);

  for (const auto& jb : j.at("aug_blocks")) {
    AugBlock b;
    b.name = jb.at("name").get<std::string>();
    b.z_offset = jb.at("z_offset").get<Index>();
    b.z_size = jb.at("z_size").get<Index>();
    b.w_offset = jb.at("w_offset").get<Index>();
    b.w_size = jb.at("w_size").get<Index>();
    for (const auto& h : jb.at("heads"))
      b.heads.push_back({h.at("role").get<std::string>(), h.at("offset").get<Index>(), h.at("size").get<Index>()});
    b.net = ResNet(b.z_size, jb.at("hidden").get<std::vector<Index>>(), b.w_size);
    m.aug.blocks.push_back(std::move(b));
  }
  if (!j.at("encoder").is_null()) {
    const auto& je = j.at("encoder");
    m.encoder = EncoderNet(je.at("n_a").get<Index>(), je.at("n_b").get<Index>(), m.dims.n_y, m.dims.n_u,
                           m.dims.n_x_b, m.dims.n_x_a, je.at("hidden").get<std::vector<Index>>());
  }

  ad::ParamVector p = pack_params(m);
  const auto& jp = j.at("params");
  for (const auto& s : p.slices()) {
    if (!jp.contains(s.name)) throw ConfigError("checkpoint is missing parameter " + s.name);
    const Mat v = json_util::matrix_from_json(jp.at(s.name));
    if (v.rows() != s.rows || v.cols() != s.cols) throw DimensionError("checkpoint parameter " + s.name + " has wrong shape");
    p.set(s.name, v);
  }
  unpack_params(p, m);
  m.validate();
  return m;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void save_checkpoint(const AugmentedModel& m, const std::string& path, const nlohmann::json& extra) {
  nlohmann::json j = model_to_json(m);
  if (!extra.is_null()) j["meta"] = extra;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(1) << '\n';
}

AugmentedModel load_checkpoint(const std::string& path) { return model_from_json(read_json_file(path)); }

}  // namespace lfr
