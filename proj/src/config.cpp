#include "stgin/config.hpp"

#include <set>

#include "stgin/csv.hpp"
#include "stgin/error.hpp"

namespace stgin {

namespace {

using Json = nlohmann::json;

void reject_unknown(const Json& section, const std::string& name, const std::set<std::string>& known) {
  if (!section.is_object()) throw Error(ErrorKind::parse, "config: section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (!known.count(key)) throw Error(ErrorKind::parse, "config: unknown key '" + name + "." + key + "'");
  }
}

template <class T>
void read(const Json& section, const char* key, T& out) {
  if (section.contains(key)) out = section.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_config(const Json& j) {
  ExperimentConfig c;
  try {
    reject_unknown(j, "<root>", {"model", "training", "data"});
    if (j.contains("model")) {
      const Json& m = j.at("model");
      reject_unknown(m, "model", {"gat_width", "hidden", "leaky_slope", "activation", "variance_floor", "input_skip"});
      read(m, "gat_width", c.model.gat_width);
      read(m, "hidden", c.model.hidden);
      read(m, "leaky_slope", c.model.leaky_slope);
      read(m, "variance_floor", c.model.variance_floor);
      read(m, "input_skip", c.model.input_skip);
      if (m.contains("activation")) c.model.activation = model::parse_activation(m.at("activation").get<std::string>());
    }
    if (j.contains("training")) {
      const Json& t = j.at("training");
      reject_unknown(t, "training", {"lambda", "learning_rate", "max_epochs", "window", "seed", "patience", "clip_norm",
                                     "nll", "hide_rate", "hide_mode", "beta1", "beta2", "epsilon"});
      auto& tc = c.training;
      read(t, "lambda", tc.lambda);
      read(t, "learning_rate", tc.learning_rate);
      read(t, "max_epochs", tc.max_epochs);
      read(t, "window", tc.window);
      read(t, "seed", tc.seed);
      read(t, "patience", tc.patience);
      read(t, "hide_rate", tc.hide_rate);
      read(t, "beta1", tc.beta1);
      read(t, "beta2", tc.beta2);
      read(t, "epsilon", tc.epsilon);
      if (t.contains("clip_norm")) {
        tc.clip_norm = t.at("clip_norm").is_null() ? std::nullopt : std::optional<double>(t.at("clip_norm").get<double>());
      }
      if (t.contains("nll")) tc.nll = train::parse_aggregation(t.at("nll").get<std::string>());
      if (t.contains("hide_mode")) tc.hide_mode = train::parse_hide_mode(t.at("hide_mode").get<std::string>());
    }
    if (j.contains("data")) {
      const Json& d = j.at("data");
      reject_unknown(d, "data", {"scheme", "steps_per_day"});
      if (d.contains("scheme")) c.scheme = parse_scheme(d.at("scheme").get<std::string>());
      read(d, "steps_per_day", c.steps_per_day);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::parse, std::string("config: ") + e.what());
  }
  c.training.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(csv::read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
  return parse_config(j);
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  using OJ = nlohmann::ordered_json;
  const auto& t = c.training;
  return OJ{
      {"model", OJ{{"gat_width", c.model.gat_width},
                   {"hidden", c.model.hidden},
                   {"leaky_slope", c.model.leaky_slope},
                   {"activation", model::to_string(c.model.activation)},
                   {"variance_floor", c.model.variance_floor},
                   {"input_skip", c.model.input_skip}}},
      {"training", OJ{{"lambda", t.lambda},
                      {"learning_rate", t.learning_rate},
                      {"max_epochs", t.max_epochs},
                      {"window", t.window},
                      {"seed", t.seed},
                      {"patience", t.patience},
                      {"clip_norm", t.clip_norm ? OJ(*t.clip_norm) : OJ(nullptr)},
                      {"nll", train::to_string(t.nll)},
                      {"hide_rate", t.hide_rate},
                      {"hide_mode", train::to_string(t.hide_mode)},
                      {"beta1", t.beta1},
                      {"beta2", t.beta2},
                      {"epsilon", t.epsilon}}},
      {"data", OJ{{"scheme", to_string(c.scheme)}, {"steps_per_day", c.steps_per_day}}},
  };
}

}  // namespace stgin
