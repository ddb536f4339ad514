#pragma once

#include <istream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace tubekit::tool {

/// CLI11 config formatter for JSON run configs.
///
/// A config file is one JSON object; top-level keys address options of the
/// root command and nested objects address subcommands, e.g.
///   {"synth": {"seed": "7", "instances": 3}}
/// Scalars may be strings, numbers, or booleans; arrays supply multi-value
/// options. Command-line flags always override config values.
///
/// to_config writes the current effective values (defaults included) in the
/// same shape, so a dumped config reproduces the run byte-for-byte.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json j = app_to_json(app, default_also);
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config top level must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    std::vector<std::string> parents;
    collect(j, parents, items);
    return items;
  }

 private:
  static std::string scalar_to_string(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const nlohmann::json& obj, std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        parents.push_back(key);
        collect(value, parents, items);
        parents.pop_back();
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& e : value) {
          if (e.is_object() || e.is_array())
            throw CLI::ConfigError("config arrays must hold scalars: " + key);
          item.inputs.push_back(scalar_to_string(e));
        }
      } else if (value.is_null()) {
        continue;
      } else {
        item.inputs.push_back(scalar_to_string(value));
      }
      items.push_back(std::move(item));
    }
  }

  static nlohmann::json app_to_json(const CLI::App* app, bool default_also) {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (!opt->get_configurable()) continue;
      if (opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      const bool is_flag = opt->get_type_size() == 0;
      if (opt->count() > 0) {
        const auto& results = opt->results();
        if (is_flag)
          j[name] = results.size() == 1 ? results.front() : "true";
        else if (results.size() == 1)
          j[name] = results.front();
        else
          j[name] = results;
      } else if (default_also) {
        if (is_flag)
          j[name] = "false";
        else if (!opt->get_default_str().empty())
          j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      nlohmann::json js = app_to_json(sub, default_also);
      if (!js.empty()) j[sub->get_name()] = std::move(js);
    }
    return j;
  }
};

}  // namespace tubekit::tool
