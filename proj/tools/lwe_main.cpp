#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lwe/config.hpp"
#include "lwe/pipeline.hpp"
#include "lwe/util.hpp"

namespace {

// The config file is the experiment record; --set entries layer on top of it
// in command-line order, the same later-wins rule the file itself uses.
lwe::Config assemble_config(const std::string& config_path,
                            const std::vector<std::string>& overrides) {
  lwe::Config config;
  if (!config_path.empty()) config = lwe::Config::from_file(config_path);
  for (const std::string& entry : overrides) {
    const size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0)
      throw lwe::UsageError("override must look like key=value: " + entry);
    config.set(entry.substr(0, eq), entry.substr(eq + 1));
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query expansion with locally trained word embeddings"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "flat key=value configuration file");
  app.add_option("-s,--set", overrides, "override one config entry (key=value, repeatable)");

  bool cv = false;
  CLI::App* sub_index = app.add_subcommand("index", "build and save the inverted index");
  CLI::App* sub_run =
      app.add_subcommand("run", "retrieve, expand and rescore queries; evaluate when qrels given");
  sub_run->add_flag("--cv", cv, "cross-validate k, lambda and alpha before the final run");
  CLI::App* sub_eval = app.add_subcommand("eval", "score a run file against qrels");
  CLI::App* sub_diagnose =
      app.add_subcommand("diagnose", "emit importance weights, pointwise KL and clarity");
  CLI::App* sub_neighbors =
      app.add_subcommand("neighbors", "list nearest embedding neighbors of a term");
  CLI::App* sub_train = app.add_subcommand("train-embedding", "train and save an embedding");
  for (CLI::App* sub : {sub_index, sub_run, sub_eval, sub_diagnose, sub_neighbors, sub_train})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; everything else is a usage mistake.
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const lwe::Config config = assemble_config(config_path, overrides);
    if (sub_index->parsed()) return lwe::cmd_index(config);
    if (sub_run->parsed()) return lwe::cmd_run(config, cv);
    if (sub_eval->parsed()) return lwe::cmd_eval(config);
    if (sub_diagnose->parsed()) return lwe::cmd_diagnose(config);
    if (sub_neighbors->parsed()) return lwe::cmd_neighbors(config);
    if (sub_train->parsed()) return lwe::cmd_train_embedding(config);
    return 1;
  } catch (const lwe::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const lwe::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
