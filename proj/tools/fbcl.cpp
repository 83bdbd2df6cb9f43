// fbcl: scenario runner for boundary-feedback conservation laws.
//
// Exit codes: 0 all assertions pass, 1 an assertion failed or a run aborted,
// 2 the configuration could not be read.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "fbcl/errors.hpp"
#include "fbcl/feedback.hpp"
#include "fbcl/oracle.hpp"
#include "fbcl/scenario.hpp"

namespace {

using fbcl::json;

constexpr int kConfigError = 2;

int report_config_error(const fbcl::ConfigError& e) {
  std::cerr << "config error at " << e.field() << ": " << e.what() << '\n';
  return kConfigError;
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const fbcl::ConfigError& e) {
    return report_config_error(e);
  } catch (const fbcl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

Eigen::MatrixXd read_matrix(const std::string& arg) {
  std::string text = arg;
  if (std::filesystem::exists(arg)) {
    std::ifstream in(arg);
    std::stringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw fbcl::ConfigError("matrix", e.what());
  }
  if (j.is_object() && j.contains("K")) j = j["K"];
  return fbcl::matrix_from_json(j, "matrix");
}

int cmd_run(const std::vector<std::string>& configs) {
  std::vector<std::future<int>> jobs;
  for (const auto& path : configs) {
    jobs.push_back(std::async(std::launch::async, [path] {
      return guarded([&] {
        const fbcl::Scenario s = fbcl::load_scenario(path);
        const std::string dir = fbcl::resolve_output_dir(s);
        const fbcl::Outcome out = fbcl::run_scenario(s, dir);
        std::ostringstream line;
        line << (out.exit_code == 0 ? "PASS " : "FAIL ") << s.name << " -> " << dir << "/report.json\n";
        std::cout << line.str();
        return out.exit_code;
      });
    }));
  }
  int code = 0;
  for (auto& j : jobs) code = std::max(code, j.get());
  return code;
}

int cmd_json(const std::string& path, const std::function<fbcl::Outcome(const fbcl::Scenario&)>& fn) {
  return guarded([&] {
    const fbcl::Outcome out = fn(fbcl::load_scenario(path));
    std::cout << out.report.dump(2) << '\n';
    return out.exit_code;
  });
}

int cmd_rho(const std::string& matrix, const std::string& p, bool verify) {
  return guarded([&] {
    const Eigen::MatrixXd K = read_matrix(matrix);
    if (K.rows() != K.cols()) throw fbcl::ConfigError("matrix", "matrix must be square");
    const fbcl::Norm norm = p == "1" ? fbcl::Norm::L1 : fbcl::Norm::Linf;
    const fbcl::RhoResult r = fbcl::rho_p(K, norm);
    json out{{"p", p},
             {"value", r.value},
             {"scaling", std::vector<double>(r.scaling.data(), r.scaling.data() + r.scaling.size())}};
    int code = 0;
    if (verify) {
      if (K.rows() > 4) throw fbcl::ConfigError("matrix", "--verify supports n <= 4");
      const double brute = fbcl::oracle::brute_force_rho(K, norm);
      const double gap = std::abs(r.value - brute);
      out["brute_force"] = brute;
      out["gap"] = gap;
      bool ok = gap <= 1e-4 * std::max(brute, 1e-12) || brute < 1e-8;
      if (norm == fbcl::Norm::Linf) {
        const double spectral = fbcl::oracle::spectral_radius_abs(K);
        out["spectral_radius_abs"] = spectral;
        out["spectral_gap"] = std::abs(r.value - spectral);
        ok = ok && std::abs(r.value - spectral) <= 1e-6 * std::max(spectral, 1.0);
      }
      out["agree"] = ok;
      code = ok ? 0 : 1;
    }
    std::cout << out.dump(2) << '\n';
    return code;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate and certify conservation laws closed by nonlocal boundary feedback"};
  app.require_subcommand(1);

  std::vector<std::string> run_configs;
  auto* run = app.add_subcommand("run", "Run scenarios and write CSV/JSON artifacts");
  run->add_option("configs", run_configs, "Scenario config files")->required()->check(CLI::ExistingFile);

  std::string certify_config;
  auto* certify = app.add_subcommand("certify", "Largest certified rate for each dissipativity condition");
  certify->add_option("config", certify_config)->required()->check(CLI::ExistingFile);

  std::string matrix;
  std::string p = "inf";
  bool verify = false;
  auto* rho = app.add_subcommand("rho", "Diagonal-scaling norm rho_p of a matrix");
  rho->add_option("matrix", matrix, "JSON matrix, inline or as a file")->required();
  rho->add_option("--p", p, "Norm")->check(CLI::IsMember({"1", "inf"}));
  rho->add_flag("--verify", verify, "Cross-check against brute force and the spectral radius of |K|");

  std::string conv_config;
  int refinements = 3;
  auto* conv = app.add_subcommand("convergence", "Grid refinement study of the direct closed loop");
  conv->add_option("config", conv_config)->required()->check(CLI::ExistingFile);
  conv->add_option("--refinements", refinements, "Number of grid doublings")->check(CLI::PositiveNumber);

  std::string delay_config;
  auto* delay = app.add_subcommand("delay-test", "Trace independence from late inputs");
  delay->add_option("config", delay_config)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  if (*run) return cmd_run(run_configs);
  if (*certify) return cmd_json(certify_config, fbcl::certify_scenario);
  if (*rho) return cmd_rho(matrix, p, verify);
  if (*conv) {
    return cmd_json(conv_config, [&](const fbcl::Scenario& s) { return fbcl::convergence_study(s, refinements); });
  }
  if (*delay) return cmd_json(delay_config, fbcl::delay_study);
  return kConfigError;
}
