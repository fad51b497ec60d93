#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <cstdlib>
#include <string>

#include "noisylmi/cli.hpp"

using namespace noisylmi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("noisylmi_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

const char* kSmallConfig = R"(
[plant]
source = explicit
A = [0.9, 0.4; -0.1, 0.7]
B = [1.0; 0.4]

[experiment]
T = 20
input_amplitude = 1.0
seed = 3

[noise]
e_x_bound = 0
e_u_bound = 0

[bound]
mode = both

[verify]
samples = 100
seed = 1

[output]
dir = PLACEHOLDER
)";

std::string small_config(const std::string& out_dir) {
  std::string text = kSmallConfig;
  const auto pos = text.find("PLACEHOLDER");
  text.replace(pos, std::string("PLACEHOLDER").size(), out_dir);
  return text;
}

// Record comparison ignores the wall-time lines.
std::string strip_timing(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("[timing]", 0) == 0) continue;
    if (line.rfind("wall_seconds", 0) == 0) continue;
    out << line << "\n";
  }
  return out.str();
}

int run(const std::string& command, const std::string& config_path) {
  cli::CommandOptions opts;
  opts.config_path = config_path;
  std::ostringstream log, err;
  return cli::dispatch(command, opts, log, err);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config parsing") {
    SUBCASE("round trip through render") {
      const auto cfg = cli::RunConfig::from_file_text(small_config("somewhere"));
      const auto again = cli::RunConfig::from_file_text(cfg.render());
      CHECK(again.plant.source == cli::PlantSource::Explicit);
      CHECK((again.plant.A - cfg.plant.A).cwiseAbs().maxCoeff() == 0.0);
      CHECK(again.experiment.horizon == 20);
      CHECK(again.mode == cli::BoundMode::Both);
      CHECK(again.output_dir == "somewhere");
    }
    SUBCASE("unknown keys are rejected with the line number") {
      try {
        (void)cli::RunConfig::from_file_text("[plant]\nsource = random\nn = 2\nm = 1\nwhat = 3\n[experiment]\nT = 5\n");
        FAIL("expected a parse error");
      } catch (const ParseError& e) {
        CHECK(e.line == 5);
      }
    }
    SUBCASE("malformed lines are rejected with the line number") {
      try {
        (void)cli::KeyValueFile::parse("[a]\nkey value\n");
        FAIL("expected a parse error");
      } catch (const ParseError& e) {
        CHECK(e.line == 2);
      }
    }
    SUBCASE("matrices may span lines") {
      const auto kv = cli::KeyValueFile::parse("[s]\nM = [1, 2;\n 3, 4]\n");
      const Eigen::MatrixXd m = kv.get_matrix("s.M");
      CHECK(m(1, 0) == 3.0);
    }
    SUBCASE("dimension mismatches are rejected") {
      std::string bad = small_config("x");
      bad += "\n[experiment]\n";  // duplicate section header is fine, duplicate key is not
      CHECK_THROWS(cli::RunConfig::from_file_text(bad + "T = 5\n"));
    }
  }

  TEST_CASE("trajectory files round trip") {
    TempDir dir("traj");
    cli::write_text_file(dir.file("config.cfg"), small_config(dir.file("out")));
    REQUIRE(run("simulate", dir.file("config.cfg")) == 0);
    const std::string csv = cli::read_text_file(dir.file("out/trajectory.csv"));
    // Golden header for a 2-state, 1-input plant.
    CHECK(csv.rfind("k,u_m_1,x_m_1,x_m_2\n", 0) == 0);
    const auto traj = cli::read_trajectory_csv(csv);
    CHECK(traj.horizon() == 20);
    CHECK(traj.state_dim() == 2);
    CHECK(traj.input_dim() == 1);
    // Full-precision round trip is exact.
    const std::string csv2 = cli::write_trajectory_csv(traj);
    CHECK(csv == csv2);

    SUBCASE("parse errors carry line numbers") {
      try {
        (void)cli::read_trajectory_csv("k,u_m_1,x_m_1\n0,0.5,bad\n");
        FAIL("expected a parse error");
      } catch (const ParseError& e) {
        CHECK(e.line == 2);
      }
    }
  }

  TEST_CASE("synth workflow on a noise-free plant") {
    TempDir dir("synth");
    cli::write_text_file(dir.file("config.cfg"), small_config(dir.file("out")));
    CHECK(run("synth", dir.file("config.cfg")) == 0);
    const std::string record_text = cli::read_text_file(dir.file("out/run_record.txt"));
    CHECK(record_text.find("format = noisylmi-run/1") != std::string::npos);
    CHECK(record_text.find("status = feasible") != std::string::npos);
    CHECK(fs::exists(dir.file("out/closed_loop_energy.svg")));
    CHECK(fs::exists(dir.file("out/closed_loop_instantaneous.svg")));

    SUBCASE("records are deterministic apart from timing") {
      TempDir dir2("synth_repeat");
      cli::write_text_file(dir2.file("config.cfg"), small_config(dir2.file("out")));
      REQUIRE(run("synth", dir2.file("config.cfg")) == 0);
      const std::string second = cli::read_text_file(dir2.file("out/run_record.txt"));
      // Output directories differ, so compare after normalizing that line too.
      auto normalize = [](std::string text, const std::string& dir_name) {
        std::string out;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
          if (line.rfind("dir = ", 0) == 0) line = "dir = <out>";
          out += line + "\n";
        }
        return strip_timing(out);
      };
      CHECK(normalize(record_text, "") == normalize(second, ""));
    }

    SUBCASE("verify accepts the fresh record and rejects a tampered one") {
      CHECK(run("verify", dir.file("out/run_record.txt")) == 0);
      // Sign-flip an eigenvalue of the stored P.
      std::string text = record_text;
      auto rec = cli::read_run_record(text);
      REQUIRE(rec.instantaneous);
      REQUIRE(rec.instantaneous->certificate);
      Eigen::MatrixXd p = rec.instantaneous->certificate->P;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p);
      Eigen::VectorXd flipped = es.eigenvalues();
      flipped(0) = -flipped(0);
      const Eigen::MatrixXd bad =
          es.eigenvectors() * flipped.asDiagonal() * es.eigenvectors().transpose();
      const std::string old_line = "P = " + cli::format_matrix(p);
      const std::string new_line = "P = " + cli::format_matrix(bad);
      // Replace only inside the instantaneous certificate section.
      const auto section = text.find("[certificate.instantaneous]");
      REQUIRE(section != std::string::npos);
      const auto pos = text.find(old_line, section);
      REQUIRE(pos != std::string::npos);
      text.replace(pos, old_line.size(), new_line);
      cli::write_text_file(dir.file("tampered.txt"), text);
      CHECK(run("verify", dir.file("tampered.txt")) == 2);
    }
  }

  TEST_CASE("malformed record files exit with an error") {
    TempDir dir("badrec");
    cli::write_text_file(dir.file("garbage.txt"), "this is not a record\n");
    std::ostringstream log, err;
    cli::CommandOptions opts;
    opts.config_path = dir.file("garbage.txt");
    CHECK(cli::dispatch("verify", opts, log, err) == 1);
    CHECK_FALSE(err.str().empty());
  }

  TEST_CASE("assumption failures exit with a distinct error") {
    TempDir dir("assume");
    std::string cfg = small_config(dir.file("out"));
    // T = 3 < n + m gives a rank-deficient regressor Gram.
    const auto pos = cfg.find("T = 20");
    cfg.replace(pos, 6, "T = 3");
    // Noise must be nonzero so the noise block is what breaks the assumption.
    cfg.replace(cfg.find("e_x_bound = 0"), 13, "e_x_bound = 1e-4");
    cfg.replace(cfg.find("e_u_bound = 0"), 13, "e_u_bound = 1e-4");
    cli::write_text_file(dir.file("config.cfg"), cfg);
    std::ostringstream log, err;
    cli::CommandOptions opts;
    opts.config_path = dir.file("config.cfg");
    CHECK(cli::dispatch("synth", opts, log, err) == 1);
    CHECK(err.str().find("does not dominate") != std::string::npos);
  }

  TEST_CASE("sweep workflow") {
    TempDir dir("sweep");
    std::string cfg = small_config(dir.file("out"));
    cfg += R"(
[sweep]
T_grid = [10]
theta_grid = [0]
trials = 1
seed = 5
)";
    cli::write_text_file(dir.file("config.cfg"), cfg);
    REQUIRE(run("sweep", dir.file("config.cfg")) == 0);
    const std::string csv = cli::read_text_file(dir.file("out/sweep.csv"));

    SUBCASE("golden header and noise-free ratios") {
      CHECK(csv == "T,theta,trials,n_feas_energy,n_feas_inst,ratio_energy,ratio_inst,n_error\n"
                   "10,0.000000e+00,1,1,1,1.000,1.000,0\n");
      CHECK(fs::exists(dir.file("out/heatmap_energy.svg")));
      CHECK(fs::exists(dir.file("out/heatmap_instantaneous.svg")));
    }
    SUBCASE("identical seeds give byte-identical output") {
      TempDir dir2("sweep_repeat");
      std::string cfg2 = cfg;
      const auto pos = cfg2.find(dir.file("out"));
      cfg2.replace(pos, dir.file("out").size(), dir2.file("out"));
      cli::write_text_file(dir2.file("config.cfg"), cfg2);
      REQUIRE(run("sweep", dir2.file("config.cfg")) == 0);
      CHECK(cli::read_text_file(dir2.file("out/sweep.csv")) == csv);
    }
    SUBCASE("accounting keeps feasible, infeasible and errors disjoint") {
      const auto result = [&] {
        auto full = cli::RunConfig::from_file_text(cfg);
        return cli::run_sweep(full);
      }();
      for (const auto& cell : result.cells) {
        CHECK(cell.n_feas_energy + cell.n_infeas_energy + cell.n_error == cell.trials);
        CHECK(cell.n_feas_inst + cell.n_infeas_inst + cell.n_error == cell.trials);
      }
    }
  }

  TEST_CASE("option overrides") {
    TempDir dir("overrides");
    cli::write_text_file(dir.file("config.cfg"), small_config(dir.file("out")));
    cli::CommandOptions opts;
    opts.config_path = dir.file("config.cfg");
    std::ostringstream log, err;

    SUBCASE("a seed override changes the trajectory") {
      REQUIRE(cli::dispatch("simulate", opts, log, err) == 0);
      const std::string base = cli::read_text_file(dir.file("out/trajectory.csv"));
      opts.seed_override = 999;
      REQUIRE(cli::dispatch("simulate", opts, log, err) == 0);
      CHECK(cli::read_text_file(dir.file("out/trajectory.csv")) != base);
    }
    SUBCASE("a samples override shrinks the verification sample count") {
      REQUIRE(cli::dispatch("synth", opts, log, err) == 0);
      opts.samples_override = 37;
      REQUIRE(cli::dispatch("verify",
                            [&] {
                              auto o = opts;
                              o.config_path = dir.file("out/run_record.txt");
                              return o;
                            }(),
                            log, err) == 0);
      CHECK(log.str().find("sampling checked 37") != std::string::npos);
    }
  }

  TEST_CASE("thread cap comes from the environment when unset") {
    setenv("NOISYLMI_THREADS", "3", 1);
    CHECK(resolve_thread_count(0) == 3);
    CHECK(resolve_thread_count(2) == 2);  // explicit request wins
    unsetenv("NOISYLMI_THREADS");
    CHECK(resolve_thread_count(0) >= 1);
  }

  TEST_CASE("reference-scale config yields the mixed verdict") {
    TempDir dir("reference");
    // Mirrors configs/synth_reference.cfg.
    const std::string cfg = R"(
[plant]
source = eigenvalues
eigenvalues = [0, 0, 0.8607, 0.8607, 0.9024, 0.9024, 0.9217]
m = 3
seed = 7

[experiment]
T = 200
seed = 7

[noise]
e_x_bound = 5e-5
e_u_bound = 5e-5

[bound]
mode = both

[output]
dir = unused
)";
    cli::write_text_file(dir.file("reference.cfg"), cfg);
    cli::CommandOptions opts;
    opts.config_path = dir.file("reference.cfg");
    opts.out_override = dir.file("out");
    opts.samples_override = 60;
    std::ostringstream log, err;
    CHECK(cli::dispatch("synth", opts, log, err) == 0);
    const std::string record = cli::read_text_file(dir.file("out/run_record.txt"));
    const auto energy_pos = record.find("[certificate.energy]");
    const auto inst_pos = record.find("[certificate.instantaneous]");
    REQUIRE(energy_pos != std::string::npos);
    REQUIRE(inst_pos != std::string::npos);
    CHECK(record.find("status = infeasible", energy_pos) < inst_pos);
    CHECK(record.find("status = feasible", inst_pos) != std::string::npos);
  }

  TEST_CASE("sweep respects the worker cap") {
    // Same bytes regardless of the thread count.
    TempDir dir("sweep_threads");
    std::string cfg = small_config(dir.file("out"));
    cfg += "\n[sweep]\nT_grid = [8, 12]\ntheta_grid = [1e-6, 1e-5]\ntrials = 2\nseed = 9\n";
    const auto full = cli::RunConfig::from_file_text(cfg);
    const auto serial = cli::run_sweep(full, 1);
    const auto parallel = cli::run_sweep(full, 4);
    CHECK(cli::write_sweep_csv(serial) == cli::write_sweep_csv(parallel));
  }
}
