#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "oracles.hpp"
#include "resotune/formats.hpp"
#include "resotune/stability.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Sandbox {
    fs::path dir;
    Sandbox() {
        dir = fs::temp_directory_path() / ("resotune_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~Sandbox() { fs::remove_all(dir); }
    [[nodiscard]] std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = std::string(RESOTUNE_CLI) + " " + args + " >" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load(const std::string& path) { return json::parse(slurp(path)); }

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST_CASE("simulate") {
    Sandbox box;
    REQUIRE(run("simulate --out " + (box / "t.csv")) == 0);
    const auto t = resotune::io::read_trace_csv(fs::path(box / "t.csv"));
    CHECK(t.size() == 1601);
    const auto imin = std::min_element(t.power_ratio.begin(), t.power_ratio.end()) - t.power_ratio.begin();
    CHECK(std::abs(t.frequencies[static_cast<std::size_t>(imin)] - 6.8278e9) < 0.5e6);

    CHECK(run("simulate --points 1 --out " + (box / "x.csv")) == 2);
    CHECK(run("simulate --f-start 6.83 --out " + (box / "x.csv")) == 2);
    CHECK(run("simulate --config " + (box / "missing.json")) == 1);
    write(box / "bad.json", R"({"resonator": {"Qi": 3}})");
    CHECK(run("simulate --config " + (box / "bad.json"), box / "err.txt") == 2);
    CHECK(slurp(box / "err.txt").find("resonator.Qi") != std::string::npos);
}

TEST_CASE("simulate is reproducible per seed") {
    Sandbox box;
    write(box / "noisy.json", R"({"noise": {"sigma_rel": 0.01, "vib_amplitude_um": 0.7}, "state": {"d_um": 60}})");
    const std::string base = "simulate --config " + (box / "noisy.json");
    REQUIRE(run(base + " --seed 5 --out " + (box / "a.csv")) == 0);
    REQUIRE(run(base + " --seed 5 --out " + (box / "b.csv")) == 0);
    REQUIRE(run(base + " --seed 6 --out " + (box / "c.csv")) == 0);
    CHECK(slurp(box / "a.csv") == slurp(box / "b.csv"));
    CHECK(slurp(box / "a.csv") != slurp(box / "c.csv"));
}

TEST_CASE("fit round trip through files") {
    Sandbox box;
    write(box / "phi.json", R"({"resonator": {"phi": 0.1}, "state": {"d_um": 154}})");
    REQUIRE(run("simulate --config " + (box / "phi.json") + " --out " + (box / "t.csv")) == 0);
    REQUIRE(run("fit " + (box / "t.csv") + " --out " + (box / "fit.json")) == 0);
    const auto rec = load(box / "fit.json");
    CHECK(rec.at("command") == "fit");
    const auto fit = rec.at("outputs").at("fit");
    CHECK(fit.at("Q_e").get<double>() == doctest::Approx(5e5).epsilon(1e-4));
    CHECK(fit.at("Q_i").get<double>() == doctest::Approx(35000.0).epsilon(1e-4));
    CHECK(fit.at("phi").get<double>() == doctest::Approx(0.1).epsilon(1e-4));
    CHECK(fit.at("f_r_hz").get<double>() == doctest::Approx(6.834683e9).epsilon(1e-4));
}

TEST_CASE("fit error paths") {
    Sandbox box;
    write(box / "empty.csv", "");
    CHECK(run("fit " + (box / "empty.csv")) == 1);
    CHECK(run("fit " + (box / "missing.csv")) == 1);

    write(box / "garbled.csv", "frequency_hz,power_ratio\n1e9,1\n2e9,one\n");
    CHECK(run("fit " + (box / "garbled.csv"), box / "err.txt") == 1);
    CHECK(slurp(box / "err.txt").find("line 3") != std::string::npos);

    std::string flat = "frequency_hz,power_ratio\n";
    for (int i = 0; i < 200; ++i) {
        flat += std::to_string(6.8e9 + 1e3 * i) + ",1\n";
    }
    write(box / "flat.csv", flat);
    CHECK(run("fit " + (box / "flat.csv")) == 3);

    // Q_L/Q_e e^{i phi} = 1.2 + 0.8i: every lineshape-equivalent solution has Q_L > Q_e
    resotune::transmission::SweepTrace t;
    const double f_r = 6.8e9, Q_L = 30000.0, a = std::hypot(1.2, 0.8), phi = std::atan2(0.8, 1.2);
    for (int i = 0; i < 1601; ++i) {
        const double f = f_r + (i - 800) * (10.0 * f_r / Q_L) / 1600.0;
        t.frequencies.push_back(f);
        t.power_ratio.push_back(oracle::s21(f, f_r, Q_L, Q_L / a, phi));
    }
    resotune::io::write_trace_csv(fs::path(box / "nonphys.csv"), t);
    CHECK(run("fit " + (box / "nonphys.csv") + " --out " + (box / "np.json")) == 4);
    CHECK(load(box / "np.json").at("outputs").at("status") == "non_physical");
}

TEST_CASE("tune") {
    Sandbox box;
    REQUIRE(run("tune --distance 300 --out " + (box / "s.json") + " --log-csv " + (box / "s.csv")) == 0);
    const auto out = load(box / "s.json").at("outputs");
    CHECK(out.at("outcome") == "converged");
    CHECK(std::abs(out.at("final_f_r_hz").get<double>() - 6.834683e9) <= 2.05e3);
    CHECK(out.at("steps").get<int>() <= 2000);
    CHECK(slurp(box / "s.csv").rfind("step,position_m,", 0) == 0);

    CHECK(run("tune --target 7.0 --out " + (box / "u.json")) == 5);
    CHECK(load(box / "u.json").at("outputs").at("outcome") == "unreachable");
    CHECK(run("tune --tolerance 0") == 2);
    write(box / "tight.json", R"({"controller": {"max_steps": 1}})");
    CHECK(run("tune --config " + (box / "tight.json") + " --out " + (box / "b.json")) == 6);
}

TEST_CASE("drift") {
    Sandbox box;
    resotune::io::write_series_csv(fs::path(box / "lin.csv"),
                                   resotune::stability::linear_drift_series(6.827815e9, 1000.0, 70 * 3600.0, 120.0));
    REQUIRE(run("drift " + (box / "lin.csv") + " --f0 6.827815 --out " + (box / "d.json")) == 0);
    const auto out = load(box / "d.json").at("outputs");
    CHECK(out.at("ppb_per_hour").get<double>() == doctest::Approx(2.09).epsilon(0.01));
    CHECK(out.at("f0_hz").get<double>() == 6.827815e9);

    write(box / "const.csv", "time_s,f_r_hz\n0,6.8e9\n120,6.8e9\n240,6.8e9\n360,6.8e9\n");
    REQUIRE(run("drift " + (box / "const.csv") + " --out " + (box / "c.json")) == 0);
    CHECK(load(box / "c.json").at("outputs").at("ppb_per_hour").get<double>() == 0.0);

    write(box / "two.csv", "time_s,f_r_hz\n0,6.8e9\n120,6.8e9\n");
    CHECK(run("drift " + (box / "two.csv")) == 2);
}

TEST_CASE("calibrate") {
    Sandbox box;
    REQUIRE(run("calibrate --out " + (box / "m.json")) == 0);
    const auto model = load(box / "m.json").at("outputs").at("model");
    CHECK(model.at("m_max").get<double>() == doctest::Approx(0.072).epsilon(0.01));
    CHECK(model.at("lambda_m").get<double>() == doctest::Approx(240e-6).epsilon(0.03));

    REQUIRE(run("calibrate --f-closest 6.8278 --out " + (box / "z.json")) == 0);
    CHECK(load(box / "z.json").at("outputs").at("model").at("m_max").get<double>() == 0.0);
    CHECK(run("calibrate --f-closest 6.80") == 2);
    CHECK(run("calibrate --peak-sensitivity -1") == 2);
}

TEST_CASE("a session record reproduces its outputs") {
    Sandbox box;
    write(box / "noisy.json", R"({"noise": {"sigma_rel": 0.005}})");
    REQUIRE(run("tune --config " + (box / "noisy.json") + " --seed 11 --distance 450 --out " + (box / "r1.json")) == 0);
    const auto rec = load(box / "r1.json");
    write(box / "snapshot.json", rec.at("config").dump());
    REQUIRE(run("tune --config " + (box / "snapshot.json") + " --seed " + std::to_string(rec.at("seed").get<std::uint64_t>()) +
                " --out " + (box / "r2.json")) == 0);
    CHECK(load(box / "r2.json").at("outputs") == rec.at("outputs"));
}

TEST_CASE("command line misuse") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("fit") == 2);
    CHECK(run("--help") == 0);
    CHECK(run("--version") == 0);
}
