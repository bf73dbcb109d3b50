#include "doctest.h"

#include "cli_helpers.hpp"
#include "fibresense/csv.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

// End-to-end checks of the command line tool: exit codes, file layout, and
// the reproduce-from-manifest contract. Every invocation is a real child
// process of the installed binary.

namespace fs = std::filesystem;
using cli::config_path;
using cli::quoted;
using cli::scratch;
using cli::slurp;
using fibresense::io::CsvTable;
using fibresense::io::write_file_atomic;

TEST_CASE("cli maps usage and config errors onto the exit code contract") {
    const fs::path dir = scratch("cli_errors");
    const fs::path log = dir / "log.txt";

    CHECK(cli::run("--help", log) == 0);
    CHECK(cli::run("sweep --help", log) == 0);
    CHECK(cli::run("", log) == 2);                       // missing subcommand
    CHECK(cli::run("frobnicate", log) == 2);             // unknown subcommand
    CHECK(cli::run("sweep", log) == 2);                  // missing --config
    CHECK(cli::run("sweep --config " + quoted(dir / "nope.cfg"), log) == 2);

    // Structurally broken config file.
    const fs::path broken = dir / "broken.cfg";
    write_file_atomic(broken, "[sweep\nfmin = 1k\n");
    CHECK(cli::run("sweep --config " + quoted(broken), log) == 2);
    const std::string msg = slurp(log);
    CHECK(msg.find("config error") != std::string::npos);

    // Valid syntax, invalid physics: an excitation with no tones.
    const fs::path no_tones = dir / "no_tones.cfg";
    write_file_atomic(no_tones,
                      "[run]\nmodel = " + config_path("ladder_bench.cfg").string() +
                          "\n\n[excitation]\nfs = 1M\nblock_len = 32768\ntones =\ngain = "
                          "100u\n\n[protocol]\ntype = staircase\n\n[staircase]\nrepetitions "
                          "= 1\n");
    CHECK(cli::run("simulate --config " + quoted(no_tones) + " --out " +
                       quoted(dir / "out_no_tones"),
                   log) == 2);

    // Unknown protocol type.
    const fs::path bad_proto = dir / "bad_proto.cfg";
    write_file_atomic(bad_proto, "[run]\nmodel = " + config_path("ladder_bench.cfg").string() +
                                     "\nexcitation = " +
                                     config_path("excitation_4tone.cfg").string() +
                                     "\n\n[protocol]\ntype = pilates\n");
    CHECK(cli::run("simulate --config " + quoted(bad_proto) + " --out " +
                       quoted(dir / "out_bad_proto"),
                   log) == 2);
}

TEST_CASE("cli sweep writes a zero delta column at rest and strain-ordered deltas") {
    const fs::path dir = scratch("cli_sweep");
    const fs::path log = dir / "log.txt";
    const fs::path out = dir / "bench";

    REQUIRE(cli::run("sweep --config " + quoted(config_path("sweep_bench.cfg")) + " --out " +
                         quoted(out) + " --quiet",
                     log) == 0);

    for (const char* name :
         {"sweep_rest.csv", "sweep_I.csv", "sweep_II.csv", "sweep_III.csv", "sweep_IV.csv",
          "manifest.txt"})
        CHECK(fs::exists(out / name));

    const CsvTable rest = CsvTable::load(out / "sweep_rest.csv");
    REQUIRE(rest.header ==
            std::vector<std::string>{"freq_hz", "re_ohm", "im_ohm", "cp_farad", "delta_cp_farad"});
    REQUIRE(rest.rows.size() == 121);
    CHECK(rest.rows.front()[0] == doctest::Approx(1e3).epsilon(1e-9));
    CHECK(rest.rows.back()[0] == doctest::Approx(1e6).epsilon(1e-9));
    for (const auto& row : rest.rows) {
        CHECK(row[4] == 0.0); // the rest case differs from itself nowhere
        CHECK(row[3] > 0.0);
    }

    // A stretched segment raises the apparent capacitance somewhere in band.
    const CsvTable seg1 = CsvTable::load(out / "sweep_I.csv");
    const std::size_t d = seg1.column("delta_cp_farad");
    double peak = 0;
    for (const auto& row : seg1.rows) peak = std::max(peak, row[d]);
    CHECK(peak > 0.0);

    // Strain levels on one segment produce ordered deltas at a fixed tone.
    const fs::path levels_cfg = dir / "levels.cfg";
    write_file_atomic(levels_cfg,
                      "[run]\nmodel = " + config_path("ladder_bench.cfg").string() +
                          "\n\n[sweep]\nfmin = 10k\nfmax = 100k\npoints = 5\nspacing = "
                          "log\ncases = II:0.1 | II:0.2 | II:0.3 | II:0.4\n");
    const fs::path lout = dir / "levels";
    REQUIRE(cli::run("sweep --config " + quoted(levels_cfg) + " --out " + quoted(lout) +
                         " --quiet",
                     log) == 0);
    // At 10 kHz the response is positive; at 100 kHz a deep segment's delta is
    // negative (the strained shunt shifts the input phase), so compare magnitudes there.
    double prev_low = 0, prev_high = 0;
    for (const char* name :
         {"sweep_II_0.1.csv", "sweep_II_0.2.csv", "sweep_II_0.3.csv", "sweep_II_0.4.csv"}) {
        const CsvTable t = CsvTable::load(lout / name);
        const std::size_t dc = t.column("delta_cp_farad");
        const double low = t.rows.front()[dc];  // 10 kHz
        const double high = t.rows.back()[dc];  // 100 kHz
        CHECK(low > prev_low);
        CHECK(std::abs(high) > prev_high);
        prev_low = low;
        prev_high = std::abs(high);
    }

    const std::string manifest = slurp(out / "manifest.txt");
    CHECK(manifest.find("command = sweep") != std::string::npos);
    CHECK(manifest.find("[segment]") != std::string::npos); // self-contained echo
    CHECK(manifest.find("[sweep]") != std::string::npos);
}

TEST_CASE("cli simulate is byte-reproducible for a fixed seed") {
    const fs::path dir = scratch("cli_sim");
    const fs::path log = dir / "log.txt";

    const fs::path cfg = dir / "sim.cfg";
    write_file_atomic(
        cfg, "[run]\nmodel = " + config_path("ladder_bench.cfg").string() + "\nexcitation = " +
                 config_path("excitation_4tone.cfg").string() + "\nnoise = " +
                 config_path("noise_60db.cfg").string() +
                 "\nseed = 1\n\n[protocol]\ntype = staircase\nchain = auto\n\n[staircase]\nstep "
                 "= 0.2\nmax_strain = 0.4\nramp_rate = 0.2\nhold = 0.5\nrest_pad = "
                 "0.5\nrepetitions = 1\ncombos = I | II\n");

    const fs::path a = dir / "a";
    const fs::path b = dir / "b";
    const fs::path c = dir / "c";
    REQUIRE(cli::run("simulate --config " + quoted(cfg) + " --out " + quoted(a) +
                         " --seed 7 --quiet",
                     log) == 0);
    REQUIRE(cli::run("simulate --config " + quoted(cfg) + " --out " + quoted(b) +
                         " --seed 7 --quiet",
                     log) == 0);
    REQUIRE(cli::run("simulate --config " + quoted(cfg) + " --out " + quoted(c) +
                         " --seed 8 --quiet",
                     log) == 0);

    for (const char* name : {"frames.csv", "targets.csv", "manifest.txt"})
        CHECK(slurp(a / name) == slurp(b / name));
    CHECK(slurp(a / "manifest.txt").find("seed = 7") != std::string::npos);

    // A different seed redraws the noise but not the deterministic targets.
    CHECK(slurp(a / "frames.csv") != slurp(c / "frames.csv"));
    CHECK(slurp(a / "targets.csv") == slurp(c / "targets.csv"));

    // Frame count tracks protocol duration at the demodulated frame rate:
    // per block, rest + plateaus 0.2/0.4/0.2 (ramp 1 s, hold 0.5 s each) +
    // final ramp + rest = 6.5 s, two combo blocks, frames floored.
    const CsvTable frames = CsvTable::load(a / "frames.csv");
    const double frame_rate = 1e6 / 32768;
    const double expected = std::floor(2 * 6.5 * frame_rate);
    CHECK(std::abs(static_cast<double>(frames.rows.size()) - expected) <= 1.0);
}

TEST_CASE("cli train emits a full artifact set that eval reproduces exactly") {
    const fs::path dir = scratch("cli_train");
    const fs::path log = dir / "log.txt";

    const fs::path cfg = dir / "study.cfg";
    write_file_atomic(
        cfg,
        "[run]\nmodel = " + config_path("ladder_bench.cfg").string() + "\nexcitation = " +
            config_path("excitation_4tone.cfg").string() + "\nnoise = " +
            config_path("noise_60db.cfg").string() +
            "\nseed = 3\n\n[protocol]\ntype = staircase\nchain = auto\n\n[staircase]\nstep = "
            "0.2\nmax_strain = 0.4\nramp_rate = 0.1\nhold = 1\nrest_pad = 1\nrepetitions = "
            "3\ncombos = I | III\n\n[train]\noptimizer = adagrad\nlearning_rate = "
            "0.1\nbatch_size = 256\npatience = 15\nmax_epochs = 60\n\n[mlp]\nhidden_units = "
            "12\nactivations = tanh\nmedian_window = 0.5\ntarget_range = 0.4\nrun_lsq = true\n");

    const fs::path tout = dir / "train_out";
    REQUIRE(cli::run("train --config " + quoted(cfg) + " --out " + quoted(tout) + " --quiet",
                     log) == 0);

    for (const char* name : {"frames.csv", "targets.csv", "metrics.csv", "model.mlp",
                             "predictions.csv", "history.csv", "report.txt", "manifest.txt"})
        CHECK(fs::exists(tout / name));

    const CsvTable metrics = CsvTable::load(tout / "metrics.csv");
    REQUIRE(metrics.header == std::vector<std::string>{"target", "rmse", "nrmse", "r2"});
    std::vector<std::string> targets;
    for (const auto& row : metrics.raw) targets.push_back(row.at(0));
    CHECK(targets == std::vector<std::string>{"eps_I", "eps_II", "eps_III", "eps_IV",
                                              "aggregate", "lsq_eps_I", "lsq_eps_II",
                                              "lsq_eps_III", "lsq_eps_IV", "lsq_aggregate"});
    CHECK(slurp(tout / "report.txt").find("protocol: staircase") != std::string::npos);

    // Re-scoring the saved artifacts from the echoed manifest reproduces the
    // training-run metrics and predictions byte for byte.
    const fs::path eout = dir / "eval_out";
    REQUIRE(cli::run("eval --config " + quoted(tout / "manifest.txt") + " --out " +
                         quoted(eout) + " --quiet",
                     log) == 0);
    CHECK(slurp(eout / "metrics.csv") == slurp(tout / "metrics.csv"));
    CHECK(slurp(eout / "predictions.csv") == slurp(tout / "predictions.csv"));

    // Pointing the manifest at a missing model is a config error, not a crash.
    const fs::path orphan = dir / "orphan";
    fs::create_directories(orphan);
    write_file_atomic(orphan / "manifest.txt", slurp(tout / "manifest.txt"));
    fs::copy_file(tout / "frames.csv", orphan / "frames.csv");
    fs::copy_file(tout / "targets.csv", orphan / "targets.csv");
    CHECK(cli::run("eval --config " + quoted(orphan / "manifest.txt") + " --out " +
                       quoted(dir / "eval_orphan"),
                   log) == 2);
    CHECK(slurp(log).find("error") != std::string::npos);
}

TEST_CASE("cli identify reports rank and honors the tolerance knob") {
    const fs::path dir = scratch("cli_identify");
    const fs::path log = dir / "log.txt";

    const fs::path out = dir / "id";
    REQUIRE(cli::run("identify --config " + quoted(config_path("identify_bench.cfg")) +
                         " --out " + quoted(out),
                     log) == 0);
    const std::string stdout_text = slurp(log);
    CHECK(stdout_text.find("identifiable: yes (rank 8/8)") != std::string::npos);
    CHECK(stdout_text.find("singular values:") != std::string::npos);

    const CsvTable sv = CsvTable::load(out / "singular_values.csv");
    REQUIRE(sv.rows.size() == 8);
    for (std::size_t i = 1; i < sv.rows.size(); ++i)
        CHECK(sv.rows[i][1] <= sv.rows[i - 1][1]);
    CHECK(slurp(out / "report.txt").find("rank: 8/8") != std::string::npos);

    // One tone cannot separate eight parameters.
    const fs::path single = dir / "single.cfg";
    write_file_atomic(single, "[run]\nmodel = " + config_path("ladder_bench.cfg").string() +
                                  "\n\n[identify]\ntones = 25k\n");
    REQUIRE(cli::run("identify --config " + quoted(single), log) == 0);
    CHECK(slurp(log).find("identifiable: no (rank ") != std::string::npos);

    // An absurdly strict tolerance rejects even the four-tone set.
    const fs::path strict = dir / "strict.cfg";
    write_file_atomic(strict, "[run]\nmodel = " + config_path("ladder_bench.cfg").string() +
                                  "\n\n[identify]\ntones = 12.5k, 25k, 50k, 100k\ntolerance "
                                  "= 0.5\n");
    REQUIRE(cli::run("identify --config " + quoted(strict), log) == 0);
    CHECK(slurp(log).find("identifiable: no") != std::string::npos);
}
