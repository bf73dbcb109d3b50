#include "fibresense/config.hpp"
#include "fibresense/csv.hpp"
#include "fibresense/harness.hpp"
#include "fibresense/identifiability.hpp"
#include "fibresense/ladder.hpp"
#include "fibresense/mlp.hpp"
#include "fibresense/signal_chain.hpp"
#include "fibresense/units.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace fibresense;

namespace {

struct Args {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool quiet = false;
};

/// Merge the manifest's inline sections with every referenced part file.
/// Sections from a part file replace same-named inline sections, so a manifest
/// may either reference files or carry everything inline (as echoed manifests do).
config::ConfigFile assemble(const config::ConfigFile& man) {
    config::ConfigFile merged;
    merged.source = man.source;
    for (const auto& s : man.sections)
        if (!s.name.empty() && s.name != "run" && s.name != "artifacts")
            merged.sections.push_back(s);

    const auto* run = man.find("run");
    if (run) {
        for (const char* key : {"model", "excitation", "noise", "protocol", "sweep", "identify"}) {
            if (!run->has(key)) continue;
            const fs::path part_path = man.source.parent_path() / run->get_string(key);
            const config::ConfigFile part = config::ConfigFile::load(part_path);
            std::set<std::string> incoming;
            for (const auto& s : part.sections)
                if (!s.name.empty()) incoming.insert(s.name);
            std::erase_if(merged.sections,
                          [&](const config::Section& s) { return incoming.count(s.name) > 0; });
            for (const auto& s : part.sections)
                if (!s.name.empty() && s.name != "run") merged.sections.push_back(s);
        }
    }
    return merged;
}

std::uint64_t resolve_seed(const config::ConfigFile& man, const Args& args) {
    if (args.seed_set) return args.seed;
    if (const auto* run = man.find("run")) return run->get_seed("seed", 0);
    return 0;
}

void write_manifest(const fs::path& dir, std::string_view command, std::uint64_t seed,
                    const config::ConfigFile& bundle,
                    const std::vector<std::pair<std::string, std::string>>& artifacts = {}) {
    std::ostringstream out;
    out << "[run]\ncommand = " << command << "\nseed = " << seed << "\n\n";
    if (!artifacts.empty()) {
        out << "[artifacts]\n";
        for (const auto& [k, v] : artifacts) out << k << " = " << v << "\n";
        out << "\n";
    }
    out << bundle.dump();
    io::write_file_atomic(dir / "manifest.txt", out.str());
}

harness::ChainMode chain_mode(const config::ConfigFile& bundle) {
    const auto* proto = bundle.find("protocol");
    const std::string mode = proto ? proto->get_string("chain", "auto") : "auto";
    if (mode == "auto") return harness::ChainMode::Auto;
    if (mode == "analytic") return harness::ChainMode::Analytic;
    if (mode == "full") return harness::ChainMode::Full;
    throw config::ConfigError("protocol: chain must be auto, analytic, or full");
}

std::vector<mlp::LayerSpec> hidden_layers(const config::Section* s,
                                          std::vector<mlp::LayerSpec> fallback) {
    if (!s || !s->has("hidden_units")) return fallback;
    const auto units = s->get_list("hidden_units");
    const auto acts = s->get_string_list("activations");
    if (acts.size() != units.size())
        throw config::ConfigError("mlp: hidden_units and activations lengths differ");
    std::vector<double> l1(units.size(), 0), l2(units.size(), 0);
    if (s->has("l1")) l1 = s->get_list("l1");
    if (s->has("l2")) l2 = s->get_list("l2");
    if (l1.size() != units.size() || l2.size() != units.size())
        throw config::ConfigError("mlp: penalty list lengths differ from hidden_units");
    std::vector<mlp::LayerSpec> layers;
    for (std::size_t i = 0; i < units.size(); ++i)
        layers.push_back({static_cast<int>(units[i]), mlp::activation_from_string(acts[i]), l1[i],
                          l2[i]});
    return layers;
}

harness::StrainRunConfig strain_run_config(const config::ConfigFile& bundle, std::uint64_t seed) {
    harness::StrainRunConfig rc;
    if (const auto* t = bundle.find("train")) rc.train = mlp::TrainConfig::from_config(*t);
    rc.train.seed = seed;
    const auto* m = bundle.find("mlp");
    rc.hidden = hidden_layers(m, rc.hidden);
    if (m) {
        rc.median_window_s = m->get_value("median_window", rc.median_window_s);
        rc.target_range = m->get_value("target_range", rc.target_range);
        rc.run_lsq = m->get_bool("run_lsq", rc.run_lsq);
    }
    return rc;
}

harness::JointRunConfig joint_run_config(const config::ConfigFile& bundle, std::uint64_t seed,
                                         const harness::JointScenarioSpec& scenario) {
    harness::JointRunConfig jc;
    jc.train.batch_size = 64;
    jc.train.optimizer = mlp::Optimizer::Adam;
    jc.train.learning_rate = 0.005;
    jc.train.patience = 250;
    if (const auto* t = bundle.find("train")) jc.train = mlp::TrainConfig::from_config(*t);
    jc.train.seed = seed;
    const auto* m = bundle.find("mlp");
    jc.hidden = hidden_layers(m, jc.hidden);
    if (m) {
        jc.butter_cutoff_hz = m->get_value("butter_cutoff", jc.butter_cutoff_hz);
        jc.butter_order = static_cast<int>(m->get_int("butter_order", jc.butter_order));
        jc.savgol_window_s = m->get_value("savgol_window", jc.savgol_window_s);
        jc.savgol_order = static_cast<int>(m->get_int("savgol_order", jc.savgol_order));
        jc.train_fraction = m->get_value("train_fraction", jc.train_fraction);
    }
    for (const auto& j : scenario.joints) jc.ranges_deg.push_back(j.range_deg);
    return jc;
}

void metric_row(io::CsvWriter& w, const std::string& name, const metrics::Metrics& m) {
    w.row(std::vector<std::string>{name, units::format_double(m.rmse),
                                   units::format_double(m.nrmse), units::format_double(m.r2)});
}

void write_predictions(const fs::path& path, const std::vector<std::string>& names,
                       const std::vector<double>& t, const std::vector<int>& trial,
                       const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref) {
    std::vector<std::string> header{"t_s", "trial"};
    for (const auto& n : names) header.push_back(n + "_pred");
    for (const auto& n : names) header.push_back(n + "_ref");
    io::CsvWriter w(path, header);
    std::vector<double> row(header.size());
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
        row[0] = t[static_cast<std::size_t>(j)];
        row[1] = trial[static_cast<std::size_t>(j)];
        for (Eigen::Index r = 0; r < pred.rows(); ++r) {
            row[2 + static_cast<std::size_t>(r)] = pred(r, j);
            row[2 + static_cast<std::size_t>(pred.rows() + r)] = ref(r, j);
        }
        w.row(row);
    }
    w.commit();
}

void write_history(const fs::path& path,
                   const std::vector<std::pair<int, const mlp::TrainHistory*>>& folds) {
    io::CsvWriter w(path, {"fold", "epoch", "train_loss", "val_metric"});
    for (const auto& [fold, hist] : folds)
        for (std::size_t e = 0; e < hist->train_loss.size(); ++e)
            w.row(std::vector<double>{static_cast<double>(fold), static_cast<double>(e),
                                      hist->train_loss[e], hist->val_metric[e]});
    w.commit();
}

struct SimContext {
    LadderModel model;
    ExcitationConfig exc;
    NoiseConfig noise;
    std::string protocol_type;
    harness::ChainMode mode = harness::ChainMode::Auto;
};

SimContext sim_context(const config::ConfigFile& bundle, std::uint64_t seed) {
    SimContext ctx{LadderModel::from_config(bundle), ExcitationConfig::from_config(bundle),
                   NoiseConfig::from_config(bundle), bundle.require("protocol").get_string("type"),
                   chain_mode(bundle)};
    ctx.noise.seed = seed;
    if (ctx.protocol_type != "staircase" && ctx.protocol_type != "joints")
        throw config::ConfigError("protocol: type must be staircase or joints");
    return ctx;
}

harness::Dataset synthesize(const SimContext& ctx, const config::ConfigFile& bundle,
                            std::uint64_t seed) {
    if (ctx.protocol_type == "staircase") {
        const auto spec = harness::StaircaseSpec::from_config(bundle, ctx.model);
        return harness::synthesize_staircase(ctx.model, ctx.exc, ctx.noise, spec, ctx.mode);
    }
    auto spec = harness::JointScenarioSpec::from_config(bundle, ctx.model);
    spec.seed = seed;
    return harness::synthesize_joint(ctx.model, ctx.exc, ctx.noise, spec, ctx.mode);
}

fs::path ensure_out_dir(const Args& args) {
    if (args.out.empty()) throw config::ConfigError("--out directory is required");
    fs::path dir(args.out);
    fs::create_directories(dir);
    return dir;
}

int cmd_sweep(const config::ConfigFile& man, const Args& args) {
    const config::ConfigFile bundle = assemble(man);
    const std::uint64_t seed = resolve_seed(man, args);
    const fs::path out = ensure_out_dir(args);
    const LadderModel model = LadderModel::from_config(bundle);
    const auto& sw = bundle.require("sweep");

    const double fmin = sw.get_value("fmin");
    const double fmax = sw.get_value("fmax");
    const auto points = static_cast<int>(sw.get_int("points", 121));
    const std::string spacing = sw.get_string("spacing", "log");
    const double default_strain = sw.get_value("strain", 0.4);
    if (fmin <= 0 || fmax <= fmin) throw config::ConfigError("sweep: need 0 < fmin < fmax");
    if (points < 2) throw config::ConfigError("sweep: points must be >= 2");
    if (spacing != "log" && spacing != "linear")
        throw config::ConfigError("sweep: spacing must be log or linear");

    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double u = static_cast<double>(i) / (points - 1);
        grid[static_cast<std::size_t>(i)] =
            spacing == "log" ? fmin * std::pow(fmax / fmin, u) : fmin + u * (fmax - fmin);
    }

    std::vector<std::string> case_names{"rest"};
    if (sw.has("cases")) {
        case_names.clear();
        std::stringstream ss(sw.get_string("cases"));
        std::string item;
        while (std::getline(ss, item, '|')) {
            const auto b = item.find_first_not_of(' ');
            const auto e = item.find_last_not_of(' ');
            if (b != std::string::npos) case_names.push_back(item.substr(b, e - b + 1));
        }
        if (case_names.empty()) throw config::ConfigError("sweep: empty case list");
    }

    const auto rest_curve = frequency_sweep(model, std::vector<double>(model.size(), 0.0), grid);
    for (const std::string& name : case_names) {
        std::vector<double> strains(model.size(), 0.0);
        if (name != "rest") {
            std::string label = name;
            double eps = default_strain;
            if (const auto colon = name.find(':'); colon != std::string::npos) {
                label = name.substr(0, colon);
                eps = units::parse_value(name.substr(colon + 1));
            }
            strains[model.index_of(label)] = eps;
        }
        const auto curve = frequency_sweep(model, strains, grid);

        std::string file_name = "sweep_" + name + ".csv";
        for (char& ch : file_name)
            if (ch == ':' || ch == '/' || ch == ' ') ch = '_';
        io::CsvWriter w(out / file_name,
                        {"freq_hz", "re_ohm", "im_ohm", "cp_farad", "delta_cp_farad"});
        for (std::size_t i = 0; i < curve.size(); ++i) {
            const auto& pt = curve[i];
            w.row(std::vector<double>{pt.freq_hz, pt.z.real(), pt.z.imag(), pt.cp,
                                      pt.cp - rest_curve[i].cp});
        }
        w.commit();
        if (!args.quiet)
            std::cout << file_name << ": " << curve.size() << " points\n";
    }
    write_manifest(out, "sweep", seed, bundle);
    return 0;
}

int cmd_simulate(const config::ConfigFile& man, const Args& args) {
    const config::ConfigFile bundle = assemble(man);
    const std::uint64_t seed = resolve_seed(man, args);
    const fs::path out = ensure_out_dir(args);
    const SimContext ctx = sim_context(bundle, seed);
    const harness::Dataset ds = synthesize(ctx, bundle, seed);
    harness::save_dataset(ds, out);
    write_manifest(out, "simulate", seed, bundle, {{"data_dir", "."}});
    if (!args.quiet)
        std::cout << "frames: " << ds.frames.size() << ", trials: " << ds.distinct_trials().size()
                  << ", frame rate: " << units::format_double(ds.frame_rate) << " Hz\n";
    return 0;
}

int cmd_train(const config::ConfigFile& man, const Args& args) {
    const config::ConfigFile bundle = assemble(man);
    const std::uint64_t seed = resolve_seed(man, args);
    const fs::path out = ensure_out_dir(args);
    const SimContext ctx = sim_context(bundle, seed);
    const harness::Dataset ds = synthesize(ctx, bundle, seed);
    harness::save_dataset(ds, out);

    io::CsvWriter metrics_csv(out / "metrics.csv", {"target", "rmse", "nrmse", "r2"});
    if (ctx.protocol_type == "staircase") {
        const auto rc = strain_run_config(bundle, seed);
        const auto rep = harness::run_strain_validation(ds, ctx.model, ctx.exc, rc);
        rep.model.save(out / "model.mlp");

        for (const auto& tr : rep.per_segment) metric_row(metrics_csv, tr.name, tr.m);
        metric_row(metrics_csv, "aggregate", rep.aggregate);
        for (const auto& tr : rep.lsq_per_segment) metric_row(metrics_csv, "lsq_" + tr.name, tr.m);
        if (!rep.lsq_per_segment.empty())
            metric_row(metrics_csv, "lsq_aggregate", rep.lsq_aggregate);
        metrics_csv.commit();

        write_predictions(out / "predictions.csv", ds.target_names, rep.test_time, rep.test_trial,
                          rep.predictions, rep.references);
        write_history(out / "history.csv", {{0, &rep.history}});

        std::ostringstream info;
        info << "protocol: staircase\n"
             << "epochs: " << rep.history.train_loss.size()
             << ", best epoch: " << rep.history.best_epoch
             << ", early stop: " << (rep.history.early_stopped ? "yes" : "no") << "\n";
        for (const auto& tr : rep.per_segment)
            info << tr.name << ": rmse " << units::format_double(tr.m.rmse) << ", spearman "
                 << units::format_double(tr.spearman) << "\n";
        info << "lsq frames not converged: " << rep.lsq_unconverged << "\n";
        io::write_file_atomic(out / "report.txt", info.str());
        if (!args.quiet)
            std::cout << "aggregate rmse: " << units::format_double(rep.aggregate.rmse)
                      << ", r2: " << units::format_double(rep.aggregate.r2) << "\n";
    } else {
        const auto scenario = harness::JointScenarioSpec::from_config(bundle, ctx.model);
        const auto jc = joint_run_config(bundle, seed, scenario);
        const auto rep = harness::run_joint_scenario(ds, jc);
        rep.model.save(out / "model.mlp");
        const auto final_rep = harness::evaluate_joint_model(ds, rep.model, jc);

        for (const auto& tr : rep.per_joint) metric_row(metrics_csv, tr.name, tr.m);
        metric_row(metrics_csv, "aggregate", rep.aggregate);
        for (const auto& tr : final_rep.per_joint) metric_row(metrics_csv, tr.name + "_final", tr.m);
        metric_row(metrics_csv, "aggregate_final", final_rep.aggregate);
        metrics_csv.commit();

        write_predictions(out / "predictions.csv", ds.target_names, rep.test_time, rep.test_trial,
                          rep.predictions, rep.references);
        std::vector<std::pair<int, const mlp::TrainHistory*>> hists;
        for (std::size_t k = 0; k < rep.folds.size(); ++k)
            hists.emplace_back(rep.folds[k].test_trial, &rep.folds[k].history);
        write_history(out / "history.csv", hists);

        std::ostringstream info;
        info << "protocol: joints\nfolds: " << rep.folds.size() << "\n";
        for (const auto& tr : rep.per_joint)
            info << tr.name << ": rmse " << units::format_double(tr.m.rmse) << " deg, spearman "
                 << units::format_double(tr.spearman) << "\n";
        io::write_file_atomic(out / "report.txt", info.str());
        if (!args.quiet)
            std::cout << "pooled rmse: " << units::format_double(rep.aggregate.rmse) << " deg\n";
    }
    write_manifest(out, "train", seed, bundle, {{"data_dir", "."}, {"model_file", "model.mlp"}});
    return 0;
}

int cmd_eval(const config::ConfigFile& man, const Args& args) {
    const config::ConfigFile bundle = assemble(man);
    const std::uint64_t seed = resolve_seed(man, args);
    const fs::path out = ensure_out_dir(args);

    const auto& artifacts = man.require("artifacts");
    const fs::path base = man.source.parent_path();
    const fs::path data_dir = base / artifacts.get_string("data_dir");
    const fs::path model_file = base / artifacts.get_string("model_file", "model.mlp");

    const harness::Dataset ds = harness::load_dataset(data_dir);
    const mlp::MLPModel trained = mlp::MLPModel::load(model_file);
    const std::string type = bundle.require("protocol").get_string("type");

    io::CsvWriter metrics_csv(out / "metrics.csv", {"target", "rmse", "nrmse", "r2"});
    if (type == "staircase") {
        const LadderModel model = LadderModel::from_config(bundle);
        const ExcitationConfig exc = ExcitationConfig::from_config(bundle);
        const auto rc = strain_run_config(bundle, seed);
        const auto rep = harness::evaluate_strain_model(ds, trained, model, exc, rc);

        for (const auto& tr : rep.per_segment) metric_row(metrics_csv, tr.name, tr.m);
        metric_row(metrics_csv, "aggregate", rep.aggregate);
        for (const auto& tr : rep.lsq_per_segment) metric_row(metrics_csv, "lsq_" + tr.name, tr.m);
        if (!rep.lsq_per_segment.empty())
            metric_row(metrics_csv, "lsq_aggregate", rep.lsq_aggregate);
        metrics_csv.commit();
        write_predictions(out / "predictions.csv", ds.target_names, rep.test_time, rep.test_trial,
                          rep.predictions, rep.references);
        if (!args.quiet)
            std::cout << "aggregate rmse: " << units::format_double(rep.aggregate.rmse) << "\n";
    } else if (type == "joints") {
        const LadderModel model = LadderModel::from_config(bundle);
        const auto scenario = harness::JointScenarioSpec::from_config(bundle, model);
        const auto jc = joint_run_config(bundle, seed, scenario);
        const auto rep = harness::evaluate_joint_model(ds, trained, jc);

        for (const auto& tr : rep.per_joint) metric_row(metrics_csv, tr.name + "_final", tr.m);
        metric_row(metrics_csv, "aggregate_final", rep.aggregate);
        metrics_csv.commit();
        write_predictions(out / "predictions.csv", ds.target_names, rep.test_time, rep.test_trial,
                          rep.predictions, rep.references);
        if (!args.quiet)
            std::cout << "final-trial rmse: " << units::format_double(rep.aggregate.rmse)
                      << " deg\n";
    } else {
        throw config::ConfigError("protocol: type must be staircase or joints");
    }
    write_manifest(out, "eval", seed, bundle,
                   {{"data_dir", fs::weakly_canonical(data_dir).string()},
                    {"model_file", fs::weakly_canonical(model_file).string()}});
    return 0;
}

int cmd_identify(const config::ConfigFile& man, const Args& args) {
    const config::ConfigFile bundle = assemble(man);
    const std::uint64_t seed = resolve_seed(man, args);
    const LadderModel model = LadderModel::from_config(bundle);
    const auto& id = bundle.require("identify");

    const auto tones = id.get_list("tones");
    std::vector<double> strains(model.size(), 0.0);
    if (id.has("strains")) {
        strains = id.get_list("strains");
        if (strains.size() != model.size())
            throw config::ConfigError("identify: strains length does not match segment count");
    }
    std::optional<double> tol;
    if (id.has("tolerance")) tol = id.get_value("tolerance", 0.0);
    const double rel_step = id.get_value("rel_step", 1e-6);

    const auto sens = sensitivity_jacobian(model, strains, tones, rel_step);
    const auto rep = local_identifiability(sens.j, tol);

    std::cout << "identifiable: " << (rep.identifiable ? "yes" : "no") << " (rank " << rep.rank
              << "/" << sens.j.cols() << ")\n";
    std::cout << "singular values:";
    for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i)
        std::cout << ' ' << units::format_double(rep.singular_values(i));
    std::cout << "\ntolerance: " << units::format_double(rep.tolerance) << "\n";

    if (!args.out.empty()) {
        const fs::path out = ensure_out_dir(args);
        io::CsvWriter w(out / "singular_values.csv", {"index", "sigma"});
        for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i)
            w.row(std::vector<double>{static_cast<double>(i), rep.singular_values(i)});
        w.commit();
        std::ostringstream info;
        info << "identifiable: " << (rep.identifiable ? "yes" : "no") << "\n"
             << "rank: " << rep.rank << "/" << sens.j.cols() << "\n"
             << "tolerance: " << units::format_double(rep.tolerance) << "\n";
        io::write_file_atomic(out / "report.txt", info.str());
        write_manifest(out, "identify", seed, bundle);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"strain-sensing fibre simulation and reconstruction toolkit"};
    app.require_subcommand(1);

    Args args;
    std::string command;
    for (const auto& [name, desc] :
         std::vector<std::pair<std::string, std::string>>{
             {"sweep", "impedance and capacitance frequency sweeps"},
             {"simulate", "synthesize a lock-in frame dataset for a motion protocol"},
             {"train", "synthesize, train, and score reconstruction models"},
             {"eval", "re-score saved artifacts from a train/simulate manifest"},
             {"identify", "local identifiability of the ladder from a tone set"}}) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", args.config, "manifest or self-contained config file")
            ->required();
        sub->add_option("--out", args.out, "output directory");
        sub->add_option("--seed", args.seed, "override the manifest seed");
        sub->add_flag("--quiet", args.quiet, "suppress progress output");
        sub->callback([&command, name = name] { command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    for (const CLI::App* sub : app.get_subcommands())
        args.seed_set = args.seed_set || sub->count("--seed") > 0;

    try {
        const config::ConfigFile man = config::ConfigFile::load(args.config);
        if (command == "sweep") return cmd_sweep(man, args);
        if (command == "simulate") return cmd_simulate(man, args);
        if (command == "train") return cmd_train(man, args);
        if (command == "eval") return cmd_eval(man, args);
        if (command == "identify") return cmd_identify(man, args);
        throw config::ConfigError("unknown command");
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}
