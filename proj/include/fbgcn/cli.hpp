#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbgcn.hpp"

namespace fbgcn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

inline std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * fraction);
    return buf;
}

inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd r;
    if (xs.empty()) return r;
    for (double x : xs) r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        for (double x : xs) r.std += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(r.std / static_cast<double>(xs.size() - 1));
    }
    return r;
}

// Table-style statistics line: nodes links components features classes
// sparsity [sparsity_T].
inline void cmd_stats(const std::string& path, const std::optional<ProximityOptions>& highorder, std::ostream& out) {
    const Dataset d = load_dataset(path);
    const DatasetStats s = dataset_stats(d);
    out << s.nodes << ' ' << s.links << ' ' << s.components << ' ' << s.features << ' ' << s.classes << ' '
        << percent(sparsity(renormalize_adjacency(d.adjacency)));
    if (highorder) out << ' ' << percent(sparsity(highorder_preprocess(d.adjacency, *highorder)));
    out << '\n';
}

inline void cmd_preprocess(const std::string& path, const ProximityOptions& opt, const std::string& output,
                           std::ostream& out) {
    const Dataset d = load_dataset(path);
    const SparseSym a = highorder_preprocess(d.adjacency, opt);
    out << "order " << opt.order << " threshold " << detail::format_double(opt.threshold) << " nnz " << a.nnz()
        << " sparsity " << percent(sparsity(a)) << '\n';
    if (!output.empty()) {
        std::ofstream f(output);
        if (!f) throw DataError("cannot write " + output);
        // Upper triangle including the diagonal, "row col value".
        for (std::int64_t i = 0; i < a.n(); ++i) {
            auto cols = a.csr().row_cols(i);
            auto vals = a.csr().row_values(i);
            for (std::size_t p = 0; p < cols.size(); ++p)
                if (cols[p] >= i) f << i << ' ' << cols[p] << ' ' << detail::format_double(vals[p]) << '\n';
        }
    }
}

inline void cmd_eigs(const std::string& path, std::int64_t k, double tol, std::uint64_t seed,
                     const std::optional<ProximityOptions>& highorder, const std::string& output, std::ostream& out) {
    const Dataset d = load_dataset(path);
    const SparseSym a = highorder ? highorder_preprocess(d.adjacency, *highorder) : renormalize_adjacency(d.adjacency);
    LanczosOptions opt;
    opt.tol = tol;
    opt.seed = seed;
    const SpectralBasis b = compute_spectral_basis(a, k, opt);
    if (output.empty()) {
        write_basis(b, out);
    } else {
        std::ofstream f(output);
        if (!f) throw DataError("cannot write " + output);
        write_basis(b, f);
    }
}

struct TrainArgs {
    std::string model = "gcn";
    bool highorder = false;
    int order = 5;
    double threshold = 1e-4;
    std::string split = "canonical";
    int repeats = 1;
    int inits = 1;
    bool quiet = false;
    std::string basis_path;
    TrainConfig config;
};

inline void cmd_train(const std::string& path, TrainArgs args, std::ostream& out) {
    const Dataset d = load_dataset(path);
    TrainConfig& cfg = args.config;
    cfg.model_kind = args.model == "fishergcn" ? ModelKind::fishergcn : ModelKind::gcn;
    if (args.highorder) cfg.highorder = ProximityOptions{args.order, args.threshold};
    if (args.split == "canonical" && !d.canonical_split)
        throw UsageError("dataset has no split.txt; use --split random");
    if (args.repeats < 1 || args.inits < 1) throw UsageError("--repeats and --inits must be >= 1");
    cfg.validate();

    TrainConfig prep_cfg = cfg;
    if (!args.basis_path.empty()) prep_cfg.model_kind = ModelKind::gcn;
    PreparedGraph g = prepare_graph(d, prep_cfg, cfg.seed);
    if (cfg.model_kind == ModelKind::fishergcn && !args.basis_path.empty()) {
        g.basis = read_basis(args.basis_path);
        if (g.basis->n() != d.n) throw DataError("basis artifact dimension differs from dataset");
        cfg.k = g.basis->k;
    }

    const bool single = args.repeats == 1 && args.inits == 1;
    std::vector<double> accs, losses;
    for (int r = 0; r < args.repeats; ++r) {
        const Split split = args.split == "canonical" ? *d.canonical_split : planetoid_ratio_split(d, cfg.seed + r);
        for (int i = 0; i < args.inits; ++i) {
            TrainConfig run = cfg;
            run.seed = cfg.seed + static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(args.inits) + i;
            EpochCallback cb;
            if (!args.quiet && single)
                cb = [&](const EpochRecord& e) {
                    out << e.epoch << ' ' << fixed(e.train_loss) << ' ' << fixed(e.val_loss) << ' ' << fixed(e.val_acc) << '\n';
                };
            const TrainResult res = train(d, split, run, g, cb);
            out << "summary split " << r << " init " << i << " test_loss " << fixed(res.test_loss) << " test_acc "
                << fixed(res.test_acc) << " epochs " << res.epochs << " termination " << to_string(res.termination)
                << '\n';
            accs.push_back(res.test_acc);
            losses.push_back(res.test_loss);
        }
    }
    if (!single) {
        const auto a = mean_std(accs);
        const auto l = mean_std(losses);
        out << "aggregate runs " << accs.size() << " test_acc " << fixed(100.0 * a.mean, 2) << "+-" << fixed(100.0 * a.std, 2)
            << " test_loss " << fixed(l.mean, 4) << "+-" << fixed(l.std, 4) << '\n';
    }
}

// Entry point shared by the executable and the tests. Returns the process
// exit code; diagnostics go to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fisher-Bures adversary GCN toolkit"};
    app.require_subcommand(1);

    std::string dataset;
    std::optional<int> stats_order;
    std::optional<double> stats_threshold;
    auto* stats = app.add_subcommand("stats", "dataset statistics");
    stats->add_option("dataset", dataset, "container directory")->required();
    stats->add_option("--order", stats_order, "also report sparsity after high-order preprocessing with order T");
    stats->add_option("--threshold", stats_threshold, "proximity threshold nu");

    ProximityOptions pre_opt;
    std::string pre_output;
    auto* pre = app.add_subcommand("preprocess", "high-order proximity preprocessing");
    pre->add_option("dataset", dataset, "container directory")->required();
    pre->add_option("--order", pre_opt.order, "walk order T")->capture_default_str();
    pre->add_option("--threshold", pre_opt.threshold, "threshold nu")->capture_default_str();
    pre->add_option("--output", pre_output, "write the matrix as 'row col value' (upper triangle)");

    std::int64_t eig_k = 10;
    double eig_tol = 1e-10;
    std::uint64_t eig_seed = 0;
    bool eig_highorder = false;
    ProximityOptions eig_pre;
    std::string eig_output;
    auto* eigs = app.add_subcommand("eigs", "top-k spectral basis of the density matrix");
    eigs->add_option("dataset", dataset, "container directory")->required();
    eigs->add_option("--k", eig_k, "rank")->capture_default_str();
    eigs->add_option("--tol", eig_tol, "Lanczos tolerance")->capture_default_str();
    eigs->add_option("--seed", eig_seed, "start-vector seed")->capture_default_str();
    eigs->add_flag("--highorder", eig_highorder, "use the high-order proximity matrix");
    eigs->add_option("--order", eig_pre.order, "walk order T")->capture_default_str();
    eigs->add_option("--threshold", eig_pre.threshold, "threshold nu")->capture_default_str();
    eigs->add_option("--output", eig_output, "artifact path (default: stdout)");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "train GCN / FisherGCN");
    tr->add_option("dataset", dataset, "container directory")->required();
    tr->add_option("--model", ta.model, "gcn or fishergcn")->check(CLI::IsMember({"gcn", "fishergcn"}))->capture_default_str();
    tr->add_flag("--highorder", ta.highorder, "preprocess the adjacency with high-order proximities");
    tr->add_option("--order", ta.order, "walk order T")->capture_default_str();
    tr->add_option("--threshold", ta.threshold, "threshold nu")->capture_default_str();
    tr->add_option("--k", ta.config.k, "perturbation rank")->capture_default_str();
    tr->add_option("--radius", ta.config.radius, "perturbation radius epsilon")->capture_default_str();
    tr->add_option("--num-perturb", ta.config.M, "perturbations per step M")->capture_default_str();
    tr->add_option("--lr", ta.config.lr, "learning rate")->capture_default_str();
    tr->add_option("--hidden", ta.config.hidden, "hidden units")->capture_default_str();
    tr->add_option("--dropout", ta.config.dropout, "dropout rate")->capture_default_str();
    tr->add_option("--weight-decay", ta.config.weight_decay, "L2 on the first layer")->capture_default_str();
    tr->add_option("--max-epochs", ta.config.max_epochs, "epoch cap")->capture_default_str();
    tr->add_option("--split", ta.split, "canonical or random")->check(CLI::IsMember({"canonical", "random"}))->capture_default_str();
    tr->add_option("--seed", ta.config.seed, "base seed")->capture_default_str();
    tr->add_option("--repeats", ta.repeats, "number of splits (random) or repetitions")->capture_default_str();
    tr->add_option("--inits", ta.inits, "initializations per split")->capture_default_str();
    tr->add_option("--basis", ta.basis_path, "reuse a spectral basis artifact written by eigs");
    tr->add_flag("--quiet", ta.quiet, "omit per-epoch lines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (*stats) {
            std::optional<ProximityOptions> ho;
            if (stats_order || stats_threshold) {
                ho = ProximityOptions{};
                if (stats_order) ho->order = *stats_order;
                if (stats_threshold) ho->threshold = *stats_threshold;
            }
            cmd_stats(dataset, ho, out);
        } else if (*pre) {
            cmd_preprocess(dataset, pre_opt, pre_output, out);
        } else if (*eigs) {
            cmd_eigs(dataset, eig_k, eig_tol, eig_seed, eig_highorder ? std::optional(eig_pre) : std::nullopt, eig_output, out);
        } else if (*tr) {
            cmd_train(dataset, ta, out);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kNumerical;
    }
    return kOk;
}

}  // namespace fbgcn::cli
