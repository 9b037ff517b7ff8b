// cayley_spectra: closed forms for loop-perturbed Cayley trees, checked
// against finite-ball numerics.
//
//   cayley_spectra norm --Q 3 --pert segment
//   cayley_spectra pf --Q 4 --pert subtree --q 3 --n 8 --out out/
//   cayley_spectra report --out out/ --seedless
//
// Exit codes: 0 all checks passed (or verdict-only output), 1 a numeric
// check failed, 2 usage error.

#include "cayley/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using namespace cayley;

struct Common {
    int Q = 3;
    int q = 3;
    int k = 1;
    int n = 10;
    std::string pert = "segment";
    std::string lambda_grid;
    std::string out;
    bool fast = false;
    bool as_json = false;
    bool seedless = false;
};

PerturbationSpec make_pert(const Common& c) {
    if (c.pert == "root-loops") return RootLoops{c.k};
    if (c.pert == "segment") return Segment{};
    if (c.pert == "ray") return Ray{};
    if (c.pert == "subtree") return Subtree{c.q, 0};
    throw invalid_parameter("unknown perturbation '" + c.pert + "'");
}

dvec parse_list(const std::string& s) {
    dvec v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        v.push_back(std::stod(item, &used));
        if (used != item.size()) throw invalid_parameter("bad number '" + item + "' in list");
    }
    return v;
}

void print_summary(const ExperimentReport& r) {
    std::printf("%s %s\n", r.experiment.c_str(), r.id.c_str());
    for (const auto& [key, num] : r.numeric) {
        auto c = r.closed_form.find(key);
        if (c == r.closed_form.end()) {
            std::printf("  %-32s numeric %.12g\n", key.c_str(), num);
            continue;
        }
        std::printf("  %-32s closed %.12g  numeric %.12g  discrepancy %.2e", key.c_str(), c->second, num,
                    r.discrepancies.at(key));
        if (auto t = r.tolerances.find(key); t != r.tolerances.end())
            std::printf("  tol %.1e %s", t->second, r.discrepancies.at(key) <= t->second ? "ok" : "FAIL");
        std::printf("\n");
    }
    for (const auto& [key, c] : r.closed_form)
        if (!r.numeric.count(key)) std::printf("  %-32s closed %.12g\n", key.c_str(), c);
    for (const auto& [key, v] : r.verdicts) std::printf("  %-32s %s\n", key.c_str(), v.c_str());
}

int finish(const ExperimentReport& r, const Common& c) {
    if (c.as_json) std::cout << dump_json(to_json(r));
    else print_summary(r);
    if (!c.out.empty()) write_report_files(c.out, r);
    return r.passed() ? 0 : 1;
}

RunOptions run_options(const Common& c) {
    RunOptions o;
    o.fast = c.fast;
    o.seedless = c.seedless;
    o.threads = threads_from_env();
    return o;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectra of loop-perturbed Cayley trees"};
    app.set_version_flag("--version", std::string(tool_version));
    app.require_subcommand(1);
    Common c;
    double beta = 1.0;
    std::string betas;

    auto add_family = [&](CLI::App* sub) {
        sub->add_option("--Q", c.Q, "tree degree")->check(CLI::Range(2, 1000));
        sub->add_option("--pert", c.pert, "perturbation family")
            ->check(CLI::IsMember({"root-loops", "segment", "ray", "subtree"}));
        sub->add_option("--q", c.q, "subtree order")->check(CLI::Range(2, 1000));
        sub->add_option("--k", c.k, "number of root loops")->check(CLI::Range(1, 1000000));
    };
    auto add_output = [&](CLI::App* sub) {
        sub->add_option("--out", c.out, "output directory");
        sub->add_flag("--fast", c.fast, "cap ball radii at 8");
        sub->add_flag("--json", c.as_json, "print the report as JSON");
        sub->add_flag("--seedless", c.seedless, "zero wall-clock fields for byte-identical reruns");
    };

    auto* norm = app.add_subcommand("norm", "perturbed norm: closed form, bisection, finite balls");
    add_family(norm);
    add_output(norm);
    auto* pf = app.add_subcommand("pf", "Perron-Frobenius profile against a finite ball");
    add_family(pf);
    pf->add_option("--n", c.n, "ball radius")->check(CLI::Range(1, 30));
    add_output(pf);
    auto* classify = app.add_subcommand("classify", "recurrence / transience of the perturbed operator");
    add_family(classify);
    classify->add_option("--lambda-grid", c.lambda_grid, "comma-separated decreasing lambda values above lambda*");
    add_output(classify);
    auto* ids = app.add_subcommand("ids", "integrated density of states and the shifted-CDF check");
    add_family(ids);
    ids->add_option("--n", c.n, "ball radius")->check(CLI::Range(1, 30));
    ids->add_option("--betas", betas, "comma-separated beta values");
    add_output(ids);
    auto* crit = app.add_subcommand("critical-density", "critical density from the unperturbed IDS");
    add_family(crit);
    crit->add_option("--beta", beta, "inverse temperature")->check(CLI::PositiveNumber);
    add_output(crit);
    auto* report = app.add_subcommand("report", "acceptance criteria plus the standard experiments");
    add_output(report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const RunOptions opt = run_options(c);
        if (*report) {
            const auto b = build_report(opt);
            const std::string dir = c.out.empty() ? "cayley_report" : c.out;
            write_bundle(dir, b);
            if (c.as_json) {
                std::cout << dump_json(b.document);
            } else {
                for (const auto& cr : b.document.at("criteria"))
                    std::printf("criterion %d %-32s %s\n", cr.at("id").get<int>(), cr.at("title").get<std::string>().c_str(),
                                cr.at("status").get<std::string>().c_str());
                std::printf("wrote %s/report.json and %zu CSV files\n", dir.c_str(), b.csv_files.size());
            }
            return b.all_passed ? 0 : 1;
        }
        const auto p = make_pert(c);
        if (*norm) return finish(cmd_norm(c.Q, p, opt), c);
        if (*pf) return finish(cmd_pf(c.Q, p, c.n, opt), c);
        if (*classify) return finish(cmd_classify(c.Q, p, opt, c.lambda_grid.empty() ? dvec{} : parse_list(c.lambda_grid)), c);
        if (*ids) {
            const bool none = ids->count("--pert") == 0;
            return finish(cmd_ids(c.Q, c.n, none ? std::nullopt : std::optional<PerturbationSpec>(p),
                                  betas.empty() ? dvec{} : parse_list(betas), opt), c);
        }
        if (*crit) return finish(cmd_critical_density(c.Q, p, beta, opt), c);
    } catch (const invalid_parameter& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
