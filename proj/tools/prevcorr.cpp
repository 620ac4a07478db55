// prevcorr: estimate corrected disease prevalence from symptom-stratified
// testing counts, simulate the selection mechanism, or rerun the bundled
// case studies. Exit codes: 0 success, 1 reproduction-check failure,
// 2 input/validation error, 3 computation error.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prevcorr/prevcorr.hpp"

namespace pc = prevcorr;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Input digest: FNV-1a over the command, flags, and input file contents, so
// an envelope can be traced back to exactly what produced it.
// ---------------------------------------------------------------------------

class InputDigest {
public:
    void feed(std::string_view label, std::string_view value) {
        absorb(label);
        absorb("=");
        absorb(value);
        absorb("\x1f");
    }
    void feed(std::string_view label, std::int64_t value) { feed(label, std::to_string(value)); }

    std::string hex() const {
        std::ostringstream out;
        out << "fnv1a64:" << std::hex << std::setfill('0') << std::setw(16) << state_;
        return out.str();
    }

private:
    void absorb(std::string_view text) {
        for (unsigned char c : text) {
            state_ ^= c;
            state_ *= 1099511628211ULL;
        }
    }
    std::uint64_t state_ = 1469598103934665603ULL;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pc::ValidationError("cannot open file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw pc::ValidationError("cannot write file: " + path);
    out << content;
}

// ---------------------------------------------------------------------------
// Flag grammars.
// ---------------------------------------------------------------------------

std::vector<int> parse_index_list(const std::string& text, const std::string& flag) {
    std::vector<int> out;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            const int value = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(value);
        } catch (const std::exception&) {
            throw pc::ValidationError(flag + ": \"" + item + "\" is not a category index");
        }
    }
    return out;
}

/// Grammar: `high=4;low=1,2,3` or `high=2;low=1;middle=` — groups separated by
/// ';', each a comma list of category indices; middle may be omitted.
pc::SeverityPartition parse_partition_flag(const std::string& text, int num_categories) {
    std::vector<int> low, middle, high;
    std::stringstream stream(text);
    std::string group;
    while (std::getline(stream, group, ';')) {
        if (group.empty()) continue;
        const auto eq = group.find('=');
        if (eq == std::string::npos)
            throw pc::ValidationError("--partition: expected name=indices, got \"" + group + "\"");
        const std::string name = group.substr(0, eq);
        const auto indices = parse_index_list(group.substr(eq + 1), "--partition");
        if (name == "low") {
            low = indices;
        } else if (name == "middle") {
            middle = indices;
        } else if (name == "high") {
            high = indices;
        } else {
            throw pc::ValidationError("--partition: unknown group \"" + name +
                                      "\" (use low, middle, high)");
        }
    }
    return pc::SeverityPartition::create(num_categories, low, middle, high);
}

double parse_proportion(const std::string& text, const std::string& flag) {
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return value;
    } catch (const std::exception&) {
        throw pc::ValidationError(flag + ": \"" + text + "\" is not a number");
    }
}

pc::upolicy::Fallback parse_fallback(const std::string& text) {
    if (text == "mean") return pc::upolicy::Mean{};
    if (text.rfind("mean:", 0) == 0)
        return pc::upolicy::Mean{parse_proportion(text.substr(5), "--u-policy")};
    if (text == "uniform") return pc::upolicy::UniformRandom{};
    if (text.rfind("uniform:", 0) == 0) {
        const std::string range = text.substr(8);
        const auto comma = range.find(',');
        if (comma == std::string::npos)
            throw pc::ValidationError("--u-policy: uniform needs lo,hi, got \"" + range + "\"");
        return pc::upolicy::UniformRandom{parse_proportion(range.substr(0, comma), "--u-policy"),
                                          parse_proportion(range.substr(comma + 1), "--u-policy")};
    }
    if (text.rfind("fixed:", 0) == 0)
        return pc::upolicy::Fixed{parse_proportion(text.substr(6), "--u-policy")};
    throw pc::ValidationError("--u-policy: unknown fallback \"" + text + "\"");
}

/// Grammar: `plugin | plugin:<fallback> | mean[:m] | uniform[:lo,hi] | fixed:v`
/// where <fallback> is itself `mean[:m] | uniform[:lo,hi] | fixed:v`.
pc::UPolicy parse_upolicy_flag(const std::string& text) {
    pc::UPolicy policy;
    if (text == "plugin") {
        policy = pc::upolicy::PlugIn{};
    } else if (text.rfind("plugin:", 0) == 0) {
        policy = pc::upolicy::PlugIn{parse_fallback(text.substr(7))};
    } else {
        policy = std::visit([](auto fb) -> pc::UPolicy { return fb; }, parse_fallback(text));
    }
    pc::validate(policy);
    return policy;
}

std::string describe_upolicy(const pc::UPolicy& policy) {
    struct Namer {
        std::string operator()(const pc::upolicy::PlugIn& p) const {
            return "plugin(fallback=" + std::visit(*this, p.fallback) + ")";
        }
        std::string operator()(const pc::upolicy::Mean& p) const {
            return "mean(" + std::to_string(p.midpoint) + ")";
        }
        std::string operator()(const pc::upolicy::UniformRandom& p) const {
            return "uniform(" + std::to_string(p.lo) + "," + std::to_string(p.hi) + ")";
        }
        std::string operator()(const pc::upolicy::Fixed& p) const {
            return "fixed(" + std::to_string(p.value) + ")";
        }
    };
    return std::visit(Namer{}, policy);
}

// ---------------------------------------------------------------------------
// JSON rendering.
// ---------------------------------------------------------------------------

ordered_json json_number(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;  // NaN/inf have no JSON literal
}

const char* rule_name(pc::CorrectionRule rule) {
    switch (rule) {
        case pc::CorrectionRule::HighDirect: return "high-direct";
        case pc::CorrectionRule::MaxentShare: return "maxent-share";
        case pc::CorrectionRule::UPolicyProduct: return "u-policy";
    }
    return "unknown";
}

ordered_json to_json(const pc::PrevalenceEstimate& est) {
    ordered_json out;
    out["p_tilde"] = est.p_tilde;
    out["p_tilde_inf"] = est.p_tilde_inf;
    out["total_prevalence"] = est.total_prevalence;
    ordered_json u = ordered_json::object();
    for (const auto& [category, value] : est.u_used) u[std::to_string(category)] = value;
    out["u_used"] = std::move(u);
    ordered_json rules = ordered_json::array();
    for (int s = 1; s <= est.num_categories(); ++s) {
        const auto& trace = est.trace[static_cast<std::size_t>(s - 1)];
        rules.push_back({{"category", s},
                         {"proportion", rule_name(trace.proportion_rule)},
                         {"prevalence", rule_name(trace.prevalence_rule)}});
    }
    out["rules"] = std::move(rules);
    return out;
}

ordered_json to_json(const pc::VarianceEstimate& ve) {
    ordered_json out;
    out["a"] = ve.a;
    out["b"] = ve.b;
    out["c"] = ve.c;
    out["sigma2_high"] = ve.sigma2_high;
    out["num_categories"] = ve.num_categories;
    if (ve.total_variance) out["total_variance"] = *ve.total_variance;
    return out;
}

ordered_json to_json(const pc::EstimatorSummary& s) {
    return {{"mean", json_number(s.mean)}, {"bias", json_number(s.bias)},
            {"mse", json_number(s.mse)}};
}

ordered_json to_json(const pc::ReproductionReport& report) {
    ordered_json out;
    out["case"] = report.case_name;
    out["population_prevalence"] = report.population_prevalence;
    ordered_json checks = ordered_json::array();
    for (const auto& check : report.checks) {
        ordered_json row;
        row["protocol"] = check.protocol;
        row["check"] = check.label;
        row["reference"] = check.expected;
        row["computed"] = check.computed;
        row["abs_diff"] = std::abs(check.expected - check.computed);
        row["tolerance"] = check.tolerance;
        row["pass"] = check.pass;
        if (!check.note.empty()) row["note"] = check.note;
        checks.push_back(std::move(row));
    }
    out["checks"] = std::move(checks);
    out["all_pass"] = report.all_pass;
    return out;
}

void emit_envelope(const std::string& command, const InputDigest& digest, ordered_json result,
                   const std::vector<std::string>& warnings) {
    ordered_json envelope;
    envelope["command"] = command;
    envelope["inputs_digest"] = digest.hex();
    envelope["result"] = std::move(result);
    envelope["warnings"] = warnings;
    std::cout << envelope.dump(2) << "\n";
}

void emit_error(const std::string& command, const std::string& kind, const std::string& message,
                bool as_json) {
    std::cerr << "error: " << message << "\n";
    if (as_json) {
        ordered_json envelope;
        envelope["command"] = command;
        envelope["error"] = {{"kind", kind}, {"message", message}};
        std::cout << envelope.dump(2) << "\n";
    }
}

std::string format_double(double v, int precision = 12) {
    std::ostringstream out;
    out << std::setprecision(precision) << v;
    return out.str();
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

struct EstimateOptions {
    std::string counts_path;
    std::string linelist_path;
    std::int64_t census = 0;
    bool census_set = false;
    std::string partition_flag;
    std::string upolicy_flag = "plugin";
    std::uint64_t seed = 0;
    bool with_variance = false;
    std::string format = "json";
};

int run_estimate(const EstimateOptions& opt) {
    if (opt.counts_path.empty() == opt.linelist_path.empty())
        throw pc::ValidationError("provide exactly one of --counts or --line-list");
    if (!opt.counts_path.empty() && !opt.census_set)
        throw pc::ValidationError("--counts requires --census-n");

    InputDigest digest;
    digest.feed("command", "estimate");
    std::optional<pc::TestedCounts> counts;
    if (!opt.counts_path.empty()) {
        const std::string content = read_file(opt.counts_path);
        digest.feed("counts", content);
        digest.feed("census", opt.census);
        std::istringstream in(content);
        try {
            counts = pc::parse_aggregate(in, opt.census);
        } catch (const pc::ParseError& e) {
            throw pc::ParseError(opt.counts_path + ": " + e.what());
        }
    } else {
        const std::string content = read_file(opt.linelist_path);
        digest.feed("line_list", content);
        if (opt.census_set) digest.feed("census", opt.census);
        std::istringstream in(content);
        try {
            counts = pc::parse_linelist(in, opt.census_set
                                                ? std::optional<std::int64_t>(opt.census)
                                                : std::nullopt);
        } catch (const pc::ParseError& e) {
            throw pc::ParseError(opt.linelist_path + ": " + e.what());
        }
    }

    const int m = counts->num_categories();
    pc::CorrectionConfig config = pc::CorrectionConfig::defaults(m);
    if (!opt.partition_flag.empty()) config.partition = parse_partition_flag(opt.partition_flag, m);
    config.u_policy = parse_upolicy_flag(opt.upolicy_flag);
    config.seed = opt.seed;
    digest.feed("partition", opt.partition_flag.empty() ? "default" : opt.partition_flag);
    digest.feed("u_policy", opt.upolicy_flag);
    digest.feed("seed", static_cast<std::int64_t>(opt.seed));

    const double naive = pc::naive_prevalence(*counts);
    const pc::PrevalenceEstimate estimate = pc::correct(*counts, config);
    std::optional<pc::VarianceEstimate> variance;
    if (opt.with_variance)
        variance = pc::estimate_variance(*counts, config.partition, estimate.u_used);

    if (opt.format == "csv") {
        std::ostringstream out;
        out << "# prevcorr estimate\n";
        out << "# census=" << counts->census() << " total_tested=" << counts->total_tested()
            << "\n";
        out << "# u_policy=" << describe_upolicy(config.u_policy) << " seed=" << opt.seed << "\n";
        out << "# naive_prevalence=" << format_double(naive) << "\n";
        out << "# total_prevalence=" << format_double(estimate.total_prevalence) << "\n";
        if (variance && variance->total_variance)
            out << "# total_variance=" << format_double(*variance->total_variance) << "\n";
        out << "category,p_tilde,p_tilde_inf,u,proportion_rule,prevalence_rule\n";
        for (int s = 1; s <= m; ++s) {
            const auto& trace = estimate.trace[static_cast<std::size_t>(s - 1)];
            out << s << ',' << format_double(estimate.p_tilde[static_cast<std::size_t>(s - 1)])
                << ',' << format_double(estimate.p_tilde_inf[static_cast<std::size_t>(s - 1)])
                << ',' << format_double(estimate.u_used.at(s)) << ','
                << rule_name(trace.proportion_rule) << ',' << rule_name(trace.prevalence_rule)
                << "\n";
        }
        std::cout << out.str();
        return 0;
    }

    ordered_json result;
    result["census"] = counts->census();
    result["total_tested"] = counts->total_tested();
    result["naive_prevalence"] = naive;
    result["estimate"] = to_json(estimate);
    if (variance) result["variance"] = to_json(*variance);
    emit_envelope("estimate", digest, std::move(result), {});
    return 0;
}

struct SimulateOptions {
    std::string spec_path;
    std::int64_t replicates = 0;
    std::uint64_t seed = 0;
    std::string mode = "exact";
    std::string partition_flag;
    std::string upolicy_flag = "plugin";
    std::string dump_path;
};

int run_simulate(const SimulateOptions& opt) {
    InputDigest digest;
    digest.feed("command", "simulate");
    const std::string content = read_file(opt.spec_path);
    digest.feed("spec", content);
    digest.feed("replicates", opt.replicates);
    digest.feed("seed", static_cast<std::int64_t>(opt.seed));
    digest.feed("mode", opt.mode);
    digest.feed("partition", opt.partition_flag.empty() ? "default" : opt.partition_flag);
    digest.feed("u_policy", opt.upolicy_flag);

    std::string note;
    std::istringstream in(content);
    pc::PopulationSpec spec = [&] {
        try {
            return pc::parse_population_spec(in, &note);
        } catch (const pc::ParseError& e) {
            throw pc::ParseError(opt.spec_path + ": " + e.what());
        }
    }();

    pc::SampleMode mode;
    if (opt.mode == "exact") {
        mode = pc::SampleMode::MultinomialExact;
    } else if (opt.mode == "individual") {
        mode = pc::SampleMode::PerIndividual;
    } else {
        throw pc::ValidationError("--mode must be exact or individual, got \"" + opt.mode + "\"");
    }

    pc::CorrectionConfig correction = pc::CorrectionConfig::defaults(spec.num_categories());
    if (!opt.partition_flag.empty())
        correction.partition = parse_partition_flag(opt.partition_flag, spec.num_categories());
    correction.u_policy = parse_upolicy_flag(opt.upolicy_flag);

    std::vector<std::string> warnings;
    if (!note.empty()) warnings.push_back("spec note: " + note);
    for (const auto& violation : pc::validate_orderings(spec).violations)
        warnings.push_back("ordering: " + pc::describe(violation));

    const pc::SimulationConfig config{spec, correction, opt.replicates, opt.seed, mode};
    const pc::SimulationResult sim = pc::run_monte_carlo(config);

    if (!opt.dump_path.empty()) {
        std::ostringstream out;
        out << "replicate,naive,corrected,n_t\n";
        for (std::size_t i = 0; i < sim.per_replicate.size(); ++i) {
            const auto& rep = sim.per_replicate[i];
            out << i << ',';
            if (!rep.skipped)
                out << format_double(rep.naive) << ',' << format_double(rep.corrected);
            else
                out << ',';  // estimators undefined on an empty sample
            out << ',' << rep.n_tested << "\n";
        }
        write_file(opt.dump_path, out.str());
    }

    ordered_json result;
    result["true_prevalence"] = sim.true_prevalence;
    result["replicates"] = sim.replicates();
    result["skipped"] = sim.skipped;
    result["sample_mode"] = opt.mode == "exact" ? "multinomial-exact" : "per-individual";
    result["naive"] = to_json(sim.naive);
    result["corrected"] = to_json(sim.corrected);
    emit_envelope("simulate", digest, std::move(result), warnings);
    return 0;
}

struct ReproduceOptions {
    std::string case_name;
    int protocol = 0;  // 0 = all
    std::string format = "text";
};

int run_reproduce(const ReproduceOptions& opt) {
    const auto parsed = pc::parse_case(opt.case_name);
    if (!parsed)
        throw pc::ValidationError("unknown case \"" + opt.case_name +
                                  "\" (use toy, diamond-princess, lombardy)");
    const std::optional<int> protocol =
        opt.protocol == 0 ? std::nullopt : std::optional<int>(opt.protocol);

    InputDigest digest;
    digest.feed("command", "reproduce");
    digest.feed("case", opt.case_name);
    digest.feed("protocol", protocol ? std::to_string(*protocol) : "all");

    const pc::ReproductionReport report = pc::reproduce_case(*parsed, protocol);

    if (opt.format == "json") {
        std::vector<std::string> warnings;
        for (const auto& check : report.checks)
            if (!check.note.empty())
                warnings.push_back(check.protocol + "/" + check.label + ": " + check.note);
        if (report.all_pass) {
            emit_envelope("reproduce", digest, to_json(report), warnings);
        } else {
            int failed = 0;
            for (const auto& check : report.checks) failed += check.pass ? 0 : 1;
            emit_error("reproduce", "reproduction",
                       std::to_string(failed) + " of " + std::to_string(report.checks.size()) +
                           " reproduction checks failed",
                       true);
        }
    } else {
        std::ostringstream out;
        out << "case: " << report.case_name << "\n";
        out << "reference population prevalence: "
            << format_double(report.population_prevalence, 6) << "\n\n";
        out << std::left << std::setw(12) << "protocol" << std::setw(30) << "check"
            << std::setw(12) << "reference" << std::setw(12) << "computed" << std::setw(12)
            << "|diff|" << std::setw(10) << "tol"
            << "status\n";
        for (const auto& check : report.checks) {
            out << std::left << std::setw(12) << check.protocol << std::setw(30) << check.label
                << std::setw(12) << format_double(check.expected, 6) << std::setw(12)
                << format_double(check.computed, 6) << std::setw(12)
                << format_double(std::abs(check.expected - check.computed), 3) << std::setw(10)
                << format_double(check.tolerance, 3) << (check.pass ? "ok" : "FAIL") << "\n";
        }
        bool any_note = false;
        for (const auto& check : report.checks) {
            if (check.note.empty()) continue;
            if (!any_note) out << "\n";
            any_note = true;
            out << "note [" << check.protocol << "/" << check.label << "]: " << check.note << "\n";
        }
        out << "\n" << (report.all_pass ? "all checks passed" : "SOME CHECKS FAILED") << "\n";
        std::cout << out.str();
    }
    return report.all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"bias correction for prevalence estimates from symptom-stratified testing"};
    app.require_subcommand(1);

    EstimateOptions est;
    CLI::App* cmd_estimate = app.add_subcommand(
        "estimate", "correct a prevalence estimate from per-category tested counts");
    cmd_estimate->add_option("--counts", est.counts_path,
                             "aggregate counts file (category,tested_positive,tested_negative)");
    cmd_estimate->add_option("--line-list", est.linelist_path,
                             "per-individual records file (id,category,tested,result)");
    cmd_estimate->add_option("--census-n", est.census, "census population size N")
        ->check(CLI::PositiveNumber);
    cmd_estimate->add_option("--partition", est.partition_flag,
                             "severity groups, e.g. high=4;low=1,2,3 (default: high={M})");
    cmd_estimate->add_option("--u-policy", est.upolicy_flag,
                             "plugin | plugin:<fb> | mean[:m] | uniform[:lo,hi] | fixed:v");
    cmd_estimate->add_option("--seed", est.seed, "seed for randomized u policies");
    cmd_estimate->add_flag("--variance", est.with_variance,
                           "include the asymptotic variance of the total prevalence");
    cmd_estimate->add_option("--format", est.format, "json (default) or csv")
        ->check(CLI::IsMember({"json", "csv"}));

    SimulateOptions sim;
    CLI::App* cmd_simulate = app.add_subcommand(
        "simulate", "Monte Carlo study of the estimators on a known population");
    cmd_simulate->add_option("--spec", sim.spec_path, "population spec file (JSON)")->required();
    cmd_simulate->add_option("--replicates", sim.replicates, "number of replicates")
        ->required()
        ->check(CLI::PositiveNumber);
    cmd_simulate->add_option("--seed", sim.seed, "master seed");
    cmd_simulate->add_option("--mode", sim.mode, "exact (default) or individual")
        ->check(CLI::IsMember({"exact", "individual"}));
    cmd_simulate->add_option("--partition", sim.partition_flag,
                             "severity groups for the corrected estimator");
    cmd_simulate->add_option("--u-policy", sim.upolicy_flag, "u policy for the corrected estimator");
    cmd_simulate->add_option("--dump", sim.dump_path,
                             "write per-replicate CSV (replicate,naive,corrected,n_t)");

    ReproduceOptions rep;
    CLI::App* cmd_reproduce =
        app.add_subcommand("reproduce", "rerun a bundled case study and compare every figure");
    cmd_reproduce->add_option("--case", rep.case_name, "toy | diamond-princess | lombardy")
        ->required();
    cmd_reproduce->add_option("--protocol", rep.protocol, "restrict to one sampling protocol")
        ->check(CLI::Range(1, 4));
    cmd_reproduce->add_option("--format", rep.format, "text (default) or json")
        ->check(CLI::IsMember({"text", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const std::string command = cmd_estimate->parsed()   ? "estimate"
                                : cmd_simulate->parsed() ? "simulate"
                                                         : "reproduce";
    const bool json_output = (cmd_estimate->parsed() && est.format == "json") ||
                             cmd_simulate->parsed() ||
                             (cmd_reproduce->parsed() && rep.format == "json");
    est.census_set = cmd_estimate->count("--census-n") > 0;

    try {
        if (cmd_estimate->parsed()) return run_estimate(est);
        if (cmd_simulate->parsed()) return run_simulate(sim);
        return run_reproduce(rep);
    } catch (const pc::EstimationError& e) {
        emit_error(command, "estimation", e.what(), json_output);
        return 3;
    } catch (const pc::ValidationError& e) {
        emit_error(command, "validation", e.what(), json_output);
        return 2;
    } catch (const std::exception& e) {
        emit_error(command, "internal", e.what(), json_output);
        return 2;
    }
}
