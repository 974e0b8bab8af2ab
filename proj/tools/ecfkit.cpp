#include "report.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <sstream>
#include <thread>

using namespace ecfkit;
using report::ordered_json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

int thread_cap() {
  if (const char* env = std::getenv("ECFKIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw InvalidArgument("ECFKIT_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs f(0..n-1) on up to thread_cap() threads; the first failure in index
// order is rethrown.
template <typename F>
void parallel_for(int n, F&& f) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto guarded = [&](int i) {
    try {
      f(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  const int workers = std::max(1, std::min(n, thread_cap()));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) guarded(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int i = w; i < n; i += workers) guarded(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::optional<int> parse_length(const std::string& s) {
  if (s == "auto") return std::nullopt;
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 1) throw InvalidArgument("--length must be 'auto' or a positive integer, got '" + s + "'");
  return v;
}

struct Options {
  std::string input;
  std::optional<std::uint64_t> toy;
  std::string design;
  std::string coding;
  std::string relaxed;
  std::string policy = "hard";
  std::string length = "auto";
  std::vector<int> min_distance{1};
  std::string decoding = "hamming";
  std::string source = "ova";
  std::string kind = "ova";
  std::string order = "cyclic";
  int folds = 5;
  std::uint64_t seed = 0;
  int pool = 200;
  int attempts = 1000;
  int cycles = 100;
  int trials = 50;
  int seeds = 10;
  int classes = 0;
  std::vector<int> ks{10, 50};
  std::string out;
  std::string report;
};

AllocationPolicy to_policy(const std::string& s) { return s == "easy" ? AllocationPolicy::Easy : AllocationPolicy::Hard; }

int single_distance(const Options& o) {
  if (o.min_distance.size() != 1) throw InvalidArgument("--min-distance takes a single value for this command");
  if (o.min_distance.front() < 1) throw InvalidArgument("--min-distance must be >= 1");
  return o.min_distance.front();
}

LabeledDataset load_input(const Options& o) {
  if (o.toy) return generate_toy(*o.toy);
  if (o.input.empty()) throw InvalidArgument("a dataset is required (--input PATH or --toy SEED)");
  return load_dataset_csv(o.input);
}

ordered_json input_config(const Options& o) {
  if (o.toy) return {{"toy_seed", *o.toy}};
  return {{"input", o.input}};
}

ordered_json cmd_design(const Options& o) {
  const auto length = parse_length(o.length);
  const auto data = load_input(o);
  const auto built = design_from_data(data, to_policy(o.policy), length);
  built.design.validate();
  if (!o.out.empty()) write_matrix_csv(o.out, built.design.values);
  ordered_json cfg = input_config(o);
  cfg.update({{"policy", o.policy}, {"length", o.length}, {"out", o.out}});
  ordered_json r{{"config", cfg},
                 {"k", data.k},
                 {"l", built.design.l},
                 {"class_names", data.class_names},
                 {"projection", report::projection(built.projection)},
                 {"distances", report::matrix(built.distances.values)},
                 {"targets", report::matrix(distances_to_design(built.distances, built.design.l, to_policy(o.policy)).values)}};
  if (built.rank) r["rank"] = *built.rank;
  return r;
}

ordered_json cmd_factorize(const Options& o) {
  const int c = single_distance(o);
  const auto pinned = parse_length(o.length);
  if (pinned && c > *pinned)
    throw InvalidArgument("--min-distance " + std::to_string(c) + " exceeds code length " + std::to_string(*pinned));
  if (o.design.empty()) throw InvalidArgument("--design is required");
  const Matrix values = read_matrix_csv(o.design, MatrixRole::Design, pinned);
  const int l = static_cast<int>(values(0, 0));
  if (c > l) throw InvalidArgument("--min-distance " + std::to_string(c) + " exceeds code length " + std::to_string(l));
  const DesignMatrix d{values, l};
  d.validate();

  EcfOptions opts;
  opts.seed = o.seed;
  opts.max_cycles = o.cycles;
  opts.order = o.order == "random" ? RowOrder::UniformRandom : RowOrder::Cyclic;
  const auto res = factorize(d, make_policy(static_cast<int>(d.k()), l, c), opts);
  if (!o.out.empty()) write_matrix_csv(o.out, res.coding.values());
  if (!o.relaxed.empty()) write_matrix_csv(o.relaxed, res.relaxed);

  ordered_json cfg{{"design", o.design}, {"length", l},         {"min_distance", c}, {"seed", o.seed},
                   {"cycles", o.cycles}, {"order", o.order},    {"out", o.out},      {"relaxed", o.relaxed}};
  return {{"config", cfg}, {"factorization", report::factorization(res)}, {"coding", report::coding_summary(res.coding)}};
}

ordered_json cmd_analyze(const Options& o) {
  if (o.coding.empty()) throw InvalidArgument("--coding is required");
  const auto x = CodingMatrix::from_real(read_matrix_csv(o.coding, MatrixRole::Coding));
  ordered_json cfg{{"coding", o.coding}, {"design", o.design}, {"relaxed", o.relaxed}};
  ordered_json r{{"config", cfg}, {"coding", report::coding_summary(x)}};
  if (o.min_distance.size() == 1 && o.min_distance.front() <= x.l()) {
    cfg["min_distance"] = o.min_distance.front();
    r["validation"] = report::validation(validate_coding(x, make_policy(x.k(), x.l(), o.min_distance.front())));
  } else {
    r["validation"] = report::validation(validate_coding(x));
  }
  r["config"] = cfg;
  if (!o.design.empty()) {
    const Matrix d = read_matrix_csv(o.design, MatrixRole::Design);
    if (d.rows() != x.k()) throw InvalidArgument("design has " + std::to_string(d.rows()) + " classes, coding " + std::to_string(x.k()));
    r["objective"] = objective(d, x.real());
    if (!o.relaxed.empty()) {
      const Matrix relaxed = read_matrix_csv(o.relaxed, MatrixRole::Generic);
      const Matrix binary = x.real() * x.real().transpose();
      const auto e = error_decomposition(relaxed, d, binary);
      r["error_decomposition"] = {{"total", e.total},
                                  {"optimization_error", e.optimization_error},
                                  {"discretization_error", e.discretization_error},
                                  {"cross_term", e.cross_term}};
    }
  }
  return r;
}

ordered_json cmd_evaluate(const Options& o) {
  const auto length = parse_length(o.length);
  for (int c : o.min_distance)
    if (c < 1) throw InvalidArgument("--min-distance must be >= 1");
  if (length)
    for (int c : o.min_distance)
      if (c > *length)
        throw InvalidArgument("--min-distance " + std::to_string(c) + " exceeds code length " + std::to_string(*length));
  std::optional<CodingMatrix> fixed;
  if (o.source == "file") {
    if (o.coding.empty()) throw InvalidArgument("--source file needs --coding");
    fixed = CodingMatrix::from_real(read_matrix_csv(o.coding, MatrixRole::Coding));
  }
  const auto data = load_input(o);
  const auto decoding = o.decoding == "lw" ? Decoding::LossWeighted : Decoding::Hamming;
  const bool sweeps = o.source == "ecf-h" || o.source == "ecf-e" || o.source == "rand";

  std::vector<CodingSource> sources;
  std::vector<int> distances;
  for (int c : sweeps ? o.min_distance : std::vector<int>{0}) {
    EcfOptions ecf;
    ecf.seed = o.seed;
    if (o.source == "ecf-h")
      sources.push_back(ecf_source(AllocationPolicy::Hard, length, c, ecf));
    else if (o.source == "ecf-e")
      sources.push_back(ecf_source(AllocationPolicy::Easy, length, c, ecf));
    else if (o.source == "rand")
      sources.push_back(rand_source(length.value_or(dense_code_length(data.k)), c, o.seed, o.attempts));
    else if (o.source == "dense")
      sources.push_back(dense_source(o.pool, o.seed));
    else if (o.source == "file")
      sources.push_back(fixed_source("file", *fixed));
    else
      sources.push_back(ova_source());
    distances.push_back(c);
  }

  const int threads = thread_cap();
  std::ostringstream csv;
  csv << "source,min_distance,dichotomies,mean,std\n";
  ordered_json runs = ordered_json::array();
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto rep = cross_validate(data, sources[s], BinaryLearnerSpec{}, decoding, o.folds, o.seed, threads);
    auto j = report::evaluation(rep);
    if (sweeps) j["min_distance"] = distances[s];
    runs.push_back(j);
    csv << sources[s].name << ',' << distances[s] << ',' << detail::format_real(rep.dichotomies) << ','
        << detail::format_real(rep.mean) << ',' << detail::format_real(rep.std) << '\n';
  }
  if (!o.out.empty()) detail::write_atomically(o.out, csv.str());

  ordered_json cfg = input_config(o);
  cfg.update({{"source", o.source},
              {"coding", o.coding},
              {"length", o.length},
              {"min_distance", sweeps ? ordered_json(o.min_distance) : ordered_json(nullptr)},
              {"decoding", o.decoding},
              {"folds", o.folds},
              {"seed", o.seed},
              {"pool", o.pool},
              {"attempts", o.attempts},
              {"learner", {{"kind", "logistic"}, {"lambda", BinaryLearnerSpec{}.lambda}, {"iterations", BinaryLearnerSpec{}.iterations}}},
              {"out", o.out}});
  return {{"config", cfg}, {"k", data.k}, {"samples", data.size()}, {"runs", runs}};
}

struct Curve {
  std::vector<double> mean, std;
};

Curve mean_curve(const std::vector<std::vector<double>>& traces) {
  Curve c;
  const std::size_t len = traces.front().size();
  const auto n = static_cast<double>(traces.size());
  for (std::size_t t = 0; t < len; ++t) {
    double m = 0.0, v = 0.0;
    for (const auto& tr : traces) m += tr[t] / n;
    for (const auto& tr : traces) v += (tr[t] - m) * (tr[t] - m) / n;
    c.mean.push_back(m);
    c.std.push_back(std::sqrt(v));
  }
  return c;
}

// Steps that rise by more than 1e-8 (relative to max(1, previous)).
int rises(const std::vector<double>& trace, std::size_t stride = 1) {
  int n = 0;
  for (std::size_t t = stride; t < trace.size(); t += stride)
    n += trace[t] > trace[t - stride] + 1e-8 * std::max(1.0, std::abs(trace[t - stride]));
  return n;
}

ordered_json cmd_convergence(const Options& o) {
  const int c = single_distance(o);
  const auto pinned = parse_length(o.length);
  if (o.seeds < 1 || o.cycles < 1) throw InvalidArgument("--seeds and --cycles must be >= 1");
  for (int k : o.ks)
    if (k < 2) throw InvalidArgument("--k values must be >= 2");

  std::ostringstream csv;
  csv << "k,cycles,mean,std\n";
  ordered_json per_k = ordered_json::array();
  for (int k : o.ks) {
    const int gen_l = pinned.value_or(min_code_length(k));
    std::vector<std::vector<double>> traces(static_cast<std::size_t>(o.seeds));
    std::vector<ordered_json> runs(static_cast<std::size_t>(o.seeds));
    parallel_for(o.seeds, [&](int s) {
      const auto seed = o.seed + static_cast<std::uint64_t>(s);
      const auto g = binary_gramian(k, gen_l, seed);
      const int l = code_length(g.design);
      if (c > l) throw InvalidArgument("--min-distance exceeds code length " + std::to_string(l));
      EcfOptions opts;
      opts.seed = seed;
      opts.max_cycles = o.cycles;
      opts.rel_tol = -1.0;  // run every cycle so curves align
      const auto r = factorize(DesignMatrix{g.design.values, l}, make_policy(k, l, c), opts);
      auto& tr = traces[static_cast<std::size_t>(s)];
      tr.push_back(r.initial_objective);
      tr.insert(tr.end(), r.objective_trace.begin(), r.objective_trace.end());
      runs[static_cast<std::size_t>(s)] = {{"seed", seed},
                                           {"l", l},
                                           {"final_objective", r.relaxed_objective},
                                           {"discrete_objective", r.discrete_objective},
                                           {"safeguarded_updates", r.safeguarded_updates},
                                           {"update_rises", rises(r.update_trace)}};
    });
    const auto curve = mean_curve(traces);
    for (std::size_t t = 0; t < curve.mean.size(); ++t)
      csv << k << ',' << t << ',' << detail::format_real(curve.mean[t]) << ',' << detail::format_real(curve.std[t])
          << '\n';
    int hits = 0;
    for (const auto& tr : traces) hits += tr.back() <= 1e-6;
    per_k.push_back({{"k", k},
                     {"generator_length", gen_l},
                     {"mean_final_objective", curve.mean.back()},
                     {"std_final_objective", curve.std.back()},
                     {"fraction_below_1e-6", static_cast<double>(hits) / o.seeds},
                     {"mean_curve_rises", rises(curve.mean)},
                     {"runs", runs}});
  }
  if (!o.out.empty()) detail::write_atomically(o.out, csv.str());
  ordered_json cfg{{"k", o.ks},          {"seeds", o.seeds}, {"cycles", o.cycles}, {"length", o.length},
                   {"min_distance", c},  {"seed", o.seed},   {"out", o.out}};
  return {{"config", cfg}, {"results", per_k}};
}

ordered_json cmd_order(const Options& o) {
  const int c = single_distance(o);
  if (o.trials < 1 || o.cycles < 1) throw InvalidArgument("--trials and --cycles must be >= 1");
  DesignMatrix d;
  if (!o.design.empty()) {
    const Matrix values = read_matrix_csv(o.design, MatrixRole::Design);
    d = DesignMatrix{values, static_cast<int>(values(0, 0))};
  } else if (o.toy) {
    d = design_from_data(generate_toy(*o.toy), AllocationPolicy::Hard).design;
  } else {
    throw InvalidArgument("a design is required (--design PATH or --toy SEED)");
  }
  d.validate();
  if (c > d.l) throw InvalidArgument("--min-distance " + std::to_string(c) + " exceeds code length " + std::to_string(d.l));
  const auto policy = make_policy(static_cast<int>(d.k()), d.l, c);
  const auto stride = static_cast<std::size_t>(d.k());

  ordered_json orders = ordered_json::object();
  for (auto order : {RowOrder::Cyclic, RowOrder::UniformRandom}) {
    const std::string name = order == RowOrder::Cyclic ? "cyclic" : "random";
    std::vector<std::vector<double>> traces(static_cast<std::size_t>(o.trials));
    parallel_for(o.trials, [&](int t) {
      EcfOptions opts;
      opts.seed = o.seed + static_cast<std::uint64_t>(t);
      opts.max_cycles = o.cycles;
      opts.rel_tol = -1.0;
      opts.order = order;
      traces[static_cast<std::size_t>(t)] = factorize(d, policy, opts).update_trace;
    });
    int pass_rises = 0, update_rises = 0;
    for (const auto& tr : traces) {
      pass_rises += rises(tr, stride);
      update_rises += rises(tr);
    }
    const auto curve = mean_curve(traces);
    if (!o.out.empty()) {
      std::ostringstream csv;
      csv << "updates,mean,std\n";
      for (std::size_t u = 0; u < curve.mean.size(); ++u)
        csv << u << ',' << detail::format_real(curve.mean[u]) << ',' << detail::format_real(curve.std[u]) << '\n';
      detail::write_atomically(o.out + "-" + name + ".csv", csv.str());
    }
    std::vector<double> per_pass;
    for (std::size_t u = 0; u < curve.mean.size(); u += stride) per_pass.push_back(curve.mean[u]);
    orders[name] = {{"pass_rises", pass_rises},
                    {"update_rises", update_rises},
                    {"final_mean", curve.mean.back()},
                    {"final_std", curve.std.back()},
                    {"mean_per_pass", per_pass}};
  }
  ordered_json cfg = o.design.empty() ? ordered_json{{"toy_seed", *o.toy}} : ordered_json{{"design", o.design}};
  cfg.update({{"length", d.l}, {"min_distance", c}, {"trials", o.trials}, {"cycles", o.cycles}, {"seed", o.seed}, {"out", o.out}});
  return {{"config", cfg}, {"k", d.k()}, {"orders", orders}};
}

ordered_json cmd_baseline(const Options& o) {
  int k = o.classes;
  if (k == 0) k = load_input(o).k;
  if (k < 2) throw InvalidArgument("baseline needs at least 2 classes");
  RandomCodingResult res;
  ordered_json cfg{{"kind", o.kind}, {"classes", k}, {"seed", o.seed}, {"out", o.out}};
  if (o.kind == "ova") {
    res.coding = ova_coding(k);
    res.min_distance = min_off_diagonal(hamming_profile(res.coding));
  } else if (o.kind == "dense") {
    res = dense_random_coding(k, o.pool, o.seed);
    cfg["pool"] = o.pool;
  } else {
    const int c = single_distance(o);
    const int l = parse_length(o.length).value_or(dense_code_length(k));
    if (c > l) throw InvalidArgument("--min-distance " + std::to_string(c) + " exceeds code length " + std::to_string(l));
    res = fixed_correction_random_coding(k, l, c, o.seed, o.attempts);
    cfg.update({{"length", l}, {"min_distance", c}, {"attempts", o.attempts}});
  }
  if (!o.out.empty()) write_matrix_csv(o.out, res.coding.values());
  return {{"config", cfg},
          {"success", res.success},
          {"attempts", res.attempts},
          {"coding", report::coding_summary(res.coding)},
          {"validation", report::validation(validate_coding(res.coding))}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Error-correcting factorization of ECOC designs"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> policies{"hard", "easy"};

  auto dataset = [&](CLI::App* cmd) {
    auto* in = cmd->add_option("--input", o.input, "dataset CSV (label in last column)");
    auto* toy = cmd->add_option("--toy", o.toy, "use the generated toy dataset with this seed");
    in->excludes(toy);
  };
  auto outputs = [&](CLI::App* cmd, const std::string& what) {
    cmd->add_option("--out", o.out, what);
    cmd->add_option("--report", o.report, "JSON report path (default: stdout)");
  };

  auto* design = app.add_subcommand("design", "build a design matrix from class distances");
  dataset(design);
  design->add_option("--policy", o.policy, "allocation policy")->check(CLI::IsMember(policies));
  design->add_option("--length", o.length, "code length: auto or N");
  outputs(design, "design matrix CSV");

  auto* fact = app.add_subcommand("factorize", "factorize a design matrix into a coding matrix");
  fact->add_option("--design", o.design, "design matrix CSV");
  fact->add_option("--length", o.length, "expected code length: auto or N");
  fact->add_option("--min-distance", o.min_distance, "required minimum codeword distance c");
  fact->add_option("--seed", o.seed, "initialization seed");
  fact->add_option("--cycles", o.cycles, "maximum update cycles")->check(CLI::PositiveNumber);
  fact->add_option("--order", o.order, "row update order")->check(CLI::IsMember({"cyclic", "random"}));
  fact->add_option("--relaxed", o.relaxed, "also write the relaxed factor here");
  outputs(fact, "coding matrix CSV");

  auto* analyze = app.add_subcommand("analyze", "report distances and correction capability of a coding");
  analyze->add_option("--coding", o.coding, "coding matrix CSV");
  analyze->add_option("--design", o.design, "design matrix CSV to score against");
  analyze->add_option("--relaxed", o.relaxed, "relaxed factor CSV for the error decomposition");
  analyze->add_option("--min-distance", o.min_distance, "check rows against this minimum distance");
  analyze->add_option("--report", o.report, "JSON report path (default: stdout)");

  auto* eval = app.add_subcommand("evaluate", "cross-validate an ECOC ensemble");
  dataset(eval);
  eval->add_option("--source", o.source, "coding source")
      ->check(CLI::IsMember({"file", "ecf-h", "ecf-e", "ova", "dense", "rand"}));
  eval->add_option("--coding", o.coding, "coding matrix CSV for --source file");
  eval->add_option("--length", o.length, "code length: auto or N");
  eval->add_option("--min-distance", o.min_distance, "minimum distance, or a comma list to sweep")->delimiter(',');
  eval->add_option("--decoding", o.decoding, "decoding rule")->check(CLI::IsMember({"hamming", "lw"}));
  eval->add_option("--folds", o.folds, "number of folds");
  eval->add_option("--seed", o.seed, "fold and coding seed");
  eval->add_option("--pool", o.pool, "dense random pool size")->check(CLI::PositiveNumber);
  eval->add_option("--attempts", o.attempts, "draws for --source rand")->check(CLI::PositiveNumber);
  outputs(eval, "accuracy vs dichotomies CSV");

  auto* conv = app.add_subcommand("experiment-convergence", "recover random binary Gramians");
  conv->add_option("--k", o.ks, "class counts")->delimiter(',');
  conv->add_option("--seeds", o.seeds, "instances per k");
  conv->add_option("--cycles", o.cycles, "update cycles per run");
  conv->add_option("--length", o.length, "generator code length: auto (ceil log2 k) or N");
  conv->add_option("--min-distance", o.min_distance, "minimum distance c");
  conv->add_option("--seed", o.seed, "first seed");
  outputs(conv, "objective vs cycles CSV");

  auto* order = app.add_subcommand("experiment-order", "compare cyclic and random row orders");
  order->add_option("--design", o.design, "design matrix CSV");
  order->add_option("--toy", o.toy, "build a hard design from the toy dataset with this seed");
  order->add_option("--trials", o.trials, "runs per order");
  order->add_option("--cycles", o.cycles, "passes per run");
  order->add_option("--min-distance", o.min_distance, "minimum distance c");
  order->add_option("--seed", o.seed, "first seed");
  outputs(order, "curve path prefix; writes PREFIX-cyclic.csv and PREFIX-random.csv");

  auto* base = app.add_subcommand("baseline", "build a baseline coding matrix");
  dataset(base);
  base->add_option("--kind", o.kind, "baseline")->check(CLI::IsMember({"ova", "dense", "rand"}));
  base->add_option("--classes", o.classes, "number of classes (instead of a dataset)");
  base->add_option("--pool", o.pool, "dense random pool size")->check(CLI::PositiveNumber);
  base->add_option("--length", o.length, "code length for rand: auto (dense length) or N");
  base->add_option("--min-distance", o.min_distance, "minimum distance for rand");
  base->add_option("--attempts", o.attempts, "draws for rand")->check(CLI::PositiveNumber);
  base->add_option("--seed", o.seed, "seed");
  outputs(base, "coding matrix CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    const auto start = std::chrono::steady_clock::now();
    ordered_json r;
    if (*design) r = cmd_design(o);
    else if (*fact) r = cmd_factorize(o);
    else if (*analyze) r = cmd_analyze(o);
    else if (*eval) r = cmd_evaluate(o);
    else if (*conv) r = cmd_convergence(o);
    else if (*order) r = cmd_order(o);
    else r = cmd_baseline(o);
    r["config"]["command"] = app.get_subcommands().front()->get_name();
    r["wall_time_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (o.report.empty())
      std::cout << r.dump(2) << '\n';
    else
      report::write(o.report, r);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
