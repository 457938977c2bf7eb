#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include <loom/api.hpp>
#include <loom/bench.hpp>
#include <loom/topo.hpp>

namespace {

loom::topo::FamilyKind family_kind(const std::string& name) {
  if (name == "length") return loom::topo::FamilyKind::Length;
  if (name == "in") return loom::topo::FamilyKind::InDegree;
  return loom::topo::FamilyKind::OutDegree;
}

loom::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw loom::Error(loom::ErrorCode::IoError, "cannot read " + path);
  return loom::json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stream-processing runtime: server, topology tools, benchmark"};
  app.require_subcommand(1);

  // serve
  loom::ApiConfig config;
  std::string store_arg = "mem";
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--bind", config.bind_address, "host:port")
      ->envname("SF_BIND")
      ->capture_default_str();
  serve->add_option("--workers", config.workers, "0 = hardware concurrency")
      ->envname("SF_WORKERS")
      ->capture_default_str();
  serve->add_option("--queue-capacity", config.queue_capacity,
                    "bounded ingestion slots")
      ->envname("SF_QUEUE_CAPACITY")
      ->capture_default_str();
  serve->add_option("--store", store_arg, "mem, or a directory for a journal")
      ->envname("SF_STORE")
      ->capture_default_str();
  serve->add_option("--callback-timeout-ms", config.callback_timeout_ms,
                    "external delivery timeout")
      ->envname("SF_CALLBACK_TIMEOUT_MS")
      ->capture_default_str();

  // topogen
  loom::topo::GeneratorKnobs knobs;
  int operands_mean = 0;
  std::string dist = "uniform";
  std::string topo_out = "-";
  auto* topogen = app.add_subcommand("topogen", "generate a random topology");
  topogen->add_option("--streams", knobs.num_streams, "total node count")
      ->required();
  topogen->add_option("--composite", knobs.num_composite, "composite count")
      ->required();
  topogen->add_option("--operands", operands_mean,
                      "draw operand counts from [1, 2m-1]");
  topogen->add_option("--operands-min", knobs.operands_min, "explicit lower");
  topogen->add_option("--operands-max", knobs.operands_max, "explicit upper");
  topogen->add_option("--dist", dist, "uniform | skewed")
      ->check(CLI::IsMember({"uniform", "skewed"}));
  topogen->add_option("--skew", knobs.skew_exponent,
                      "skewed pick weight (outDegree+1)^skew")
      ->capture_default_str();
  topogen->add_option("--seed", knobs.seed, "RNG seed")->capture_default_str();
  topogen->add_flag("--cycles", knobs.allow_cycles, "allow cyclic pipelines");
  topogen->add_option("-o,--output", topo_out, "file or - for stdout")
      ->capture_default_str();

  // metrics
  std::string metrics_spec;
  auto* metrics = app.add_subcommand("metrics", "graph statistics of a spec");
  metrics->add_option("spec", metrics_spec, "topology spec JSON file")
      ->required();

  // bench
  std::string family = "length";
  int size = 1;
  std::string bench_spec;
  loom::bench::BenchOptions bench_opts;
  std::string mode = "serial";
  int bench_workers = 0;
  uint64_t bench_seed = 0;
  std::string outdir;
  auto* bench = app.add_subcommand("bench", "latency benchmark on a topology");
  bench->add_option("--family", family, "length | in | out | random")
      ->check(CLI::IsMember({"length", "in", "out", "random"}))
      ->capture_default_str();
  bench->add_option("--size", size, "family size / random node count")
      ->capture_default_str();
  bench->add_option("--spec", bench_spec,
                    "topology spec file (random family; overrides --size)");
  bench->add_option("--injections", bench_opts.injections, "measured updates")
      ->capture_default_str();
  bench->add_option("--warmup", bench_opts.warmup_injections,
                    "unmeasured leading updates")
      ->capture_default_str();
  bench->add_option("--rate", bench_opts.rate_per_sec,
                    "injections per second (paced mode)")
      ->capture_default_str();
  bench->add_option("--workers", bench_workers, "0 = hardware concurrency")
      ->capture_default_str();
  bench->add_option("--mode", mode, "paced | serial")
      ->check(CLI::IsMember({"paced", "serial"}))
      ->capture_default_str();
  bench->add_option("--timeout-ms", bench_opts.quiescence_timeout_ms,
                    "quiescence deadline")
      ->capture_default_str();
  bench->add_option("--seed", bench_seed, "random family seed")
      ->capture_default_str();
  bench->add_option("-o,--outdir", outdir, "write CSV reports here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      if (store_arg != "mem") config.store_root = store_arg;
      return loom::run_server(config);
    }

    if (*topogen) {
      if (operands_mean > 0) {
        knobs.operands_min = 1;
        knobs.operands_max = std::max(1, 2 * operands_mean - 1);
      }
      if (dist == "skewed") knobs.dist = loom::topo::OperandDist::Skewed;
      loom::json doc =
          loom::topo::topology_to_json(loom::topo::generate_random(knobs));
      if (topo_out == "-") {
        std::cout << doc.dump(2) << "\n";
      } else {
        std::ofstream out(topo_out);
        if (!out)
          throw loom::Error(loom::ErrorCode::IoError,
                            "cannot write " + topo_out);
        out << doc.dump(2) << "\n";
      }
      return 0;
    }

    if (*metrics) {
      auto spec = loom::topo::topology_from_json(read_json_file(metrics_spec));
      std::cout << loom::topo::metrics_to_json(loom::topo::compute_metrics(spec))
                       .dump(2)
                << "\n";
      return 0;
    }

    if (*bench) {
      loom::topo::TopologySpec spec;
      if (!bench_spec.empty()) {
        spec = loom::topo::topology_from_json(read_json_file(bench_spec));
      } else if (family == "random") {
        loom::topo::GeneratorKnobs k;
        k.num_streams = size;
        k.num_composite = std::max(1, size / 2);
        k.operands_min = 1;
        k.operands_max = 3;
        k.seed = bench_seed;
        spec = loom::topo::generate_random(k);
      } else {
        spec = loom::topo::generate_family(family_kind(family), size);
      }

      loom::MemoryStore store;
      loom::RuntimeOptions ropts;
      ropts.workers = bench_workers;
      loom::Runtime runtime(store, ropts);
      runtime.start();
      loom::Service service(store, runtime);

      bench_opts.mode = mode == "paced" ? loom::bench::PacingMode::Paced
                                        : loom::bench::PacingMode::Serial;
      auto deployed = loom::bench::deploy(spec, service);
      auto report = loom::bench::run_benchmark(service, deployed, bench_opts,
                                               family, size);
      runtime.shutdown();

      loom::bench::print_table({report});
      if (!outdir.empty()) loom::bench::write_csv({report}, outdir);
      if (!report.invariants.ok()) {
        std::fprintf(stderr,
                     "invariant violation: emissions %llu/%llu, discards "
                     "%llu/%llu, other %llu\n",
                     (unsigned long long)report.invariants.observed_emissions,
                     (unsigned long long)report.invariants.expected_emissions,
                     (unsigned long long)report.invariants.observed_discards,
                     (unsigned long long)report.invariants.expected_discards,
                     (unsigned long long)report.invariants.other_discards);
        return 1;
      }
      return 0;
    }
  } catch (const loom::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", loom::error_code_name(e.code()),
                 e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
