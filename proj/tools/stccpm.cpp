// stccpm: command-line front end for the space-time CPM library.
//
// Exit codes: 0 success / check passed, 1 check failed, 2 usage or config error.

#include <CLI11.hpp>
#include <json.hpp>

#include <bit>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "stccpm/analysis.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace stccpm;

namespace {

constexpr const char* kVersion = "1.0.0";

struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(std::string f, const std::string& msg) : std::runtime_error(msg), field(std::move(f)) {}
};

struct RunConfig {
  std::string code = "pc2";
  int Lt = 0;  // 0: implied by the code
  std::string h = "1/2";
  int M = 8;
  int gamma = 2;
  std::string pulse = "rec";
  int oversampling = 64;
  double Es = 1.0;
  double T = 1.0;
  std::vector<double> theta0;
  int Lr = 1;
  std::string fading = "auto";
  int coherence = 1;
  std::string metric = "blockwise";
  int truncation = 10;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out = "out";
  // per command
  int trials = 50;
  int blocks = 0;  // 0: command default
  std::string ebn0 = "0:2:16";
  std::uint64_t min_errors = 100;
  std::uint64_t max_bits = 2'000'000;
  int frame_blocks = 100;
  int antenna = 0;
  int segment = 4096;
  double overlap = 0.5;
  std::string input;
  int grid = 8;
};

json to_json(const RunConfig& c) {
  return json{{"code", c.code},       {"Lt", c.Lt},
              {"h", c.h},             {"M", c.M},
              {"gamma", c.gamma},     {"pulse", c.pulse},
              {"oversampling", c.oversampling}, {"Es", c.Es},
              {"T", c.T},             {"theta0", c.theta0},
              {"Lr", c.Lr},           {"fading", c.fading},
              {"coherence", c.coherence}, {"metric", c.metric},
              {"truncation", c.truncation}, {"seed", c.seed},
              {"threads", c.threads}, {"out", c.out},
              {"trials", c.trials},   {"blocks", c.blocks},
              {"ebn0", c.ebn0},       {"min_errors", c.min_errors},
              {"max_bits", c.max_bits}, {"frame_blocks", c.frame_blocks},
              {"antenna", c.antenna}, {"segment", c.segment},
              {"overlap", c.overlap}, {"input", c.input},
              {"grid", c.grid}};
}

template <class V>
void read_field(const json& j, const char* key, V& dst) {
  if (!j.contains(key)) return;
  try {
    if constexpr (std::is_same_v<V, std::string>) {
      // numbers are accepted for text fields such as h or ebn0
      dst = j.at(key).is_string() ? j.at(key).get<std::string>() : j.at(key).dump();
    } else {
      dst = j.at(key).get<V>();
    }
  } catch (const json::exception&) {
    throw ConfigError(key, std::string("config field '") + key + "' has the wrong type");
  }
}

void apply_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("config", "config file must hold a JSON object");
  static const std::vector<std::string> known = {
      "code", "Lt", "h", "M", "gamma", "pulse", "oversampling", "Es", "T", "theta0", "Lr", "fading", "coherence",
      "metric", "truncation", "seed", "threads", "out", "trials", "blocks", "ebn0", "min_errors", "max_bits",
      "frame_blocks", "antenna", "segment", "overlap", "input", "grid"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError(k, "unknown config field '" + k + "'");
  read_field(j, "code", c.code);
  read_field(j, "Lt", c.Lt);
  read_field(j, "h", c.h);
  read_field(j, "M", c.M);
  read_field(j, "gamma", c.gamma);
  read_field(j, "pulse", c.pulse);
  read_field(j, "oversampling", c.oversampling);
  read_field(j, "Es", c.Es);
  read_field(j, "T", c.T);
  read_field(j, "theta0", c.theta0);
  read_field(j, "Lr", c.Lr);
  read_field(j, "fading", c.fading);
  read_field(j, "coherence", c.coherence);
  read_field(j, "metric", c.metric);
  read_field(j, "truncation", c.truncation);
  read_field(j, "seed", c.seed);
  read_field(j, "threads", c.threads);
  read_field(j, "out", c.out);
  read_field(j, "trials", c.trials);
  read_field(j, "blocks", c.blocks);
  read_field(j, "ebn0", c.ebn0);
  read_field(j, "min_errors", c.min_errors);
  read_field(j, "max_bits", c.max_bits);
  read_field(j, "frame_blocks", c.frame_blocks);
  read_field(j, "antenna", c.antenna);
  read_field(j, "segment", c.segment);
  read_field(j, "overlap", c.overlap);
  read_field(j, "input", c.input);
  read_field(j, "grid", c.grid);
}

// Everything the library needs, validated with the offending field named.
struct Resolved {
  StCode code;
  CpmParams params;
  ChannelConfig channel;
  DecoderConfig decoder;
};

Resolved resolve(const RunConfig& c, FadingKind default_fading) {
  Resolved r;
  const auto fam = parse_family(c.code);
  if (!fam) throw ConfigError("code", "unknown code family '" + c.code + "'");
  if (c.Lt != 0 && c.Lt != family_antennas(*fam))
    throw ConfigError("Lt", "Lt=" + std::to_string(c.Lt) + " does not match code '" + c.code + "'");
  Rational h;
  try {
    h = Rational::parse(c.h);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("h", std::string("h must be a fraction num/den: ") + e.what());
  }
  if (h.num <= 0) throw ConfigError("h", "h must be positive");
  if (c.M < 2 || (c.M & (c.M - 1)) != 0) throw ConfigError("M", "M must be a power of 2");
  if (c.gamma < 1) throw ConfigError("gamma", "gamma must be >= 1");
  if (c.oversampling < 8) throw ConfigError("oversampling", "oversampling must be >= 8");
  if (!(c.Es > 0)) throw ConfigError("Es", "Es must be positive");
  if (!(c.T > 0)) throw ConfigError("T", "T must be positive");
  PulseShape pulse;
  if (c.pulse == "rec")
    pulse = PulseShape::LREC;
  else if (c.pulse == "rc")
    pulse = PulseShape::LRC;
  else
    throw ConfigError("pulse", "pulse must be 'rec' or 'rc'");
  r.params = CpmParams::from_h(h, c.M, c.gamma, pulse, c.oversampling);
  r.params.Es = c.Es;
  r.params.T = c.T;
  const int Lt = family_antennas(*fam);
  if (!c.theta0.empty() && c.theta0.size() != static_cast<std::size_t>(Lt))
    throw ConfigError("theta0", "theta0 needs one value per antenna (" + std::to_string(Lt) + ")");
  r.code = StCode::make(*fam, c.theta0);
  if (c.Lr < 1) throw ConfigError("Lr", "Lr must be >= 1");
  r.channel.Lr = c.Lr;
  if (c.fading == "complex")
    r.channel.fading = FadingKind::Complex;
  else if (c.fading == "real")
    r.channel.fading = FadingKind::Real;
  else if (c.fading == "auto")
    r.channel.fading = default_fading;
  else
    throw ConfigError("fading", "fading must be 'complex', 'real' or 'auto'");
  if (c.coherence < 1) throw ConfigError("coherence", "coherence must be >= 1");
  r.channel.coherence_blocks = c.coherence;
  const auto metric = parse_metric(c.metric);
  if (!metric) throw ConfigError("metric", "metric must be 'joint', 'blockwise' or 'symbolwise'");
  if (*metric == Metric::Symbolwise && !r.code.causal())
    throw ConfigError("metric", "symbolwise metric requires a parallel-mapping code");
  r.decoder.metric = *metric;
  if (c.truncation < 1) throw ConfigError("truncation", "truncation must be >= 1");
  r.decoder.truncation = c.truncation;
  if (c.threads < 0) throw ConfigError("threads", "threads must be >= 0");
  return r;
}

BerConfig ber_config(const RunConfig& c, const Resolved& r) {
  BerConfig b;
  b.code = r.code;
  b.params = r.params;
  b.channel = r.channel;
  b.decoder = r.decoder;
  if (c.min_errors < 1) throw ConfigError("min_errors", "min_errors must be >= 1");
  if (c.max_bits < 1) throw ConfigError("max_bits", "max_bits must be >= 1");
  if (c.frame_blocks < 1) throw ConfigError("frame_blocks", "frame_blocks must be >= 1");
  b.stop = {c.min_errors, c.max_bits};
  b.frame_blocks = c.frame_blocks;
  b.seed = c.seed;
  b.threads = c.threads;
  return b;
}

std::vector<double> ebn0_points(const RunConfig& c) {
  try {
    std::string s = c.ebn0;
    if (s == "inf") return {std::numeric_limits<double>::infinity()};
    return parse_ebn0_list(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("ebn0", e.what());
  }
}

// ---------------------------------------------------------------------------
// Output

fs::path out_dir(const RunConfig& c) {
  fs::path d(c.out);
  fs::create_directories(d);
  return d;
}

void write_atomic(const fs::path& path, const std::string& content, std::ios::openmode mode = std::ios::out) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, mode | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& c, json extra) {
  json m{{"tool", "stccpm"}, {"version", kVersion}, {"command", command}, {"seed", c.seed}, {"config", to_json(c)}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

json params_json(const Resolved& r) {
  return json{{"code", family_name(r.code.family)}, {"Lt", r.code.Lt},  {"h", r.params.h_rational().str()},
              {"M", r.params.M},                    {"gamma", r.params.gamma}, {"pulse", to_string(r.params.pulse)},
              {"oversampling", r.params.oversampling}, {"Es", r.params.Es}, {"T", r.params.T},
              {"theta0", r.code.theta0}};
}

// ---------------------------------------------------------------------------
// Commands

int cmd_verify(const RunConfig& c) {
  const auto r = resolve(c, FadingKind::Complex);
  if (r.code.family == Family::None) throw ConfigError("code", "verify needs a space-time code (Lt >= 2)");
  if (c.trials < 1) throw ConfigError("trials", "trials must be >= 1");
  const int bpt = c.blocks > 0 ? c.blocks : 4;
  const auto rep = verify_code(r.code, r.params, c.trials, c.seed, bpt);
  const bool pass = rep.passes();
  json j{{"code", family_name(r.code.family)},
         {"max_offdiag_ratio", rep.max_offdiag_ratio},
         {"max_diag_error", rep.max_diag_error},
         {"max_phase_jump", rep.max_phase_jump},
         {"blocks", rep.blocks},
         {"boundaries", rep.boundaries},
         {"gram_tolerance", 1e-6},
         {"jump_tolerance", 1e-9},
         {"pass", pass}};
  const auto dir = out_dir(c);
  write_atomic(dir / "verify.json", j.dump(2) + "\n");
  write_manifest(dir, "verify", c, {{"outputs", {"verify.json"}}});
  std::cout << j.dump() << "\n";
  return pass ? 0 : 1;
}

int cmd_encode(const RunConfig& c) {
  const auto r = resolve(c, FadingKind::Complex);
  const int blocks = c.blocks > 0 ? c.blocks : 100;
  const auto sig = random_signal(r.code, r.params, static_cast<std::size_t>(blocks), c.seed);
  static_assert(std::endian::native == std::endian::little, "sample files are written in host order");
  std::string bin;
  std::size_t per_antenna = 0;
  for (int m = 0; m < r.code.Lt; ++m) {
    const auto s = antenna_stream(sig, m);
    per_antenna = s.size();
    bin.append(reinterpret_cast<const char*>(s.data()), s.size() * sizeof(cplx));
  }
  json side = params_json(r);
  side["format"] = "float64le-iq";
  side["layout"] = "antenna-major";
  side["antennas"] = r.code.Lt;
  side["samples_per_antenna"] = per_antenna;
  side["dt"] = r.params.dt();
  side["blocks"] = blocks;
  side["seed"] = c.seed;
  const auto dir = out_dir(c);
  write_atomic(dir / "samples.bin", bin, std::ios::out | std::ios::binary);
  write_atomic(dir / "samples.json", side.dump(2) + "\n");
  write_manifest(dir, "encode", c, {{"outputs", {"samples.bin", "samples.json"}}});
  std::cout << json{{"antennas", r.code.Lt}, {"samples_per_antenna", per_antenna}}.dump() << "\n";
  return 0;
}

int cmd_decode(const RunConfig& c) {
  const auto r = resolve(c, FadingKind::Complex);
  auto cfg = ber_config(c, r);
  if (c.blocks > 0) cfg.frame_blocks = c.blocks;
  const auto e = ebn0_points(c);
  if (e.size() != 1) throw ConfigError("ebn0", "decode takes a single Eb/N0 value");
  const auto trellis = make_trellis(cfg);
  DecodeCounters cnt;
  const auto fr = simulate_frame(cfg, trellis, e[0], 0, &cnt);
  std::size_t sym_err = 0;
  for (std::size_t k = 0; k < fr.data.size(); ++k) sym_err += fr.data[k] != fr.decoded[k];
  json j{{"ebn0_db", std::isinf(e[0]) ? json("inf") : json(e[0])},
         {"symbols", fr.data.size()},
         {"symbol_errors", sym_err},
         {"bit_errors", fr.bit_errors},
         {"bits", fr.bits},
         {"branch_metrics", cnt.branch_metrics},
         {"correlations", cnt.correlations},
         {"evaluations_per_state_block", cnt.evaluations_per_state_block()},
         {"data", fr.data},
         {"decoded", fr.decoded}};
  const auto dir = out_dir(c);
  write_atomic(dir / "decode.json", j.dump(2) + "\n");
  write_manifest(dir, "decode", c, {{"outputs", {"decode.json"}}});
  std::cout << json{{"symbols", fr.data.size()}, {"symbol_errors", sym_err}, {"bit_errors", fr.bit_errors}}.dump()
            << "\n";
  return 0;
}

int cmd_ber(const RunConfig& c) {
  const auto r = resolve(c, FadingKind::Complex);
  const auto cfg = ber_config(c, r);
  const auto pts = ebn0_points(c);
  const auto curve = run_ber(cfg, pts);
  std::ostringstream csv;
  write_ber_csv(csv, curve);
  const auto dir = out_dir(c);
  write_atomic(dir / "ber_curve.csv", csv.str());
  write_manifest(dir, "ber", c, {{"fingerprint", curve.fingerprint}, {"outputs", {"ber_curve.csv"}}});
  std::cout << csv.str();
  return 0;
}

std::vector<cplx> read_samples(const fs::path& bin_path, int antenna, double& dt, double& bit_dur) {
  fs::path side_path = bin_path;
  side_path.replace_extension(".json");
  std::ifstream sf(side_path);
  if (!sf) throw ConfigError("input", "missing sidecar " + side_path.string());
  json side;
  try {
    sf >> side;
  } catch (const json::exception&) {
    throw ConfigError("input", "unreadable sidecar " + side_path.string());
  }
  const int antennas = side.at("antennas").get<int>();
  const auto n = side.at("samples_per_antenna").get<std::size_t>();
  if (antenna < 0 || antenna >= antennas) throw ConfigError("antenna", "antenna index out of range for input file");
  dt = side.at("dt").get<double>();
  const double T = side.at("T").get<double>();
  const int M = side.at("M").get<int>();
  bit_dur = T / std::countr_zero(static_cast<unsigned>(M));
  std::ifstream bf(bin_path, std::ios::binary);
  if (!bf) throw ConfigError("input", "cannot open " + bin_path.string());
  std::vector<cplx> s(n);
  bf.seekg(static_cast<std::streamoff>(static_cast<std::size_t>(antenna) * n * sizeof(cplx)));
  bf.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(n * sizeof(cplx)));
  if (!bf) throw ConfigError("input", "sample file shorter than its sidecar says");
  return s;
}

int cmd_psd(const RunConfig& c) {
  if (c.segment < 8) throw ConfigError("segment", "segment must be >= 8");
  if (!(c.overlap >= 0 && c.overlap < 1)) throw ConfigError("overlap", "overlap must be in [0, 1)");
  PsdEstimate est;
  if (!c.input.empty()) {
    double dt = 0, bd = 0;
    const auto s = read_samples(c.input, c.antenna, dt, bd);
    if (s.size() < 4 * static_cast<std::size_t>(c.segment))
      throw ConfigError("input", "stream shorter than 4 segments");
    est = welch_psd(s, dt, bd, c.segment, c.overlap);
  } else {
    const auto r = resolve(c, FadingKind::Complex);
    if (c.antenna < 0 || c.antenna >= r.code.Lt) throw ConfigError("antenna", "antenna index out of range for code");
    const int blocks = c.blocks > 0 ? c.blocks : 2000;
    const auto sig = random_signal(r.code, r.params, static_cast<std::size_t>(blocks), c.seed);
    const auto s = antenna_stream(sig, c.antenna);
    if (s.size() < 4 * static_cast<std::size_t>(c.segment))
      throw ConfigError("blocks", "too few blocks for 4 Welch segments");
    est = welch_psd(s, r.params.dt(), bit_duration(r.params), c.segment, c.overlap);
  }
  std::ostringstream csv;
  write_psd_csv(csv, est);
  const auto dir = out_dir(c);
  write_atomic(dir / "psd.csv", csv.str());
  write_manifest(dir, "psd", c,
                 {{"outputs", {"psd.csv"}},
                  {"window", est.window},
                  {"integrated_power", est.integrated_power()},
                  {"mean_power", est.mean_power}});
  std::cout << json{{"bins", est.freqs.size()}, {"df", est.df}, {"integrated_power", est.integrated_power()}}.dump()
            << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& c) {
  const auto r = resolve(c, FadingKind::Real);
  if (r.code.Lt != 3) throw ConfigError("code", "sweep needs a three-antenna code");
  if (c.grid < 1) throw ConfigError("grid", "grid must be >= 1");
  const auto cfg = ber_config(c, r);
  const auto e = ebn0_points(c);
  if (e.size() != 1) throw ConfigError("ebn0", "sweep takes a single Eb/N0 value");
  const auto g = sweep_initial_phases(cfg, e[0], c.grid);
  // all-zero cells make the ratio infinite, which JSON cannot hold
  const json ratio = std::isfinite(g.max_min_ratio()) ? json(g.max_min_ratio()) : json("inf");
  std::ostringstream csv;
  write_sweep_csv(csv, g);
  const auto dir = out_dir(c);
  write_atomic(dir / "sweep.csv", csv.str());
  write_manifest(dir, "sweep", c,
                 {{"outputs", {"sweep.csv"}},
                  {"fingerprint", cfg.fingerprint()},
                  {"argmin", {g.theta1[g.argmin_i], g.theta2[g.argmin_j]}},
                  {"max_min_ratio", ratio}});
  std::cout << json{{"cells", g.theta1.size() * g.theta2.size()},
                    {"argmin", {g.theta1[g.argmin_i], g.theta2[g.argmin_j]}},
                    {"max_min_ratio", ratio}}
                   .dump()
            << "\n";
  return 0;
}

void usage_error(const std::string& field, const std::string& msg) {
  std::cerr << json{{"error", msg}, {"field", field}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time coded CPM: encode, verify, decode, simulate"};
  app.set_help_flag("--help", "print this help");  // no -h: it would shadow --h
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunConfig flags;
  std::string config_path;
  std::string theta0_text;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> overrides;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file; flags override its values");
    auto opt = [&flags, &overrides, sub](const char* name, auto RunConfig::*member, const char* help) {
      auto* o = sub->add_option(name, flags.*member, help);
      overrides.emplace_back(o, [member, &flags](RunConfig& c) { c.*member = flags.*member; });
      return o;
    };
    opt("--code", &RunConfig::code, "code family: reference, wangxia, pc2, offpc2, linpc, rcpc, offpc3, corrupted-demo");
    opt("--Lt", &RunConfig::Lt, "transmit antennas (checked against the code)");
    opt("--h", &RunConfig::h, "modulation index as num/den");
    opt("--M", &RunConfig::M, "alphabet size");
    opt("--gamma", &RunConfig::gamma, "pulse memory in symbols");
    opt("--pulse", &RunConfig::pulse, "rec or rc");
    opt("--oversampling", &RunConfig::oversampling, "samples per symbol");
    opt("--Es", &RunConfig::Es, "symbol energy");
    opt("--T", &RunConfig::T, "symbol duration");
    auto* th = sub->add_option("--theta0", theta0_text, "initial phases in cycles, comma separated");
    overrides.emplace_back(th, [&theta0_text](RunConfig& c) {
      c.theta0.clear();
      std::stringstream ss(theta0_text);
      for (std::string p; std::getline(ss, p, ',');) {
        try {
          c.theta0.push_back(std::stod(p));
        } catch (const std::exception&) {
          throw ConfigError("theta0", "bad theta0 value '" + p + "'");
        }
      }
    });
    opt("--Lr", &RunConfig::Lr, "receive antennas");
    opt("--fading", &RunConfig::fading, "complex, real or auto");
    opt("--coherence", &RunConfig::coherence, "code blocks per fading realization");
    opt("--metric", &RunConfig::metric, "joint, blockwise or symbolwise");
    opt("--truncation", &RunConfig::truncation, "survivor depth in code blocks");
    opt("--seed", &RunConfig::seed, "master seed");
    opt("--threads", &RunConfig::threads, "worker threads (0: all cores)");
    opt("--out", &RunConfig::out, "output directory");
    return opt;
  };

  auto* verify = app.add_subcommand("verify", "certify orthogonality and phase continuity");
  auto vopt = common(verify);
  vopt("--trials", &RunConfig::trials, "random trials");
  vopt("--blocks", &RunConfig::blocks, "blocks per trial (default 4)");

  auto* encode = app.add_subcommand("encode", "write random-data samples as float64 I/Q");
  auto eopt = common(encode);
  eopt("--blocks", &RunConfig::blocks, "code blocks (default 100)");

  auto* decode = app.add_subcommand("decode", "simulate and decode one frame");
  auto dopt = common(decode);
  dopt("--blocks", &RunConfig::blocks, "code blocks in the frame (default frame_blocks)");
  dopt("--ebn0", &RunConfig::ebn0, "Eb/N0 in dB or inf");

  auto* ber = app.add_subcommand("ber", "Monte Carlo BER curve");
  auto bopt = common(ber);
  bopt("--ebn0", &RunConfig::ebn0, "start:step:stop or comma list, dB");
  bopt("--min-errors", &RunConfig::min_errors, "stop a point after this many bit errors");
  bopt("--max-bits", &RunConfig::max_bits, "stop a point after this many bits");
  bopt("--frame-blocks", &RunConfig::frame_blocks, "code blocks per simulated frame");

  auto* psd = app.add_subcommand("psd", "Welch PSD of one antenna");
  auto popt = common(psd);
  popt("--antenna", &RunConfig::antenna, "antenna index, 0-based");
  popt("--blocks", &RunConfig::blocks, "code blocks of random data (default 2000)");
  popt("--segment", &RunConfig::segment, "Welch segment length");
  popt("--overlap", &RunConfig::overlap, "segment overlap fraction");
  popt("--input", &RunConfig::input, "samples.bin written by encode");

  auto* sweep = app.add_subcommand("sweep", "BER over initial phases of a three-antenna code");
  auto sopt = common(sweep);
  sopt("--ebn0", &RunConfig::ebn0, "Eb/N0 in dB");
  sopt("--grid", &RunConfig::grid, "grid points per axis");
  sopt("--min-errors", &RunConfig::min_errors, "stop a cell after this many bit errors");
  sopt("--max-bits", &RunConfig::max_bits, "stop a cell after this many bits");
  sopt("--frame-blocks", &RunConfig::frame_blocks, "code blocks per simulated frame");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    usage_error("arguments", e.what());
    return 2;
  }

  try {
    RunConfig cfg;
    if (sweep->parsed()) {
      cfg.ebn0 = "13";
      cfg.M = 4;
      cfg.code = "offpc3";
    }
    if (decode->parsed()) cfg.ebn0 = "inf";
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw ConfigError("config", "cannot open config file " + config_path);
      json j;
      try {
        f >> j;
      } catch (const json::exception& e) {
        throw ConfigError("config", std::string("config is not valid JSON: ") + e.what());
      }
      apply_json(j, cfg);
    }
    for (auto& [o, set] : overrides)
      if (o->count() > 0) set(cfg);

    if (verify->parsed()) return cmd_verify(cfg);
    if (encode->parsed()) return cmd_encode(cfg);
    if (decode->parsed()) return cmd_decode(cfg);
    if (ber->parsed()) return cmd_ber(cfg);
    if (psd->parsed()) return cmd_psd(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg);
  } catch (const ConfigError& e) {
    usage_error(e.field, e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    usage_error("config", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 2;
  }
  return 2;
}
