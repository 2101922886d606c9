#include "unrollkit/io.hpp"
#include "unrollkit/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace unrollkit;

namespace {

// Everything a subcommand writes; removed again if the command fails part-way.
class Outputs
{
public:
  void add(fs::path p) { paths_.push_back(std::move(p)); }
  // Directories are only removed if this command created them.
  void add_dir(fs::path const &p)
  {
    if (!fs::exists(p)) {
      add(p);
    }
  }
  void add_cfl(fs::path const &stem)
  {
    add(stem.string() + ".hdr");
    add(stem.string() + ".cfl");
  }
  void remove_all() const
  {
    std::error_code ec;
    for (auto const &p : paths_) {
      fs::remove_all(p, ec);
    }
  }

private:
  std::vector<fs::path> paths_;
};

std::vector<MaskKind> parse_kinds(std::vector<std::string> const &names)
{
  std::vector<MaskKind> out;
  for (auto const &n : names) {
    out.push_back(parse_mask_kind(n));
  }
  return out;
}

std::vector<ReconSample> load_dataset(fs::path const &root)
{
  std::vector<ReconSample> out;
  for (auto const &dir : find_samples(root)) {
    out.push_back(read_sample(dir));
  }
  if (out.empty()) {
    throw Error("no samples found under " + root.string());
  }
  return out;
}

auto const kKindNames = std::vector<std::string>{"uniform", "gaussian", "radial"};

void add_seed(CLI::App *cmd, std::uint64_t &seed)
{
  cmd->add_option("--seed", seed, "Random seed")->envname("UNROLLKIT_SEED");
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"unrollkit: adaptive unrolled reconstruction for dynamic MRI"};
  app.require_subcommand(1);
  Outputs outputs;

  // mask
  std::string kind = "uniform";
  Index nx = 64, ny = 64, nt = 8, rate = 4, acs = -1;
  std::uint64_t seed = 0;
  std::string out;
  auto *mask_cmd = app.add_subcommand("mask", "Generate a sampling mask");
  mask_cmd->add_option("--kind", kind, "uniform | gaussian | radial")->check(CLI::IsMember(kKindNames));
  mask_cmd->add_option("--nx", nx)->check(CLI::PositiveNumber);
  mask_cmd->add_option("--ny", ny)->check(CLI::PositiveNumber);
  mask_cmd->add_option("--rate", rate)->check(CLI::PositiveNumber);
  mask_cmd->add_option("--acs", acs, "Calibration lines (default depends on ny and rate)");
  add_seed(mask_cmd, seed);
  mask_cmd->add_option("--out", out, "Output stem")->required();
  mask_cmd->callback([&] {
    auto const k = parse_mask_kind(kind);
    Index const lines = acs >= 0 ? acs : default_acs_lines(ny, rate);
    SamplingMask m;
    switch (k) {
    case MaskKind::Uniform: m = make_uniform_mask(nx, ny, rate, lines, static_cast<Index>(seed % std::min<std::uint64_t>(rate, ny))); break;
    case MaskKind::GaussianRandom: m = make_gaussian_mask(nx, ny, rate, lines, seed); break;
    case MaskKind::PseudoRadial: m = make_pseudo_radial_mask(nx, ny, rate, seed); break;
    }
    outputs.add_cfl(out);
    outputs.add(out + ".meta");
    write_mask(out, m);
    std::printf("achieved rate %.4f\n", achieved_rate(m));
  });

  // embed
  std::string mask_stem;
  bool sweep = false;
  Index sweep_seeds = 50;
  auto *embed_cmd = app.add_subcommand("embed", "Pattern embeddings as CSV");
  auto *mask_opt = embed_cmd->add_option("--mask", mask_stem, "Mask stem");
  auto *sweep_opt = embed_cmd->add_flag("--sweep", sweep, "All kinds x rates x seeds");
  mask_opt->excludes(sweep_opt);
  embed_cmd->add_option("--nx", nx);
  embed_cmd->add_option("--ny", ny);
  embed_cmd->add_option("--seeds", sweep_seeds, "Seeds per kind and rate in a sweep")->check(CLI::PositiveNumber);
  add_seed(embed_cmd, seed);
  embed_cmd->add_option("--out", out, "CSV path (default: stdout)");
  embed_cmd->callback([&] {
    if (mask_stem.empty() && !sweep) {
      throw CLI::RequiredError("--mask or --sweep");
    }
    std::ofstream file;
    if (!out.empty()) {
      outputs.add(out);
      file.open(out);
      if (!file) {
        throw Error("cannot write " + out);
      }
    }
    std::ostream &os = out.empty() ? std::cout : file;
    os << "kind,rate,seed";
    for (Index i = 0; i < PatternEmbedding::kSize; i++) {
      os << ",v" << i;
    }
    os << "\n";
    os.precision(10);
    auto emit = [&](SamplingMask const &m) {
      auto const e = pattern_embedding(m);
      os << to_string(m.kind) << "," << m.nominal_rate << "," << m.seed;
      for (Index i = 0; i < PatternEmbedding::kSize; i++) {
        os << "," << e.v[i];
      }
      os << "\n";
    };
    if (sweep) {
      for (auto k : {MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial}) {
        for (Index r : kStandardRates) {
          for (Index s = 0; s < sweep_seeds; s++) {
            emit(make_mask(k, nx, ny, r, seed + static_cast<std::uint64_t>(s)));
          }
        }
      }
    } else {
      emit(read_mask(mask_stem));
    }
  });

  // phantom
  Index contrast = 0;
  double motion = 0.04;
  auto *phantom_cmd = app.add_subcommand("phantom", "Write a dynamic phantom image [t, x, y]");
  phantom_cmd->add_option("--nx", nx);
  phantom_cmd->add_option("--ny", ny);
  phantom_cmd->add_option("--nt", nt);
  phantom_cmd->add_option("--contrast", contrast, "0 cine, 1 aorta, 2 tagging, 3 mapping");
  phantom_cmd->add_option("--motion", motion, "Wall excursion as a fraction of the FOV");
  add_seed(phantom_cmd, seed);
  phantom_cmd->add_option("--out", out, "Output stem")->required();
  phantom_cmd->callback([&] {
    PhantomSpec spec{nx, ny, nt, contrast, seed, motion};
    auto const img = generate_phantom(spec);
    outputs.add_cfl(out);
    write_cfl(out, img);
  });

  // dataset
  Index coils = 4, per_cell = 1;
  std::vector<Index> rates{4, 8, 12, 16, 20, 24};
  std::vector<std::string> kinds = kKindNames;
  std::vector<Index> contrasts{0, 1, 2, 3};
  auto *dataset_cmd = app.add_subcommand("dataset", "Simulate an undersampled dataset");
  dataset_cmd->add_option("--nx", nx);
  dataset_cmd->add_option("--ny", ny);
  dataset_cmd->add_option("--nt", nt);
  dataset_cmd->add_option("--coils", coils)->check(CLI::PositiveNumber);
  dataset_cmd->add_option("--per-cell", per_cell)->check(CLI::PositiveNumber);
  dataset_cmd->add_option("--rates", rates)->delimiter(',');
  dataset_cmd->add_option("--kinds", kinds)->delimiter(',')->check(CLI::IsMember(kKindNames));
  dataset_cmd->add_option("--contrasts", contrasts)->delimiter(',');
  dataset_cmd->add_option("--motion", motion);
  add_seed(dataset_cmd, seed);
  dataset_cmd->add_option("--out", out, "Output directory")->required();
  dataset_cmd->callback([&] {
    DatasetSpec spec{nx, ny, nt, coils, per_cell, rates, parse_kinds(kinds), contrasts, seed, motion};
    if (fs::exists(out) && !fs::is_empty(out)) {
      throw Error("output directory " + out + " is not empty");
    }
    outputs.add_dir(out);
    auto const samples = build_dataset(spec);
    for (auto const &s : samples) {
      write_sample(sample_dir(out, s.mask.kind, s.mask.nominal_rate, s.contrast_id, s.seed), s);
    }
    std::printf("wrote %zu samples\n", samples.size());
  });

  // train
  std::string data_dir, method = "AdaptivePCP";
  TrainConfig tc;
  auto *train_cmd = app.add_subcommand("train", "Train one method and write a checkpoint");
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_cmd->add_option("--method", method, "FixedUNet | AdaptiveUNet | FixedPCP | AdaptivePCP");
  train_cmd->add_option("--epochs", tc.epochs)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--batch", tc.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tc.lr);
  train_cmd->add_option("--alpha", tc.loss.alpha, "MSE weight");
  train_cmd->add_option("--beta", tc.loss.beta, "1 - SSIM weight");
  train_cmd->add_option("--clip", tc.grad_clip, "Global gradient norm limit (0 = off)");
  add_seed(train_cmd, seed);
  train_cmd->add_option("--out", out, "Checkpoint directory")->required();
  train_cmd->callback([&] {
    tc.method = parse_method(method);
    tc.seed = seed;
    auto const data = load_dataset(data_dir);
    outputs.add_dir(out);
    auto const res = train(tc, data, [](Index epoch, double loss) {
      std::fprintf(stderr, "epoch %td loss %.6g\n", epoch, loss);
    });
    save_model(out, res.model, res.loss_history);
    if (res.skipped_steps > 0) {
      std::fprintf(stderr, "skipped %td steps with non-finite gradients\n", res.skipped_steps);
    }
  });

  // recon
  std::string ckpt, sample, y_stem, sens_stem, ref_stem;
  auto *recon_cmd = app.add_subcommand("recon", "Reconstruct one acquisition");
  recon_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  auto *sample_opt = recon_cmd->add_option("--sample", sample, "Sample directory from `dataset`");
  auto *y_opt = recon_cmd->add_option("--y", y_stem, "k-space stem [coil, t, x, y]");
  recon_cmd->add_option("--mask", mask_stem, "Mask stem")->needs(y_opt);
  recon_cmd->add_option("--sens", sens_stem, "Sensitivity stem [coil, x, y]")->needs(y_opt);
  recon_cmd->add_option("--contrast", contrast);
  recon_cmd->add_option("--ref", ref_stem, "Reference image stem for SSIM/NMRSE");
  sample_opt->excludes(y_opt);
  recon_cmd->add_option("--out", out, "Output stem")->required();
  recon_cmd->callback([&] {
    auto const model = load_model(ckpt);
    ReconSample s;
    if (!sample.empty()) {
      s = read_sample(sample);
    } else {
      if (y_stem.empty() || mask_stem.empty() || sens_stem.empty()) {
        throw CLI::RequiredError("--sample or all of --y, --mask, --sens");
      }
      s.y = read_cfl(y_stem, 4);
      s.mask = read_mask(mask_stem);
      s.sens.maps = read_cfl(sens_stem, 3);
      s.contrast_id = contrast;
    }
    ReconTrace trace;
    auto const x = reconstruct(s.y, s.mask, s.sens, s.contrast_id, model, &trace);
    outputs.add_cfl(out);
    write_cfl(out, x);
    std::printf("entry %td executed %td\n", trace.entry, trace.executed);
    ComplexTensor ref;
    if (!ref_stem.empty()) {
      ref = read_cfl(ref_stem, 3);
    } else if (!sample.empty()) {
      ref = s.target;
    }
    if (ref.size() > 0) {
      auto const mx = magnitude(x), mr = magnitude(ref);
      std::printf("ssim %.6f nmrse %.6f\n", ssim(mx, mr), nmrse(mx, mr));
    }
  });

  // bench
  std::vector<std::string> ckpts;
  auto *bench_cmd = app.add_subcommand("bench", "Evaluate checkpoints on a dataset");
  bench_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  bench_cmd->add_option("--ckpt", ckpts, "Checkpoint as NAME=DIR or DIR (repeatable)")->required();
  bench_cmd->add_option("--out", out, "Output directory for the CSV files")->required();
  bench_cmd->callback([&] {
    std::vector<std::pair<std::string, Model>> models;
    for (auto const &c : ckpts) {
      auto const eq = c.find('=');
      std::string const name = eq == std::string::npos ? fs::path(c).filename().string() : c.substr(0, eq);
      fs::path const dir = eq == std::string::npos ? c : c.substr(eq + 1);
      models.emplace_back(name, load_model(dir));
    }
    auto const data = load_dataset(data_dir);
    auto const report = benchmark(models, data);
    fs::path const dir(out);
    outputs.add_dir(dir);
    fs::create_directories(dir);
    for (auto const *name : {"results.csv", "aggregates.csv", "ttests.csv"}) {
      outputs.add(dir / name);
    }
    std::ofstream rows(dir / "results.csv"), agg(dir / "aggregates.csv"), tt(dir / "ttests.csv");
    write_rows_csv(rows, report.rows);
    write_aggregates_csv(agg, report.aggregates);
    write_ttests_csv(tt, report.ttests);
    if (!rows || !agg || !tt) {
      throw Error("cannot write report files in " + out);
    }
    std::printf("%zu result rows\n", report.rows.size());
  });

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForAllHelp const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    outputs.remove_all();
    std::cerr << "error: " << e.what() << "\n\n";
    auto *sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  } catch (std::exception const &e) {
    outputs.remove_all();
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
