#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "adcrowd/commands.hpp"
#include "adcrowd/errors.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string seed;
  std::string out;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "key=value config file");
  sub->add_option("--seed", args.seed, "override rng_seed");
  sub->add_option("--out", args.out, "override out_dir");
}

adcrowd::RunConfig make_config(const CommonArgs& args) {
  adcrowd::RunConfig cfg;
  if (!args.config.empty()) cfg = adcrowd::RunConfig::from_file(args.config);
  if (!args.seed.empty()) cfg.set("rng_seed", args.seed);
  if (!args.out.empty()) cfg.set("out_dir", args.out);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage attention + density-map crowd counting"};
  app.require_subcommand(1);

  CommonArgs synth_args, amg_args, dme_args, eval_args, infer_args;
  std::string infer_image;
  bool corrupt_fixture = false;

  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  add_common(synth, synth_args);
  CLI::App* tamg = app.add_subcommand("train-amg", "train the attention map generator");
  add_common(tamg, amg_args);
  CLI::App* tdme = app.add_subcommand("train-dme", "train the density map estimator");
  add_common(tdme, dme_args);
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(ev, eval_args);
  CLI::App* infer = app.add_subcommand("infer", "predict a count for one PGM image");
  add_common(infer, infer_args);
  infer->add_option("image", infer_image, "input PGM")->required();
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference audit of all ops");
  gc->add_flag("--with-corrupt-fixture", corrupt_fixture,
               "append a deliberately broken backward (must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(synth)) {
      adcrowd::RunConfig cfg = make_config(synth_args);
      adcrowd::cmd_synth(cfg);
    } else if (app.got_subcommand(tamg)) {
      adcrowd::RunConfig cfg = make_config(amg_args);
      adcrowd::cmd_train_amg(cfg);
    } else if (app.got_subcommand(tdme)) {
      adcrowd::RunConfig cfg = make_config(dme_args);
      adcrowd::cmd_train_dme(cfg);
    } else if (app.got_subcommand(ev)) {
      adcrowd::RunConfig cfg = make_config(eval_args);
      adcrowd::cmd_eval(cfg);
    } else if (app.got_subcommand(infer)) {
      adcrowd::RunConfig cfg = make_config(infer_args);
      cfg.set("image", infer_image);
      adcrowd::cmd_infer(cfg);
    } else if (app.got_subcommand(gc)) {
      return adcrowd::cmd_gradcheck(corrupt_fixture) ? 0 : 1;
    }
  } catch (const adcrowd::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const adcrowd::MissingArtifact& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const adcrowd::CheckpointMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
