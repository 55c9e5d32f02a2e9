#include "adcrowd/commands.hpp"

#include <cstdio>
#include <filesystem>

#include "adcrowd/amg.hpp"
#include "adcrowd/checkpoint.hpp"
#include "adcrowd/dme.hpp"
#include "adcrowd/errors.hpp"
#include "adcrowd/gradcheck_suite.hpp"
#include "adcrowd/imageio.hpp"

namespace adcrowd {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create output dir '" + dir + "': " + ec.message());
}

void write_resolved(const RunConfig& cfg, const std::string& dir, const char* command) {
  write_file(dir + "/resolved_" + command + ".cfg", cfg.resolved_text());
}

std::string loss_lines(const std::vector<double>& history) {
  std::string out;
  char buf[48];
  for (double v : history) {
    std::snprintf(buf, sizeof(buf), "%.9g\n", v);
    out += buf;
  }
  return out;
}

AmgNet load_amg(const std::string& path) {
  AmgNet net = build_amg<float>(0);
  load_checkpoint(net.params, path);
  return net;
}

DmeNet load_dme(const std::string& path) {
  DmeNet net = build_dme<float>(0);
  load_checkpoint(net.params, path);
  return net;
}

struct VariantArgs {
  PipelineVariant variant;
  std::string amg_checkpoint;
};

VariantArgs variant_from(RunConfig& cfg) {
  VariantArgs v;
  v.variant.kind = variant_from_name(cfg.get_str("variant", "amg-dme"));
  v.variant.threshold = static_cast<float>(cfg.get_double("threshold", "0.1"));
  v.amg_checkpoint = cfg.get_str("amg_checkpoint", "amg.ckpt");
  return v;
}

}  // namespace

std::vector<SceneSample> load_split(const std::string& dir, const std::string& split) {
  std::vector<SceneSample> out;
  for (const auto& e : read_manifest(dir, split)) out.push_back(load_sample(dir, e));
  return out;
}

void cmd_synth(RunConfig& cfg) {
  const CorpusConfig corpus = corpus_from_config(cfg);
  const std::string out = cfg.get_str("out_dir", "corpus");
  cfg.finish();
  write_corpus(corpus, out);
  write_resolved(cfg, out, "synth");
  std::printf("wrote %d train + %d test samples to %s\n",
              corpus.train_crowd + corpus.train_background,
              corpus.test_crowd + corpus.test_background, out.c_str());
}

void cmd_train_amg(RunConfig& cfg) {
  const std::string data = cfg.get_str("data_dir", "corpus");
  const std::string out = cfg.get_str("out_dir", "amg_out");
  const TrainConfig tc = train_from_config(cfg, "20", "8");
  cfg.finish();
  ensure_dir(out);

  std::vector<SceneSample> positives, negatives;
  for (auto& s : load_split(data, "train"))
    (s.label == SceneLabel::crowd ? positives : negatives).push_back(std::move(s));

  AmgNet net = build_amg<float>(tc.rng_seed);
  const std::vector<double> history = train_amg(net, positives, negatives, tc);
  save_checkpoint(net.params, out + "/amg.ckpt");
  write_file(out + "/amg_loss.txt", loss_lines(history));
  write_resolved(cfg, out, "train-amg");
  if (!history.empty()) std::printf("final epoch mean loss %.6f\n", history.back());
}

void cmd_train_dme(RunConfig& cfg) {
  const std::string data = cfg.get_str("data_dir", "corpus");
  const std::string out = cfg.get_str("out_dir", "dme_out");
  const VariantArgs va = variant_from(cfg);
  const TrainConfig tc = train_from_config(cfg, "30", "1");
  cfg.finish();
  ensure_dir(out);

  AmgNet amg;
  const bool with_amg = variant_needs_amg(va.variant.kind);
  if (with_amg) amg = load_amg(va.amg_checkpoint);

  const std::vector<SceneSample> samples = load_split(data, "train");
  DmeNet net = build_dme<float>(tc.rng_seed);
  const std::vector<double> history =
      train_dme(net, samples, va.variant, with_amg ? &amg : nullptr, tc);
  save_checkpoint(net.params, out + "/dme.ckpt");
  write_file(out + "/dme_loss.txt", loss_lines(history));
  write_resolved(cfg, out, "train-dme");
  if (!history.empty()) std::printf("final epoch mean loss %.6f\n", history.back());
}

MetricsReport cmd_eval(RunConfig& cfg) {
  const std::string data = cfg.get_str("data_dir", "corpus");
  const std::string out = cfg.get_str("out_dir", "eval_out");
  const VariantArgs va = variant_from(cfg);
  const std::string dme_path = cfg.get_str("dme_checkpoint", "dme.ckpt");
  const bool oracle = cfg.get_flag("oracle", "0");
  const bool dump_dmaps = cfg.get_flag("write_dmaps", "0");
  const bool dump_attention = cfg.get_flag("write_attention", "0");
  cfg.finish();
  ensure_dir(out);

  const std::vector<ManifestEntry> entries = read_manifest(data, "test");
  const bool with_amg = !oracle && variant_needs_amg(va.variant.kind);

  AmgNet amg;
  DmeNet net;
  if (!oracle) {
    net = load_dme(dme_path);
    if (with_amg) amg = load_amg(va.amg_checkpoint);
  }

  std::vector<EvalRecord> records;
  char name[64];
  for (const auto& e : entries) {
    const SceneSample s = load_sample(data, e);
    DensityMap pred;
    if (oracle) {
      pred = s.gt_density;
    } else {
      pred = dme_forward(net, s.image, va.variant, with_amg ? &amg : nullptr);
    }
    if (dump_dmaps) {
      std::snprintf(name, sizeof(name), "/pred_%04d.dmap", e.index);
      write_file(out + name, write_dmap(pred));
    }
    if (dump_attention && with_amg) {
      std::snprintf(name, sizeof(name), "/attention_%04d.pgm", e.index);
      write_file(out + name, write_pgm(amg_forward(amg, s.image).attention));
    }
    records.push_back(prepare_record(pred, s.gt_density));
  }

  const MetricsReport report = compute_metrics(records);
  const std::string text = report_to_text(report);
  write_file(out + "/report.txt", text);
  write_resolved(cfg, out, "eval");
  std::fputs(text.c_str(), stdout);
  return report;
}

void cmd_infer(RunConfig& cfg) {
  const std::string image_path = cfg.get_str("image", "");
  const std::string out = cfg.get_str("out_dir", "infer_out");
  const VariantArgs va = variant_from(cfg);
  const std::string dme_path = cfg.get_str("dme_checkpoint", "dme.ckpt");
  cfg.finish();
  if (image_path.empty()) throw FormatError("infer requires image=PATH");

  const Tensor image = read_pgm(read_file(image_path));
  const int h = image.shape[2], w = image.shape[3];
  if (h % 4 != 0 || w % 4 != 0)
    throw FormatError("image dimensions must be multiples of 4, got " +
                      std::to_string(w) + "x" + std::to_string(h));

  const DmeNet net = load_dme(dme_path);
  const bool with_amg = variant_needs_amg(va.variant.kind);
  ensure_dir(out);

  if (with_amg) {
    const AmgNet amg = load_amg(va.amg_checkpoint);
    const auto [label, score] = classify(amg, image);
    write_file(out + "/attention.pgm", write_pgm(amg_forward(amg, image).attention));
    const DensityMap pred = dme_forward(net, image, va.variant, &amg);
    write_file(out + "/pred.dmap", write_dmap(pred));
    std::printf("count=%.3f\nlabel=%s score=%.4f\n", count_from_density(pred),
                label_name(label), score);
  } else {
    const DensityMap pred = dme_forward(net, image, va.variant, nullptr);
    write_file(out + "/pred.dmap", write_dmap(pred));
    std::printf("count=%.3f\n", count_from_density(pred));
  }
  write_resolved(cfg, out, "infer");
}

bool cmd_gradcheck(bool with_corrupt_fixture) {
  const std::vector<OpCheck> checks = gradcheck_suite(with_corrupt_fixture);
  std::fputs(gradcheck_table(checks).c_str(), stdout);
  const bool ok = gradcheck_all_pass(checks);
  std::printf("%s (%zu operations, tolerance 1e-4)\n", ok ? "all ok" : "FAILED",
              checks.size());
  return ok;
}

}  // namespace adcrowd
