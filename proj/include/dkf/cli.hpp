#pragma once

// Command-line front end.  run() never throws: usage problems exit 1, bad
// input data exits 2, and each failure prints one line on `err`.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dkf/codec.hpp"
#include "dkf/dering.hpp"
#include "dkf/eval.hpp"
#include "dkf/io_media.hpp"

namespace dkf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace detail {

inline std::vector<int> parse_q_list(const std::string& s) {
  std::vector<int> qs;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    int q = 0;
    try {
      q = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size() || q < 1 || q > 255) throw CLI::ValidationError("--q", "bad quantizer '" + tok + "'");
    qs.push_back(q);
  }
  if (qs.empty()) throw CLI::ValidationError("--q", "empty list");
  return qs;
}

inline unsigned seed_from_env() {
  const char* s = std::getenv("DKF_SEED");
  if (!s || !*s) return 1;
  return static_cast<unsigned>(std::strtoul(s, nullptr, 10));
}

// Smooth random shapes over a gradient; deterministic for a given seed.
inline std::vector<eval::SweepInput> synthetic_corpus(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<eval::SweepInput> out;
  for (int i = 0; i < n; ++i) {
    PlanarImage img(128, 96, Subsampling::k420);
    struct Disc {
      double x, y, r, v;
    };
    std::vector<Disc> discs(6);
    for (auto& d : discs) d = {u(rng) * 128, u(rng) * 96, 8 + u(rng) * 30, u(rng) * 200 + 20};
    const double gx = u(rng) * 1.5, gy = u(rng) * 1.5;
    for (int c = 0; c < 3; ++c) {
      auto& p = img.planes[c];
      const int sh = c == 0 ? 0 : 1;
      for (int y = 0; y < p.height(); ++y)
        for (int x = 0; x < p.width(); ++x) {
          const double px = x << sh, py = y << sh;
          double v = 40 + gx * px + gy * py;
          for (const auto& d : discs)
            if ((px - d.x) * (px - d.x) + (py - d.y) * (py - d.y) < d.r * d.r) v = c == 0 ? d.v : 255 - d.v;
          p.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    out.push_back({"synthetic" + std::to_string(i), std::move(img)});
  }
  return out;
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dkf: keyframe image codec and evaluation harness", "dkf"};
  app.require_subcommand(1);

  std::string in, outp, a_path, b_path, corpus, q_list = "8,16,32,64,128,224", ref, test, metric = "psnr_hvs", band,
                                                  fit = "cubic", svg;
  int q = 32, threshold = 0, jobs = 1, synthetic = 0;
  bool legacy = false, no_dering = false;

  auto* enc = app.add_subcommand("encode", "Encode a y4m/png image");
  enc->add_option("-i", in, "input image")->required();
  enc->add_option("-o", outp, "output .dkf")->required();
  enc->add_option("-q", q, "quantizer (1-255)")->check(CLI::Range(1, 255));
  enc->add_flag("--legacy-ec", legacy, "use the legacy partition function");
  enc->add_flag("--no-dering", no_dering, "disable the deringing filter");

  auto* dec = app.add_subcommand("decode", "Decode a .dkf stream");
  dec->add_option("-i", in, "input .dkf")->required();
  dec->add_option("-o", outp, "output y4m/png")->required();

  auto* der = app.add_subcommand("dering", "Run the deringing filter on every superblock");
  der->add_option("-i", in, "input image")->required();
  der->add_option("-o", outp, "output image")->required();
  der->add_option("-T", threshold, "luma threshold")->required()->check(CLI::Range(0, 255));

  auto* met = app.add_subcommand("metrics", "Compare two images");
  met->add_option("-a", a_path, "reference image")->required();
  met->add_option("-b", b_path, "test image")->required();

  auto* sweep = app.add_subcommand("rd-sweep", "Encode a corpus over a list of quantizers");
  auto* corpus_opt = sweep->add_option("--corpus", corpus, "directory of y4m/png images");
  auto* synth_opt = sweep->add_option("--synthetic", synthetic, "use N generated images (seeded by DKF_SEED)")
                        ->check(CLI::Range(1, 1000));
  corpus_opt->excludes(synth_opt);
  sweep->add_option("--q", q_list, "comma-separated quantizers");
  sweep->add_option("--out", outp, "results CSV")->required();
  sweep->add_option("--svg", svg, "also plot PSNR-HVS vs rate");
  sweep->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1, 256));
  sweep->add_flag("--no-dering", no_dering, "disable the deringing filter");
  sweep->add_flag("--legacy-ec", legacy, "use the legacy partition function");

  auto* bd = app.add_subcommand("bdrate", "BD-rate of --test against --ref");
  bd->add_option("--ref", ref, "reference CSV")->required();
  bd->add_option("--test", test, "test CSV")->required();
  bd->add_option("--metric", metric, "psnr, psnr_hvs, ssim or fast_ssim")
      ->check(CLI::IsMember({"psnr", "psnr_hvs", "ssim", "fast_ssim"}));
  bd->add_option("--band", band, "low, medium or high")->check(CLI::IsMember({"low", "medium", "high"}));
  bd->add_option("--fit", fit, "cubic or pchip")->check(CLI::IsMember({"cubic", "pchip"}));

  auto* info = app.add_subcommand("info", "Print a stream's header");
  info->add_option("file", in, "input .dkf")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "dkf: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (enc->parsed()) {
      const auto img = read_image(in);
      codec::EncoderConfig cfg;
      cfg.base_q = q;
      cfg.partition = legacy ? entropy::PartitionKind::kLegacy : entropy::PartitionKind::kReducedOverhead;
      cfg.dering_enabled = !no_dering;
      const auto bytes = codec::encode_keyframe(img, cfg);
      dkf::detail::write_file(outp, bytes);
      out << bytes.size() << " bytes, "
          << detail::fmt("%.4f", 8.0 * bytes.size() / (static_cast<double>(img.width) * img.height)) << " bpp\n";
    } else if (dec->parsed()) {
      const auto bytes = dkf::detail::read_file(in);
      write_image(codec::decode_keyframe(bytes), outp);
    } else if (der->parsed()) {
      const auto img = read_image(in);
      const std::vector<std::uint8_t> flags(static_cast<std::size_t>((img.width + 63) / 64) * ((img.height + 63) / 64), 1);
      write_image(dering::dering_frame(img, flags, threshold), outp);
    } else if (met->parsed()) {
      const auto a = read_image(a_path), b = read_image(b_path);
      if (a.width != b.width || a.height != b.height || a.subsampling != b.subsampling)
        throw Error("images differ in geometry");
      const auto m = eval::all_metrics(a, b);
      out << "psnr " << detail::fmt("%.4f", m.psnr) << "\n"
          << "psnr_hvs " << detail::fmt("%.4f", m.psnr_hvs) << "\n"
          << "ssim " << detail::fmt("%.6f", m.ssim) << "\n"
          << "fast_ssim " << detail::fmt("%.6f", m.fast_ssim) << "\n";
    } else if (sweep->parsed()) {
      if (corpus.empty() && synthetic == 0) {
        err << "dkf: rd-sweep needs --corpus or --synthetic\n";
        return kExitUsage;
      }
      std::vector<int> qs;
      try {
        qs = detail::parse_q_list(q_list);
      } catch (const CLI::ParseError& e) {
        err << "dkf: " << e.what() << "\n";
        return kExitUsage;
      }
      std::vector<eval::SweepFailure> failures;
      const auto images =
          corpus.empty() ? detail::synthetic_corpus(synthetic, detail::seed_from_env()) : eval::load_corpus(corpus, &failures);
      if (images.empty()) throw Error("no readable images in corpus");
      codec::EncoderConfig cfg;
      cfg.dering_enabled = !no_dering;
      cfg.partition = legacy ? entropy::PartitionKind::kLegacy : entropy::PartitionKind::kReducedOverhead;
      auto res = eval::rd_sweep(images, qs, cfg, jobs);
      failures.insert(failures.end(), res.failures.begin(), res.failures.end());
      for (const auto& f : failures) err << "dkf: " << f.image << ": " << f.message << "\n";
      if (res.rows.empty()) throw Error("every encode failed");
      const auto text = eval::format_rows(res.rows);
      dkf::detail::write_file(outp, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
      if (!svg.empty()) {
        res.curve.name = outp;
        const auto plot = eval::rd_plot_svg({res.curve}, "psnr_hvs");
        dkf::detail::write_file(svg, std::span(reinterpret_cast<const std::uint8_t*>(plot.data()), plot.size()));
      }
      out << res.rows.size() << " rows\n";
    } else if (bd->parsed()) {
      const auto r = eval::load_curve(ref), t = eval::load_curve(test);
      std::vector<std::string> warnings;
      const double v = eval::bd_rate(r, t, metric, fit == "pchip" ? eval::BdFit::kPchip : eval::BdFit::kCubic,
                                     band.empty() ? std::nullopt : eval::band_by_name(band), &warnings);
      for (const auto& w : warnings) err << "dkf: warning: " << w << "\n";
      out << detail::fmt("%.1f", v == 0 ? 0.0 : v) << "%\n";
    } else if (info->parsed()) {
      const auto bytes = dkf::detail::read_file(in);
      const auto h = codec::Header::parse(bytes);
      out << "magic DKF1\nversion " << int(codec::kVersion) << "\nwidth " << h.width << "\nheight " << h.height
          << "\nsubsampling " << (h.subsampling == Subsampling::k420 ? "420" : "444") << "\npartition "
          << (h.partition == entropy::PartitionKind::kLegacy ? "legacy" : "reduced") << "\nbase_q " << h.base_q
          << "\ndering " << (h.dering ? "on" : "off") << "\npayload_bytes " << bytes.size() - codec::kHeaderSize
          << "\n";
    }
  } catch (const std::exception& e) {
    err << "dkf: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace dkf::cli
