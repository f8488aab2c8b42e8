// staa: command-line front end for the space-time anti-aliasing library.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "staa/staa.hpp"

namespace fs = std::filesystem;
using namespace staa;

namespace {

enum Exit { kOk = 0, kUsage = 2, kIo = 3, kFormat = 4, kNumeric = 5 };

std::size_t env_threads() {
  const char* v = std::getenv("STAA_THREADS");
  if (!v || !*v) return 0;
  try {
    return static_cast<std::size_t>(std::stoul(v));
  } catch (const std::exception&) {
    throw SpecError(std::string("STAA_THREADS must be a non-negative integer, got '") + v + "'");
  }
}

// Frame directories keep their rate in a sidecar; .stv carries it inline.
VideoVolume read_input(const fs::path& path, const std::string& fps_flag) {
  if (!fs::exists(path)) throw IoError("input not found: " + path.string());
  VideoVolume v = load_volume(path);
  if (fs::is_directory(path) && fs::exists(path / "fps.txt")) {
    std::ifstream in(path / "fps.txt");
    std::string text;
    in >> text;
    v.fps = Rational::parse(text);
  }
  if (!fps_flag.empty()) v.fps = Rational::parse(fps_flag);
  return v;
}

void write_output(const VideoVolume& v, const fs::path& path, bool u8) {
  if (path.extension() == ".stv") {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_stv(v, path, u8 ? StvType::U8 : StvType::F32);
    return;
  }
  save_frames(v, path);
  std::ofstream(path / "fps.txt") << v.fps.str() << '\n';
}

VideoVolume quantized(VideoVolume v) {
  for (auto& x : v.data.data()) x = std::round(std::clamp(x, 0.0f, 255.0f));
  return v;
}

std::size_t integer_factor(const std::string& text, const char* what) {
  const auto r = Rational::parse(text);
  if (!r.is_integer()) throw SpecError(std::string(what) + " must be an integer here, got " + text);
  return r.num;
}

// "staa:CKPT" or a classical filter name.
DownsamplingFilter parse_filter(const std::string& text, std::size_t rt, std::size_t rs) {
  if (text.rfind("staa:", 0) == 0) {
    auto model = from_checkpoint(load_checkpoint(text.substr(5)));
    if (model.mode != DownsamplerMode::Learned) throw SpecError("checkpoint " + text.substr(5) + " has no learned filter");
    model.filter.stride_t = rt;
    model.filter.stride_s = rs;
    return model.filter;
  }
  return parse_classical(text, rt);
}

// Clip list from a directory of frame folders and/or .stv files.
std::vector<VideoVolume> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<fs::path> items;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() || e.path().extension() == ".stv") items.push_back(e.path());
  std::sort(items.begin(), items.end());
  std::vector<VideoVolume> clips;
  for (const auto& p : items) clips.push_back(load_volume(p));
  if (clips.empty()) throw EmptyInputError("no clips in " + dir.string());
  return clips;
}

SceneSpec parse_scene(const std::string& text) {
  SceneSpec s;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  if (kind == "bar") {
    s.sprite = SpriteKind::Bar;
    s.sprite_w = 2;
  }
  else if (kind == "checker") s.sprite = SpriteKind::Checkerboard;
  else if (kind == "noise") s.sprite = SpriteKind::Noise;
  else throw SpecError("unknown scene kind '" + kind + "' (bar, checker, noise)");
  if (colon == std::string::npos) return s;
  std::stringstream rest(text.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw SpecError("scene field '" + item + "' needs key=value");
    const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
    try {
      std::size_t used = 0;
      const double num = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument(val);
      if (key == "vx") s.vx = num;
      else if (key == "vy") s.vy = num;
      else if (key == "frames") s.frames = static_cast<std::size_t>(num);
      else if (key == "size") s.height = s.width = static_cast<std::size_t>(num);
      else if (key == "width") s.sprite_w = static_cast<std::size_t>(num);
      else if (key == "seed") s.seed = static_cast<std::uint64_t>(num);
      else throw SpecError("unknown scene field '" + key + "'");
    } catch (const std::logic_error&) {
      throw SpecError("bad scene value '" + item + "'");
    }
  }
  return s;
}

struct ModelFlags {
  std::string rt = "2";
  std::size_t rs = 2, features = 16, rdb_blocks = 2, rdb_layers = 3, growth = 8;
  bool no_dtm = false;

  void add(CLI::App* app) {
    app->add_option("--rt", rt, "temporal factor P/Q")->capture_default_str();
    app->add_option("--rs", rs, "spatial factor")->capture_default_str();
    app->add_option("--features", features, "feature channels")->capture_default_str();
    app->add_option("--rdb-blocks", rdb_blocks, "residual dense blocks")->capture_default_str();
    app->add_option("--rdb-layers", rdb_layers, "layers per block")->capture_default_str();
    app->add_option("--growth", growth, "growth rate")->capture_default_str();
    app->add_flag("--no-dtm", no_dtm, "disable the deformable temporal module");
  }

  UpscaleConfig config() const {
    UpscaleConfig c;
    c.r = Rational::parse(rt);
    c.s = rs;
    c.features = features;
    c.rdb_blocks = rdb_blocks;
    c.rdb_layers = rdb_layers;
    c.growth = growth;
    c.use_dtm = !no_dtm;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::string data, out = "model.staa", loss_csv;
  std::size_t synthetic = 0, clip_frames = 8, clip_size = 48;
  TrainConfig cfg;
  std::size_t patch_s = 32;

  void add(CLI::App* app) {
    app->add_option("--data", data, "directory of clips (frame folders or .stv)");
    app->add_option("--synthetic", synthetic, "train on N generated clips instead of --data");
    app->add_option("--clip-frames", clip_frames, "frames per generated clip")->capture_default_str();
    app->add_option("--clip-size", clip_size, "height/width of generated clips")->capture_default_str();
    app->add_option("--out", out, "checkpoint path")->capture_default_str();
    app->add_option("--loss-csv", loss_csv, "write the loss curve here");
    app->add_option("--steps", cfg.steps, "optimization steps")->capture_default_str();
    app->add_option("--lr", cfg.lr0, "initial learning rate")->capture_default_str();
    app->add_option("--batch", cfg.batch, "patches per step")->capture_default_str();
    app->add_option("--patch-t", cfg.patch_t, "patch frames")->capture_default_str();
    app->add_option("--patch-s", patch_s, "patch height/width")->capture_default_str();
    app->add_option("--log-every", cfg.log_every, "loss logging interval")->capture_default_str();
    app->add_option("--val-every", cfg.val_every, "validation interval (0: last step only)")->capture_default_str();
    app->add_option("--val-count", cfg.val_count, "clips held out for validation")->capture_default_str();
  }

  std::vector<VideoVolume> dataset(std::uint64_t seed) const {
    if (!data.empty() && synthetic) throw SpecError("use either --data or --synthetic");
    if (!data.empty()) return load_dataset(data);
    if (!synthetic) throw SpecError("training needs --data DIR or --synthetic N");
    return synthetic_corpus(synthetic, clip_frames, clip_size, clip_size, seed);
  }

  TrainConfig finish(std::uint64_t seed) {
    cfg.seed = seed;
    cfg.patch_h = cfg.patch_w = patch_s;
    cfg.threads = env_threads();
    cfg.validate();
    return cfg;
  }

  // On divergence the last good state is kept next to the requested path.
  TrainResult run(const std::function<TrainResult()>& fit) const {
    try {
      return fit();
    } catch (const TrainingAborted& e) {
      save_checkpoint(e.last_good(), out + ".last_good");
      std::cerr << "last good checkpoint saved to " << out << ".last_good\n";
      throw;
    }
  }

  void report(const TrainResult& res, const std::vector<VideoVolume>& data) const {
    save_checkpoint(res.checkpoint, out);
    const auto drift = channel_mean_drift(res.model, data);
    std::cout << "channel mean drift";
    for (double d : drift) std::cout << ' ' << d;
    std::cout << '\n';
    if (!loss_csv.empty()) {
      std::ofstream csv(loss_csv);
      if (!csv) throw IoError("cannot write " + loss_csv);
      write_loss_csv(res.curve, csv);
    }
    std::cout << "validation psnr " << res.val_psnr << " dB\ncheckpoint " << out << '\n';
  }
};

void print_row(const LossRow& r) {
  std::cerr << "step " << r.step << " lr " << r.lr << " l1 " << r.train_l1;
  if (!std::isnan(r.val_psnr)) std::cerr << " val_psnr " << r.val_psnr;
  std::cerr << '\n';
}

int upscale_cmd(const std::string& in, const std::string& ckpt, const std::string& rt, std::size_t rs,
                const std::string& out, const std::string& fps) {
  const auto model = from_checkpoint(load_checkpoint(ckpt));
  const auto r = Rational::parse(rt);
  if (r != model.config.r || rs != model.config.s)
    throw SpecError("checkpoint was trained for --rt " + model.config.r.str() + " --rs " +
                    std::to_string(model.config.s) + ", not --rt " + r.str() + " --rs " + std::to_string(rs));
  const auto v = read_input(in, fps);
  const auto up = model.decode(v);
  write_output(up, out, false);
  std::cout << shape_str(v.data.shape()) << " @ " << v.fps.str() << " fps -> " << shape_str(up.data.shape()) << " @ "
            << up.fps.str() << " fps\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time anti-aliasing: learned video downsampling and reconstruction"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "random seed")->capture_default_str();

  // downsample
  auto* ds = app.add_subcommand("downsample", "downsample a video with a classical or learned filter");
  std::string ds_in, ds_out, ds_filter = "nearest", ds_fps;
  std::string ds_rt = "2";
  std::size_t ds_rs = 2;
  bool ds_quant = false;
  ds->add_option("--in", ds_in, "frame directory or .stv file")->required();
  ds->add_option("--out", ds_out, "output frame directory or .stv file")->required();
  ds->add_option("--filter", ds_filter, "staa:CKPT, nearest, bicubic, gaussian[:SIGMA], box[:LEN]")->capture_default_str();
  ds->add_option("--rt", ds_rt, "temporal stride")->capture_default_str();
  ds->add_option("--rs", ds_rs, "spatial stride")->capture_default_str();
  ds->add_option("--fps", ds_fps, "input frame rate P/Q (overrides metadata)");
  ds->add_flag("--quantize", ds_quant, "round to 8-bit values");

  // upscale / convert-fps
  auto* up = app.add_subcommand("upscale", "reconstruct a downsampled video with a trained upsampler");
  std::string up_in, up_ckpt, up_out, up_rt = "2", up_fps;
  std::size_t up_rs = 2;
  up->add_option("--in", up_in, "frame directory or .stv file")->required();
  up->add_option("--ckpt", up_ckpt, "checkpoint")->required();
  up->add_option("--out", up_out, "output frame directory or .stv file")->required();
  up->add_option("--rt", up_rt, "temporal factor P/Q")->capture_default_str();
  up->add_option("--rs", up_rs, "spatial factor")->capture_default_str();
  up->add_option("--fps", up_fps, "input frame rate P/Q (overrides metadata)");

  auto* cf = app.add_subcommand("convert-fps", "change the frame rate by P/Q with a trained model (--rs 1)");
  std::string cf_in, cf_ckpt, cf_out, cf_rt, cf_fps;
  cf->add_option("--in", cf_in, "frame directory or .stv file")->required();
  cf->add_option("--ckpt", cf_ckpt, "checkpoint trained with --rs 1")->required();
  cf->add_option("--out", cf_out, "output frame directory or .stv file")->required();
  cf->add_option("--rt", cf_rt, "frame-rate ratio P/Q")->required();
  cf->add_option("--fps", cf_fps, "input frame rate P/Q (overrides metadata)");

  // train / train-blur
  auto* tr = app.add_subcommand("train", "jointly train a learned downsampler and the upsampler");
  ModelFlags tr_model;
  TrainFlags tr_flags;
  std::string tr_constraint = "soft", tr_fixed;
  tr_model.add(tr);
  tr_flags.add(tr);
  tr->add_option("--constraint", tr_constraint, "filter constraint: no, soft, quant")->capture_default_str();
  tr->add_option("--fixed-filter", tr_fixed, "train the upsampler behind a frozen classical filter instead");

  auto* tb = app.add_subcommand("train-blur", "train the upsampler to recover sharp frames from temporal box blur");
  ModelFlags tb_model;
  TrainFlags tb_flags;
  std::size_t tb_box = 0;
  tb_model.add(tb);
  tb_flags.add(tb);
  tb->add_option("--box", tb_box, "box length in frames (default: --rt)");

  // analyze
  auto* an = app.add_subcommand("analyze", "Fourier aliasing analysis of filters on a synthetic scene");
  std::string an_scene = "bar:vx=1", an_filters = "nearest,box,gaussian", an_out = "report";
  std::size_t an_rt = 2, an_rs = 2;
  double an_band = -1.0;
  an->add_option("--scene", an_scene, "KIND[:vx=..,vy=..,frames=..,size=..,width=..,seed=..], KIND in bar (2 px wide), checker, noise")
      ->capture_default_str();
  an->add_option("--filters", an_filters, "comma-separated filters")->capture_default_str();
  an->add_option("--rt", an_rt, "temporal stride")->capture_default_str();
  an->add_option("--rs", an_rs, "spatial stride")->capture_default_str();
  an->add_option("--bandwidth", an_band, "line half-width in cycles/sample (default 2/T)");
  an->add_option("--out", an_out, "report directory")->capture_default_str();

  // metrics
  auto* me = app.add_subcommand("metrics", "PSNR and SSIM between two videos");
  std::string me_a, me_b, me_space = "rgb";
  me->add_option("a", me_a, "reference video")->required();
  me->add_option("b", me_b, "distorted video")->required();
  me->add_option("--ssim-space", me_space, "rgb or luma")->check(CLI::IsMember({"rgb", "luma"}))->capture_default_str();

  // inspect-checkpoint
  auto* ic = app.add_subcommand("inspect-checkpoint", "list tensors in a checkpoint");
  std::string ic_path;
  ic->add_option("path", ic_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ds) {
      const std::size_t rt = integer_factor(ds_rt, "--rt");
      const auto filter = parse_filter(ds_filter, rt, ds_rs);
      auto v = apply_filter(read_input(ds_in, ds_fps), filter, rt, ds_rs);
      if (ds_quant) v = quantized(std::move(v));
      write_output(v, ds_out, ds_quant);
      std::cout << filter_name(filter) << " -> " << shape_str(v.data.shape()) << " @ " << v.fps.str() << " fps\n";
      return kOk;
    }
    if (*up) return upscale_cmd(up_in, up_ckpt, up_rt, up_rs, up_out, up_fps);
    if (*cf) return upscale_cmd(cf_in, cf_ckpt, cf_rt, 1, cf_out, cf_fps);
    if (*tr) {
      const auto ucfg = tr_model.config();
      const auto cfg = tr_flags.finish(seed);
      const auto data = tr_flags.dataset(seed);
      Model model = tr_fixed.empty() ? Model::create(ucfg, parse_constraint(tr_constraint), seed)
                                     : Model::create_fixed(ucfg, parse_classical(tr_fixed, ucfg.r.num), seed);
      tr_flags.report(tr_flags.run([&] { return train(std::move(model), data, cfg, print_row); }), data);
      return kOk;
    }
    if (*tb) {
      const auto ucfg = tb_model.config();
      const auto cfg = tb_flags.finish(seed);
      const auto data = tb_flags.dataset(seed);
      const std::size_t box = tb_box ? tb_box : ucfg.r.num;
      tb_flags.report(tb_flags.run([&] { return train_upsampler_only(data, ucfg, box, cfg, print_row); }), data);
      return kOk;
    }
    if (*an) {
      const auto scene = parse_scene(an_scene);
      std::vector<DownsamplingFilter> filters;
      std::stringstream list(an_filters);
      std::string item;
      while (std::getline(list, item, ','))
        if (!item.empty()) filters.push_back(parse_filter(item, an_rt, an_rs));
      if (filters.empty()) throw SpecError("--filters is empty");
      fs::create_directories(an_out);
      std::ofstream csv(fs::path(an_out) / "aliasing.csv");
      if (!csv) throw IoError("cannot write to " + an_out);
      csv << "filter,v_x,line_fraction,alias_fraction\n";
      bool wrote_original = false;
      for (const auto& f : filters) {
        const auto rep = aliasing_report(scene, f, an_rt, an_rs, an_band);
        if (!wrote_original) {
          write_spectrum_pgm(rep.original, fs::path(an_out) / "original.pgm");
          wrote_original = true;
        }
        write_spectrum_pgm(rep.restored, fs::path(an_out) / (rep.filter + ".pgm"));
        csv << rep.filter << ',' << rep.vx << ',' << rep.line_fraction << ',' << rep.alias_fraction << '\n';
        std::cout << rep.filter << ": alias fraction " << rep.alias_fraction << '\n';
      }
      return kOk;
    }
    if (*me) {
      const auto a = read_input(me_a, ""), b = read_input(me_b, "");
      const auto q = quality(a, b, me_space == "luma" ? ColorSpace::Luma : ColorSpace::Rgb);
      std::cout << "file_a,file_b,psnr_db,ssim\n" << me_a << ',' << me_b << ',' << q.psnr << ',' << q.ssim << '\n';
      return kOk;
    }
    if (*ic) {
      const auto ck = load_checkpoint(ic_path);
      std::cout << "step " << ck.step << '\n';
      for (const auto& [name, t] : ck.tensors) std::cout << name << ' ' << shape_str(t.shape()) << '\n';
      return kOk;
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
