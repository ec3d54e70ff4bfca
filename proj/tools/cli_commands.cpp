#include "cli_commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cli_config.hpp"
#include "tetfield/common.hpp"
#include "tetfield/evalkit.hpp"
#include "tetfield/meshio.hpp"
#include "tetfield/neuralmodel.hpp"
#include "tetfield/shapefields.hpp"
#include "tetfield/surfacex.hpp"
#include "tetfield/tensorops.hpp"
#include "tetfield/tetgrid.hpp"

namespace tetfield::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kReference = "reference setting";
constexpr const char* kDesk = "desk-scale choice";
constexpr const char* kLocal = "implementation choice";

template <class T>
std::string show(const T& v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

// Flags that overlay the config. Unset flags leave the config value alone.
struct Overrides {
  std::optional<int> m, levels;
  std::optional<int> epochs, batch, latent, base_width, local_width, encoder_convs, decoder_convs, critic_convs;
  std::optional<int> n_critic, checkpoint_every, smooth_iters;
  std::optional<double> lr, beta1, beta2, lambda_d, lambda_kl, lambda_gp, max_seconds, final_lr_scale;
  std::optional<long> max_steps;
  std::optional<std::string> mode, schedule, grid, data, model, log;
  std::optional<double> tau, beta, gamma;
  std::optional<std::uint64_t> seed;
  bool no_smooth = false;
  bool no_filter = false;
};

template <class T>
void take(const std::optional<T>& flag, T& slot) {
  if (flag) slot = *flag;
}

void apply(const Overrides& o, Config& c) {
  take(o.m, c.grid.m);
  take(o.levels, c.grid.levels);
  take(o.epochs, c.train.epochs);
  take(o.batch, c.train.batch);
  take(o.lr, c.train.lr);
  take(o.beta1, c.train.beta1);
  take(o.beta2, c.train.beta2);
  take(o.latent, c.train.latent);
  take(o.base_width, c.train.base_width);
  take(o.local_width, c.train.local_critic_width);
  take(o.encoder_convs, c.train.encoder_convs);
  take(o.decoder_convs, c.train.decoder_convs);
  take(o.critic_convs, c.train.critic_convs);
  take(o.lambda_d, c.train.lambda_d);
  take(o.lambda_kl, c.train.lambda_kl);
  take(o.n_critic, c.train.n_critic);
  take(o.lambda_gp, c.train.lambda_gp);
  take(o.mode, c.train.mode);
  take(o.seed, c.train.seed);
  take(o.max_steps, c.train.max_steps);
  take(o.max_seconds, c.train.max_seconds);
  take(o.checkpoint_every, c.train.checkpoint_every);
  take(o.schedule, c.train.schedule);
  take(o.final_lr_scale, c.train.final_lr_scale);
  take(o.tau, c.extract.tau);
  take(o.beta, c.extract.beta);
  take(o.gamma, c.extract.gamma);
  take(o.smooth_iters, c.extract.smooth_iters);
  if (o.no_smooth) c.extract.smooth_iters = 0;
  if (o.no_filter) c.extract.filter = false;
  take(o.grid, c.paths.grid);
  take(o.data, c.paths.data);
  take(o.model, c.paths.model);
  take(o.log, c.paths.log);
}

template <class T, class D>
CLI::Option* setting(CLI::App* app, const std::string& name, std::optional<T>& slot, const std::string& what,
                     const char* origin, const D& def) {
  return app->add_option(name, slot, what + " (" + origin + ")")->default_str(show(def));
}

void add_grid_flags(CLI::App* app, Overrides& o) {
  const Config d;
  setting(app, "--m", o.m, "base cubes per axis", kDesk, d.grid.m);
  setting(app, "--levels", o.levels, "refinement levels N", kDesk, d.grid.levels);
}

void add_extract_flags(CLI::App* app, Overrides& o) {
  const Config d;
  setting(app, "--tau", o.tau, "occupancy threshold", kReference, d.extract.tau);
  setting(app, "--beta", o.beta, "smoothing weight on the vertex itself", kReference, d.extract.beta);
  setting(app, "--gamma", o.gamma, "deformation filter multiple of mu", kReference, d.extract.gamma);
  setting(app, "--smooth-iters", o.smooth_iters, "smoothing iterations", kReference, d.extract.smooth_iters);
  app->add_flag("--no-smooth", o.no_smooth, "skip smoothing");
  app->add_flag("--no-filter", o.no_filter, "skip the deformation filter");
}

void add_seed_flag(CLI::App* app, Overrides& o) {
  setting(app, "--seed", o.seed, "seed for all randomness", kLocal, Config{}.train.seed);
}

void add_train_flags(CLI::App* app, Overrides& o) {
  const TrainSection d;
  setting(app, "--epochs", o.epochs, "training epochs", kDesk, d.epochs);
  setting(app, "--batch", o.batch, "minibatch size", kReference, d.batch);
  setting(app, "--lr", o.lr, "Adam learning rate", kReference, d.lr);
  setting(app, "--schedule", o.schedule, "constant | cosine learning rate over the epochs", kLocal, d.schedule)
      ->check(CLI::IsMember({"constant", "cosine"}));
  setting(app, "--final-lr-scale", o.final_lr_scale, "cosine: last-epoch lr as a fraction of --lr", kLocal,
          d.final_lr_scale);
  setting(app, "--beta1", o.beta1, "Adam beta1", kReference, d.beta1);
  setting(app, "--beta2", o.beta2, "Adam beta2", kReference, d.beta2);
  setting(app, "--latent", o.latent, "latent dimension", kDesk, d.latent);
  setting(app, "--base-width", o.base_width, "channels at the finest level, doubled per coarser level", kDesk,
          d.base_width);
  setting(app, "--local-width", o.local_width, "local critic channels", kDesk, d.local_critic_width);
  setting(app, "--encoder-convs", o.encoder_convs, "encoder convolutions per level", kReference, d.encoder_convs);
  setting(app, "--decoder-convs", o.decoder_convs, "decoder convolutions per level", kReference, d.decoder_convs);
  setting(app, "--critic-convs", o.critic_convs, "global critic convolutions per level", kDesk, d.critic_convs);
  setting(app, "--lambda-d", o.lambda_d, "deformation loss weight", kLocal, d.lambda_d);
  setting(app, "--lambda-kl", o.lambda_kl, "KL weight", kLocal, d.lambda_kl);
  setting(app, "--n-critic", o.n_critic, "critic updates per generator update", kLocal, d.n_critic);
  setting(app, "--lambda-gp", o.lambda_gp, "gradient penalty weight", kLocal, d.lambda_gp);
  setting(app, "--mode", o.mode, "vae | gan | both", kReference, d.mode)
      ->check(CLI::IsMember({"vae", "gan", "both"}));
  setting(app, "--max-steps", o.max_steps, "stop after this many steps, 0 for no limit", kLocal, d.max_steps);
  setting(app, "--max-seconds", o.max_seconds, "stop after this many seconds, 0 for no limit", kLocal,
          d.max_seconds);
  setting(app, "--checkpoint-every", o.checkpoint_every, "epochs between checkpoints, 0 for the end only", kLocal,
          d.checkpoint_every);
}

std::string numbered(const std::string& path, std::size_t i) {
  const fs::path p(path);
  std::ostringstream name;
  name << p.stem().string() << "_" << std::setw(3) << std::setfill('0') << i << p.extension().string();
  return (p.parent_path() / name.str()).string();
}

void distinct(const std::string& output, const std::vector<std::string>& inputs) {
  for (const auto& in : inputs) {
    if (in.empty() || !fs::exists(in) || !fs::exists(output)) continue;
    require(!fs::equivalent(in, output), ErrorCode::invalid_parameter, "output '" + output + "' would overwrite an input");
  }
}

void require_file(const std::string& path, const std::string& what) {
  require(!path.empty(), ErrorCode::invalid_parameter, what + " path is required");
  require(fs::is_regular_file(path), ErrorCode::io_error, what + " '" + path + "' not found");
}

GridHierarchy hierarchy_for(const Config& c) {
  if (!c.paths.grid.empty()) {
    require_file(c.paths.grid, "grid");
    return load_hierarchy(c.paths.grid);
  }
  return build_hierarchy(c.grid.m, c.grid.levels);
}

void report_surface(std::ostream& out, const ExtractedSurface& s) {
  out << "vertices " << s.vertices.size() << "\n";
  out << "faces " << s.faces.size() << "\n";
  out << "closed " << (is_closed(s) ? "yes" : "no") << "\n";
  out << "euler_characteristic " << euler_characteristic(s) << "\n";
}

void write_outputs(std::ostream& out, const TetGrid& grid, const Extraction& ex, const std::string& obj,
                   const std::string& tet) {
  export_surface_obj(ex.surface, obj);
  out << "wrote " << obj << "\n";
  out << "filtered_tets " << ex.filtered << "\n";
  report_surface(out, ex.surface);
  if (!tet.empty()) {
    const TetMesh mesh = build_tet_mesh(grid, ex.occupancy, ex.surface);
    export_tet_mesh(mesh, tet);
    out << "wrote " << tet << "\n";
    out << "tets " << mesh.tets.size() << " interior " << mesh.interior_tets << " min_volume " << mesh.min_volume
        << "\n";
  }
}

struct LoadedModel {
  Model model;
  double mu = 0.0;
};

LoadedModel open_model(const Config& c) {
  require_file(c.paths.model, "model");
  json extra;
  LoadedModel m{load_checkpoint(c.paths.model, &extra), 0.0};
  if (extra.contains("mu")) m.mu = extra.at("mu").get<double>();
  if (m.mu <= 0.0 && c.extract.filter) warn("model has no deformation scale; filter disabled");
  return m;
}

Eigen::VectorXd encode_mean(const Model& model, const std::string& path) {
  require_file(path, "fields");
  const FieldSet f = load_fields(path);
  const TetGrid& g = model.geo->hierarchy.finest();
  require(f.base_cubes == g.base_cubes && f.level == g.level, ErrorCode::shape_mismatch,
          path + ": fields were encoded on a different grid than the model");
  return encode(model, fields_to_tensor(f)).mu;
}

void extract_latent(std::ostream& out, const LoadedModel& lm, const Config& c, const Eigen::VectorXd& z,
                    const std::string& obj, const std::string& tet) {
  const FieldSet f = decode(lm.model, z);
  const TetGrid& g = lm.model.geo->hierarchy.finest();
  write_outputs(out, g, extract_fields(g, f, c.extract_options(lm.mu)), obj, tet);
}

std::vector<FieldSet> load_training_data(const Config& c, const GridHierarchy& h) {
  const std::string& src = c.paths.data;
  require(!src.empty(), ErrorCode::invalid_parameter, "training data path is required (--data)");
  std::vector<FieldSet> data;
  if (fs::is_directory(src)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(src))
      if (entry.is_regular_file() && entry.path().extension() == ".fields") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) data.push_back(load_fields(p.string()));
  } else {
    require_file(src, "data");
    const auto specs = load_manifest(src);
    data = build_dataset_from_specs(specs, c.train.seed, h).fields;
  }
  require(!data.empty(), ErrorCode::empty_input, "no training shapes in '" + src + "'");
  const TetGrid& g = h.finest();
  for (const auto& f : data)
    require(f.base_cubes == g.base_cubes && f.level == g.level && f.num_tets() == g.num_tets(),
            ErrorCode::shape_mismatch, "training fields do not match the grid");
  return data;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tetrahedral-grid shape VAE/GAN toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  unsigned threads = 0;
  app.add_option("--config", config_path, "JSON config; flags override it")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "worker threads, 0 for all cores")->capture_default_str();

  Overrides o;
  std::string output, tet_output, mesh_path, fields_a, fields_b, fields_c, reference;
  std::vector<std::string> positional;
  std::string vtk_output, medit_output;
  double margin = 0.05, tol = 1e-4, mu = 0.0;
  bool no_normalize = false;
  std::size_t count = 1, steps = 5, samples = kDefaultChamferSamples, pairs = 250, closest = 25;
  ShapeSpec shape;
  std::string shape_kind = "sphere";

  auto* grid_cmd = app.add_subcommand("grid", "grid operations");
  grid_cmd->require_subcommand(1);
  auto* grid_build = grid_cmd->add_subcommand("build", "build the refined grid and save its finest level");
  add_grid_flags(grid_build, o);
  grid_build->add_option("-o,--output", output, "grid file")->required();
  grid_build->add_option("--vtk", vtk_output, "also export as VTK");
  grid_build->add_option("--medit", medit_output, "also export as MEDIT .mesh");

  auto* validate_cmd = app.add_subcommand("validate", "check a saved grid for conformity and consistency");
  validate_cmd->add_option("grid", positional, "grid file")->required()->expected(1);

  auto* shape_cmd = app.add_subcommand("shape", "write one procedural toy shape as OBJ");
  shape_cmd->add_option("kind", shape_kind, "sphere | torus | box | capsule")
      ->check(CLI::IsMember({"sphere", "torus", "box", "capsule"}))
      ->capture_default_str();
  shape_cmd->add_option("--radius", shape.radius, "sphere or capsule radius")->capture_default_str();
  shape_cmd->add_option("--major", shape.major_radius, "torus ring radius")->capture_default_str();
  shape_cmd->add_option("--minor", shape.minor_radius, "torus tube radius")->capture_default_str();
  shape_cmd->add_option("--half-length", shape.half_length, "capsule half-length")->capture_default_str();
  shape_cmd->add_option("--density", shape.density, "segments around the main circle")->capture_default_str();
  shape_cmd->add_option("-o,--output", output, "OBJ file")->required();

  auto* dataset_cmd = app.add_subcommand("dataset", "generate and encode a random toy dataset");
  add_grid_flags(dataset_cmd, o);
  add_seed_flag(dataset_cmd, o);
  dataset_cmd->add_option("--grid", o.grid, "grid file (default: build from --m/--levels)");
  dataset_cmd->add_option("-n,--count", count, "number of shapes")->capture_default_str();
  dataset_cmd->add_option("-o,--output", output, "output directory")->required();

  auto* encode_cmd = app.add_subcommand("encode", "encode a triangle mesh into occupancy and deformation fields");
  add_grid_flags(encode_cmd, o);
  encode_cmd->add_option("--mesh", mesh_path, "input OBJ")->required()->check(CLI::ExistingFile);
  encode_cmd->add_option("--grid", o.grid, "grid file (default: build from --m/--levels)");
  encode_cmd->add_option("--margin", margin, "normalization margin when the mesh leaves the unit cube")
      ->capture_default_str();
  encode_cmd->add_flag("--no-normalize", no_normalize, "use the mesh coordinates as they are");
  encode_cmd->add_option("-o,--output", output, "fields file")->required();

  auto* train_cmd = app.add_subcommand("train", "train the VAE and critics");
  add_grid_flags(train_cmd, o);
  add_train_flags(train_cmd, o);
  add_seed_flag(train_cmd, o);
  train_cmd->add_option("--grid", o.grid, "grid file");
  train_cmd->add_option("--data", o.data, "directory of .fields files or a shape manifest");
  train_cmd->add_option("-o,--output,--model", o.model, "checkpoint file");
  train_cmd->add_option("--log", o.log, "per-step CSV log");

  auto* recon_cmd = app.add_subcommand("reconstruct", "encode fields, decode the mean latent and extract");
  add_extract_flags(recon_cmd, o);
  recon_cmd->add_option("--model", o.model, "checkpoint file");
  recon_cmd->add_option("--fields", fields_a, "input fields")->required();
  recon_cmd->add_option("--reference", reference, "mesh to report Chamfer against");
  recon_cmd->add_option("-o,--output", output, "OBJ file")->required();
  recon_cmd->add_option("--tet", tet_output, "also export the solid as .vtk or .mesh");

  auto* sample_cmd = app.add_subcommand("sample", "decode latents drawn from N(0, I)");
  add_extract_flags(sample_cmd, o);
  add_seed_flag(sample_cmd, o);
  sample_cmd->add_option("--model", o.model, "checkpoint file");
  sample_cmd->add_option("-n,--count", count, "number of samples")->capture_default_str();
  sample_cmd->add_option("-o,--output", output, "OBJ file; numbered when count > 1")->required();
  sample_cmd->add_option("--tet", tet_output, "also export solids as .vtk or .mesh");

  auto* interp_cmd = app.add_subcommand("interp", "decode along the line between two encoded shapes");
  add_extract_flags(interp_cmd, o);
  interp_cmd->add_option("--model", o.model, "checkpoint file");
  interp_cmd->add_option("--a", fields_a, "start fields")->required();
  interp_cmd->add_option("--b", fields_b, "end fields")->required();
  interp_cmd->add_option("--steps", steps, "points including both ends")->capture_default_str();
  interp_cmd->add_option("-o,--output", output, "OBJ file, numbered per step")->required();

  auto* arith_cmd = app.add_subcommand("arith", "decode a - b + c in latent space");
  add_extract_flags(arith_cmd, o);
  arith_cmd->add_option("--model", o.model, "checkpoint file");
  arith_cmd->add_option("--a", fields_a, "fields a")->required();
  arith_cmd->add_option("--b", fields_b, "fields b")->required();
  arith_cmd->add_option("--c", fields_c, "fields c")->required();
  arith_cmd->add_option("-o,--output", output, "OBJ file")->required();

  auto* extract_cmd = app.add_subcommand("extract", "extract a surface from a fields file");
  add_extract_flags(extract_cmd, o);
  extract_cmd->add_option("fields", positional, "fields file")->required()->expected(1);
  extract_cmd->add_option("--grid", o.grid, "grid file (default: rebuilt from the fields header)");
  extract_cmd->add_option("--mu", mu, "deformation filter scale, 0 disables the filter")->capture_default_str();
  extract_cmd->add_option("-o,--output", output, "OBJ file")->required();
  extract_cmd->add_option("--tet", tet_output, "also export the solid as .vtk or .mesh");

  auto* metrics_cmd = app.add_subcommand("metrics", "mesh metrics, printed as CSV");
  metrics_cmd->require_subcommand(1);
  auto* chamfer_cmd = metrics_cmd->add_subcommand("chamfer", "symmetric squared Chamfer between two meshes");
  add_seed_flag(chamfer_cmd, o);
  chamfer_cmd->add_option("meshes", positional, "two OBJ files")->required()->expected(2);
  chamfer_cmd->add_option("--samples", samples, "surface samples per mesh")->capture_default_str();
  auto* variety_cmd = metrics_cmd->add_subcommand("variety", "mean Chamfer over the closest sampled pairs");
  add_seed_flag(variety_cmd, o);
  variety_cmd->add_option("meshes", positional, "OBJ files")->required()->expected(2, 1 << 20);
  variety_cmd->add_option("--samples", samples, "surface samples per mesh")->capture_default_str();
  variety_cmd->add_option("--pairs", pairs, "sampled pairs")->capture_default_str();
  variety_cmd->add_option("--closest", closest, "closest pairs averaged")->capture_default_str();

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of every operator and network");
  add_seed_flag(gradcheck_cmd, o);
  gradcheck_cmd->add_option("--tol", tol, "relative error tolerance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    set_thread_count(threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads);
    Config cfg = config_path.empty() ? Config{} : load_config(config_path);
    apply(o, cfg);
    cfg.check();
    out << "config " << json(cfg).dump() << "\n";

    if (grid_build->parsed()) {
      const GridHierarchy h = build_hierarchy(cfg.grid.m, cfg.grid.levels);
      const TetGrid& g = h.finest();
      save_grid(g, output);
      out << "tets " << g.num_tets() << " vertices " << g.num_vertices() << "\n";
      out << "wrote " << output << "\n";
      if (!vtk_output.empty()) export_grid_vtk(g, vtk_output);
      if (!medit_output.empty()) export_grid_medit(g, medit_output);
      return 0;
    }

    if (validate_cmd->parsed()) {
      const std::string& path = positional.at(0);
      require_file(path, "grid");
      const TetGrid g = load_grid(path);
      const ValidationReport r = validate(g);
      const auto flag = [](bool ok) { return ok ? "pass" : "FAIL"; };
      out << "m " << g.base_cubes << " level " << g.level << " tets " << g.num_tets() << "\n";
      out << "conforming " << flag(r.conforming) << "\n";
      out << "adjacency_symmetric " << flag(r.adjacency_symmetric) << "\n";
      out << "positive_volumes " << flag(r.positive_volumes) << "\n";
      out << "volume_total " << flag(r.volume_total_ok) << " " << std::setprecision(17) << r.total_volume << "\n";
      out << "boundary_consistent " << flag(r.boundary_consistent) << "\n";
      out << std::setprecision(6) << "min_volume " << r.min_volume << "\n";
      out << "min_dihedral_deg " << min_dihedral_angle(g) * 180.0 / 3.14159265358979323846 << "\n";
      for (const auto& msg : r.messages) out << "  " << msg << "\n";
      bool hierarchy_ok = true;
      try {
        load_hierarchy(path);
      } catch (const Error& e) {
        hierarchy_ok = false;
        out << "  " << e.what() << "\n";
      }
      out << "hierarchy_consistent " << flag(hierarchy_ok) << "\n";
      const bool ok = r.all_pass() && hierarchy_ok;
      out << (ok ? "all checks passed" : "validation failed") << "\n";
      return ok ? 0 : 1;
    }

    if (shape_cmd->parsed()) {
      shape.kind = shape_kind_from_string(shape_kind);
      const TriMesh mesh = generate(shape);
      save_obj(mesh, output);
      out << "euler_characteristic " << mesh.euler_characteristic() << "\n";
      out << "wrote " << output << "\n";
      return 0;
    }

    if (dataset_cmd->parsed()) {
      const GridHierarchy h = hierarchy_for(cfg);
      const auto specs = random_shape_specs(count, cfg.train.seed);
      const ToyDataset ds = build_dataset_from_specs(specs, cfg.train.seed, h);
      fs::create_directories(output);
      save_manifest(specs, (fs::path(output) / "manifest.json").string());
      for (std::size_t i = 0; i < specs.size(); ++i) {
        std::ostringstream stem;
        stem << "shape_" << std::setw(4) << std::setfill('0') << i;
        save_obj(ds.meshes[i], (fs::path(output) / (stem.str() + ".obj")).string());
        save_fields(ds.fields[i], (fs::path(output) / (stem.str() + ".fields")).string());
      }
      out << "shapes " << specs.size() << "\n";
      out << "wrote " << output << "\n";
      return 0;
    }

    if (encode_cmd->parsed()) {
      distinct(output, {mesh_path});
      const GridHierarchy h = hierarchy_for(cfg);
      TriMesh mesh;
      if (no_normalize) {
        const RawTriangles raw = read_obj(mesh_path);
        mesh = TriMesh(raw.vertices, raw.faces);
      } else {
        mesh = load_and_normalize(mesh_path, margin);
      }
      if (!mesh.is_watertight()) warn(mesh_path + ": mesh is not watertight; occupancy may be unreliable");
      const FieldSet f = encode_shape(mesh, h);
      save_fields(f, output);
      const auto occupied = std::count_if(f.occupancy.begin(), f.occupancy.end(), [](double p) { return p > 0.5; });
      out << "occupied " << occupied << " of " << f.num_tets() << "\n";
      out << "wrote " << output << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      const GridHierarchy h = hierarchy_for(cfg);
      const std::vector<FieldSet> data = load_training_data(cfg, h);
      const double data_mu = compute_mu(data, h.finest());
      Model model = build_model(make_geometry(h), cfg.arch(), mix_seed(cfg.train.seed, 0x40de1));
      out << "shapes " << data.size() << " parameters " << model.param_count() << " mu " << data_mu << "\n";
      TrainConfig tc = cfg.train_config();
      tc.checkpoint_path.clear();
      const auto on_epoch = [&](int epoch, double rec, double seconds) {
        out << "epoch " << epoch << " reconstruction " << rec << " seconds " << seconds << "\n" << std::flush;
        if (!cfg.paths.model.empty() && cfg.train.checkpoint_every > 0 && (epoch + 1) % cfg.train.checkpoint_every == 0)
          save_checkpoint(model, cfg.paths.model, {{"mu", data_mu}, {"config", json(cfg)}});
      };
      TrainResult result;
      try {
        result = train(model, data, tc, on_epoch);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::numeric_error && !cfg.paths.model.empty()) {
          save_checkpoint(model, cfg.paths.model + ".diverged", {{"mu", data_mu}, {"config", json(cfg)}});
          err << "wrote " << cfg.paths.model << ".diverged\n";
        }
        throw;
      }
      out << "steps " << result.steps << " epochs " << result.epochs_completed << " seconds " << result.seconds
          << (result.hit_limit ? " (limit reached)" : "") << "\n";
      if (!cfg.paths.model.empty()) {
        save_checkpoint(model, cfg.paths.model, {{"mu", data_mu}, {"config", json(cfg)}});
        out << "wrote " << cfg.paths.model << "\n";
      }
      return 0;
    }

    if (recon_cmd->parsed()) {
      distinct(output, {fields_a, cfg.paths.model});
      const LoadedModel lm = open_model(cfg);
      extract_latent(out, lm, cfg, encode_mean(lm.model, fields_a), output, tet_output);
      if (!reference.empty()) {
        require_file(reference, "reference");
        const TriMesh got = load_and_normalize(output, margin);
        out << "chamfer " << chamfer(load_and_normalize(reference, margin), got, samples, cfg.train.seed) << "\n";
      }
      return 0;
    }

    if (sample_cmd->parsed()) {
      const LoadedModel lm = open_model(cfg);
      for (std::size_t i = 0; i < count; ++i) {
        const Eigen::VectorXd z = sample_latent(lm.model.arch.latent, mix_seed(cfg.train.seed, 0x5a3b1e, i));
        const std::string obj = count == 1 ? output : numbered(output, i);
        const std::string tet = tet_output.empty() || count == 1 ? tet_output : numbered(tet_output, i);
        extract_latent(out, lm, cfg, z, obj, tet);
      }
      return 0;
    }

    if (interp_cmd->parsed()) {
      require(steps >= 2, ErrorCode::invalid_parameter, "--steps must be at least 2");
      const LoadedModel lm = open_model(cfg);
      const Eigen::VectorXd za = encode_mean(lm.model, fields_a);
      const Eigen::VectorXd zb = encode_mean(lm.model, fields_b);
      for (std::size_t i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(steps - 1);
        const std::string obj = numbered(output, i);
        distinct(obj, {fields_a, fields_b});
        out << "t " << t << "\n";
        extract_latent(out, lm, cfg, lerp(za, zb, t), obj, "");
      }
      return 0;
    }

    if (arith_cmd->parsed()) {
      distinct(output, {fields_a, fields_b, fields_c});
      const LoadedModel lm = open_model(cfg);
      const Eigen::VectorXd z =
          arith(encode_mean(lm.model, fields_a), encode_mean(lm.model, fields_b), encode_mean(lm.model, fields_c));
      extract_latent(out, lm, cfg, z, output, "");
      return 0;
    }

    if (extract_cmd->parsed()) {
      const std::string& path = positional.at(0);
      require_file(path, "fields");
      distinct(output, {path});
      require(mu >= 0.0, ErrorCode::invalid_parameter, "--mu must be non-negative");
      const FieldSet f = load_fields(path);
      GridHierarchy h = cfg.paths.grid.empty() ? build_hierarchy(f.base_cubes, f.level) : load_hierarchy(cfg.paths.grid);
      const TetGrid& g = h.finest();
      require(g.base_cubes == f.base_cubes && g.level == f.level, ErrorCode::shape_mismatch,
              "fields do not match the grid");
      write_outputs(out, g, extract_fields(g, f, cfg.extract_options(mu)), output, tet_output);
      return 0;
    }

    if (chamfer_cmd->parsed()) {
      for (const auto& p : positional) require_file(p, "mesh");
      const TriMesh a = load_and_normalize(positional[0]);
      const TriMesh b = load_and_normalize(positional[1]);
      out << "metric,value\n" << std::setprecision(10) << "chamfer," << chamfer(a, b, samples, cfg.train.seed) << "\n";
      return 0;
    }

    if (variety_cmd->parsed()) {
      std::vector<TriMesh> meshes;
      for (const auto& p : positional) {
        require_file(p, "mesh");
        meshes.push_back(load_and_normalize(p));
      }
      VarietyOptions vo;
      vo.pairs = pairs;
      vo.closest = closest;
      vo.samples = samples;
      vo.seed = cfg.train.seed;
      out << "metric,value\n" << std::setprecision(10) << "variety," << variety(meshes, vo) << "\n";
      return 0;
    }

    if (gradcheck_cmd->parsed()) {
      const GridHierarchy h = build_hierarchy(2, 2);
      std::vector<GradcheckCase> cases = operator_gradcheck_cases(h, cfg.train.seed);
      for (auto& c : model_gradcheck_cases(cfg.train.seed)) cases.push_back(std::move(c));
      std::size_t failed = 0;
      for (const auto& c : cases) {
        const GradcheckResult r = gradcheck(c, tol, cfg.train.seed);
        out << std::left << std::setw(28) << r.name << std::right << std::scientific << std::setprecision(3)
            << r.max_error << std::defaultfloat << "  " << (r.passed ? "pass" : "FAIL") << "\n";
        if (!r.passed) ++failed;
      }
      out << cases.size() - failed << "/" << cases.size() << " checks passed\n";
      return failed == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace tetfield::cli
