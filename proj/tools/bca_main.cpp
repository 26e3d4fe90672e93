#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bca/anthro.hpp"
#include "bca/dataset.hpp"
#include "bca/error.hpp"
#include "bca/eval.hpp"
#include "bca/mesh_io.hpp"
#include "bca/procgen.hpp"
#include "bca/rng.hpp"
#include "bca/scan_sim.hpp"
#include "bca/trainer.hpp"
#include "bca/volume.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string body_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "body_%04d", i);
    return buf;
}

struct SynthArgs {
    int count = 10;
    std::uint64_t seed = 0;
    double spacing_mm = 2.0;
    std::string ranges_path;
    std::string out_dir;
};

void run_synth(const SynthArgs& a) {
    const bca::ProcgenRanges ranges =
        a.ranges_path.empty() ? bca::ProcgenRanges{} : bca::load_procgen_ranges(a.ranges_path);
    fs::create_directories(fs::path(a.out_dir) / "volumes");
    fs::create_directories(fs::path(a.out_dir) / "meshes");
    std::vector<bca::SampleRecord> rows;
    std::vector<std::string> ids;
    for (int i = 0; i < a.count; ++i) {
        const std::string id = body_id(i);
        const bca::BodySpec spec = bca::sample_body(bca::combine(a.seed, i), ranges);
        const bca::BodyArtifacts art = bca::synthesize(spec, a.spacing_mm);
        bca::save_label_volume(art.volume,
                               (fs::path(a.out_dir) / "volumes" / (id + ".lvol")).string());
        bca::save_obj(art.mesh, (fs::path(a.out_dir) / "meshes" / (id + ".obj")).string());
        bca::SampleRecord rec;
        rec.id = id;
        const auto vals = art.truth.values();
        for (int j = 0; j < 10; ++j) {
            rec.targets.y[j] = vals[j];
            rec.targets.mask[j] = art.truth.present[j] ? 1 : 0;
        }
        rows.push_back(rec);
        ids.push_back(id);
        std::cerr << "synthesized " << id << " (" << art.volume.dims[0] << "x"
                  << art.volume.dims[1] << "x" << art.volume.dims[2] << " voxels)\n";
    }
    bca::save_targets_csv(rows, (fs::path(a.out_dir) / "targets.csv").string());
    bca::save_split(bca::make_split(ids, a.seed), (fs::path(a.out_dir) / "split.json").string());
    std::cout << "wrote " << a.count << " bodies to " << a.out_dir << "\n";
}

void run_scans(const std::string& data_dir, const bca::ScanConfig& cfg, std::uint64_t seed,
               std::size_t surface_samples) {
    fs::create_directories(fs::path(data_dir) / "scans");
    const auto rows = bca::load_targets_csv((fs::path(data_dir) / "targets.csv").string());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string& id = rows[i].id;
        const bca::TriMesh mesh =
            bca::load_obj((fs::path(data_dir) / "meshes" / (id + ".obj")).string());
        const bca::OrientedPointCloud dense =
            bca::sample_surface(mesh, surface_samples, bca::combine(seed, bca::combine(1, i)));
        const bca::OrientedPointCloud scan =
            bca::simulate_scan(dense, cfg, bca::combine(seed, bca::combine(2, i)));
        bca::save_ply(scan, (fs::path(data_dir) / "scans" / (id + ".ply")).string());
        std::cerr << "scanned " << id << " (" << scan.size() << " points)\n";
    }
}

int dispatch(int argc, char** argv) {
    CLI::App app{"Synthetic mmWave body-composition pipeline"};
    app.require_subcommand(1);
    int jobs = 0;
    app.add_option("--jobs", jobs, "OpenMP thread count (0 = library default)");

    // synth-bodies
    SynthArgs synth;
    auto* sc_synth = app.add_subcommand("synth-bodies", "Generate procedural bodies with labels");
    sc_synth->add_option("--count", synth.count, "Number of bodies")->check(CLI::PositiveNumber);
    sc_synth->add_option("--seed", synth.seed, "Generator seed");
    sc_synth->add_option("--spacing-mm", synth.spacing_mm, "Voxel spacing in mm")
        ->check(CLI::PositiveNumber);
    sc_synth->add_option("--ranges", synth.ranges_path, "procgen.json parameter ranges");
    sc_synth->add_option("--out", synth.out_dir, "Output dataset directory")->required();

    // extract-surface
    std::string vol_path, mesh_out;
    double iso = 0.5, lambda = 0.5;
    int smooth_iters = 10;
    auto* sc_surf = app.add_subcommand("extract-surface", "Isosurface of a label volume");
    sc_surf->add_option("--volume", vol_path, "Input .lvol volume")->required();
    sc_surf->add_option("--iso", iso, "Iso level");
    sc_surf->add_option("--smooth-lambda", lambda, "Smoothing step in (0,1]");
    sc_surf->add_option("--smooth-iters", smooth_iters, "Smoothing iterations");
    sc_surf->add_option("--out", mesh_out, "Output OBJ path")->required();

    // tissue-volumes
    std::string tv_vol, tv_out;
    auto* sc_tv = app.add_subcommand("tissue-volumes", "Per-class volumes in liters");
    sc_tv->add_option("--volume", tv_vol, "Input .lvol volume")->required();
    sc_tv->add_option("--out", tv_out, "Output JSON path")->required();

    // measure
    std::string ms_mesh, ms_out, ms_keypoints = "0.72,0.62,0.53";
    auto* sc_ms = app.add_subcommand("measure", "Height and circumferences of a mesh");
    sc_ms->add_option("--mesh", ms_mesh, "Input OBJ mesh")->required();
    sc_ms->add_option("--keypoints", ms_keypoints, "chest,waist,hip height fractions");
    sc_ms->add_option("--out", ms_out, "Output JSON path")->required();

    // simulate-scan
    std::string sim_mesh, sim_cloud, sim_cfg_path, sim_out;
    std::uint64_t sim_seed = 0;
    bool sim_seed_set = false;
    std::size_t surface_samples = 800000;
    auto* sc_sim = app.add_subcommand("simulate-scan", "Scanner-like observation of a surface");
    auto* opt_mesh = sc_sim->add_option("--mesh", sim_mesh, "Input OBJ mesh");
    auto* opt_cloud = sc_sim->add_option("--cloud", sim_cloud, "Input PLY cloud");
    opt_mesh->excludes(opt_cloud);
    sc_sim->add_option("--config", sim_cfg_path, "scan.json config");
    sc_sim->add_option("--seed", sim_seed, "Scan seed (defaults to the config seed)")
        ->each([&](const std::string&) { sim_seed_set = true; });
    sc_sim->add_option("--surface-samples", surface_samples, "Dense samples drawn from a mesh");
    sc_sim->add_option("--out", sim_out, "Output PLY path")->required();

    // extract-real
    std::string xr_vol, xr_out;
    double min_intensity = 0.5;
    auto* sc_xr = app.add_subcommand("extract-real", "Point cloud from an intensity volume");
    sc_xr->add_option("--intensity", xr_vol, "Input intensity .lvol")->required();
    sc_xr->add_option("--min-intensity", min_intensity, "Peak acceptance threshold");
    sc_xr->add_option("--out", xr_out, "Output PLY path")->required();

    // train
    std::string tr_data, tr_cfg_path, tr_out;
    auto* sc_tr = app.add_subcommand("train", "Train the multi-head regressor");
    sc_tr->add_option("--data", tr_data, "Dataset directory")->required();
    sc_tr->add_option("--config", tr_cfg_path, "train.json config");
    sc_tr->add_option("--out", tr_out, "Checkpoint output directory")->required();

    // eval
    std::string ev_ckpt, ev_data, ev_out, ev_split = "test";
    auto* sc_ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    sc_ev->add_option("--checkpoint", ev_ckpt, "Checkpoint directory")->required();
    sc_ev->add_option("--data", ev_data, "Dataset directory")->required();
    sc_ev->add_option("--split", ev_split, "train|val|test");
    sc_ev->add_option("--out", ev_out, "Output report.json")->required();

    // pipeline
    SynthArgs pl;
    std::string pl_scan_cfg, pl_train_cfg;
    std::size_t pl_surface_samples = 800000;
    auto* sc_pl = app.add_subcommand("pipeline", "synth -> scan -> train -> eval");
    sc_pl->add_option("--surface-samples", pl_surface_samples, "Dense samples per mesh");
    sc_pl->add_option("--count", pl.count, "Number of bodies")->check(CLI::PositiveNumber);
    sc_pl->add_option("--seed", pl.seed, "Pipeline seed");
    sc_pl->add_option("--spacing-mm", pl.spacing_mm, "Voxel spacing in mm")
        ->check(CLI::PositiveNumber);
    sc_pl->add_option("--ranges", pl.ranges_path, "procgen.json ranges");
    sc_pl->add_option("--scan", pl_scan_cfg, "scan.json config");
    sc_pl->add_option("--train", pl_train_cfg, "train.json config");
    sc_pl->add_option("--out", pl.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the usage error
        if (code != 0) {
            json j;
            j["error"] = "usage";
            j["message"] = e.what();
            std::cerr << j.dump() << "\n";
        }
        return code;
    }
    if (jobs > 0) omp_set_num_threads(jobs);

    if (sc_synth->parsed()) {
        run_synth(synth);
    } else if (sc_surf->parsed()) {
        const bca::LabelVolume v = bca::load_label_volume(vol_path);
        const bca::BinaryMask mask = bca::fill_cavities(bca::body_mask(v));
        bca::TriMesh mesh = bca::marching_cubes(bca::sample_signed_field(mask), iso);
        if (smooth_iters > 0) mesh = bca::laplacian_smooth(mesh, lambda, smooth_iters);
        bca::save_obj(mesh, mesh_out);
        std::cout << "wrote " << mesh_out << " (" << mesh.vertices.size() << " vertices, "
                  << mesh.triangles.size() << " triangles)\n";
    } else if (sc_tv->parsed()) {
        const auto vols = bca::tissue_volumes(bca::load_label_volume(tv_vol));
        json j;
        for (const auto& [name, liters] : vols) j[name] = liters;
        std::ofstream f(tv_out, std::ios::trunc);
        if (!f) throw bca::Error::io("cannot open " + tv_out + " for writing");
        f << j.dump(2) << "\n";
        std::cout << "wrote " << tv_out << "\n";
    } else if (sc_ms->parsed()) {
        const bca::TriMesh mesh = bca::load_obj(ms_mesh);
        std::array<double, 3> kp{};
        if (std::sscanf(ms_keypoints.c_str(), "%lf,%lf,%lf", &kp[0], &kp[1], &kp[2]) != 3)
            throw bca::Error::invalid("--keypoints expects three comma-separated fractions");
        const bca::Circumferences c = bca::measure_circumferences(mesh, kp);
        json j;
        j["height_cm"] = bca::measure_height_cm(mesh);
        j["chest_cm"] = c.chest_cm;
        j["waist_cm"] = c.waist_cm;
        j["hip_cm"] = c.hip_cm;
        std::ofstream f(ms_out, std::ios::trunc);
        if (!f) throw bca::Error::io("cannot open " + ms_out + " for writing");
        f << j.dump(2) << "\n";
        std::cout << "wrote " << ms_out << "\n";
    } else if (sc_sim->parsed()) {
        const bca::ScanConfig cfg =
            sim_cfg_path.empty() ? bca::ScanConfig{} : bca::load_scan_config(sim_cfg_path);
        const std::uint64_t seed = sim_seed_set ? sim_seed : cfg.seed;
        bca::OrientedPointCloud cloud;
        if (!sim_mesh.empty()) {
            cloud = bca::sample_surface(bca::load_obj(sim_mesh), surface_samples,
                                        bca::combine(seed, 1));
        } else if (!sim_cloud.empty()) {
            cloud = bca::load_ply(sim_cloud);
        } else {
            throw bca::Error::invalid("simulate-scan requires --mesh or --cloud");
        }
        const bca::OrientedPointCloud scan = bca::simulate_scan(cloud, cfg, seed);
        bca::save_ply(scan, sim_out);
        std::cout << "wrote " << sim_out << " (" << scan.size() << " points)\n";
    } else if (sc_xr->parsed()) {
        const bca::OrientedPointCloud pc =
            bca::extract_from_intensity(bca::load_intensity_volume(xr_vol), min_intensity);
        bca::save_ply(pc, xr_out);
        std::cout << "wrote " << xr_out << " (" << pc.size() << " points)\n";
    } else if (sc_tr->parsed()) {
        const bca::TrainConfig cfg =
            tr_cfg_path.empty() ? bca::TrainConfig{} : bca::load_train_config(tr_cfg_path);
        const bca::Dataset data = bca::load_dataset(tr_data);
        const bca::TrainResult res = bca::train(data, cfg, tr_out);
        std::cout << "checkpoint " << res.checkpoint_dir << " (best epoch " << res.best_epoch
                  << ", val " << res.best_val << ")\n";
    } else if (sc_ev->parsed()) {
        const bca::Checkpoint ckpt = bca::load_checkpoint(ev_ckpt);
        const bca::Dataset data = bca::load_dataset(ev_data);
        const bca::Report rep =
            bca::evaluate(ckpt, data, ev_split, fs::path(ev_out).parent_path().string());
        bca::save_report(rep, ev_out);
        bca::validate_report_json(ev_out);
        std::cout << "wrote " << ev_out << "\n";
    } else if (sc_pl->parsed()) {
        run_synth(pl);
        const bca::ScanConfig scan_cfg =
            pl_scan_cfg.empty() ? bca::ScanConfig{} : bca::load_scan_config(pl_scan_cfg);
        run_scans(pl.out_dir, scan_cfg, bca::combine(pl.seed, 0x5CA9), pl_surface_samples);
        bca::TrainConfig train_cfg =
            pl_train_cfg.empty() ? bca::TrainConfig{} : bca::load_train_config(pl_train_cfg);
        const bca::Dataset data = bca::load_dataset(pl.out_dir);
        const std::string ckpt_dir = (fs::path(pl.out_dir) / "ckpt").string();
        const bca::TrainResult res = bca::train(data, train_cfg, ckpt_dir);
        std::cerr << "trained (best epoch " << res.best_epoch << ")\n";
        const bca::Checkpoint ckpt = bca::load_checkpoint(ckpt_dir);
        const bca::Report rep = bca::evaluate(ckpt, data, "test", pl.out_dir);
        const std::string report_path = (fs::path(pl.out_dir) / "report.json").string();
        bca::save_report(rep, report_path);
        bca::validate_report_json(report_path);
        std::cout << "wrote " << report_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const bca::Error& e) {
        json j;
        j["error"] = e.kind();
        j["message"] = e.what();
        std::cerr << j.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json j;
        j["error"] = "internal";
        j["message"] = e.what();
        std::cerr << j.dump() << "\n";
        return 1;
    }
}
