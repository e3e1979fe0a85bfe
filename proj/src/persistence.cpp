#include "ergoholo/persistence.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>

#include "ergoholo/errors.hpp"
#include "ergoholo/image_io.hpp"

namespace ergoholo {

namespace fs = std::filesystem;
using nlohmann::json;

json read_json(const fs::path& path) {
    std::ifstream is{path};
    if (!is) throw InputError("cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os{path};
    if (!os) throw InputError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

namespace {

template <typename T>
T required(const json& j, const char* key, const fs::path& where) {
    if (!j.contains(key)) throw InputError(where.string() + ": missing \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InputError(where.string() + ": bad \"" + key + "\": " + e.what());
    }
}

double depth_unit_scale(const std::string& units, const fs::path& where) {
    if (units == "m") return 1.0;
    if (units == "mm") return 1e-3;
    if (units == "um") return 1e-6;
    throw InputError(where.string() + ": depth_units must be m, mm or um, got \"" + units + "\"");
}

Image read_depth_map(const fs::path& path, int width, int height) {
    if (!fs::exists(path)) throw InputError("missing depth file: " + path.string());
    const auto ext = path.extension().string();
    Image depth = ext == ".pfm" ? read_pfm_gray(path) : read_raw_f32(path, width, height);
    if (depth.width != width || depth.height != height)
        throw InputError(path.string() + ": depth map is " + std::to_string(depth.width) + "x" +
                         std::to_string(depth.height) + ", expected " + std::to_string(width) + "x" +
                         std::to_string(height));
    return depth;
}

json psnr_value(double db) {
    if (std::isinf(db)) return nullptr;
    return db;
}

double psnr_from(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

std::string plane_stem(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "plane_%03zu", k);
    return buf;
}

} // namespace

LayeredDepthImage load_ldi(const fs::path& path) {
    const fs::path manifest_path = fs::is_directory(path) ? path / "manifest.json" : path;
    const fs::path root = manifest_path.parent_path();
    const json m = read_json(manifest_path);

    const int version = m.value("schema_version", kManifestSchemaVersion);
    if (version != kManifestSchemaVersion)
        throw InputError(manifest_path.string() + ": unsupported schema_version " + std::to_string(version));
    const double gamma = m.value("gamma", 2.2);
    if (!(gamma > 0.0)) throw InputError(manifest_path.string() + ": gamma must be positive");
    const double unit = depth_unit_scale(m.value("depth_units", std::string{"m"}), manifest_path);
    const auto layers = required<json>(m, "layers", manifest_path);
    if (!layers.is_array() || layers.empty())
        throw InputError(manifest_path.string() + ": \"layers\" must be a non-empty array");

    LayeredDepthImage ldi;
    ldi.pitch = required<double>(m, "pitch", manifest_path);
    ldi.volume_thickness = required<double>(m, "volume_thickness", manifest_path);
    if (!(ldi.pitch > 0.0) || !(ldi.volume_thickness > 0.0))
        throw InputError(manifest_path.string() + ": pitch and volume_thickness must be positive");

    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& entry = layers[l];
        const fs::path color_path = root / required<std::string>(entry, "color", manifest_path);
        const fs::path depth_path = root / required<std::string>(entry, "depth", manifest_path);
        if (!fs::exists(color_path)) throw InputError("missing color file: " + color_path.string());
        const auto color = read_png(color_path);
        if (l == 0) {
            ldi.width = m.value("width", color.width);
            ldi.height = m.value("height", color.height);
        }
        if (color.width != ldi.width || color.height != ldi.height)
            throw InputError(color_path.string() + ": size differs from the scene");
        const Image depth = read_depth_map(depth_path, ldi.width, ldi.height);

        std::vector<double> valid(static_cast<std::size_t>(ldi.width) * ldi.height, 1.0);
        if (entry.contains("valid")) {
            const fs::path valid_path = root / entry.at("valid").get<std::string>();
            if (!fs::exists(valid_path)) throw InputError("missing valid mask: " + valid_path.string());
            const auto mask = read_png(valid_path);
            if (mask.width != ldi.width || mask.height != ldi.height)
                throw InputError(valid_path.string() + ": size differs from the scene");
            for (std::size_t i = 0; i < valid.size(); ++i) valid[i] = mask.samples[i * mask.channels];
        }

        ldi.add_layer();
        for (int y = 0; y < ldi.height; ++y)
            for (int x = 0; x < ldi.width; ++x) {
                const std::size_t i = ldi.index(x, y);
                const double z = depth.data[i];
                if (valid[i] < 0.5 || !std::isfinite(z)) continue;
                std::array<double, 3> rgb;
                for (int c = 0; c < 3; ++c) {
                    const int src = color.channels >= 3 ? c : 0;
                    rgb[c] = std::pow(color.samples[i * color.channels + src], gamma);
                }
                ldi.set(static_cast<int>(l), x, y, rgb, z * unit);
            }
    }
    ldi.validate();
    return ldi;
}

void save_ldi(const fs::path& dir, const LayeredDepthImage& ldi, double gamma) {
    ldi.validate();
    fs::create_directories(dir);
    json layers = json::array();
    bool clipped = false;
    for (std::size_t l = 0; l < ldi.layers.size(); ++l) {
        const auto& layer = ldi.layers[l];
        const std::size_t n = layer.depth.size();
        std::vector<std::uint16_t> rgb(n * 3);
        std::vector<std::uint8_t> valid(n);
        Image depth{ldi.width, ldi.height};
        for (std::size_t i = 0; i < n; ++i) {
            valid[i] = layer.valid[i] ? 255 : 0;
            depth.data[i] = layer.valid[i] ? layer.depth[i] : 0.0;
            for (int c = 0; c < 3; ++c) {
                double v = layer.valid[i] ? layer.color[i][c] : 0.0;
                if (v > 1.0) {
                    clipped = true;
                    v = 1.0;
                }
                rgb[i * 3 + c] = static_cast<std::uint16_t>(std::lround(std::pow(v, 1.0 / gamma) * 65535.0));
            }
        }
        const std::string stem = "layer_" + std::to_string(l);
        write_png16(dir / (stem + "_color.png"), ldi.width, ldi.height, 3, rgb);
        write_pfm(dir / (stem + "_depth.pfm"), depth);
        write_png8(dir / (stem + "_valid.png"), ldi.width, ldi.height, 1, valid);
        layers.push_back({{"color", stem + "_color.png"},
                          {"depth", stem + "_depth.pfm"},
                          {"valid", stem + "_valid.png"}});
    }
    if (clipped) spdlog::warn("save_ldi: colors above 1 were clipped");
    write_json(dir / "manifest.json", {{"schema_version", kManifestSchemaVersion},
                                       {"width", ldi.width},
                                       {"height", ldi.height},
                                       {"pitch", ldi.pitch},
                                       {"volume_thickness", ldi.volume_thickness},
                                       {"depth_units", "m"},
                                       {"gamma", gamma},
                                       {"layers", layers}});
}

void save_focal_stack(const fs::path& dir, const FocalStack& stack) {
    stack.validate();
    fs::create_directories(dir);
    json planes = json::array();
    const std::size_t nc = stack.channel_count();
    for (std::size_t k = 0; k < stack.plane_count(); ++k) {
        const std::string stem = plane_stem(k);
        json entry{{"index", k}, {"depth", stack.plane_depths[k]}, {"raw", stem + ".f32"}};
        write_raw_f32(dir / (stem + ".f32"), stack.planes[k]);
        if (nc == 1 || nc == 3) {
            write_png8(dir / (stem + ".png"), stack.width, stack.height, static_cast<int>(nc),
                       tone_map(stack.planes[k]));
            entry["png"] = json::array({stem + ".png"});
        } else {
            entry["png"] = json::array();
            for (std::size_t c = 0; c < nc; ++c) {
                const std::string name = stem + "_c" + std::to_string(c) + ".png";
                write_png8(dir / name, stack.width, stack.height, 1, tone_map({stack.planes[k][c]}));
                entry["png"].push_back(name);
            }
        }
        planes.push_back(entry);
    }
    write_json(dir / "stack.json", {{"schema_version", kManifestSchemaVersion},
                                    {"width", stack.width},
                                    {"height", stack.height},
                                    {"pitch", stack.pitch},
                                    {"wavelengths", stack.wavelengths},
                                    {"plane_depths", stack.plane_depths},
                                    {"raw_format", "float32le, channels interleaved"},
                                    {"planes", planes}});
}

FocalStack load_focal_stack(const fs::path& dir) {
    const fs::path mpath = dir / "stack.json";
    if (!fs::exists(mpath)) throw InputError("missing focal stack manifest: " + mpath.string());
    const json m = read_json(mpath);
    FocalStack stack;
    stack.width = required<int>(m, "width", mpath);
    stack.height = required<int>(m, "height", mpath);
    stack.pitch = required<double>(m, "pitch", mpath);
    stack.wavelengths = required<std::vector<double>>(m, "wavelengths", mpath);
    stack.plane_depths = required<std::vector<double>>(m, "plane_depths", mpath);
    const auto planes = required<json>(m, "planes", mpath);
    if (planes.size() != stack.plane_depths.size())
        throw InputError(mpath.string() + ": plane list and depths disagree");
    for (const auto& p : planes) {
        const fs::path raw = dir / required<std::string>(p, "raw", mpath);
        if (!fs::exists(raw)) throw InputError("missing focal stack plane: " + raw.string());
        stack.planes.push_back(read_raw_f32_interleaved(raw, stack.width, stack.height,
                                                        static_cast<int>(stack.wavelengths.size())));
    }
    stack.validate();
    return stack;
}

void save_batch(const fs::path& dir, const HologramBatch& batch, const BatchManifest& manifest) {
    batch.validate();
    fs::create_directories(dir);
    json channels = json::array();
    std::vector<double> wavelengths, scales;
    for (std::size_t c = 0; c < batch.channels.size(); ++c) {
        const auto& ch = batch.channels[c];
        json files = json::array();
        for (std::size_t t = 0; t < ch.frames.size(); ++t) {
            char name[48];
            std::snprintf(name, sizeof name, "frame_%03zu_ch%zu.png", t, c);
            const auto& f = ch.frames[t];
            std::vector<std::uint8_t> bytes(f.phase.size());
            for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize_phase(f.phase[i]);
            write_png8(dir / name, f.width, f.height, 1, bytes);
            files.push_back(name);
        }
        channels.push_back({{"wavelength", ch.wavelength}, {"global_scale", ch.global_scale}, {"frames", files}});
        wavelengths.push_back(ch.wavelength);
        scales.push_back(ch.global_scale);
    }
    json fixed = json::array();
    for (const auto& p : manifest.fixed_pupils)
        fixed.push_back({{"center_x", p.center_x}, {"center_y", p.center_y}, {"radius", p.radius}});
    write_json(dir / "batch.json", {{"schema_version", kManifestSchemaVersion},
                                    {"width", batch.width()},
                                    {"height", batch.height()},
                                    {"pitch", batch.pitch()},
                                    {"frames", batch.frame_count()},
                                    {"wavelengths", wavelengths},
                                    {"global_scales", scales},
                                    {"quantization_levels", 256},
                                    {"channels", channels},
                                    {"seed", manifest.seed},
                                    {"best_iteration", manifest.best_iteration},
                                    {"pupils", {{"fixed", fixed}, {"random", manifest.random_pupils}}},
                                    {"config", manifest.config}});
}

json load_batch_manifest(const fs::path& dir) {
    const fs::path mpath = dir / "batch.json";
    if (!fs::exists(mpath)) throw InputError("missing batch manifest: " + mpath.string());
    return read_json(mpath);
}

HologramBatch load_batch(const fs::path& dir) {
    const fs::path mpath = dir / "batch.json";
    const json m = load_batch_manifest(dir);
    const double pitch = required<double>(m, "pitch", mpath);
    HologramBatch batch;
    for (const auto& entry : required<json>(m, "channels", mpath)) {
        HologramChannel ch;
        ch.wavelength = required<double>(entry, "wavelength", mpath);
        ch.global_scale = required<double>(entry, "global_scale", mpath);
        for (const auto& name : required<json>(entry, "frames", mpath)) {
            const fs::path file = dir / name.get<std::string>();
            if (!fs::exists(file)) throw InputError("missing hologram frame: " + file.string());
            const auto png = read_png(file);
            if (png.channels != 1 || png.bit_depth != 8)
                throw InputError(file.string() + ": expected 8-bit grayscale");
            PhasePattern f{png.width, png.height, pitch, {}};
            f.phase.resize(png.samples.size());
            for (std::size_t i = 0; i < f.phase.size(); ++i)
                f.phase[i] = dequantize_phase(static_cast<std::uint8_t>(std::lround(png.samples[i] * 255.0)));
            ch.frames.push_back(std::move(f));
        }
        batch.channels.push_back(std::move(ch));
    }
    batch.validate();
    return batch;
}

void save_loss_csv(const fs::path& path, const std::vector<LossRecord>& history) {
    std::ofstream os{path};
    if (!os) throw InputError("cannot write " + path.string());
    os << "iteration,loss,best_loss,wall_ms\n" << std::setprecision(17);
    for (const auto& r : history) os << r.iteration << ',' << r.loss << ',' << r.best_loss << ',' << r.wall_ms << '\n';
}

json to_json(const MetricReport& report) {
    json cells = json::array();
    bool identical = false;
    for (const auto& c : report.cells) {
        json planes = json::array();
        for (double p : c.plane_psnr) planes.push_back(psnr_value(p));
        identical = identical || std::isinf(c.psnr);
        cells.push_back({{"row", c.row},
                         {"col", c.col},
                         {"center_x", c.pupil.center_x},
                         {"center_y", c.pupil.center_y},
                         {"radius", c.pupil.radius},
                         {"psnr", psnr_value(c.psnr)},
                         {"identical", std::isinf(c.psnr)},
                         {"plane_psnr", planes}});
    }
    json plane_psnr = json::array();
    for (double p : report.plane_psnr) plane_psnr.push_back(psnr_value(p));
    return {{"schema_version", kManifestSchemaVersion},
            {"plane_depths", report.plane_depths},
            {"plane_psnr", plane_psnr},
            {"grid_n", report.grid_n},
            {"radius", report.radius},
            {"min_psnr", psnr_value(report.min_psnr)},
            {"mean_psnr", psnr_value(report.mean_psnr)},
            {"max_psnr", psnr_value(report.max_psnr)},
            {"identical", identical},
            {"loss_values", report.loss_values},
            {"cells", cells}};
}

MetricReport metric_report_from_json(const json& j) {
    const fs::path where{"metric report"};
    MetricReport r;
    r.plane_depths = required<std::vector<double>>(j, "plane_depths", where);
    for (const auto& p : required<json>(j, "plane_psnr", where)) r.plane_psnr.push_back(psnr_from(p));
    r.grid_n = required<int>(j, "grid_n", where);
    r.radius = required<double>(j, "radius", where);
    r.min_psnr = psnr_from(j.at("min_psnr"));
    r.mean_psnr = psnr_from(j.at("mean_psnr"));
    r.max_psnr = psnr_from(j.at("max_psnr"));
    r.loss_values = j.value("loss_values", std::vector<double>{});
    for (const auto& c : required<json>(j, "cells", where)) {
        PupilCell cell;
        cell.row = c.at("row").get<int>();
        cell.col = c.at("col").get<int>();
        cell.pupil = {c.at("center_x").get<double>(), c.at("center_y").get<double>(),
                      c.at("radius").get<double>(), PupilKind::fixed};
        cell.psnr = psnr_from(c.at("psnr"));
        for (const auto& p : c.at("plane_psnr")) cell.plane_psnr.push_back(psnr_from(p));
        r.cells.push_back(std::move(cell));
    }
    return r;
}

void save_metric_report(const fs::path& path, const MetricReport& report) {
    write_json(path, to_json(report));
}

void save_psnr_grid_csv(const fs::path& path, const MetricReport& report) {
    std::ofstream os{path};
    if (!os) throw InputError("cannot write " + path.string());
    os << "row,col,center_x,center_y,radius,psnr\n" << std::setprecision(17);
    for (const auto& c : report.cells) {
        os << c.row << ',' << c.col << ',' << c.pupil.center_x << ',' << c.pupil.center_y << ','
           << c.pupil.radius << ',';
        if (std::isinf(c.psnr))
            os << "inf";
        else
            os << c.psnr;
        os << '\n';
    }
}

} // namespace ergoholo
