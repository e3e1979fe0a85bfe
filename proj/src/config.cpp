#include "ergoholo/config.hpp"

#include <cmath>
#include <set>

#include "ergoholo/errors.hpp"
#include "ergoholo/persistence.hpp"

namespace ergoholo {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects any it did not consume.
class Section {
public:
    Section(const json& j, std::string name) : j_{j}, name_{std::move(name)} {
        if (!j_.is_object()) throw InputError("config: \"" + name_ + "\" must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw InputError("config: " + name_ + "." + key + ": " + e.what());
        }
    }

    void get(const char* key, std::optional<double>& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        if (j_.at(key).is_null())
            out.reset();
        else
            out = j_.at(key).get<double>();
    }

    void get(const char* key, std::filesystem::path& out) {
        std::string s = out.string();
        get(key, s);
        out = s;
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw InputError("config: unknown key " + name_ + "." + k);
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

std::string norm_name(LossNorm n) { return n == LossNorm::l1 ? "l1" : "l2"; }
std::string scale_name(ScaleMode m) { return m == ScaleMode::phase ? "phase" : "amplitude"; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Optimizer keys owned by the optics section or the top level.
const std::set<std::string> kOpticsOwned{"orders", "pitch", "eyepiece_focal_length", "sinc_envelope", "threads"};

void read_optimizer(Section& s, OptimizerConfig& c) {
    s.get("frames", c.frames);
    s.get("plane_indices", c.plane_indices);
    s.get("pupils_total", c.pupils_total);
    s.get("pupils_fixed", c.pupils_fixed);
    s.get("pupils_random", c.pupils_random);
    s.get("base_radius", c.base_radius);
    if (s.has("eyebox")) {
        const auto box = s.raw("eyebox").get<std::vector<double>>();
        if (box.size() != 4) throw InputError("config: optimize.eyebox needs [x_min, y_min, x_max, y_max]");
        c.eyebox = {box[0], box[1], box[2], box[3]};
    }
    s.get("iterations", c.iterations);
    s.get("step_size", c.step_size);
    if (s.has("loss_norm")) {
        const auto n = s.raw("loss_norm").get<std::string>();
        if (n == "l2")
            c.loss_norm = LossNorm::l2;
        else if (n == "l1")
            c.loss_norm = LossNorm::l1;
        else
            throw InputError("config: optimize.loss_norm must be l1 or l2");
    }
    s.get("seed", c.seed);
    s.get("disable_pupils", c.disable_pupils);
    s.get("disable_time_multiplexing", c.disable_time_multiplexing);
    s.get("disable_high_orders", c.disable_high_orders);
    s.get("center_pupil_only", c.center_pupil_only);
    s.get("pupil_normalization", c.pupil_normalization);
    if (s.has("scale_mode")) {
        const auto m = s.raw("scale_mode").get<std::string>();
        if (m == "amplitude")
            c.scale_mode = ScaleMode::amplitude;
        else if (m == "phase")
            c.scale_mode = ScaleMode::phase;
        else
            throw InputError("config: optimize.scale_mode must be amplitude or phase");
    }
    s.get("intensity_floor", c.intensity_floor);
    s.get("beta1", c.beta1);
    s.get("beta2", c.beta2);
    s.get("adam_epsilon", c.adam_epsilon);
}

} // namespace

std::vector<int> even_plane_indices(int plane_count, int count) {
    if (plane_count < 1) throw InputError("plane count must be positive");
    std::vector<int> out;
    if (plane_count <= count) {
        for (int i = 0; i < plane_count; ++i) out.push_back(i);
        return out;
    }
    for (int i = 0; i < count; ++i)
        out.push_back(static_cast<int>(std::lround(static_cast<double>(i) * (plane_count - 1) / (count - 1))));
    return out;
}

double parse_length(const std::string& text) {
    std::size_t used = 0;
    double value;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        throw InputError("not a length: \"" + text + "\"");
    }
    const std::string unit = text.substr(used);
    double scale;
    if (unit.empty() || unit == "m")
        scale = 1.0;
    else if (unit == "mm")
        scale = 1e-3;
    else if (unit == "um")
        scale = 1e-6;
    else if (unit == "nm")
        scale = 1e-9;
    else
        throw InputError("unknown length unit \"" + unit + "\" in \"" + text + "\"");
    return value * scale;
}

void RunConfig::validate() const {
    if (schema_version != kConfigSchemaVersion)
        throw InputError("config: unsupported schema_version " + std::to_string(schema_version));
    if (scene.plane_count < 1) throw InputError("config: scene.plane_count must be positive");
    if (scene.volume_thickness && !(*scene.volume_thickness > 0.0))
        throw InputError("config: scene.volume_thickness must be positive");
    if (scene.mask.max_angle < 0.0) throw InputError("config: scene.mask.max_angle must be non-negative");
    if (scene.kernel_grid < 0) throw InputError("config: scene.kernel_grid must be non-negative");
    if (scene.depth_tolerance && !(*scene.depth_tolerance >= 0.0))
        throw InputError("config: scene.depth_tolerance must be non-negative");
    if (optics.wavelengths.empty()) throw InputError("config: optics.wavelengths is empty");
    for (double w : optics.wavelengths)
        if (!(w > 0.0)) throw InputError("config: wavelengths must be positive");
    if (eval.grid_n < 1) throw InputError("config: eval.grid_n must be at least 1");
    if (!(eval.radius > 0.0)) throw InputError("config: eval.radius must be positive");
    if (eval.sweep_steps < 2) throw InputError("config: eval.sweep_steps must be at least 2");
    if (eval.sweep_pupil_radius < 0.0) throw InputError("config: eval.sweep_pupil_radius must be non-negative");
    if (threads < 0) throw InputError("config: threads must be non-negative");
    optimizer_config().validate();
}

OptimizerConfig RunConfig::optimizer_config() const {
    OptimizerConfig c = optimize;
    c.orders = optics.orders;
    c.pitch = optics.pitch;
    c.eyepiece_focal_length = optics.eyepiece_focal_length;
    c.sinc_envelope = optics.sinc_envelope;
    c.threads = threads;
    return c;
}

RenderSettings RunConfig::render_settings() const {
    RenderSettings s;
    s.mask = scene.mask;
    s.kernel_grid = scene.kernel_grid;
    s.depth_tolerance = scene.depth_tolerance;
    s.tolerance_plane_count = scene.plane_count;
    s.threads = threads;
    return s;
}

json to_json(const OptimizerConfig& c) {
    return {{"frames", c.frames},
            {"orders", c.orders},
            {"plane_indices", c.plane_indices},
            {"pupils_total", c.pupils_total},
            {"pupils_fixed", c.pupils_fixed},
            {"pupils_random", c.pupils_random},
            {"base_radius", c.base_radius},
            {"eyebox", {c.eyebox.x_min, c.eyebox.y_min, c.eyebox.x_max, c.eyebox.y_max}},
            {"iterations", c.iterations},
            {"step_size", c.step_size},
            {"loss_norm", norm_name(c.loss_norm)},
            {"seed", c.seed},
            {"disable_pupils", c.disable_pupils},
            {"disable_time_multiplexing", c.disable_time_multiplexing},
            {"disable_high_orders", c.disable_high_orders},
            {"center_pupil_only", c.center_pupil_only},
            {"pupil_normalization", c.pupil_normalization},
            {"sinc_envelope", c.sinc_envelope},
            {"scale_mode", scale_name(c.scale_mode)},
            {"pitch", c.pitch},
            {"eyepiece_focal_length", c.eyepiece_focal_length},
            {"intensity_floor", c.intensity_floor},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"threads", c.threads}};
}

json to_json(const RunConfig& c) {
    json optimize = to_json(c.optimize);
    for (const auto& k : kOpticsOwned) optimize.erase(k);
    return {{"schema_version", c.schema_version},
            {"threads", c.threads},
            {"scene",
             {{"ldi", c.scene.ldi.string()},
              {"volume_thickness", optional_json(c.scene.volume_thickness)},
              {"plane_count", c.scene.plane_count},
              {"mask",
               {{"kind", c.scene.mask.kind == MaskSpec::Kind::none ? "none" : "circular"},
                {"max_angle", c.scene.mask.max_angle}}},
              {"kernel_grid", c.scene.kernel_grid},
              {"depth_tolerance", optional_json(c.scene.depth_tolerance)}}},
            {"optics",
             {{"pitch", c.optics.pitch},
              {"wavelengths", c.optics.wavelengths},
              {"orders", c.optics.orders},
              {"eyepiece_focal_length", c.optics.eyepiece_focal_length},
              {"sinc_envelope", c.optics.sinc_envelope},
              {"laser_profile", c.optics.laser_profile.string()}}},
            {"optimize", optimize},
            {"eval",
             {{"grid_n", c.eval.grid_n},
              {"radius", c.eval.radius},
              {"sweep_start", c.eval.sweep_start},
              {"sweep_end", c.eval.sweep_end},
              {"sweep_steps", c.eval.sweep_steps},
              {"sweep_pupil_x", c.eval.sweep_pupil_x},
              {"sweep_pupil_y", c.eval.sweep_pupil_y},
              {"sweep_pupil_radius", c.eval.sweep_pupil_radius}}},
            {"io",
             {{"output_dir", c.io.output_dir.string()},
              {"overwrite", c.io.overwrite},
              {"targets", c.io.targets.string()},
              {"batch", c.io.batch.string()}}}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    Section top{j, "config"};
    top.get("schema_version", c.schema_version);
    if (c.schema_version != kConfigSchemaVersion)
        throw InputError("config: unsupported schema_version " + std::to_string(c.schema_version));
    top.get("threads", c.threads);

    if (top.has("scene")) {
        Section s{top.raw("scene"), "scene"};
        s.get("ldi", c.scene.ldi);
        s.get("volume_thickness", c.scene.volume_thickness);
        s.get("plane_count", c.scene.plane_count);
        if (s.has("mask")) {
            Section m{s.raw("mask"), "scene.mask"};
            std::string kind = "circular";
            m.get("kind", kind);
            if (kind == "none")
                c.scene.mask.kind = MaskSpec::Kind::none;
            else if (kind == "circular")
                c.scene.mask.kind = MaskSpec::Kind::circular;
            else
                throw InputError("config: scene.mask.kind must be none or circular");
            m.get("max_angle", c.scene.mask.max_angle);
            m.finish();
        }
        s.get("kernel_grid", c.scene.kernel_grid);
        s.get("depth_tolerance", c.scene.depth_tolerance);
        s.finish();
    }
    if (top.has("optics")) {
        Section s{top.raw("optics"), "optics"};
        s.get("pitch", c.optics.pitch);
        s.get("wavelengths", c.optics.wavelengths);
        s.get("orders", c.optics.orders);
        s.get("eyepiece_focal_length", c.optics.eyepiece_focal_length);
        s.get("sinc_envelope", c.optics.sinc_envelope);
        s.get("laser_profile", c.optics.laser_profile);
        s.finish();
    }
    if (top.has("optimize")) {
        Section s{top.raw("optimize"), "optimize"};
        read_optimizer(s, c.optimize);
        s.finish();
    }
    if (top.has("eval")) {
        Section s{top.raw("eval"), "eval"};
        s.get("grid_n", c.eval.grid_n);
        s.get("radius", c.eval.radius);
        s.get("sweep_start", c.eval.sweep_start);
        s.get("sweep_end", c.eval.sweep_end);
        s.get("sweep_steps", c.eval.sweep_steps);
        s.get("sweep_pupil_x", c.eval.sweep_pupil_x);
        s.get("sweep_pupil_y", c.eval.sweep_pupil_y);
        s.get("sweep_pupil_radius", c.eval.sweep_pupil_radius);
        s.finish();
    }
    if (top.has("io")) {
        Section s{top.raw("io"), "io"};
        s.get("output_dir", c.io.output_dir);
        s.get("overwrite", c.io.overwrite);
        s.get("targets", c.io.targets);
        s.get("batch", c.io.batch);
        s.finish();
    }
    top.finish();
    c.optimize = c.optimizer_config();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InputError("missing config file: " + path.string());
    return run_config_from_json(read_json(path));
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
    write_json(path, to_json(config));
}

} // namespace ergoholo
