#include "safedom/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "safedom/sim/datagen.hpp"

namespace safedom {

using nlohmann::json;

namespace {

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::vector<unsigned char> float_bytes_le(const Tensor& t) {
  std::vector<unsigned char> bytes;
  bytes.reserve(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(t[i]);
    bytes.push_back(static_cast<unsigned char>(u & 0xff));
    bytes.push_back(static_cast<unsigned char>((u >> 8) & 0xff));
    bytes.push_back(static_cast<unsigned char>((u >> 16) & 0xff));
    bytes.push_back(static_cast<unsigned char>((u >> 24) & 0xff));
  }
  return bytes;
}

std::vector<float> floats_from_bytes_le(const std::vector<unsigned char>& b) {
  if (b.size() % 4 != 0) {
    throw std::invalid_argument("model: parameter byte count not a multiple of 4");
  }
  std::vector<float> out(b.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t u = std::uint32_t(b[4 * i]) |
                            (std::uint32_t(b[4 * i + 1]) << 8) |
                            (std::uint32_t(b[4 * i + 2]) << 16) |
                            (std::uint32_t(b[4 * i + 3]) << 24);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

std::string params_b64(const Tensor& t) { return base64_encode(float_bytes_le(t)); }

Tensor tensor_from_b64(const std::string& text, std::vector<std::size_t> shape) {
  std::vector<float> values = floats_from_bytes_le(base64_decode(text));
  return Tensor(std::move(shape), std::move(values));
}

void append_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

std::uint32_t read_u32_le(const std::string& data, std::size_t& pos) {
  if (pos + 4 > data.size()) {
    throw std::invalid_argument("dataset: truncated file");
  }
  const auto b = [&](std::size_t k) {
    return std::uint32_t(static_cast<unsigned char>(data[pos + k]));
  };
  const std::uint32_t v = b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
  pos += 4;
  return v;
}

json tensor_to_json_vec(const Tensor& t) {
  json arr = json::array();
  for (std::size_t i = 0; i < t.size(); ++i) arr.push_back(t[i]);
  return arr;
}

Tensor tensor_from_json_vec(const json& arr) {
  std::vector<float> values;
  values.reserve(arr.size());
  for (const auto& v : arr) values.push_back(v.get<float>());
  return Tensor::from_vector(std::move(values));
}

}  // namespace

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 2 < bytes.size()) {
    const std::uint32_t n =
        (std::uint32_t(bytes[i]) << 16) | (std::uint32_t(bytes[i + 1]) << 8) |
        std::uint32_t(bytes[i + 2]);
    out.push_back(kB64Alphabet[(n >> 18) & 63]);
    out.push_back(kB64Alphabet[(n >> 12) & 63]);
    out.push_back(kB64Alphabet[(n >> 6) & 63]);
    out.push_back(kB64Alphabet[n & 63]);
    i += 3;
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = std::uint32_t(bytes[i]) << 16;
    out.push_back(kB64Alphabet[(n >> 18) & 63]);
    out.push_back(kB64Alphabet[(n >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rest == 2) {
    const std::uint32_t n =
        (std::uint32_t(bytes[i]) << 16) | (std::uint32_t(bytes[i + 1]) << 8);
    out.push_back(kB64Alphabet[(n >> 18) & 63]);
    out.push_back(kB64Alphabet[(n >> 12) & 63]);
    out.push_back(kB64Alphabet[(n >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  int lookup[256];
  for (int& v : lookup) v = -1;
  for (int k = 0; k < 64; ++k) {
    lookup[static_cast<unsigned char>(kB64Alphabet[k])] = k;
  }
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = lookup[static_cast<unsigned char>(c)];
    if (v < 0) throw std::invalid_argument("base64: invalid character");
    acc = (acc << 6) | std::uint32_t(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
    }
  }
  return out;
}

std::string model_to_json(const Network& net) {
  json doc;
  doc["format_version"] = 1;
  doc["input_dim"] = net.input_dim();
  doc["output_dim"] = net.output_dim();
  json layers = json::array();
  for (const Layer& layer : net.layers()) {
    json rec;
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      rec["kind"] = "dense";
      rec["out"] = dense->weights.dim(0);
      rec["in"] = dense->weights.dim(1);
      rec["weights"] = params_b64(dense->weights);
      rec["bias"] = params_b64(dense->bias);
    } else if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      rec["kind"] = "conv1d";
      rec["out_channels"] = conv->kernels.dim(0);
      rec["in_channels"] = conv->kernels.dim(1);
      rec["kernel_width"] = conv->kernels.dim(2);
      rec["stride"] = conv->stride;
      rec["padding"] = conv->padding;
      rec["kernels"] = params_b64(conv->kernels);
      rec["bias"] = params_b64(conv->bias);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      rec["kind"] = "relu";
    } else {
      rec["kind"] = "flatten";
    }
    layers.push_back(std::move(rec));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2);
}

Network model_from_json(const std::string& text) {
  const json doc = json::parse(text);
  if (doc.at("format_version").get<int>() != 1) {
    throw std::invalid_argument("model: unsupported format_version");
  }
  const auto input_dim = doc.at("input_dim").get<std::size_t>();
  const auto output_dim = doc.at("output_dim").get<std::size_t>();
  std::vector<Layer> layers;
  for (const json& rec : doc.at("layers")) {
    const std::string kind = rec.at("kind").get<std::string>();
    if (kind == "dense") {
      const auto out = rec.at("out").get<std::size_t>();
      const auto in = rec.at("in").get<std::size_t>();
      layers.push_back(DenseLayer{
          tensor_from_b64(rec.at("weights").get<std::string>(), {out, in}),
          tensor_from_b64(rec.at("bias").get<std::string>(), {out})});
    } else if (kind == "conv1d") {
      const auto co = rec.at("out_channels").get<std::size_t>();
      const auto ci = rec.at("in_channels").get<std::size_t>();
      const auto kw = rec.at("kernel_width").get<std::size_t>();
      layers.push_back(Conv1dLayer{
          tensor_from_b64(rec.at("kernels").get<std::string>(), {co, ci, kw}),
          tensor_from_b64(rec.at("bias").get<std::string>(), {co}),
          rec.at("stride").get<int>(), rec.at("padding").get<int>()});
    } else if (kind == "relu") {
      layers.push_back(ReluLayer{});
    } else if (kind == "flatten") {
      layers.push_back(FlattenLayer{});
    } else {
      throw std::invalid_argument("model: unknown layer kind " + kind);
    }
  }
  return Network(input_dim, output_dim, std::move(layers));
}

void save_model(const Network& net, const std::filesystem::path& path) {
  write_text_file_atomic(path, model_to_json(net));
}

Network load_model(const std::filesystem::path& path) {
  return model_from_json(read_text_file(path));
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::string blob = "SDT1";
  append_u32_le(blob, 1);
  append_u32_le(blob, std::uint32_t(ds.samples.size()));
  append_u32_le(blob, std::uint32_t(ds.input_dim));
  append_u32_le(blob, std::uint32_t(ds.num_classes));
  for (const Sample& s : ds.samples) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      append_u32_le(blob, std::bit_cast<std::uint32_t>(s.x[i]));
    }
    append_u32_le(blob, std::uint32_t(s.label));
  }
  write_text_file_atomic(path, blob);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const std::string data = read_text_file(path);
  if (data.size() < 20 || data.compare(0, 4, "SDT1") != 0) {
    throw std::invalid_argument("dataset: bad magic in " + path.string());
  }
  std::size_t pos = 4;
  const std::uint32_t version = read_u32_le(data, pos);
  if (version != 1) throw std::invalid_argument("dataset: unsupported version");
  const std::uint32_t count = read_u32_le(data, pos);
  const std::uint32_t input_dim = read_u32_le(data, pos);
  const std::uint32_t num_classes = read_u32_le(data, pos);
  Dataset ds;
  ds.input_dim = input_dim;
  ds.num_classes = num_classes;
  ds.samples.reserve(count);
  for (std::uint32_t s = 0; s < count; ++s) {
    Tensor x({input_dim});
    for (std::uint32_t i = 0; i < input_dim; ++i) {
      x[i] = std::bit_cast<float>(read_u32_le(data, pos));
    }
    const std::uint32_t label = read_u32_le(data, pos);
    ds.add(std::move(x), int(label));
  }
  if (pos != data.size()) {
    throw std::invalid_argument("dataset: trailing bytes in " + path.string());
  }
  return ds;
}

std::string domains_to_json(const std::vector<SafetyDomain>& domains,
                            std::size_t input_dim) {
  json doc;
  doc["format_version"] = 1;
  doc["input_dim"] = input_dim;
  json arr = json::array();
  for (const SafetyDomain& d : domains) {
    json rec;
    rec["lower"] = tensor_to_json_vec(d.box.lower);
    rec["upper"] = tensor_to_json_vec(d.box.upper);
    rec["acceptable_labels"] = d.acceptable;
    arr.push_back(std::move(rec));
  }
  doc["domains"] = std::move(arr);
  return doc.dump();
}

std::vector<SafetyDomain> domains_from_json(const std::string& text) {
  const json doc = json::parse(text);
  if (doc.at("format_version").get<int>() != 1) {
    throw std::invalid_argument("domains: unsupported format_version");
  }
  if (doc.contains("generator")) {
    const int level = doc.at("generator").at("level").get<int>();
    return sim::gen_domains(level);
  }
  const auto input_dim = doc.at("input_dim").get<std::size_t>();
  std::vector<SafetyDomain> out;
  for (const json& rec : doc.at("domains")) {
    SafetyDomain d;
    d.box.lower = tensor_from_json_vec(rec.at("lower"));
    d.box.upper = tensor_from_json_vec(rec.at("upper"));
    d.acceptable = rec.at("acceptable_labels").get<std::vector<int>>();
    if (d.box.dim() != input_dim) {
      throw std::invalid_argument("domains: entry does not match input_dim");
    }
    d.box.validate();
    out.push_back(std::move(d));
  }
  return out;
}

void save_domains(const std::vector<SafetyDomain>& domains,
                  std::size_t input_dim, const std::filesystem::path& path) {
  write_text_file_atomic(path, domains_to_json(domains, input_dim));
}

std::vector<SafetyDomain> load_domains(const std::filesystem::path& path) {
  return domains_from_json(read_text_file(path));
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json doc;
  doc["lambda"] = cfg.lambda;
  doc["delta"] = cfg.delta;
  doc["batch_train"] = cfg.batch_train;
  doc["batch_safety"] = cfg.batch_safety;
  doc["learning_rate"] = cfg.learning_rate;
  doc["min_epochs"] = cfg.min_epochs;
  doc["max_epochs"] = cfg.max_epochs;
  doc["inner_mode"] =
      cfg.inner_mode == InnerMode::certified ? "certified" : "empirical";
  doc["seed"] = cfg.seed;
  doc["safety_check_period"] = cfg.safety_check_period;
  doc["grad_clip"] = cfg.grad_clip;
  doc["safety_ramp_epochs"] = cfg.safety_ramp_epochs;
  doc["pgd"] = {{"steps", cfg.pgd.steps},
                {"step_size", cfg.pgd.step_size},
                {"random_init", cfg.pgd.random_init}};
  return doc.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  const json doc = json::parse(text);
  TrainConfig cfg;
  if (doc.contains("lambda")) cfg.lambda = doc["lambda"].get<float>();
  if (doc.contains("delta")) cfg.delta = doc["delta"].get<float>();
  if (doc.contains("batch_train")) cfg.batch_train = doc["batch_train"].get<int>();
  if (doc.contains("batch_safety")) {
    cfg.batch_safety = doc["batch_safety"].get<int>();
  }
  if (doc.contains("learning_rate")) {
    cfg.learning_rate = doc["learning_rate"].get<float>();
  }
  if (doc.contains("min_epochs")) cfg.min_epochs = doc["min_epochs"].get<int>();
  if (doc.contains("max_epochs")) cfg.max_epochs = doc["max_epochs"].get<int>();
  if (doc.contains("inner_mode")) {
    const std::string mode = doc["inner_mode"].get<std::string>();
    if (mode == "certified") {
      cfg.inner_mode = InnerMode::certified;
    } else if (mode == "empirical") {
      cfg.inner_mode = InnerMode::empirical;
    } else {
      throw std::invalid_argument("config: unknown inner_mode " + mode);
    }
  }
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("safety_check_period")) {
    cfg.safety_check_period = doc["safety_check_period"].get<int>();
  }
  if (doc.contains("grad_clip")) cfg.grad_clip = doc["grad_clip"].get<float>();
  if (doc.contains("safety_ramp_epochs")) {
    cfg.safety_ramp_epochs = doc["safety_ramp_epochs"].get<int>();
  }
  if (doc.contains("pgd")) {
    const json& p = doc["pgd"];
    if (p.contains("steps")) cfg.pgd.steps = p["steps"].get<int>();
    if (p.contains("step_size")) cfg.pgd.step_size = p["step_size"].get<float>();
    if (p.contains("random_init")) {
      cfg.pgd.random_init = p["random_init"].get<bool>();
    }
  }
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return train_config_from_json(read_text_file(path));
}

std::string train_report_to_json(const TrainReport& report) {
  json doc;
  doc["epochs_run"] = report.epochs_run;
  doc["final_safety_bound"] = report.final_safety_bound;
  doc["converged"] = report.converged;
  doc["final_train_loss"] = report.final_train_loss;
  doc["final_safety_term"] = report.final_safety_term;
  doc["final_objective"] = report.final_objective;
  json trace = json::array();
  for (std::size_t e = 0; e < report.trace.size(); ++e) {
    json rec;
    rec["epoch"] = e + 1;
    rec["train_loss"] = report.trace[e].train_loss;
    rec["safety_term"] = report.trace[e].safety_term;
    if (report.trace[e].certified_bound) {
      rec["certified_bound"] = *report.trace[e].certified_bound;
    } else {
      rec["certified_bound"] = nullptr;
    }
    trace.push_back(std::move(rec));
  }
  doc["trace"] = std::move(trace);
  return doc.dump(2);
}

void save_train_report(const TrainReport& report,
                       const std::filesystem::path& path) {
  write_text_file_atomic(path, train_report_to_json(report));
}

void write_trace_csv(const TrainReport& report,
                     const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,train_loss,safety_term,certified_bound\n";
  for (std::size_t e = 0; e < report.trace.size(); ++e) {
    out << (e + 1) << ',' << report.trace[e].train_loss << ','
        << report.trace[e].safety_term << ',';
    if (report.trace[e].certified_bound) out << *report.trace[e].certified_bound;
    out << '\n';
  }
  write_text_file_atomic(path, out.str());
}

std::string scenario_to_json(const sim::Scenario& scenario) {
  json doc;
  doc["id"] = scenario.id;
  doc["name"] = scenario.name;
  doc["bounds"] = {scenario.world.bounds.xmin, scenario.world.bounds.ymin,
                   scenario.world.bounds.xmax, scenario.world.bounds.ymax};
  json walls = json::array();
  for (const sim::Segment& w : scenario.world.walls) {
    walls.push_back({w.a.x, w.a.y, w.b.x, w.b.y});
  }
  doc["walls"] = std::move(walls);
  json boxes = json::array();
  for (const sim::Aabb& b : scenario.world.boxes) {
    boxes.push_back({b.xmin, b.ymin, b.xmax, b.ymax});
  }
  doc["boxes"] = std::move(boxes);
  doc["robot_start"] = {{"x", scenario.robot_start.position.x},
                        {"y", scenario.robot_start.position.y},
                        {"theta", scenario.robot_start.heading}};
  json wps = json::array();
  for (const sim::TimedWaypoint& wp : scenario.operator_waypoints) {
    wps.push_back({{"t", wp.t}, {"x", wp.pos.x}, {"y", wp.pos.y}});
  }
  doc["operator_waypoints"] = std::move(wps);
  json events = json::array();
  for (const sim::TimedEvent& e : scenario.events) {
    const char* kind = e.kind == sim::ControlEvent::enable    ? "enable"
                       : e.kind == sim::ControlEvent::disable ? "disable"
                                                              : "none";
    events.push_back({{"t", e.t}, {"kind", kind}});
  }
  doc["events"] = std::move(events);
  doc["success"] = {{"d_min", scenario.success.d_min},
                    {"d_max", scenario.success.d_max},
                    {"bearing_max_deg", scenario.success.bearing_max_deg}};
  doc["duration"] = scenario.duration;
  return doc.dump(2);
}

sim::Scenario scenario_from_json(const std::string& text) {
  const json doc = json::parse(text);
  sim::Scenario s;
  if (doc.contains("id")) s.id = doc["id"].get<int>();
  s.name = doc.at("name").get<std::string>();
  const auto& b = doc.at("bounds");
  s.world.bounds = sim::Aabb{b.at(0).get<double>(), b.at(1).get<double>(),
                             b.at(2).get<double>(), b.at(3).get<double>()};
  for (const json& w : doc.value("walls", json::array())) {
    s.world.walls.push_back(sim::Segment{{w.at(0).get<double>(),
                                          w.at(1).get<double>()},
                                         {w.at(2).get<double>(),
                                          w.at(3).get<double>()}});
  }
  for (const json& box : doc.value("boxes", json::array())) {
    s.world.boxes.push_back(sim::Aabb{box.at(0).get<double>(),
                                      box.at(1).get<double>(),
                                      box.at(2).get<double>(),
                                      box.at(3).get<double>()});
  }
  const json& rs = doc.at("robot_start");
  s.robot_start.position = {rs.at("x").get<double>(), rs.at("y").get<double>()};
  s.robot_start.heading = rs.at("theta").get<double>();
  for (const json& wp : doc.at("operator_waypoints")) {
    s.operator_waypoints.push_back(sim::TimedWaypoint{
        wp.at("t").get<double>(),
        {wp.at("x").get<double>(), wp.at("y").get<double>()}});
  }
  for (const json& e : doc.value("events", json::array())) {
    s.events.push_back(sim::TimedEvent{
        e.at("t").get<double>(),
        sim::control_event_from_name(e.at("kind").get<std::string>())});
  }
  if (doc.contains("success")) {
    const json& sc = doc["success"];
    s.success.d_min = sc.value("d_min", s.success.d_min);
    s.success.d_max = sc.value("d_max", s.success.d_max);
    s.success.bearing_max_deg =
        sc.value("bearing_max_deg", s.success.bearing_max_deg);
  }
  s.duration = doc.at("duration").get<double>();
  s.world.operator_state = sim::operator_pose_at(s, 0.0);
  s.validate();
  return s;
}

void save_scenario(const sim::Scenario& scenario,
                   const std::filesystem::path& path) {
  write_text_file_atomic(path, scenario_to_json(scenario));
}

sim::Scenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_json(read_text_file(path));
}

void write_trajectory_csv(const sim::ScenarioResult& result,
                          const std::filesystem::path& path) {
  std::ostringstream out;
  out << "t,x,y,theta,mode,label\n";
  for (const sim::TrajectoryPoint& p : result.trajectory) {
    out << p.t << ',' << p.x << ',' << p.y << ',' << p.heading << ','
        << sim::controller_mode_name(p.mode) << ','
        << sim::motion_class_name(p.label) << '\n';
  }
  write_text_file_atomic(path, out.str());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file_atomic(const std::filesystem::path& path,
                            const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    out << content;
    out.flush();
    if (!out) {
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace safedom
