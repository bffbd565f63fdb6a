#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gas/dataset.hpp"
#include "gas/io.hpp"

namespace gas {

namespace io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace io

namespace {

constexpr std::uint32_t kDatasetMagic = 0x44534147;  // "GASD"
constexpr std::uint32_t kDatasetVersion = 1;

std::span<const float> floats(const std::vector<Vec2>& v) {
  static_assert(sizeof(Vec2) == 2 * sizeof(float));
  return {reinterpret_cast<const float*>(v.data()), v.size() * 2};
}

std::span<float> floats(std::vector<Vec2>& v) { return {reinterpret_cast<float*>(v.data()), v.size() * 2}; }

}  // namespace

std::string serialize_dataset(const Dataset& data) {
  std::ostringstream os(std::ios::binary);
  io::write_pod(os, kDatasetMagic);
  io::write_pod(os, kDatasetVersion);
  io::write_pod(os, static_cast<std::uint8_t>(data.style));
  io::write_pod(os, static_cast<std::uint8_t>(data.dynamics));
  io::write_pod(os, std::uint16_t{0});
  io::write_pod(os, data.seed);
  io::write_pod(os, static_cast<std::uint64_t>(data.trajectory_count()));
  io::write_pod(os, static_cast<std::uint64_t>(data.transition_count()));
  for (const auto& tr : data.trajectories()) {
    io::write_pod(os, static_cast<std::uint64_t>(tr.length()));
    io::write_array(os, floats(tr.states));
    io::write_array(os, floats(tr.actions));
  }
  return os.str();
}

Dataset deserialize_dataset(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  if (io::read_pod<std::uint32_t>(is) != kDatasetMagic) throw io::FormatError("not a dataset file");
  if (io::read_pod<std::uint32_t>(is) != kDatasetVersion) throw io::FormatError("unsupported dataset version");
  Dataset data;
  const auto style = io::read_pod<std::uint8_t>(is);
  const auto dynamics = io::read_pod<std::uint8_t>(is);
  if (style > 2 || dynamics > 1) throw io::FormatError("bad dataset header");
  data.style = static_cast<DatasetStyle>(style);
  data.dynamics = static_cast<Dynamics>(dynamics);
  io::read_pod<std::uint16_t>(is);
  data.seed = io::read_pod<std::uint64_t>(is);
  const auto n_traj = io::read_pod<std::uint64_t>(is);
  const auto n_trans = io::read_pod<std::uint64_t>(is);
  if (n_trans > bytes.size()) throw io::FormatError("transition count exceeds file size");
  for (std::uint64_t i = 0; i < n_traj; ++i) {
    const auto len = io::read_pod<std::uint64_t>(is);
    if (len == 0 || len > n_trans) throw io::FormatError("bad trajectory length");
    Trajectory tr;
    tr.states.resize(len + 1);
    tr.actions.resize(len);
    io::read_array(is, floats(tr.states));
    io::read_array(is, floats(tr.actions));
    data.add(std::move(tr));
  }
  if (data.transition_count() != n_trans) throw io::FormatError("transition count mismatch");
  if (is.peek() != std::char_traits<char>::eof()) throw io::FormatError("trailing bytes after dataset");
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  io::write_file(path, serialize_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& path) { return deserialize_dataset(io::read_file(path)); }

void save_dataset_jsonl(const Dataset& data, const std::filesystem::path& path) {
  using nlohmann::json;
  std::ostringstream os;
  json header = {{"format", "gas-dataset"},
                 {"version", kDatasetVersion},
                 {"style", to_string(data.style)},
                 {"dynamics", to_string(data.dynamics)},
                 {"seed", data.seed},
                 {"trajectories", data.trajectory_count()},
                 {"transitions", data.transition_count()}};
  os << header.dump() << '\n';
  auto pairs = [](const std::vector<Vec2>& v) {
    json arr = json::array();
    for (const auto& p : v) arr.push_back({p.x, p.y});
    return arr;
  };
  for (std::size_t i = 0; i < data.trajectory_count(); ++i) {
    const auto& tr = data.trajectory(i);
    os << json{{"id", i}, {"states", pairs(tr.states)}, {"actions", pairs(tr.actions)}}.dump() << '\n';
  }
  io::write_file(path, os.str());
}

Dataset load_dataset_jsonl(const std::filesystem::path& path) {
  using nlohmann::json;
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw io::FormatError("empty dataset file");
  Dataset data;
  try {
    const json header = json::parse(line);
    if (header.at("format") != "gas-dataset") throw io::FormatError("not a dataset file");
    data.style = parse_style(header.at("style").get<std::string>());
    data.dynamics = parse_dynamics(header.at("dynamics").get<std::string>());
    data.seed = header.at("seed").get<std::uint64_t>();
    auto points = [](const json& arr) {
      std::vector<Vec2> v;
      for (const auto& p : arr) v.push_back({p.at(0).get<float>(), p.at(1).get<float>()});
      return v;
    };
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      data.add({points(rec.at("states")), points(rec.at("actions"))});
    }
    if (data.trajectory_count() != header.at("trajectories").get<std::size_t>()) {
      throw io::FormatError("trajectory count mismatch");
    }
  } catch (const json::exception& e) {
    throw io::FormatError(std::string("malformed dataset line: ") + e.what());
  }
  return data;
}

}  // namespace gas
