#include "dataset.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <system_error>

#include "files.hpp"
#include "key_values.hpp"
#include "parallel.hpp"

namespace viewgen {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCsvHeader = "class,instance_seed,pitch,yaw,rgb_path,depth_path,mask_path";

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorCode::kFormat,
          "manifest: bad " + what + " '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::uint64_t> DatasetManifest::instances(const std::string& cls) const {
  std::set<std::uint64_t> seeds;
  for (const auto& r : records) {
    if (r.cls == cls) seeds.insert(r.instance_seed);
  }
  return {seeds.begin(), seeds.end()};
}

std::vector<ManifestRecord> DatasetManifest::records_for(const std::string& cls,
                                                         std::uint64_t seed) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records) {
    if (r.cls == cls && r.instance_seed == seed) out.push_back(r);
  }
  return out;
}

CameraPose DatasetManifest::camera(const ManifestRecord& record) const {
  return CameraPose{record.pitch, record.yaw, distance, fov};
}

RenderOptions DatasetManifest::render_options() const {
  RenderOptions opt;
  opt.supersample = supersample;
  return opt;
}

std::string DatasetManifest::to_text() const {
  std::string out = "# viewgen dataset manifest\n";
  out += "format_version=" + std::to_string(kManifestVersion) + "\n";
  out += "size=" + std::to_string(size) + "\n";
  out += "distance=" + format_double(distance) + "\n";
  out += "fov=" + format_double(fov) + "\n";
  out += "supersample=" + std::to_string(supersample) + "\n";
  out += "grid=" + grid.to_string() + "\n";
  out += "yaw_dedup=mod360\n";
  out += "classes=" + join(classes, ',') + "\n";
  out += "records=" + std::to_string(records.size()) + "\n";
  out += "---\n";
  out += kCsvHeader;
  out += "\n";
  for (const auto& r : records) {
    out += r.cls + "," + std::to_string(r.instance_seed) + "," + format_double(r.pitch) + "," +
           format_double(r.yaw) + "," + r.rgb_path + "," + r.depth_path + "," + r.mask_path + "\n";
  }
  return out;
}

DatasetManifest DatasetManifest::parse(const std::string& text, const fs::path& root) {
  const std::size_t sep = text.find("\n---\n");
  require(sep != std::string::npos, ErrorCode::kFormat, "manifest: missing '---' separator");
  KeyValues header = KeyValues::parse(text.substr(0, sep + 1), "manifest header");
  DatasetManifest m;
  m.root = root;
  const auto version = header.take_int("format_version", -1);
  require(version == kManifestVersion, ErrorCode::kVersion,
          "manifest format_version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kManifestVersion) + ")");
  m.size = static_cast<int>(header.take_int("size", 64));
  m.distance = header.take_double("distance", 2.5);
  m.fov = header.take_double("fov", 40.0);
  m.supersample = static_cast<int>(header.take_int("supersample", 2));
  m.grid = GridSpec::parse(header.take_string("grid", GridSpec::training().to_string()));
  header.take_string("yaw_dedup", "mod360");
  m.classes = header.take_string_list("classes", {});
  const auto count = header.take_u64("records", 0);
  header.finish();

  const auto lines = split(std::string_view(text).substr(sep + 5), '\n');
  std::size_t i = 0;
  require(!lines.empty() && lines[0] == kCsvHeader, ErrorCode::kFormat,
          "manifest: expected CSV header '" + std::string(kCsvHeader) + "'");
  for (i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    require(f.size() == 7, ErrorCode::kFormat, "manifest: malformed record '" + lines[i] + "'");
    ManifestRecord r;
    r.cls = f[0];
    r.instance_seed = static_cast<std::uint64_t>(parse_number(f[1], "instance seed"));
    r.pitch = parse_number(f[2], "pitch");
    r.yaw = parse_number(f[3], "yaw");
    r.rgb_path = f[4];
    r.depth_path = f[5];
    r.mask_path = f[6];
    m.records.push_back(std::move(r));
  }
  require(m.records.size() == count, ErrorCode::kTruncated,
          "manifest lists " + std::to_string(m.records.size()) + " records, header says " +
              std::to_string(count));
  return m;
}

DatasetManifest DatasetManifest::load(const fs::path& root) {
  const fs::path path = root / "manifest.txt";
  require(fs::exists(path), ErrorCode::kIo, "no dataset manifest at " + path.string());
  return parse(read_text_file(path), root);
}

RenderedView load_view(const DatasetManifest& manifest, const ManifestRecord& record) {
  RenderedView v;
  v.rgb = read_png(manifest.root / record.rgb_path);
  v.depth = read_png(manifest.root / record.depth_path);
  v.mask = read_png(manifest.root / record.mask_path);
  const int s = manifest.size;
  require(v.rgb.channels == 3 && v.rgb.height == s && v.rgb.width == s && v.depth.channels == 1 &&
              v.depth.height == s && v.depth.width == s && v.mask.channels == 1 &&
              v.mask.height == s && v.mask.width == s,
          ErrorCode::kFormat, "images of " + record.rgb_path + " do not match the manifest size");
  return v;
}

DatasetManifest generate_dataset(const DatasetOptions& options, const fs::path& root) {
  require(!options.classes.empty(), ErrorCode::kConfig, "no classes requested");
  require(options.instances >= 1, ErrorCode::kConfig, "instances must be >= 1");
  for (const auto& c : options.classes) parse_class(c);

  std::error_code ec;
  if (fs::exists(root, ec) && !fs::is_empty(root, ec)) {
    require(options.overwrite, ErrorCode::kOutputExists,
            "dataset root " + root.string() + " is not empty (use --force to overwrite)");
    fs::remove(root / "manifest.txt", ec);
    for (const auto& c : options.classes) fs::remove_all(root / c, ec);
  }
  fs::create_directories(root, ec);
  require(!ec && fs::is_directory(root), ErrorCode::kIo, "cannot create dataset root " + root.string());

  DatasetManifest m;
  m.root = root;
  m.size = options.size;
  m.distance = options.distance;
  m.fov = options.fov;
  m.supersample = options.supersample;
  m.grid = options.grid;
  m.classes = options.classes;

  const auto poses = angle_grid(options.grid);
  struct Job {
    std::size_t instance;  // index into `instances`
    GridPose pose;
  };
  std::vector<ShapeInstance> instances;
  std::vector<Job> jobs;
  for (const auto& c : options.classes) {
    for (int i = 0; i < options.instances; ++i) {
      const std::uint64_t seed = options.first_seed + static_cast<std::uint64_t>(i);
      instances.push_back(make_instance(c, seed));
      const std::string dir = c + "/" + std::to_string(seed);
      fs::create_directories(root / dir, ec);
      require(!ec, ErrorCode::kIo, "cannot create " + (root / dir).string());
      for (const auto& p : poses) {
        jobs.push_back({instances.size() - 1, p});
        const std::string stem = dir + "/p" + format_double(p.pitch) + "_y" + format_double(p.yaw);
        m.records.push_back({c, seed, p.pitch, p.yaw, stem + "_rgb.png", stem + "_depth.png",
                             stem + "_mask.png"});
      }
    }
  }

  const RenderOptions ropt = m.render_options();
  parallel_for(jobs.size(), options.threads, [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& r = m.records[j];
    const RenderedView v =
        rasterize(instances[job.instance], m.camera(r), options.size, ropt);
    write_png(root / r.rgb_path, v.rgb, 8);
    write_png(root / r.depth_path, v.depth, 16);
    write_png(root / r.mask_path, v.mask, 8);
  });
  write_file_atomic(root / "manifest.txt", m.to_text());
  return m;
}

}  // namespace viewgen
