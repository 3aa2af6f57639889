#include "stewart/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "binio.hpp"
#include "stewart/rng.hpp"

namespace stewart {

namespace {

constexpr char kMagic[4] = {'G', 'S', 'F', 'K'};
constexpr std::uint32_t kVersion = 1;
// Stream id reserved for the split shuffle so it never collides with the
// per-record streams (which use the record index).
constexpr std::uint64_t kSplitStream = 0xFFFFFFFF00000001ull;

std::size_t record_value_count(RotationMode mode) {
  return mode == RotationMode::kQuaternion ? 157 : 156;
}

SampleRecord make_record(const PlatformConfig& cfg, const DatasetMeta& meta,
                         std::uint64_t index) {
  Philox rng(meta.seed, index);
  SampleRecord rec;
  for (int k = 0; k < 3; ++k) {
    rec.x[k] = rng.next_uniform(meta.l_min, meta.l_max);
  }
  for (int k = 0; k < 3; ++k) {
    rec.q3d[k] = rng.next_uniform(meta.theta_min, meta.theta_max);
  }
  const Rotation r = euler_to_rotation(rec.q3d[0], rec.q3d[1], rec.q3d[2]);
  rec.q4d = rotation_to_quaternion(r);
  const LegLengths legs = inverse_kinematics(cfg, Pose{r, rec.x});
  rec.lbar = legs.lbar;
  rec.e = vectorize_distance(
      build_distance_graph(cfg, legs.lbar, cfg.edge_mode).distances);
  return rec;
}

void append_record(std::vector<unsigned char>& out, const SampleRecord& rec,
                   RotationMode mode) {
  for (int k = 0; k < 3; ++k) binio::put_f64(out, rec.x[k]);
  if (mode == RotationMode::kQuaternion) {
    for (int k = 0; k < 4; ++k) binio::put_f64(out, rec.q4d[k]);
  } else {
    for (int k = 0; k < 3; ++k) binio::put_f64(out, rec.q3d[k]);
  }
  for (int k = 0; k < 6; ++k) binio::put_f64(out, rec.lbar[k]);
  for (int k = 0; k < 144; ++k) binio::put_f64(out, rec.e[k]);
}

void complete_rotation(SampleRecord& rec, RotationMode mode) {
  if (mode == RotationMode::kQuaternion) {
    rec.q3d = rotation_to_euler(quaternion_to_rotation(rec.q4d));
  } else {
    rec.q4d = rotation_to_quaternion(
        euler_to_rotation(rec.q3d[0], rec.q3d[1], rec.q3d[2]));
  }
}

std::string format_value(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

std::vector<std::string> csv_header(RotationMode mode) {
  std::vector<std::string> cols = {"x0", "x1", "x2"};
  if (mode == RotationMode::kQuaternion) {
    cols.insert(cols.end(), {"qw", "qx", "qy", "qz"});
  } else {
    cols.insert(cols.end(), {"alpha", "beta", "gamma"});
  }
  for (int k = 0; k < 6; ++k) cols.push_back("lbar" + std::to_string(k));
  for (int k = 0; k < 144; ++k) cols.push_back("e" + std::to_string(k));
  return cols;
}

}  // namespace

Vec3 rotation_to_euler(const Rotation& r) {
  const Mat3& m = r.matrix();
  const double beta = std::asin(std::clamp(m(0, 2), -1.0, 1.0));
  const double alpha = std::atan2(-m(1, 2), m(2, 2));
  const double gamma = std::atan2(-m(0, 1), m(0, 0));
  return Vec3(alpha, beta, gamma);
}

Dataset generate(const PlatformConfig& cfg, const DatasetMeta& meta,
                 int jobs) {
  if (!(meta.l_min < meta.l_max) || !(meta.theta_min < meta.theta_max)) {
    throw std::invalid_argument("sampling bounds must satisfy min < max");
  }
  validate_config(cfg);

  Dataset ds;
  ds.meta = meta;
  ds.meta.config_hash = config_hash(cfg);
  ds.records.resize(meta.count);

  unsigned workers = jobs > 0 ? static_cast<unsigned>(jobs)
                              : std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  if (meta.count < 256) workers = 1;

  auto fill_range = [&](std::uint64_t begin, std::uint64_t end) {
    for (std::uint64_t i = begin; i < end; ++i) {
      ds.records[i] = make_record(cfg, ds.meta, i);
    }
  };

  if (workers == 1) {
    fill_range(0, meta.count);
  } else {
    std::vector<std::thread> pool;
    const std::uint64_t chunk = (meta.count + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::uint64_t begin = w * chunk;
      const std::uint64_t end = std::min<std::uint64_t>(begin + chunk, meta.count);
      if (begin < end) pool.emplace_back(fill_range, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::vector<unsigned char> out;
  out.reserve(73 + ds.records.size() * record_value_count(ds.meta.rotation_mode) * 8);
  for (char c : kMagic) out.push_back(static_cast<unsigned char>(c));
  binio::put_u32(out, kVersion);
  binio::put_u64(out, ds.records.size());
  binio::put_f64(out, ds.meta.l_min);
  binio::put_f64(out, ds.meta.l_max);
  binio::put_f64(out, ds.meta.theta_min);
  binio::put_f64(out, ds.meta.theta_max);
  binio::put_u64(out, ds.meta.config_hash);
  binio::put_u64(out, ds.meta.seed);
  binio::put_u8(out, static_cast<std::uint8_t>(ds.meta.rotation_mode));
  binio::put_f64(out, ds.meta.split_ratio);
  for (const SampleRecord& rec : ds.records) {
    append_record(out, rec, ds.meta.rotation_mode);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write dataset: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("short write to dataset: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  binio::Reader r(bytes.data(), bytes.size());

  if (!r.can_read(4)) throw TruncatedFileError(bytes.size(), 0);
  for (char c : kMagic) {
    if (r.u8() != static_cast<unsigned char>(c)) throw BadMagicError(0);
  }
  if (!r.can_read(4)) throw TruncatedFileError(bytes.size(), 0);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw VersionMismatchError(version, 4);
  if (!r.can_read(65)) throw TruncatedFileError(bytes.size(), 0);

  Dataset ds;
  ds.meta.count = r.u64();
  ds.meta.l_min = r.f64();
  ds.meta.l_max = r.f64();
  ds.meta.theta_min = r.f64();
  ds.meta.theta_max = r.f64();
  ds.meta.config_hash = r.u64();
  ds.meta.seed = r.u64();
  const std::uint8_t mode = r.u8();
  if (mode > 1) {
    throw DatasetIoError("unknown rotation mode at byte " +
                             std::to_string(r.offset() - 1),
                         r.offset() - 1);
  }
  ds.meta.rotation_mode = static_cast<RotationMode>(mode);
  ds.meta.split_ratio = r.f64();

  const std::size_t record_bytes = record_value_count(ds.meta.rotation_mode) * 8;
  ds.records.reserve(ds.meta.count);
  for (std::uint64_t i = 0; i < ds.meta.count; ++i) {
    if (!r.can_read(record_bytes)) throw TruncatedFileError(bytes.size(), i);
    SampleRecord rec;
    for (int k = 0; k < 3; ++k) rec.x[k] = r.f64();
    if (ds.meta.rotation_mode == RotationMode::kQuaternion) {
      for (int k = 0; k < 4; ++k) rec.q4d[k] = r.f64();
    } else {
      for (int k = 0; k < 3; ++k) rec.q3d[k] = r.f64();
    }
    for (int k = 0; k < 6; ++k) rec.lbar[k] = r.f64();
    for (int k = 0; k < 144; ++k) rec.e[k] = r.f64();
    complete_rotation(rec, ds.meta.rotation_mode);
    ds.records.push_back(rec);
  }
  return ds;
}

void export_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write csv: " + path);
  const auto cols = csv_header(ds.meta.rotation_mode);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    f << cols[i] << (i + 1 < cols.size() ? "," : "\n");
  }
  for (const SampleRecord& rec : ds.records) {
    std::vector<double> vals;
    vals.reserve(record_value_count(ds.meta.rotation_mode));
    for (int k = 0; k < 3; ++k) vals.push_back(rec.x[k]);
    if (ds.meta.rotation_mode == RotationMode::kQuaternion) {
      for (int k = 0; k < 4; ++k) vals.push_back(rec.q4d[k]);
    } else {
      for (int k = 0; k < 3; ++k) vals.push_back(rec.q3d[k]);
    }
    for (int k = 0; k < 6; ++k) vals.push_back(rec.lbar[k]);
    for (int k = 0; k < 144; ++k) vals.push_back(rec.e[k]);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      f << format_value(vals[i]) << (i + 1 < vals.size() ? "," : "\n");
    }
  }
}

std::vector<SampleRecord> import_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open csv: " + path);
  std::string line;
  if (!std::getline(f, line)) {
    throw std::runtime_error("csv file has no header row: " + path);
  }
  const bool quaternion = line.find("qw") != std::string::npos;
  const RotationMode mode =
      quaternion ? RotationMode::kQuaternion : RotationMode::kEuler;
  const std::size_t expected = record_value_count(mode);

  std::vector<SampleRecord> records;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> vals;
    vals.reserve(expected);
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      vals.push_back(std::strtod(cell.c_str(), nullptr));
    }
    if (vals.size() != expected) {
      throw std::runtime_error("csv line " + std::to_string(line_no) +
                               " has " + std::to_string(vals.size()) +
                               " values, expected " + std::to_string(expected));
    }
    SampleRecord rec;
    std::size_t p = 0;
    for (int k = 0; k < 3; ++k) rec.x[k] = vals[p++];
    if (quaternion) {
      for (int k = 0; k < 4; ++k) rec.q4d[k] = vals[p++];
    } else {
      for (int k = 0; k < 3; ++k) rec.q3d[k] = vals[p++];
    }
    for (int k = 0; k < 6; ++k) rec.lbar[k] = vals[p++];
    for (int k = 0; k < 144; ++k) rec.e[k] = vals[p++];
    complete_rotation(rec, mode);
    records.push_back(rec);
  }
  return records;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio,
                                  std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split ratio must lie in (0, 1)");
  }
  const std::size_t w = ds.records.size();
  std::vector<std::size_t> order(w);
  for (std::size_t i = 0; i < w; ++i) order[i] = i;

  Philox rng(seed, kSplitStream);
  for (std::size_t i = w; i > 1; --i) {  // Fisher-Yates
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(order[i - 1], order[j]);
  }

  const auto train_count =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(w)));
  Dataset train, test;
  train.meta = ds.meta;
  test.meta = ds.meta;
  train.records.reserve(train_count);
  test.records.reserve(w - train_count);
  for (std::size_t i = 0; i < w; ++i) {
    (i < train_count ? train : test).records.push_back(ds.records[order[i]]);
  }
  train.meta.count = train.records.size();
  test.meta.count = test.records.size();
  return {std::move(train), std::move(test)};
}

}  // namespace stewart
