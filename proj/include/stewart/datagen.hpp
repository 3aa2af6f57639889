#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stewart/platform.hpp"

namespace stewart {

/// Base of the dataset file errors; `offset` is the byte position at
/// which the problem was detected.
class DatasetIoError : public std::runtime_error {
 public:
  DatasetIoError(const std::string& what, std::size_t offset)
      : std::runtime_error(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class BadMagicError : public DatasetIoError {
 public:
  explicit BadMagicError(std::size_t offset)
      : DatasetIoError("dataset file does not start with GSFK magic (byte " +
                           std::to_string(offset) + ")",
                       offset) {}
};

class VersionMismatchError : public DatasetIoError {
 public:
  VersionMismatchError(std::uint32_t found, std::size_t offset)
      : DatasetIoError("unsupported dataset version " +
                           std::to_string(found) + " (byte " +
                           std::to_string(offset) + ")",
                       offset) {}
};

class TruncatedFileError : public DatasetIoError {
 public:
  TruncatedFileError(std::size_t offset, std::size_t record_index)
      : DatasetIoError("dataset file truncated at byte " +
                           std::to_string(offset) + " (record " +
                           std::to_string(record_index) + ")",
                       offset),
        record_index_(record_index) {}
  std::size_t record_index() const { return record_index_; }

 private:
  std::size_t record_index_;
};

enum class RotationMode : std::uint8_t { kQuaternion = 0, kEuler = 1 };

/// One generated pose sample. Both rotation parameterizations are kept
/// in memory; the file format stores the one selected by the dataset's
/// rotation mode and the loader rederives the other.
struct SampleRecord {
  Vec3 x = Vec3::Zero();                  // translation (mm)
  Vec4 q4d = Vec4(1, 0, 0, 0);            // unit quaternion (w, x, y, z)
  Vec3 q3d = Vec3::Zero();                // Euler angles (rad), X-Y-Z order
  Vec6 lbar = Vec6::Zero();               // actuator lengths (mm)
  Vec144 e = Vec144::Zero();              // vectorized distance matrix (mm)

  Pose pose() const { return Pose{quaternion_to_rotation(q4d), x}; }
};

struct DatasetMeta {
  std::uint64_t count = 0;              // W
  double l_min = -50.0, l_max = 50.0;   // translation bounds (mm)
  double theta_min = -EIGEN_PI / 6.0;   // rotation bounds (rad)
  double theta_max = EIGEN_PI / 6.0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  RotationMode rotation_mode = RotationMode::kQuaternion;
  double split_ratio = 0.8;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<SampleRecord> records;
};

/// Samples meta.count poses with per-component uniform translation and
/// Euler angles, and fills each record through the inverse kinematics
/// and the distance-matrix pipeline. Deterministic in (meta.seed, cfg):
/// record i consumes draws 0..5 of Philox stream (seed, i) in the order
/// x, y, z, alpha, beta, gamma, so any sample range can be produced
/// independently; jobs = 0 uses all hardware threads.
Dataset generate(const PlatformConfig& cfg, const DatasetMeta& meta,
                 int jobs = 0);

/// Binary dataset container (magic GSFK; layout in docs/formats.md).
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// CSV mirror of the binary column order, one header row, 17 significant
/// digits per value (parses back to the identical double).
void export_csv(const Dataset& ds, const std::string& path);
std::vector<SampleRecord> import_csv(const std::string& path);

/// Seeded shuffle-then-partition; the first round(ratio * W) shuffled
/// records form the training half. Disjoint and exhaustive.
std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio,
                                  std::uint64_t seed);

/// X-Y-Z Euler extraction, the inverse of euler_to_rotation for
/// |beta| < pi/2. Used to rederive q3d when loading quaternion-mode
/// files.
Vec3 rotation_to_euler(const Rotation& r);

}  // namespace stewart
