#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "penfsi/shapes.hpp"
#include "penfsi/state.hpp"

namespace penfsi {

class SnapshotError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class SnapshotVersionError : public SnapshotError {
public:
    using SnapshotError::SnapshotError;
};
/// Checksum mismatch, including a file cut short.
class SnapshotChecksumError : public SnapshotError {
public:
    using SnapshotError::SnapshotError;
};

inline constexpr std::uint32_t kSnapshotVersion = 1;

/// State plus the run context needed to resume it.
struct Snapshot {
    FluidState state;
    std::string config_json;            // may be empty
    std::map<int, Mat3> orientation;    // per body id
};

/// File layout: 64-byte header (magic "PENFSNAP", u32 version, u32 byte-order
/// tag, u64 metadata length, u64 payload length, zero padding), JSON
/// metadata, the fields as little-endian doubles in the order listed in the
/// metadata, then a little-endian CRC-32 of everything before it.
std::vector<unsigned char> encode_snapshot(const Snapshot& snap);
Snapshot decode_snapshot(const std::vector<unsigned char>& bytes);

void write_snapshot(const std::string& path, const Snapshot& snap);
Snapshot read_snapshot(const std::string& path);
/// Metadata block only (checksum verified).
std::string snapshot_metadata(const std::string& path);

/// CRC-32 of a whole file.
std::uint32_t file_crc32(const std::string& path);

}  // namespace penfsi
