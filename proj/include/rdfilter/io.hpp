#pragma once

// On-disk formats: flat binary float64 record files with JSON sidecar
// headers, CSV traces, PGM snapshots. All writes go through a temporary file
// renamed into place so readers never observe partial output.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>

#include <json.hpp>

namespace rdf {

// Sidecar header describing a record file: one record per sampled step, each
// record n_channels * n_sites little-endian doubles (species-major for
// states/estimates, site-major spectra for observations).
struct TrajectoryMeta {
    std::string kind; // "states" | "observations" | "estimates"
    int side = 0;     // lattice side (0 when not lattice-shaped)
    int n_sites = 0;
    int n_channels = 0; // species or wavelengths per site
    int n_records = 0;
    double dt = 0.0;     // time between records
    double time0 = 0.0;  // time of the first record
    int stride = 1;      // dynamics steps between records
    std::uint64_t seed = 0;
    nlohmann::json params; // echoed scalar parameters

    std::size_t record_len() const {
        return static_cast<std::size_t>(n_sites) * n_channels;
    }
};

std::filesystem::path meta_path_for(const std::filesystem::path& bin_path);
void write_meta(const std::filesystem::path& bin_path, const TrajectoryMeta& meta);
TrajectoryMeta read_meta(const std::filesystem::path& bin_path);

// Streams fixed-length records to <path>.tmp; finalize() renames into place.
// Destruction without finalize discards the temporary.
class RecordWriter {
public:
    RecordWriter(std::filesystem::path path, std::size_t record_len);
    ~RecordWriter();
    RecordWriter(const RecordWriter&) = delete;
    RecordWriter& operator=(const RecordWriter&) = delete;

    void append(std::span<const double> record);
    int n_records() const noexcept { return n_records_; }
    void finalize();

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    std::size_t record_len_;
    int n_records_ = 0;
    bool finalized_ = false;
    std::ofstream out_;
};

// Random-access reader over a finalized record file; validates that the file
// size is an exact multiple of the record length.
class RecordReader {
public:
    RecordReader(std::filesystem::path path, std::size_t record_len);

    int n_records() const noexcept { return n_records_; }
    void read(int index, std::span<double> record);

private:
    std::filesystem::path path_;
    std::size_t record_len_;
    int n_records_;
    std::ifstream in_;
};

// 8-bit binary PGM, field values scaled linearly from [0, max(field)] to
// [0, 255] (an all-zero image when the field is identically zero).
void write_pgm(const std::filesystem::path& path, int side, std::span<const double> field);

// Whole-file text helpers with atomic replacement.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

// Streaming text writer with the same write-then-rename discipline.
class AtomicTextFile {
public:
    explicit AtomicTextFile(std::filesystem::path path);
    ~AtomicTextFile();
    AtomicTextFile(const AtomicTextFile&) = delete;
    AtomicTextFile& operator=(const AtomicTextFile&) = delete;

    std::ofstream& stream() noexcept { return out_; }
    void finalize();

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    bool finalized_ = false;
    std::ofstream out_;
};

} // namespace rdf
