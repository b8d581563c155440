#include "rdfilter/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <system_error>

#include "rdfilter/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "record files are little-endian; this platform is not");

namespace rdf {

namespace fs = std::filesystem;

fs::path meta_path_for(const fs::path& bin_path) {
    fs::path p = bin_path;
    p += ".meta";
    return p;
}

void write_meta(const fs::path& bin_path, const TrajectoryMeta& meta) {
    nlohmann::json j{
        {"kind", meta.kind},
        {"side", meta.side},
        {"n_sites", meta.n_sites},
        {"n_channels", meta.n_channels},
        {"n_records", meta.n_records},
        {"dt", meta.dt},
        {"time0", meta.time0},
        {"stride", meta.stride},
        {"seed", meta.seed},
        {"params", meta.params},
    };
    atomic_write_text(meta_path_for(bin_path), j.dump(2) + "\n");
}

TrajectoryMeta read_meta(const fs::path& bin_path) {
    const fs::path mp = meta_path_for(bin_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(mp));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("malformed header '" + mp.string() + "': " + e.what());
    }
    TrajectoryMeta m;
    try {
        m.kind = j.at("kind").get<std::string>();
        m.side = j.at("side").get<int>();
        m.n_sites = j.at("n_sites").get<int>();
        m.n_channels = j.at("n_channels").get<int>();
        m.n_records = j.at("n_records").get<int>();
        m.dt = j.at("dt").get<double>();
        m.time0 = j.at("time0").get<double>();
        m.stride = j.at("stride").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.params = j.value("params", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("header '" + mp.string() + "' is missing fields: " + e.what());
    }
    if (m.n_sites < 1 || m.n_channels < 1 || m.n_records < 0)
        throw UsageError("header '" + mp.string() + "' has invalid dimensions");
    return m;
}

RecordWriter::RecordWriter(fs::path path, std::size_t record_len)
    : path_(std::move(path)), record_len_(record_len) {
    if (record_len_ == 0) throw UsageError("record writer: record length must be > 0");
    tmp_ = path_;
    tmp_ += ".tmp";
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw UsageError("cannot open '" + tmp_.string() + "' for writing");
}

RecordWriter::~RecordWriter() {
    if (!finalized_) {
        out_.close();
        std::error_code ec;
        fs::remove(tmp_, ec);
    }
}

void RecordWriter::append(std::span<const double> record) {
    if (finalized_) throw UsageError("record writer: append after finalize");
    if (record.size() != record_len_)
        throw UsageError("record writer: record has " + std::to_string(record.size()) +
                         " values, expected " + std::to_string(record_len_));
    out_.write(reinterpret_cast<const char*>(record.data()),
               static_cast<std::streamsize>(record.size() * sizeof(double)));
    if (!out_) throw UsageError("write failed on '" + tmp_.string() + "'");
    ++n_records_;
}

void RecordWriter::finalize() {
    if (finalized_) return;
    out_.flush();
    if (!out_) throw UsageError("flush failed on '" + tmp_.string() + "'");
    out_.close();
    fs::rename(tmp_, path_);
    finalized_ = true;
}

RecordReader::RecordReader(fs::path path, std::size_t record_len)
    : path_(std::move(path)), record_len_(record_len) {
    if (record_len_ == 0) throw UsageError("record reader: record length must be > 0");
    std::error_code ec;
    const auto size = fs::file_size(path_, ec);
    if (ec) throw UsageError("cannot stat '" + path_.string() + "': " + ec.message());
    const std::size_t bytes_per_record = record_len_ * sizeof(double);
    if (size % bytes_per_record != 0)
        throw UsageError("'" + path_.string() + "' (" + std::to_string(size) +
                         " bytes) is not a whole number of " +
                         std::to_string(bytes_per_record) + "-byte records");
    n_records_ = static_cast<int>(size / bytes_per_record);
    in_.open(path_, std::ios::binary);
    if (!in_) throw UsageError("cannot open '" + path_.string() + "'");
}

void RecordReader::read(int index, std::span<double> record) {
    if (index < 0 || index >= n_records_)
        throw UsageError("record index " + std::to_string(index) + " outside [0, " +
                         std::to_string(n_records_) + ")");
    if (record.size() != record_len_)
        throw UsageError("record reader: buffer has " + std::to_string(record.size()) +
                         " values, expected " + std::to_string(record_len_));
    in_.seekg(static_cast<std::streamoff>(index) *
              static_cast<std::streamoff>(record_len_ * sizeof(double)));
    in_.read(reinterpret_cast<char*>(record.data()),
             static_cast<std::streamsize>(record.size() * sizeof(double)));
    if (!in_) throw UsageError("read failed on '" + path_.string() + "'");
}

void write_pgm(const fs::path& path, int side, std::span<const double> field) {
    if (side < 1 || field.size() != static_cast<std::size_t>(side) * side)
        throw UsageError("pgm: field length does not match a " + std::to_string(side) + "x" +
                         std::to_string(side) + " image");
    double maxval = 0.0;
    for (double v : field) {
        if (!std::isfinite(v)) throw NumericalError("pgm: non-finite field value");
        maxval = std::max(maxval, v);
    }
    std::string body = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
    body.reserve(body.size() + field.size());
    const double scale = maxval > 0.0 ? 255.0 / maxval : 0.0;
    for (double v : field) {
        int p = static_cast<int>(std::lround(std::max(v, 0.0) * scale));
        body.push_back(static_cast<char>(static_cast<unsigned char>(std::min(p, 255))));
    }
    atomic_write_text(path, body);
}

void atomic_write_text(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UsageError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw UsageError("write failed on '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open '" + path.string() + "'");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw UsageError("read failed on '" + path.string() + "'");
    return content;
}

AtomicTextFile::AtomicTextFile(fs::path path) : path_(std::move(path)) {
    tmp_ = path_;
    tmp_ += ".tmp";
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw UsageError("cannot open '" + tmp_.string() + "' for writing");
}

AtomicTextFile::~AtomicTextFile() {
    if (!finalized_) {
        out_.close();
        std::error_code ec;
        fs::remove(tmp_, ec);
    }
}

void AtomicTextFile::finalize() {
    if (finalized_) return;
    out_.flush();
    if (!out_) throw UsageError("flush failed on '" + tmp_.string() + "'");
    out_.close();
    fs::rename(tmp_, path_);
    finalized_ = true;
}

} // namespace rdf
