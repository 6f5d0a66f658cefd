#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ntkspec {

inline constexpr const char* kCodeVersion = "0.1.0";

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// CSV table with a '#'-prefixed provenance block.  Output is deterministic:
// same config and seed give byte-identical files.
class ResultTable {
  public:
    ResultTable(std::string name, std::vector<std::string> columns)
        : name_(std::move(name)), columns_(std::move(columns)) {}

    void set_provenance(const std::string& config_text, std::uint64_t seed) {
        config_hash_ = fnv1a(config_text);
        seed_ = seed;
    }

    void add_row(const std::vector<double>& row) {
        if (row.size() != columns_.size())
            throw std::invalid_argument("ResultTable: row width mismatch");
        rows_.push_back(row);
    }

    std::string to_string() const {
        std::ostringstream os;
        os << "# table: " << name_ << "\n";
        os << "# config_hash: " << std::hex << config_hash_ << std::dec << "\n";
        os << "# seed: " << seed_ << "\n";
        os << "# version: " << kCodeVersion << "\n";
        for (std::size_t c = 0; c < columns_.size(); ++c)
            os << columns_[c] << (c + 1 < columns_.size() ? "," : "\n");
        os << std::setprecision(17);
        for (const auto& row : rows_) {
            for (std::size_t c = 0; c < row.size(); ++c)
                os << row[c] << (c + 1 < row.size() ? "," : "\n");
        }
        return os.str();
    }

    void write(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        std::ofstream f(dir / (name_ + ".csv"), std::ios::binary);
        if (!f) throw std::runtime_error("ResultTable: cannot open output file");
        f << to_string();
    }

    const std::string& name() const { return name_; }
    const std::vector<std::vector<double>>& rows() const { return rows_; }

  private:
    std::string name_;
    std::vector<std::string> columns_;
    std::vector<std::vector<double>> rows_;
    std::uint64_t config_hash_ = 0;
    std::uint64_t seed_ = 0;
};

}  // namespace ntkspec
