#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "edgescore/errors.hpp"

namespace testutil {

template <typename F>
std::optional<edgescore::ErrorCode> thrown_code(F&& fn) {
    try {
        fn();
    } catch (const edgescore::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

// Scratch file under the system temp dir, removed on scope exit.
class TempFile {
public:
    explicit TempFile(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / name) {}
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }

    void write(const std::string& content) const {
        std::ofstream out(path_, std::ios::binary);
        out << content;
    }

    std::string read() const {
        std::ifstream in(path_, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

private:
    std::filesystem::path path_;
};

} // namespace testutil
