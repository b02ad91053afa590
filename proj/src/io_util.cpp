// SPDX-License-Identifier: Apache-2.0
#include "ttl/io_util.hpp"

#include <fstream>

namespace ttl {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    std::streamoff n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> buf(static_cast<size_t>(n));
    if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) throw IoError("cannot read file: " + path);
    return buf;
}

uint64_t file_fingerprint(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return fnv1a64(bytes.data(), bytes.size());
}

} // namespace ttl
