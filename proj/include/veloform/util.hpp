#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace veloform {

// Worker count used by parallel_for. Defaults to the hardware concurrency,
// capped by the VELOFORM_THREADS environment variable when set.
int thread_count();

// Chunked parallel loop over [0, n). Chunk boundaries are fixed (independent
// of the worker count), so per-chunk results can be reduced in chunk order to
// keep outputs bitwise reproducible.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

// FNV-1a 64-bit digest, hex-encoded. Used for input/output fingerprints in
// run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::string fnv1a64_hex(const void* data, std::size_t size);
std::string file_digest(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& contents);

inline constexpr const char* kToolVersion = "veloform 0.1.0";

}  // namespace veloform
