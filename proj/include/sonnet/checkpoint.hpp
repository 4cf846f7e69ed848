#pragma once

// Checkpoint container, little-endian throughout:
//
//   magic      8 bytes  "SONNETCK"
//   version    u32      kCheckpointVersion
//   header     u64 length + UTF-8 text, one "key=value" per line
//              (every hyperparameter and the RNG seed)
//   vocab      u64 count, then per word: u32 length + bytes, in id order
//   tensors    u64 count, then per tensor:
//                u32 name length + name, u32 rank (always 2),
//                u64 rows, u64 cols, rows*cols float64 values row-major
//
// Tensor names carry a section prefix: "lm/", "pm/", "rm/" or "shared/".

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonnet/params.hpp"

namespace sonnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NamedTensor {
    std::string name;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::vector<double> values;  // row-major
};

struct Checkpoint {
    std::map<std::string, std::string> header;
    std::vector<std::string> vocab;
    std::vector<NamedTensor> tensors;

    static Checkpoint from_parameters(const ParameterSet& params);
    // Replaces every parameter value with the stored tensor; shapes must match.
    void load_into(ParameterSet& params) const;
    // Adds every stored tensor to an empty registry.
    void populate(ParameterSet& params) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Plain-text rendering for debugging; values are printed with %.17g.
std::string dump_checkpoint_text(const Checkpoint& ckpt, bool with_values = true);

}  // namespace sonnet
