#pragma once

#include <string>
#include <vector>

#include "latalign/guidance.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

/// One paired generation: the vanilla and guided run share the seed, the
/// condition, and the caption.
struct RunRecord {
    std::size_t run_index = 0;
    std::uint64_t run_seed = 0;
    std::size_t true_class = 0;
    std::ptrdiff_t caption_class = -1;  // -1: no prompt passed
    Tensor condition;                   // conditioning sample (empty for joint)
    GenerationResult vanilla;
    GenerationResult guided;
};

struct RunFile {
    std::string task;
    std::string config_echo;
    std::vector<RunRecord> runs;
};

/// SHRR results file. Everything deterministic lives in the payload region;
/// wall-clock durations go to a footer after it, so byte-comparing payloads
/// checks reproducibility. Written atomically (temp then rename).
void save_results(const RunFile& file, const std::string& path);
RunFile load_results(const std::string& path);

/// The deterministic payload region of a results file on disk.
std::vector<unsigned char> results_payload_bytes(const std::string& path);

}  // namespace latalign
