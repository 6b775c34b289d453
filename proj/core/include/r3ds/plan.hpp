#pragma once
#include <string>
#include <vector>

#include "r3ds/config.hpp"
#include "r3ds/tensor.hpp"

// Analytic parameter plan: the (name, shape) roster a model build would
// register, computed without allocating anything. Drives param counting at
// paper scale and the shape-schedule assertions.

namespace r3ds {

struct PlanEntry {
    std::string name;
    Shape shape;
    bool trainable = true;

    int64_t numel() const { return shape_numel(shape); }
};

std::vector<PlanEntry> encoder_param_plan(const EncoderConfig& cfg);
std::vector<PlanEntry> decoder_param_plan(const DecoderConfig& cfg, int64_t in_features);
std::vector<PlanEntry> model_param_plan(const EncoderConfig& ec, const DecoderConfig& dc);

// Group = name up to the second dot ("enc.stage2", "dec.up0", ...).
std::string param_group(const std::string& name);

struct GroupCount {
    std::string group;
    int64_t count = 0;
};

// Trainable counts per group, in first-appearance order, plus the total.
std::vector<GroupCount> count_by_group(const std::vector<PlanEntry>& plan);
int64_t count_total(const std::vector<PlanEntry>& plan);

// The decoder figure comparable to a parameter-size table row: the conv
// ladder (transposed convs + batch-norm affine) plus the head, excluding the
// encoder hand-off projection whose size is set by the encoder output.
int64_t decoder_cnn_param_count(const DecoderConfig& cfg);

struct StageShape {
    int side = 0;
    int channels = 0;
};

// Feature-map shape after each stage (including that stage's downsample).
std::vector<StageShape> encoder_schedule(const EncoderConfig& cfg);

// Volume sides through the decoder: {4, 8, 16, 32}.
std::vector<int> decoder_ladder(const DecoderConfig& cfg);

}  // namespace r3ds
