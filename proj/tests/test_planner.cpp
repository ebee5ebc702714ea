// Copyright (C) 2026 The loftq-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "loftq/error.hpp"
#include "loftq/planner.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace loftq;

namespace {

ModelManifest decoder_manifest(int layers, std::size_t hidden = 64, std::size_t ffn = 128) {
    ModelManifest m;
    m.tensors.push_back(make_entry("model.embed_tokens.weight", 100, hidden));
    for (int l = 0; l < layers; ++l) {
        const std::string p = "model.layers." + std::to_string(l) + ".";
        for (const char* n : {"q_proj", "k_proj", "v_proj", "o_proj"})
            m.tensors.push_back(make_entry(p + "self_attn." + n + ".weight", hidden, hidden));
        m.tensors.push_back(make_entry(p + "mlp.up_proj.weight", ffn, hidden));
        m.tensors.push_back(make_entry(p + "mlp.down_proj.weight", hidden, ffn));
        m.tensors.push_back(make_entry(p + "input_layernorm.weight", 1, hidden));
    }
    m.tensors.push_back(make_entry("lm_head.weight", 100, hidden));
    return m;
}

std::set<int> layers_at(const ModelManifest& m, const QuantPlan& plan, int bits) {
    std::set<int> out;
    for (const auto& e : m.tensors)
        if (plan.at(e.name).process && plan.at(e.name).bits == bits && e.layer_index) out.insert(*e.layer_index);
    return out;
}

}  // namespace

TEST(LayerIndex, CommonNamingSchemes) {
    EXPECT_EQ(extract_layer_index("model.layers.12.self_attn.q_proj.weight"), 12);
    EXPECT_EQ(extract_layer_index("encoder.layer.3.attention.self.query.weight"), 3);
    EXPECT_EQ(extract_layer_index("transformer.h.7.attn.c_attn.weight"), 7);
    EXPECT_EQ(extract_layer_index("blocks.0.ffn.weight"), 0);
    EXPECT_EQ(extract_layer_index("model.embed_tokens.weight"), std::nullopt);
    EXPECT_EQ(extract_layer_index("player.5.weight"), std::nullopt);
    EXPECT_EQ(extract_layer_index("stage_4.conv.weight", R"(stage_(\d+))"), 4);
}

TEST(Roles, InferredFromNames) {
    EXPECT_EQ(infer_role("model.layers.0.self_attn.q_proj.weight"), TensorRole::Attention);
    EXPECT_EQ(infer_role("encoder.layer.1.attention.output.dense.weight"), TensorRole::Attention);
    EXPECT_EQ(infer_role("model.layers.0.mlp.gate_proj.weight"), TensorRole::FeedForward);
    EXPECT_EQ(infer_role("encoder.layer.1.intermediate.dense.weight"), TensorRole::FeedForward);
    EXPECT_EQ(infer_role("encoder.layer.1.output.dense.weight"), TensorRole::FeedForward);
    EXPECT_EQ(infer_role("model.embed_tokens.weight"), TensorRole::Embedding);
    EXPECT_EQ(infer_role("model.layers.0.input_layernorm.weight"), TensorRole::Other);
    EXPECT_EQ(infer_role("model.layers.0.self_attn.q_proj.bias"), TensorRole::Other);
}

TEST(Manifest, Validation) {
    ModelManifest m = decoder_manifest(2);
    EXPECT_NO_THROW(m.validate());
    EXPECT_EQ(m.total_parameters(), 100u * 64 * 2 + 2 * (4 * 64 * 64 + 2 * 128 * 64 + 64));
    m.tensors.push_back(m.tensors[3]);
    EXPECT_THROW(m.validate(), InvalidArgument);
    ModelManifest z;
    z.tensors.push_back(make_entry("x", 0, 3));
    EXPECT_THROW(z.validate(), InvalidArgument);
}

TEST(BuildPlan, DefaultSelectionIsAttentionAndFeedForward) {
    const auto m = decoder_manifest(2);
    const auto plan = build_plan(m, PlanRequest{});
    EXPECT_EQ(plan.processed_count(), 12u);
    EXPECT_FALSE(plan.at("model.embed_tokens.weight").process);
    EXPECT_FALSE(plan.at("lm_head.weight").process);
    EXPECT_FALSE(plan.at("model.layers.0.input_layernorm.weight").process);
    EXPECT_EQ(plan.at("model.layers.0.input_layernorm.weight"), TensorPlan{});
    const auto& q = plan.at("model.layers.1.self_attn.q_proj.weight");
    EXPECT_TRUE(q.process);
    EXPECT_EQ(q.bits, 4);
    EXPECT_EQ(q.rank, 16u);
    EXPECT_EQ(q.codebook, CodebookKind::NormalFloat);
    EXPECT_EQ(q.block_size, 64u);
    EXPECT_TRUE(plan.warnings.empty());
}

TEST(BuildPlan, MixedPrecisionCutoff) {
    const auto m = decoder_manifest(8);
    PlanRequest req;
    req.mixed = MixedPrecision{4, 4, 2};
    const auto plan = build_plan(m, req);
    EXPECT_EQ(plan.at("model.layers.3.self_attn.q_proj.weight").bits, 4);
    EXPECT_EQ(plan.at("model.layers.4.self_attn.q_proj.weight").bits, 2);
    EXPECT_EQ(plan.at("model.layers.3.mlp.down_proj.weight").bits, 4);
    EXPECT_EQ(plan.at("model.layers.7.mlp.down_proj.weight").bits, 2);
}

TEST(BuildPlan, ZeroCutoffIsAllLow) {
    const auto m = decoder_manifest(4);
    PlanRequest req;
    req.mixed = MixedPrecision{0, 4, 2};
    const auto plan = build_plan(m, req);
    EXPECT_TRUE(layers_at(m, plan, 4).empty());
    EXPECT_EQ(layers_at(m, plan, 2).size(), 4u);
}

TEST(BuildPlan, ThirtyTwoLayerPartition) {
    const auto m = decoder_manifest(32);
    for (int k : {4, 8, 16}) {
        PlanRequest req;
        req.mixed = MixedPrecision{k, 4, 2};
        const auto plan = build_plan(m, req);
        const auto high = layers_at(m, plan, 4);
        const auto low = layers_at(m, plan, 2);
        EXPECT_EQ(high.size(), static_cast<std::size_t>(k));
        EXPECT_EQ(low.size(), static_cast<std::size_t>(32 - k));
        for (int l : high) EXPECT_LT(l, k);
        for (int l : low) EXPECT_GE(l, k);
        // Every processed parameter is at 4 or 2 bits; average = 2 + 2k/32.
        EXPECT_DOUBLE_EQ(compression_ratio(m, plan).average_bits, 2.0 + 2.0 * k / 32.0);
    }
}

TEST(BuildPlan, SelectionPatternsAndWarnings) {
    const auto m = decoder_manifest(2);
    PlanRequest req;
    req.selection = {"*.q_proj.weight", "*embed_tokens*", "nothing.here"};
    const auto plan = build_plan(m, req);
    EXPECT_EQ(plan.processed_count(), 3u);
    EXPECT_TRUE(plan.at("model.embed_tokens.weight").process);
    ASSERT_EQ(plan.warnings.size(), 1u);
    EXPECT_NE(plan.warnings[0].find("nothing.here"), std::string::npos);
}

TEST(BuildPlan, MissingLayerIndexUsesLowBitsWithWarning) {
    const auto m = decoder_manifest(2);
    PlanRequest req;
    req.selection = {"lm_head.weight"};
    req.mixed = MixedPrecision{8, 4, 2};
    const auto plan = build_plan(m, req);
    EXPECT_EQ(plan.at("lm_head.weight").bits, 2);
    EXPECT_EQ(plan.warnings.size(), 1u);
}

TEST(BuildPlan, RankLargerThanTensorNamesTensor) {
    const auto m = decoder_manifest(1, 16, 8);
    PlanRequest req;
    req.defaults.rank = 12;
    try {
        build_plan(m, req);
        FAIL() << "expected InvalidPlan";
    } catch (const InvalidPlan& e) {
        EXPECT_NE(std::string(e.what()).find("mlp.up_proj.weight"), std::string::npos) << e.what();
    }
    req.defaults.rank = 4;
    req.defaults.bits = 9;
    EXPECT_THROW(build_plan(m, req), InvalidPlan);
}

TEST(BuildPlan, OverridesApplyAfterMixed) {
    const auto m = decoder_manifest(4);
    PlanRequest req;
    req.mixed = MixedPrecision{2, 4, 2};
    req.overrides["model.layers.3.self_attn.v_proj.weight"].bits = 8;
    req.overrides["model.layers.0.self_attn.q_proj.weight"].process = false;
    req.overrides["model.layers.1.mlp.up_proj.weight"].codebook = CodebookKind::Uniform;
    req.overrides["model.layers.1.mlp.up_proj.weight"].rank = 4;
    req.overrides["ghost"].bits = 3;
    const auto plan = build_plan(m, req);
    EXPECT_EQ(plan.at("model.layers.3.self_attn.v_proj.weight").bits, 8);
    EXPECT_FALSE(plan.at("model.layers.0.self_attn.q_proj.weight").process);
    EXPECT_EQ(plan.at("model.layers.1.mlp.up_proj.weight").codebook, CodebookKind::Uniform);
    EXPECT_EQ(plan.at("model.layers.1.mlp.up_proj.weight").rank, 4u);
    EXPECT_EQ(plan.warnings.size(), 1u);
}

TEST(BuildPlan, Deterministic) {
    const auto m = decoder_manifest(6);
    PlanRequest req;
    req.mixed = MixedPrecision{3, 4, 2};
    EXPECT_EQ(build_plan(m, req), build_plan(m, req));
}

TEST(ParseMixed, Forms) {
    EXPECT_EQ(parse_mixed("8:4:2"), (MixedPrecision{8, 4, 2}));
    EXPECT_THROW(parse_mixed("8:4"), InvalidArgument);
    EXPECT_THROW(parse_mixed("a:4:2"), InvalidArgument);
    EXPECT_THROW(parse_mixed("-1:4:2"), InvalidArgument);
}

TEST(Compression, SingleTensorHandComputed) {
    ModelManifest m;
    m.tensors.push_back(make_entry("layers.0.attn.weight", 64, 64));
    QuantPlan plan;
    plan.tensors["layers.0.attn.weight"] = TensorPlan{true, 2, 0, CodebookKind::NormalFloat, 64};
    const auto r = compression_ratio(m, plan);
    // 4096 2-bit codes + 64 32-bit absmax scales, over 4096 16-bit values
    const double codebook_bits = 8 + 8 + 64 + 64 * 4;
    EXPECT_DOUBLE_EQ(r.original_bits_total, 65536.0);
    EXPECT_DOUBLE_EQ(r.compressed_bits_total, 8192.0 + 2048.0 + codebook_bits);
    EXPECT_NEAR(r.ratio_percent - 100.0 * codebook_bits / 65536.0, 15.625, 1e-12);
    EXPECT_EQ(r.trainable_ratio_percent, 0.0);
}

TEST(Compression, UniformChargesTwoBounds) {
    EXPECT_DOUBLE_EQ(quantized_tensor_bits(64, 64, 2, CodebookKind::Uniform, 64),
                     8192.0 + 64 * 64.0 + 8 + 8 + 64 + 64 * 4);
    EXPECT_DOUBLE_EQ(quantized_tensor_bits(10, 10, 3, CodebookKind::NormalFloat, 64),
                     300.0 + 2 * 32.0 + 8 + 8 + 64 + 64 * 8);
}

TEST(Compression, NothingProcessedIsHundredPercent) {
    const auto m = decoder_manifest(2);
    PlanRequest req;
    req.selection = {"nothing"};
    const auto r = compression_ratio(m, build_plan(m, req));
    EXPECT_DOUBLE_EQ(r.ratio_percent, 100.0);
    EXPECT_EQ(r.trainable_ratio_percent, 0.0);
    EXPECT_EQ(r.average_bits, 0.0);
}

TEST(Compression, TrainableRatioMatchesParameterCount) {
    const auto m = decoder_manifest(4);
    const auto r = compression_ratio(m, build_plan(m, PlanRequest{}));
    // per layer: 4 * 16*(64+64) + 2 * 16*(128+64)
    const double adapters = 4.0 * (4 * 16 * 128 + 2 * 16 * 192);
    double total = 2 * 100 * 64;
    for (int l = 0; l < 4; ++l) total += 4 * 64 * 64 + 2 * 128 * 64 + 64;
    EXPECT_NEAR(r.trainable_ratio_percent, 100.0 * adapters / total, 1e-12);
}

TEST(Compression, RatioWithinBounds) {
    const auto m = decoder_manifest(4);
    for (int bits = 1; bits <= 8; ++bits) {
        PlanRequest req;
        req.defaults.bits = bits;
        for (auto kind : {CodebookKind::Uniform, CodebookKind::NormalFloat}) {
            req.defaults.codebook = kind;
            const auto r = compression_ratio(m, build_plan(m, req));
            EXPECT_GT(r.ratio_percent, 0.0);
            EXPECT_LE(r.ratio_percent, 100.0);
        }
    }
}

TEST(PlanFile, RoundTrip) {
    PlanRequest req;
    req.selection = {"*.q_proj.weight", "*.v_proj.weight"};
    req.defaults.bits = 2;
    req.defaults.rank = 8;
    req.defaults.codebook = CodebookKind::Uniform;
    req.defaults.block_size = 128;
    req.defaults.steps = 3;
    req.defaults.variant = Variant::SwappedOrder;
    req.defaults.quantile_clip = 0.0123456789012345;
    req.mixed = MixedPrecision{4, 4, 2};
    req.overrides["model.layers.0.self_attn.q_proj.weight"] = {false, 8, 4, CodebookKind::NormalFloatZero, 32};
    req.overrides["model.layers.1.self_attn.q_proj.weight"].bits = 3;
    const auto text = format_plan_request(req);
    EXPECT_EQ(parse_plan_request(text), req);
    EXPECT_EQ(format_plan_request(parse_plan_request(text)), text);
}

TEST(PlanFile, CommentsBlankLinesAndErrors) {
    const auto req = parse_plan_request("# c\n\n  bits = 3  \nrank=4\n[tensor a.b]\nbits = 2\n");
    EXPECT_EQ(req.defaults.bits, 3);
    EXPECT_EQ(req.defaults.rank, 4u);
    ASSERT_EQ(req.overrides.count("a.b"), 1u);
    EXPECT_EQ(req.overrides.at("a.b").bits, 2);
    EXPECT_THROW(parse_plan_request("bits 3\n"), InvalidArgument);
    EXPECT_THROW(parse_plan_request("colour = red\n"), InvalidArgument);
    EXPECT_THROW(parse_plan_request("bits = four\n"), InvalidArgument);
    EXPECT_THROW(parse_plan_request("[layer x]\n"), InvalidArgument);
    EXPECT_THROW(parse_plan_request("[tensor x]\nsteps = 3\n"), InvalidArgument);
}
