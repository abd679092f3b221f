// SPDX-License-Identifier: Apache-2.0
//
// Regenerates the committed golden files. Run from the repository root:
//   build/tests/regen-goldens
// Rewrites data/mathknowct_synth.jsonl, tests/fixtures/golden_run.jsonl and
// tests/fixtures/toy_embeddings.jsonl. Review diffs before committing.

#include "knowtag/pipeline.hpp"

#include "support/synth_corpus.hpp"

#include <cstdio>
#include <fstream>

using namespace knowtag;

namespace {

RunConfig golden_config() {
    RunConfig config;
    config.variant = PromptVariant::V2;
    config.rendering = KnowledgeRendering::Interpreted;
    config.strategy = std::nullopt;
    config.reflection = true;
    config.backend.kind = BackendKind::Mock;
    config.backend.script_path = "tests/fixtures/pipeline_script.jsonl";
    config.model = "mock-chat";
    config.seed = 7;
    config.concurrency = 1;
    return config;
}

void write_toy_embeddings() {
    // Two planar blobs: the addition-flavoured stems near the origin, the
    // rest pushed out along x.
    std::ofstream out("tests/fixtures/toy_embeddings.jsonl");
    const char* lines[] = {
        R"({"question_id":"q01","vector":[0.0,0.0]})",
        R"({"question_id":"q02","vector":[0.2,0.1]})",
        R"({"question_id":"q03","vector":[9.8,0.1]})",
        R"({"question_id":"q04","vector":[10.0,0.0]})",
        R"({"question_id":"q05","vector":[0.1,0.3]})",
        R"({"question_id":"q06","vector":[0.0,0.2]})",
        R"({"question_id":"q07","vector":[10.2,0.2]})",
        R"({"question_id":"q08","vector":[0.3,0.0]})",
        R"({"question_id":"q09","vector":[9.9,0.4]})",
        R"({"question_id":"q10","vector":[10.1,0.3]})",
        R"({"question_id":"q11","vector":[0.2,0.4]})",
        R"({"question_id":"q12","vector":[10.0,0.5]})",
    };
    for (const auto* line : lines) out << line << '\n';
}

} // namespace

int main() {
    const auto synth = knowtag::testing::make_synth_corpus();
    save_corpus(synth, "data/mathknowct_synth.jsonl");
    std::printf("wrote data/mathknowct_synth.jsonl (%zu pairs)\n", synth.pairs.size());

    const auto corpus = load_corpus("tests/fixtures/pipeline_corpus.jsonl");
    const auto record = run_tagging(golden_config(), corpus);
    if (!record.complete) {
        std::fprintf(stderr, "golden run did not complete\n");
        return 1;
    }
    save_run_record(record, "tests/fixtures/golden_run.jsonl", /*include_timing=*/false);
    std::printf("wrote tests/fixtures/golden_run.jsonl (%zu samples)\n", record.samples.size());

    write_toy_embeddings();
    std::printf("wrote tests/fixtures/toy_embeddings.jsonl\n");
    return 0;
}
