// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP variants of the per-layout kernels.
#include <benchmark/benchmark.h>

#include "layoutgen/corpus.hpp"
#include "layoutgen/kernels.hpp"
#include "layoutgen/matcher.hpp"

using namespace layoutgen;
using kernels::Exec;

namespace {

const std::vector<Layout>& noisy_corpus() {
  static const std::vector<Layout> layouts = [] {
    SyntheticCorpusSpec spec;
    spec.count = 2000;
    const auto corpus = synth_corpus(spec);
    PerturbConfig cfg;
    cfg.noise = 0.2;
    std::vector<Layout> out;
    for (std::size_t i = 0; i < corpus.layouts.size(); ++i) out.push_back(perturb(corpus.layouts[i], cfg, i).layout);
    return out;
  }();
  return layouts;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

void BM_Overlap(benchmark::State& state) {
  const auto& l = noisy_corpus();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::overlap_per_layout(l, false, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(l.size()));
}

void BM_Alignment(benchmark::State& state) {
  const auto& l = noisy_corpus();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::alignment_per_layout(l, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(l.size()));
}

void BM_PixelOverlap(benchmark::State& state) {
  const auto& all = noisy_corpus();
  const std::span<const Layout> l(all.data(), 100);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::pixel_overlap_per_layout(l, 512, false, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * 100);
}

void BM_MaxIou(benchmark::State& state) {
  const auto& all = noisy_corpus();
  SyntheticCorpusSpec spec;
  spec.count = 2000;
  spec.seed = 99;
  const auto refs = synth_corpus(spec).layouts;
  const CorpusIndex index(refs);
  const std::span<const Layout> gen(all.data(), 200);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::max_iou_per_layout(gen, index, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * 200);
}

void BM_RenderBatch(benchmark::State& state) {
  const auto& all = noisy_corpus();
  const std::span<const Layout> l(all.data(), 64);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::render_batch(l, 5, {}, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * 64);
}

}  // namespace

// Arg 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_Overlap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Alignment)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PixelOverlap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxIou)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
