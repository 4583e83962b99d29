#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "traffic/model.hpp"
#include "traffic/weights_io.hpp"

using namespace traffic;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("traffic_model_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const LayerSummary& row_of(const std::vector<LayerSummary>& rows, const std::string& name) {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw std::runtime_error("no summary row " + name);
}
}  // namespace

TEST_CASE("VGG19 catalog: block5_conv1 shape and parameter count") {
  auto rows = catalog_summary(CatalogId::VGG19);
  const auto& b5c1 = row_of(rows, "block5_conv1");
  CHECK(b5c1.params == 2359808);  // 3*3*512*512 + 512
  CHECK(b5c1.output_shape == Shape{14, 14, 512});
  CHECK(row_of(rows, "flatten").output_shape == Shape{25088});
  CHECK(row_of(rows, "fc1").params == 25088 * 4096 + 4096);
  CHECK(row_of(rows, "predictions").output_shape == Shape{1000});
}

TEST_CASE("CNN5 catalog: 5 conv layers and bottleneck width 12544") {
  BuildParams bp;
  bp.num_dense_nodes = 409;
  auto rows = catalog_summary(CatalogId::CNN5, bp);
  int convs = 0;
  for (const auto& r : rows)
    if (r.kind == std::string("Conv2D")) ++convs;
  CHECK(convs == 5);
  CHECK(row_of(rows, "flatten").output_shape == Shape{12544});  // 7*7*256
  CHECK(row_of(rows, "dense").params == 12544 * 409 + 409);
  CHECK(row_of(rows, "predictions").output_shape == Shape{3});
}

TEST_CASE("VGG19_TRUNC head counts 75,267 parameters") {
  auto rows = catalog_summary(CatalogId::VGG19Trunc);
  CHECK(row_of(rows, "predictions_traffic").params == 25088 * 3 + 3);
  CHECK(row_of(rows, "flatten").output_shape == Shape{25088});
}

TEST_CASE("five conv/pool pairs map 224 down to 7") {
  auto rows = catalog_summary(CatalogId::VGG19);
  CHECK(row_of(rows, "block1_pool").output_shape == Shape{112, 112, 64});
  CHECK(row_of(rows, "block2_pool").output_shape == Shape{56, 56, 128});
  CHECK(row_of(rows, "block3_pool").output_shape == Shape{28, 28, 256});
  CHECK(row_of(rows, "block4_pool").output_shape == Shape{14, 14, 512});
  CHECK(row_of(rows, "block5_pool").output_shape == Shape{7, 7, 512});
}

TEST_CASE("build validates and counts parameters consistently") {
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(3));
  auto counts = count_params(m);
  // independent arithmetic over the documented VGG_S widths (8,16,32,64,64)
  auto conv = [](int64_t in, int64_t out) { return 3 * 3 * in * out + out; };
  int64_t expect = conv(3, 8) + conv(8, 8) + conv(8, 16) + conv(16, 16);
  for (int i = 0; i < 4; ++i) expect += conv(i == 0 ? 16 : 32, 32);
  for (int i = 0; i < 4; ++i) expect += conv(i == 0 ? 32 : 64, 64);
  for (int i = 0; i < 4; ++i) expect += conv(64, 64);
  expect += 2 * 2 * 64 * 3 + 3;  // head on the 2x2x64 bottleneck
  CHECK(counts.total == expect);
  CHECK(counts.trainable == expect);  // everything trainable after build
  CHECK(m.find("flatten")->output_shape == Shape{256});
}

TEST_CASE("build rejects bad parameters") {
  BuildParams bp;
  bp.num_dense_nodes = 0;
  CHECK_THROWS_AS(build_model(CatalogId::CNN5, bp, Rng(1)), ConfigError);
}

TEST_CASE("set_trainable_last_k selects parameterized layers only") {
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(5));
  set_trainable_last_k(m, 5);
  std::set<std::string> want{"block5_conv1", "block5_conv2", "block5_conv3", "block5_conv4",
                             "predictions_traffic"};
  CHECK(m.trainable == want);

  set_trainable_last_k(m, 0);
  CHECK(m.trainable.empty());

  auto all = m.parameterized_names();
  set_trainable_last_k(m, static_cast<int64_t>(all.size()));
  CHECK(m.trainable.size() == all.size());

  CHECK_THROWS_AS(set_trainable_last_k(m, 99), ConfigError);
  CHECK_THROWS_AS(set_trainable(m, {"nope"}), ConfigError);
  CHECK_THROWS_AS(set_trainable(m, {"block1_pool"}), ConfigError);
}

TEST_CASE("count_params total splits into trainable + frozen under any policy") {
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(7));
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    set_trainable_last_k(m, static_cast<int64_t>(rng.next_below(18)));
    auto counts = count_params(m);
    int64_t frozen = 0;
    for (const auto& [name, p] : counts.per_layer)
      if (!m.trainable.count(name)) frozen += p;
    CHECK(counts.total == counts.trainable + frozen);
  }
}

TEST_CASE("truncate_at produces a consistent feature extractor") {
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(9));
  Model trunc = truncate_at(m, "flatten");
  CHECK(trunc.layers.back().spec.name == "flatten");
  CHECK(trunc.layers.back().output_shape == Shape{256});

  Rng rng(10);
  auto x = oracles::random_tensor<float>(rng, {2, 64, 64, 3});
  auto full = predict(m, x);
  auto same = predict(truncate_at(m, m.layers.back().spec.name), x);
  CHECK(full.data == same.data);  // truncating at the final layer changes nothing

  // extraction consistency: flatten output equals the head's input
  auto feats = predict(trunc, x);
  const auto& head = *m.find("predictions_traffic");
  auto logits_probs = dense_forward(feats, head.spec, head.tensors);
  CHECK(logits_probs.data == full.data);

  CHECK_THROWS_AS(truncate_at(m, "missing"), ConfigError);
}

TEST_CASE("predict is uniform for zero weights on any input") {
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(11));
  for (auto& l : m.layers)
    if (l.tensors.present) {
      std::fill(l.tensors.weights.data.begin(), l.tensors.weights.data.end(), 0.0f);
      std::fill(l.tensors.bias.data.begin(), l.tensors.bias.data.end(), 0.0f);
    }
  auto x = Tensor({2, 64, 64, 3});
  auto probs = predict(m, x);
  CHECK(probs.dims == Shape{2, 3});
  for (float v : probs.data) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("predict equals per-sample predict concatenated") {
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(13));
  Rng rng(14);
  auto batch = oracles::random_tensor<float>(rng, {3, 64, 64, 3});
  auto all = predict(m, batch);
  for (int64_t i = 0; i < 3; ++i) {
    Tensor one({1, 64, 64, 3});
    std::copy(batch.data.begin() + i * 64 * 64 * 3, batch.data.begin() + (i + 1) * 64 * 64 * 3,
              one.data.begin());
    auto row = predict(m, one);
    for (int64_t j = 0; j < 3; ++j)
      CHECK(std::abs(row.at2(0, j) - all.at2(i, j)) < 1e-6);
  }
  CHECK_THROWS_AS(predict(m, Tensor({1, 32, 32, 3})), ShapeError);
}

TEST_CASE("softmax row normalization survives prediction") {
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(15));
  Rng rng(16);
  auto probs = predict(m, oracles::random_tensor<float>(rng, {4, 64, 64, 3}));
  for (int64_t r = 0; r < 4; ++r) {
    double s = 0;
    for (int64_t j = 0; j < 3; ++j) s += probs.at2(r, j);
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("save/load round-trip is bit-identical; build-save-load-predict matches") {
  auto dir = temp_dir("roundtrip");
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(17));
  save_weights(m, dir / "w.nnwt");
  Model m2 = build_model(CatalogId::VGGSmall, {}, Rng(999));  // different init
  load_weights(m2, dir / "w.nnwt");
  for (size_t i = 0; i < m.layers.size(); ++i) {
    CHECK(m.layers[i].tensors.weights.data == m2.layers[i].tensors.weights.data);
    CHECK(m.layers[i].tensors.bias.data == m2.layers[i].tensors.bias.data);
  }
  Rng rng(18);
  auto x = oracles::random_tensor<float>(rng, {2, 64, 64, 3});
  CHECK(predict(m, x).data == predict(m2, x).data);
}

TEST_CASE("import_by_name reports matched and unmatched layers") {
  auto dir = temp_dir("import");
  Model src = build_model(CatalogId::VGGSmall, {}, Rng(19));
  // a source file with one renamed record and one extra record
  std::vector<WeightRecord> records;
  for (const auto& l : src.layers)
    if (l.tensors.present)
      records.push_back({l.spec.name == "block5_conv4" ? "someone_else" : l.spec.name,
                         {l.tensors.weights, l.tensors.bias}});
  records.push_back({"orphan", {Tensor({2, 2}), Tensor({2})}});
  write_weight_container(dir / "src.nnwt", records);

  Model dst = build_model(CatalogId::VGGSmall, {}, Rng(20));
  auto report = import_by_name(dst, dir / "src.nnwt");
  CHECK(report.unmatched_model == std::vector<std::string>{"block5_conv4"});
  CHECK(report.unmatched_file == std::vector<std::string>{"someone_else", "orphan"});
  CHECK(report.matched.size() == 16);  // 15 convs + head
  CHECK(dst.find("block1_conv1")->tensors.weights.data ==
        src.find("block1_conv1")->tensors.weights.data);
}

TEST_CASE("import_by_name raises a shape conflict naming the layer") {
  auto dir = temp_dir("conflict");
  write_weight_container(dir / "bad.nnwt",
                         {{"predictions_traffic", {Tensor({5, 3}), Tensor({3})}}});
  Model dst = build_model(CatalogId::VGGSmall, {}, Rng(21));
  CHECK_THROWS_WITH_AS(import_by_name(dst, dir / "bad.nnwt"),
                       doctest::Contains("predictions_traffic"), FormatError);
}

TEST_CASE("weight container rejects corruption with byte offsets") {
  auto dir = temp_dir("corrupt");
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(22));
  save_weights(m, dir / "w.nnwt");

  auto bytes = [&] {
    std::ifstream in(dir / "w.nnwt", std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }();

  auto write_variant = [&](const std::vector<char>& b, const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write_variant(bad_magic, "bad_magic.nnwt");
  CHECK_THROWS_AS(read_weight_container(dir / "bad_magic.nnwt"), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  write_variant(bad_version, "bad_version.nnwt");
  CHECK_THROWS_AS(read_weight_container(dir / "bad_version.nnwt"), FormatError);

  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  write_variant(truncated, "trunc.nnwt");
  CHECK_THROWS_WITH_AS(read_weight_container(dir / "trunc.nnwt"), doctest::Contains("truncated"),
                       FormatError);
}

TEST_CASE("softmax is rejected anywhere but the final dense layer") {
  std::vector<LayerSpec> specs;
  specs.push_back(LayerSpec::dense("a", 4, Activation::Softmax));
  specs.push_back(LayerSpec::dense("b", 3, Activation::Softmax));
  CHECK_THROWS_AS(detail::validate_layer_sequence(specs), ShapeError);
}
