#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "fedsis/rng.hpp"
#include "fedsis/serialize.hpp"
#include "support/checks.hpp"

using namespace fedsis;

namespace {

std::string temp_path(const char* name) {
  return std::string("/tmp/fedsis_test_") + name + "_" + std::to_string(::getpid());
}

}  // namespace

TEST_CASE("save/load round-trips random named tensors bitwise") {
  Rng rng(2718);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor> tensors;
    std::vector<NamedTensorView> views;
    const std::size_t count = 1 + rng.uniform_int(0, 5);
    for (std::size_t i = 0; i < count; ++i) {
      Shape shape;
      const std::size_t rank = 1 + rng.uniform_int(0, 3);
      for (std::size_t a = 0; a < rank; ++a) shape.push_back(1 + rng.uniform_int(0, 6));
      tensors.push_back(testing::random_tensor(shape, rng));
    }
    for (std::size_t i = 0; i < count; ++i) {
      views.push_back({"tensor_" + std::to_string(trial) + "_" + std::to_string(i),
                       &tensors[i]});
    }
    std::ostringstream os(std::ios::binary);
    save_tensors(os, views);
    CHECK(os.str().size() == serialized_size(views));

    std::istringstream is(os.str(), std::ios::binary);
    auto loaded = load_tensors(is);
    REQUIRE(loaded.size() == count);
    for (std::size_t i = 0; i < count; ++i) {
      CHECK(loaded[i].first == views[i].name);
      CHECK(loaded[i].second.same_values(tensors[i]));
    }
  }
}

TEST_CASE("header starts with the FSIS magic") {
  Tensor t(Shape{2}, 1.0);
  std::ostringstream os(std::ios::binary);
  save_tensors(os, {{"t", &t}});
  const std::string bytes = os.str();
  REQUIRE(bytes.size() >= 4);
  CHECK(bytes.substr(0, 4) == "FSIS");
}

TEST_CASE("corrupt magic is rejected") {
  std::istringstream is(std::string("XXXX\0\0\0\0", 8), std::ios::binary);
  CHECK_THROWS_WITH_AS((void)load_tensors(is), doctest::Contains("magic"), std::runtime_error);
}

TEST_CASE("truncated stream is rejected") {
  Tensor t(Shape{4}, 2.0);
  std::ostringstream os(std::ios::binary);
  save_tensors(os, {{"t", &t}});
  std::string bytes = os.str();
  bytes.resize(bytes.size() / 2);
  std::istringstream is(bytes, std::ios::binary);
  CHECK_THROWS_AS((void)load_tensors(is), std::runtime_error);
}

TEST_CASE("load_into matches by name and validates shapes") {
  const std::string path = temp_path("load_into");
  Tensor a(Shape{3}, 1.0), b(Shape{2, 2}, 2.0);
  save_tensors_file(path, {{"a", &a}, {"b", &b}});

  Tensor a2(Shape{3}), b2(Shape{2, 2});
  load_into(path, {{"a", &a2}, {"b", &b2}});
  CHECK(a2.same_values(a));
  CHECK(b2.same_values(b));

  Tensor wrong(Shape{4});
  CHECK_THROWS_WITH_AS(load_into(path, {{"a", &wrong}}), doctest::Contains("shape"),
                       std::runtime_error);
  Tensor missing(Shape{3});
  CHECK_THROWS_WITH_AS(load_into(path, {{"zzz", &missing}}), doctest::Contains("missing"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("values survive as little-endian 64-bit floats") {
  Tensor t(Shape{1}, 1.0);
  std::ostringstream os(std::ios::binary);
  save_tensors(os, {{"one", &t}});
  const std::string bytes = os.str();
  // last 8 bytes are the value; 1.0 is 0x3FF0000000000000 little-endian
  const unsigned char* p =
      reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size() - 8;
  CHECK(p[0] == 0x00);
  CHECK(p[6] == 0xF0);
  CHECK(p[7] == 0x3F);
}
