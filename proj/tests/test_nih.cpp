#include <doctest.h>

#include <set>

#include "ctxscope/error.hpp"
#include "ctxscope/nih.hpp"
#include "ctxscope/prompts.hpp"
#include "support/fixtures.hpp"

using namespace ctxscope;

namespace {

NihSetup setup_for(const std::string& tmpl = "chat") {
  NihSetup s;
  s.haystack = load_haystack(data_dir() + "/haystack.txt");
  s.tmpl = resolve_template(tmpl);
  s.format = PromptFormats::bundled().nih.at("context");
  return s;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

std::vector<TokenId> ids(const std::string& s) {
  return tokenize(s, TokenizerSpec::standard());
}

}  // namespace

TEST_CASE("default grid has 400 unique cells spanning both boundary depths") {
  GridSpec g;
  const auto cases = build_grid(g, NihCase{});
  CHECK(cases.size() == 400);
  std::set<std::pair<std::size_t, double>> seen;
  for (const auto& c : cases) seen.insert({c.context_len, c.depth});
  CHECK(seen.size() == 400);
  const auto lengths = grid_lengths(g);
  for (std::size_t i = 0; i < 20; ++i) CHECK(lengths[i] == 200 + 200 * i);
  const auto depths = grid_depths(g);
  CHECK(depths.front() == 0.0);
  CHECK(depths.back() == 1.0);
}

TEST_CASE("degenerate and invalid grids") {
  GridSpec g{200, 4000, 1, 5};
  CHECK(grid_lengths(g) == std::vector<std::size_t>{200});
  CHECK(grid_depths(g) == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(grid_depths(GridSpec{200, 4000, 3, 1}) == std::vector<double>{0.0});
  CHECK_THROWS_AS(grid_lengths(GridSpec{200, 200, 3, 3}), Error);
  CHECK_THROWS_AS(grid_lengths(GridSpec{200, 4000, 0, 3}), Error);
  CHECK_THROWS_AS(grid_lengths(GridSpec{200, 205, 10, 3}), Error);
  NihCase no_keys;
  no_keys.needle.keywords.clear();
  CHECK_THROWS_AS(build_grid(GridSpec{}, no_keys), Error);
  // lengths round to nearest
  CHECK(grid_lengths(GridSpec{100, 300, 4, 1}) == std::vector<std::size_t>{100, 167, 233, 300});
}

TEST_CASE("needle offsets follow the floor formula") {
  const NihSetup s = setup_for();
  NihCase c;
  c.needle.text = std::string(40, 'N');
  c.needle.keywords = {"NNNN"};
  c.context_len = 1000;
  c.depth = 0.5;
  BuiltCase b = build_case(c, s);
  // 480 filler bytes, a joining space, then the needle
  CHECK(b.context.substr(0, 480) == s.haystack.substr(0, 480));
  CHECK(b.needle_offset == 481);
  CHECK(b.context.substr(481, 40) == c.needle.text);

  c.depth = 0.0;
  b = build_case(c, s);
  CHECK(b.needle_offset == 0);
  CHECK(b.context.rfind(c.needle.text, 0) == 0);

  c.depth = 1.0;
  b = build_case(c, s);
  CHECK(b.context.size() - b.needle_offset == 40);

  for (double d : {0.0, 0.3, 1.0}) {
    c.depth = d;
    b = build_case(c, s);
    CHECK(b.context.find('\n') == std::string::npos);
    CHECK(count(detokenize(b.prompt.tokens, s.tok), c.needle.text) == 1);
  }
}

TEST_CASE("case construction errors") {
  NihSetup s = setup_for();
  NihCase c;
  c.context_len = 10;  // shorter than the needle
  CHECK_THROWS_AS(build_case(c, s), Error);
  c.context_len = 500;
  s.haystack = "too short";
  CHECK_THROWS_AS(build_case(c, s), Error);
}

TEST_CASE("recall hand cases") {
  const TokenizerSpec tok;
  CHECK(recall(ids("code 4817 and 9"), {"4817", "9"}, tok) == 1.0);
  CHECK(recall(ids("code 4817"), {"4817", "9"}, tok) == 0.5);
  const std::string late = std::string(100, 'x') + "4817";
  CHECK(recall(ids(late), {"4817"}, tok, 100) == 0.0);
  CHECK(recall(ids(late), {"4817"}, tok, 104) == 1.0);
  // straddling the window edge is not counted
  CHECK(recall(ids(std::string(98, 'x') + "4817"), {"4817"}, tok, 100) == 0.0);
  CHECK_THROWS_AS(recall(ids("x"), {}, tok), Error);
}

TEST_CASE("recall is monotone in the window") {
  const TokenizerSpec tok;
  const auto out = ids("aa 12 bb 34 cc 56 dd 78");
  const std::vector<std::string> keys{"12", "56", "78", "zz"};
  double prev = 0.0;
  for (std::size_t w = 0; w <= out.size() + 2; ++w) {
    const double r = recall(out, keys, tok, w);
    CHECK(r >= prev);
    prev = r;
  }
}

TEST_CASE("fixture generators bound the recall") {
  const NihSetup s = setup_for();
  const auto cases = build_grid(GridSpec{200, 600, 3, 4}, NihCase{});
  const testutil::ScriptedGenerator echo([](const std::string& p, double) {
    const auto at = p.find("The code for the silver gate is ");
    return at == std::string::npos ? std::string() : p.substr(at, 40);
  });
  const NihReport good = run_nih(echo, cases, s, NihOptions{});
  CHECK(good.mean_recall == 1.0);
  CHECK(good.mean_err == 0.0);
  CHECK(good.cells.size() == 12);

  const testutil::ScriptedGenerator eos([](const std::string&, double) { return std::string(); });
  const NihReport bad = run_nih(eos, cases, s, NihOptions{});
  CHECK(bad.mean_recall == 0.0);
  CHECK(bad.mean_err == 1.0);
  CHECK(bad.summary()["n_cases"] == 12);
}

TEST_CASE("over-long cases become failure cells") {
  const NihSetup s = setup_for();
  const auto cases = build_grid(GridSpec{100, 900, 3, 2}, NihCase{});
  const testutil::ScriptedGenerator echo(
      [](const std::string&, double) { return std::string("4817"); }, 600);
  const NihReport r = run_nih(echo, cases, s, NihOptions{});
  CHECK(r.cells.size() == 6);
  CHECK(r.failures == 4);  // lengths 500 and 900 do not fit
  CHECK(r.mean_recall == doctest::Approx(2.0 / 6.0));
  CHECK(r.mean_err == 1.0 - r.mean_recall);
  for (const auto& c : r.cells) CHECK(c.failed == (c.context_len > 100));
}

TEST_CASE("heatmap layout") {
  const NihSetup s = setup_for();
  const auto cases = build_grid(GridSpec{200, 4000, 20, 20}, NihCase{});
  const testutil::ScriptedGenerator eos([](const std::string&, double) { return std::string(); });
  const NihReport r = run_nih(eos, cases, s, NihOptions{});
  const std::string csv = r.heatmap_csv();
  std::size_t rows = 0;
  std::size_t cells = 0;
  std::size_t pos = csv.find('\n') + 1;
  CHECK(csv.substr(0, 10) == "depth,200,");
  while (pos < csv.size()) {
    const std::size_t end = csv.find('\n', pos);
    const std::string line = csv.substr(pos, end - pos);
    cells += static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    ++rows;
    pos = end + 1;
  }
  CHECK(rows == 20);
  CHECK(cells == 400);
}

TEST_CASE("alpha sweep") {
  const NihSetup s = setup_for();
  const auto cases = build_grid(GridSpec{200, 400, 2, 2}, NihCase{});
  HeadSelection sel;
  sel.heads = {0};
  // Only strong steering recovers the needle.
  const testutil::ScriptedGenerator fixed([](const std::string&, double alpha) {
    return alpha <= 0.3 ? std::string("4817") : std::string("none");
  });
  const SweepResult r = sweep_alpha(fixed, cases, s, {0.9, 0.3, 0.9, 1.0}, sel, NihOptions{});
  CHECK(r.rows.size() == 3);
  CHECK(r.rows[0].alpha == 0.3);
  CHECK(r.best_alpha == 0.3);
  CHECK(r.rows[0].mean_recall == 1.0);
  CHECK(r.rows[2].mean_recall == 0.0);
  CHECK(r.csv().rfind("alpha,mean_recall,mean_err\n", 0) == 0);

  const testutil::ScriptedGenerator flat([](const std::string&, double) { return std::string("4817"); });
  const SweepResult id = sweep_alpha(flat, cases, s, {1.0}, sel, NihOptions{});
  CHECK(id.best_alpha == 1.0);
  CHECK(id.rows[0].mean_recall == run_nih(flat, cases, s, NihOptions{}).mean_recall);
  CHECK_THROWS_AS(sweep_alpha(flat, cases, s, {}, sel, NihOptions{}), Error);
}

TEST_CASE("indicator adds one token to the query") {
  NihSetup s = setup_for();
  NihCase c;
  c.context_len = 300;
  c.depth = 0.5;
  const auto plain = build_case(c, s);
  s.indicator = true;
  const auto marked = build_case(c, s);
  CHECK(marked.prompt.size() == plain.prompt.size() + 1);
}
