#include <doctest.h>

#include "ctxscope/corpus.hpp"
#include "ctxscope/error.hpp"

using namespace ctxscope;

namespace {

Conversation conv(const std::string& id, std::vector<std::pair<char, std::string>> turns) {
  Conversation c;
  c.id = id;
  for (auto& [who, text] : turns) {
    c.turns.push_back({who == 'u' ? Speaker::User : Speaker::Assistant, text, false});
  }
  return c;
}

std::vector<char> speakers(const Conversation& c) {
  std::vector<char> out;
  for (const auto& t : c.turns) out.push_back(t.speaker == Speaker::User ? 'u' : 'a');
  return out;
}

}  // namespace

TEST_CASE("JSONL parsing") {
  const std::string text =
      R"({"id": "a", "messages": [{"role": "system", "content": "s"}, {"role": "user", "content": "hi", "indicator": true}, {"role": "assistant", "content": "yo"}], "species": "dependent"})"
      "\n\n"
      R"({"id": "b", "messages": []})"
      "\n";
  const ParsedCorpus p = parse_corpus_jsonl(text);
  REQUIRE(p.conversations.size() == 2);
  CHECK(p.n_system_dropped == 1);
  CHECK(p.conversations[0].turns[0].indicator);
  CHECK(p.conversations[0].extra["species"] == "dependent");
  const ParsedCorpus again = parse_corpus_jsonl(corpus_to_jsonl(p.conversations));
  CHECK(corpus_to_jsonl(again.conversations) == corpus_to_jsonl(p.conversations));

  try {
    parse_corpus_jsonl("{\"id\": \"a\", \"messages\": []}\nnot json\n");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_corpus_jsonl(R"({"id": "a", "messages": [{"role": "tool", "content": "x"}]})"),
                  Error);
}

TEST_CASE("leading responses and refusals") {
  PreprocessOptions po;
  auto out = preprocess({conv("a", {{'a', "x"}, {'u', "q"}, {'a', "r"}})}, po);
  REQUIRE(out.corpus.size() == 1);
  CHECK(speakers(out.corpus[0]) == std::vector<char>{'u', 'a'});
  CHECK(out.stats.n_leading_dropped == 1);

  out = preprocess({conv("b", {{'u', "q1"}, {'a', "fine"}, {'u', "q2"},
                               {'a', "I'm sorry, but I cannot do that."}, {'u', "q3"}, {'a', "ok"}})},
                   po);
  REQUIRE(out.corpus.size() == 1);
  CHECK(speakers(out.corpus[0]) == std::vector<char>{'u', 'a', 'u', 'a'});
  CHECK(out.corpus[0].turns[2].text == "q3");
  CHECK(out.stats.n_refusals_dropped == 1);
}

TEST_CASE("hand-counted statistics over ten fixtures") {
  std::vector<Conversation> raw{
      conv("1", {{'u', "aaaaa"}, {'a', "bbbbbbbbbb"}}),
      conv("2", {{'u', "aaaaaaaaaa"}, {'a', "bb"}, {'u', "aaa"}, {'a', "bbbb"}}),
      conv("3", {{'a', "lead"}, {'u', "aaaa"}, {'a', "bbbbbb"}}),
      conv("4", {{'u', "aa"}, {'a', "I cannot fulfill this"}}),
      conv("5", {{'u', "aaaaaa"}, {'u', "aaaaaaa"}, {'a', "bbb"}}),
      conv("6", {{'u', "aaaaaaaa"}}),
      conv("7", {}),
      conv("8", {{'u', "a"}, {'a', "b"}, {'a', "extra"}}),
      conv("9", {{'u', "aaaaaaaaa"}, {'a', "bbbbbbbb"}}),
      conv("10", {{'u', "aaa"}, {'a', "bbbbb"}, {'u', "trailing"}}),
  };
  raw[0].turns[1].indicator = true;  // response indicators are cleared
  const auto out = preprocess(raw, PreprocessOptions{});
  const auto& st = out.stats;
  CHECK(st.n_input == 10);
  CHECK(st.n_refusals_dropped == 1);  // 4
  CHECK(st.n_leading_dropped == 2);  // 3 and the extra response in 8
  CHECK(st.n_unpaired_dropped == 3);  // 5's first, 6, 10's trailing
  CHECK(st.n_empty_dropped == 3);  // 4, 6, 7
  CHECK(st.output.n_conversations == 7);
  // instructions kept: 5 | 10, 3 | 4 | 7 | 1 | 9 | 3
  CHECK(st.output.n_instructions == 8);
  CHECK(st.output.avg_instruction_len == doctest::Approx(42.0 / 8.0));
  // responses kept: 10 | 2, 4 | 6 | 3 | 1 | 8 | 5
  CHECK(st.output.avg_response_len == doctest::Approx(39.0 / 8.0));
  CHECK(st.output.avg_turns == doctest::Approx(8.0 / 7.0));
  CHECK_FALSE(out.corpus[0].turns[1].indicator);
}

TEST_CASE("preprocess is idempotent") {
  std::vector<Conversation> raw{
      conv("1", {{'a', "x"}, {'u', "q"}, {'u', "q2"}, {'a', "r"}, {'a', "s"}, {'u', "t"}}),
      conv("2", {{'u', "q"}, {'a', "As an AI language model, I cannot"}, {'u', "z"}, {'a', "w"}}),
  };
  const auto once = preprocess(raw, PreprocessOptions{});
  const auto twice = preprocess(once.corpus, PreprocessOptions{});
  CHECK(corpus_to_jsonl(once.corpus) == corpus_to_jsonl(twice.corpus));
  CHECK(twice.stats.n_leading_dropped == 0);
  CHECK(twice.stats.n_unpaired_dropped == 0);
  CHECK(twice.stats.n_refusals_dropped == 0);
}

TEST_CASE("truncation is counted against the rendered length") {
  PreprocessOptions po;
  po.truncate_len = 10;
  const auto out = preprocess({conv("1", {{'u', "aaaa"}, {'a', "bb"}}),
                               conv("2", {{'u', "aaaaaaaa"}, {'a', "bbbb"}})},
                              po);
  CHECK(out.stats.n_truncated == 1);
  CHECK(out.corpus.size() == 2);
}

TEST_CASE("dataset statistics edge cases") {
  const TokenizerSpec tok;
  const auto empty = dataset_stats({}, TemplateSpec::null_template(), tok);
  CHECK(empty.n_conversations == 0);
  CHECK(empty.avg_instruction_len == 0.0);
  CHECK(instruction_histogram({}, 5).empty());
  const auto one = dataset_stats({conv("1", {{'u', "0123456789"}, {'a', "x"}})},
                                 TemplateSpec::null_template(), tok);
  CHECK(one.n_instructions == 1);
  CHECK(one.avg_instruction_len == 10.0);
  CHECK(one.avg_conversation_len == 12.0);  // BOS + 10 + 1
}

TEST_CASE("instruction length histogram") {
  std::vector<Conversation> c{conv("1", {{'u', std::string(5, 'a')}, {'a', "b"}}),
                              conv("2", {{'u', std::string(10, 'a')}, {'a', "b"},
                                         {'u', std::string(15, 'a')}, {'a', "b"}})};
  c[1].turns[2].indicator = true;
  const auto rows = instruction_histogram(c, 5);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].original == 0);
  CHECK(rows[1].original == 1);
  CHECK(rows[2].original == 1);
  CHECK(rows[3].original == 1);
  CHECK(rows[3].annotated == 1);
  CHECK(rows[1].annotated == 0);
  CHECK(histogram_csv(rows) ==
        "bin_start,bin_end,original,annotated\n0,5,0,0\n5,10,1,0\n10,15,1,0\n15,20,1,1\n");
  CHECK_THROWS_AS(instruction_histogram(c, 0), Error);
}
