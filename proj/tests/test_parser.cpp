#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "logpurge/parser.hpp"
#include "test_util.hpp"

using namespace logpurge;

TEST_CASE("parse_line extracts timestamp and message") {
  FieldLayout layout;
  layout.timestamp_index = 1;
  layout.message_start = 4;
  layout.label_index = 0;
  const auto r = parse_line("- 1117838570 2005.06.03 R02-M1 generating core.1143", layout);
  CHECK(r.timestamp == 1117838570);
  CHECK(r.message == "generating core.1143");
  CHECK(r.source_label == Label::normal);
}

TEST_CASE("parse_line label column marks anomalies") {
  FieldLayout layout;
  layout.timestamp_index = 1;
  layout.message_start = 2;
  layout.label_index = 0;
  const auto r = parse_line("KERNDTLB 1117838570 data TLB error interrupt", layout);
  CHECK(r.source_label == Label::anomalous);
}

TEST_CASE("parse_line rejects a missing timestamp field") {
  FieldLayout layout;
  layout.timestamp_index = 3;
  layout.message_start = 1;
  CHECK_THROWS_AS(parse_line("only two", layout), UnparseableTimestamp);
  layout.timestamp_index = 0;
  CHECK_THROWS_AS(parse_line("notanumber hello", layout), UnparseableTimestamp);
}

TEST_CASE("parse_line rejects whitespace-only messages") {
  FieldLayout layout;  // ts at 0, message from 1
  CHECK_THROWS_AS(parse_line("1117838570", layout), EmptyMessage);
}

TEST_CASE("drain merges parameterized variants into one template") {
  ParseTree tree;
  const int a = tree.match_message("generating core.1143");
  const int b = tree.match_message("generating core.2275");
  CHECK(a == b);
  // Numeric-bearing tokens are pre-wildcarded before descent.
  CHECK(tree.templates()[a].text() == "generating <*>");
  CHECK(tree.templates()[a].support_count == 2);
}

TEST_CASE("drain is idempotent on identical messages") {
  ParseTree tree;
  const int a = tree.match_message("session opened for admin");
  const int b = tree.match_message("session opened for admin");
  CHECK(a == b);
  CHECK(tree.templates().size() == 1);
  CHECK(tree.templates()[a].support_count == 2);
}

TEST_CASE("similarity 2/3 merges at threshold 0.4") {
  ParseTree tree(4, 0.4, 100);
  const int a = tree.match_message("a b c");
  const int b = tree.match_message("a b d");
  CHECK(a == b);
  CHECK(tree.templates()[a].text() == "a b <*>");
}

TEST_CASE("similarity below threshold creates a new template") {
  ParseTree tree(4, 0.9, 100);
  const int a = tree.match_message("a b c");
  const int b = tree.match_message("a b d");  // 2/3 < 0.9
  CHECK(a != b);
}

TEST_CASE("re-parsing the same corpus yields identical templates") {
  const std::vector<std::string> corpus{
      "session opened for user alice", "session opened for user bob",
      "disk quota 75 exceeded on node 3", "disk quota 91 exceeded on node 7",
      "cache flushed", "session closed for user alice"};
  auto run = [&] {
    ParseTree tree;
    std::vector<int> ids;
    for (const auto& line : corpus) ids.push_back(tree.match_message(line));
    std::vector<std::string> texts;
    for (const auto& t : tree.templates()) texts.push_back(t.text());
    return std::pair(ids, texts);
  };
  CHECK(run() == run());
}

TEST_CASE("template count never decreases while streaming") {
  ParseTree tree;
  Rng rng(11);
  std::size_t last = 0;
  const std::vector<std::string> stems{"alpha beta", "alpha gamma", "delta", "epsilon zeta"};
  for (int i = 0; i < 200; ++i) {
    const auto& stem = stems[rng.bounded(stems.size())];
    tree.match_message(stem + " " + std::to_string(rng.bounded(50)));
    CHECK(tree.templates().size() >= last);
    last = tree.templates().size();
  }
}

TEST_CASE("full interior nodes route new tokens through a wildcard child") {
  ParseTree tree(4, 0.4, 2);  // branch cap of two
  // Distinct first tokens beyond the cap must still resolve.
  std::vector<int> ids;
  for (const std::string word : {"alpha", "beta", "gamma", "delta", "epsilon"}) {
    ids.push_back(tree.match_message(word + " started worker"));
  }
  for (int id : ids) {
    CHECK(id >= 0);
    CHECK(static_cast<std::size_t>(id) < tree.templates().size());
  }
  // Overflow tokens share the wildcard path, so their tails merge.
  CHECK(tree.templates().size() <= 4);
}

namespace {
std::vector<LogRecord> records_at(const std::vector<std::int64_t>& stamps) {
  std::vector<LogRecord> out;
  for (auto ts : stamps) {
    LogRecord r;
    r.timestamp = ts;
    r.message = "m";
    r.template_id = 0;
    out.push_back(r);
  }
  return out;
}
}  // namespace

TEST_CASE("windows start at min_ts and advance by stride") {
  std::vector<std::int64_t> stamps;
  for (std::int64_t t = 0; t < 120; ++t) stamps.push_back(t);
  const auto seqs = window_sequences(records_at(stamps), 60, 30);
  REQUIRE(seqs.size() == 4);  // starts 0, 30, 60, 90
  CHECK(seqs[0].window_start == 0);
  CHECK(seqs[3].window_start == 90);
  CHECK(seqs[3].window_end == 150);
  CHECK(seqs[0].template_ids.size() == 60);
  CHECK(seqs[3].template_ids.size() == 30);  // trailing partial window kept
}

TEST_CASE("single record yields exactly one sequence") {
  const auto seqs = window_sequences(records_at({100}), 60, 30);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].window_start == 100);
}

TEST_CASE("any anomalous record makes the window anomalous") {
  auto records = records_at({0, 10, 20});
  for (auto& r : records) r.source_label = Label::normal;
  records[1].source_label = Label::anomalous;
  const auto seqs = window_sequences(records, 60, 60);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].ground_truth == Label::anomalous);
}

TEST_CASE("windowing rejects unsorted input") {
  CHECK_THROWS_AS(window_sequences(records_at({10, 5}), 60, 30), UnsortedInput);
}

TEST_CASE("every record inside some window span is covered") {
  Rng rng(3);
  std::vector<std::int64_t> stamps;
  std::int64_t t = 0;
  for (int i = 0; i < 300; ++i) {
    t += static_cast<std::int64_t>(rng.bounded(20));
    stamps.push_back(t);
  }
  const auto records = records_at(stamps);
  const auto seqs = window_sequences(records, 60, 25);
  std::size_t covered = 0;
  for (const auto& s : seqs) covered += s.template_ids.size();
  // Overlapping windows may cover a record more than once; nothing is lost.
  std::size_t expected = 0;
  for (auto ts : stamps) {
    for (const auto& s : seqs) {
      if (ts >= s.window_start && ts < s.window_end) {
        ++expected;
      }
    }
  }
  CHECK(covered == expected);
  for (auto ts : stamps) {
    bool in_some = false;
    for (const auto& s : seqs)
      in_some = in_some || (ts >= s.window_start && ts < s.window_end);
    CHECK(in_some);
  }
}

TEST_CASE("empty windows are dropped") {
  const auto seqs = window_sequences(records_at({0, 1000}), 60, 30);
  for (const auto& s : seqs) CHECK_FALSE(s.template_ids.empty());
  // Gap between 60 and 990 produces no sequences.
  for (const auto& s : seqs) {
    const bool head = s.window_start <= 1;
    const bool tail = s.window_end > 1000;
    CHECK((head || tail));
  }
}
