#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "finagent/error.hpp"
#include "finagent/vecstore.hpp"
#include "support/fixtures.hpp"

using namespace finagent;
using testsupport::TempDir;

namespace {

SourceRef src(const std::string& uri) { return {"s-" + uri, SourceKind::StoreRecord, uri, std::nullopt, now_utc()}; }

std::shared_ptr<const EmbeddingProvider> ref(std::size_t dim = 256) {
    return std::make_shared<ReferenceEmbedder>(dim);
}

// independent oracle: plain cosine, full sort
std::vector<std::pair<std::uint64_t, double>> brute_force(const std::vector<EmbeddingRecord>& recs,
                                                          const EmbeddingVector& q, std::size_t k) {
    std::vector<std::pair<std::uint64_t, double>> all;
    for (const auto& r : recs) {
        double d = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < q.dim(); ++i) {
            d += r.vector.values[i] * q.values[i];
            na += r.vector.values[i] * r.vector.values[i];
            nb += q.values[i] * q.values[i];
        }
        double c = (na == 0 || nb == 0) ? 0.0 : std::clamp(d / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
        all.emplace_back(r.id, c);
    }
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
    if (all.size() > k) all.resize(k);
    return all;
}

}  // namespace

TEST_CASE("ids are dense and global across collections") {
    auto store = Store::in_memory(ref());
    CHECK(store.insert("a", "first", src("u1"), RecordKind::Corpus) == 0);
    CHECK(store.insert("b", "second", src("u2"), RecordKind::Corpus) == 1);
    CHECK(store.insert("a", "third", src("u3"), RecordKind::Corpus) == 2);
    CHECK(store.size() == 3);
    CHECK(store.size("a") == 2);
    CHECK_THROWS_AS(store.insert("Bad-Name", "x", src("u"), RecordKind::Corpus), Error);
}

TEST_CASE("dimension mismatch against an existing collection") {
    TempDir dir;
    {
        auto store = Store::open(dir.path(), ref(256));
        store.insert("corpus", "rates", src("u"), RecordKind::Corpus);
    }
    auto store = Store::open(dir.path(), ref(128));
    try {
        store.insert("corpus", "rates", src("u"), RecordKind::Corpus);
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
    CHECK_THROWS_AS(store.search("corpus", EmbeddingVector::zeros(128), 3), Error);
}

TEST_CASE("search matches a brute-force sort") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> nd;
    auto store = Store::in_memory(ref(16));
    for (int i = 0; i < 100; ++i) {
        std::vector<double> v(16);
        for (auto& x : v) x = nd(rng);
        store.insert_vector("c", EmbeddingVector(v), "r" + std::to_string(i), src("u"), RecordKind::Corpus);
    }
    std::vector<double> qv(16);
    for (auto& x : qv) x = nd(rng);
    EmbeddingVector q(qv);
    auto hits = store.search("c", q, 10);
    auto oracle = brute_force(store.records("c"), q, 10);
    REQUIRE(hits.size() == oracle.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].record_id == oracle[i].first);
        CHECK(hits[i].score == doctest::Approx(oracle[i].second).epsilon(1e-12));
    }

    auto self = store.get(37);
    REQUIRE(self);
    auto top = store.search("c", self->vector, 1);
    CHECK(top[0].record_id == 37);
    CHECK(top[0].score == doctest::Approx(1.0).epsilon(1e-9));

    CHECK(store.search("empty", q, 5).empty());
    CHECK_THROWS_AS(store.search("c", q, 0), Error);
}

TEST_CASE("ties break by ascending id") {
    auto store = Store::in_memory(ref(4));
    for (int i = 0; i < 5; ++i) {
        store.insert_vector("c", EmbeddingVector({1, 0, 0, 0}), "same", src("u"), RecordKind::Corpus);
    }
    auto hits = store.search("c", EmbeddingVector({2, 0, 0, 0}), 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].record_id == 0);
    CHECK(hits[1].record_id == 1);
    CHECK(hits[2].record_id == 2);
}

TEST_CASE("record_interaction and feedback") {
    auto store = Store::in_memory(ref());
    AgentResponse resp;
    resp.response_id = "r-1";
    resp.text = "ANSWER: Fed holds rates. [1]";
    resp.prompt = "what did the fed do?";
    auto ids = store.record_interaction("corpus", "s-1", resp);
    REQUIRE(ids.size() == 1);
    auto rec = store.get(ids[0]);
    CHECK(rec->record_kind == RecordKind::Response);
    CHECK(rec->source.uri == interaction_uri("s-1", "r-1"));
    CHECK(rec->source.title == std::optional<std::string>("what did the fed do?"));
    CHECK(store.has_response("r-1"));

    AgentResponse resp2 = resp;
    resp2.response_id = "r-2";
    auto both = store.record_interaction("corpus", "s-1", resp2, Feedback{"r-2", 1, "good"});
    REQUIRE(both.size() == 2);
    CHECK(store.get(both[0])->record_kind == RecordKind::Response);
    auto fb = store.get(both[1]);
    CHECK(fb->record_kind == RecordKind::Feedback);
    CHECK(fb->payload_text == "rating: 1\ncomment: good");
    CHECK(parse_feedback_rating(fb->payload_text) == 1);

    try {
        store.record_feedback("corpus", "s-1", Feedback{"r-404", -1, std::nullopt});
        FAIL("expected UnknownResponse");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownResponse);
    }
    CHECK(store.size() == 3);
}

TEST_CASE("persistence round trip and compaction") {
    TempDir dir;
    std::vector<EmbeddingRecord> before;
    std::uint64_t hash = 0;
    {
        auto store = Store::open(dir.path(), ref());
        CHECK(store.size() == 0);
        for (int i = 0; i < 5; ++i) store.insert("corpus", "doc " + std::to_string(i), src("u"), RecordKind::Corpus);
        before = store.all_records();
        hash = store.state_hash();
    }
    {
        auto store = Store::open(dir.path(), ref());
        CHECK(store.all_records() == before);
        CHECK(store.state_hash() == hash);
        CHECK_FALSE(store.recovery().truncated);
        store.compact();
        CHECK(store.insert("corpus", "after compaction", src("u"), RecordKind::Corpus) == 5);
    }
    auto store = Store::open(dir.path(), ref());
    CHECK(store.size() == 6);
    CHECK(store.recovery().snapshot_records == 5);
    CHECK(store.recovery().log_records == 1);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(storefmt::encode_record(*store.get(i)) == storefmt::encode_record(before[i]));
    }
}

TEST_CASE("truncated log recovers the valid prefix") {
    TempDir dir;
    std::vector<EmbeddingRecord> before;
    {
        auto store = Store::open(dir.path(), ref());
        for (int i = 0; i < 5; ++i) store.insert("corpus", "doc " + std::to_string(i), src("u"), RecordKind::Corpus);
        before = store.all_records();
    }
    auto log = dir.path() / "log.bin";
    auto full = std::filesystem::file_size(log);
    // cut the fifth frame in half
    auto last = storefmt::frame(storefmt::encode_record(before[4])).size();
    std::filesystem::resize_file(log, full - last / 2);
    {
        auto store = Store::open(dir.path(), ref());
        CHECK(store.size() == 4);
        CHECK(store.recovery().truncated);
        CHECK(store.recovery().valid_log_bytes == full - last);
        for (std::size_t i = 0; i < 4; ++i) CHECK(*store.get(i) == before[i]);
        // appends continue from the cut point
        CHECK(store.insert("corpus", "new", src("u"), RecordKind::Corpus) == 4);
    }
    auto store = Store::open(dir.path(), ref());
    CHECK(store.size() == 5);
    CHECK_FALSE(store.recovery().truncated);
}

TEST_CASE("corrupt bytes in the log stop replay at that frame") {
    TempDir dir;
    {
        auto store = Store::open(dir.path(), ref());
        for (int i = 0; i < 3; ++i) store.insert("corpus", "doc " + std::to_string(i), src("u"), RecordKind::Corpus);
    }
    auto log = dir.path() / "log.bin";
    auto size = std::filesystem::file_size(log);
    {
        std::fstream f(log, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(size - 3));
        f.put('\x7f');
    }
    auto store = Store::open(dir.path(), ref());
    CHECK(store.size() == 2);
    CHECK(store.recovery().truncated);
}

TEST_CASE("record encoding round trips") {
    EmbeddingRecord r;
    r.id = 99;
    r.collection = "corpus";
    r.vector = EmbeddingVector({0.5, -0.25, 1e-300});
    r.payload_text = std::string("bytes\0inside", 12);
    r.source = {"id", SourceKind::PreferredUrl, "https://x.test", "title", from_millis(1700000000000)};
    r.record_kind = RecordKind::Feedback;
    r.created_at = from_millis(1700000000001);
    CHECK(storefmt::decode_record(storefmt::encode_record(r)) == r);
    auto bytes = storefmt::encode_record(r);
    CHECK_THROWS_AS(storefmt::decode_record(std::string_view(bytes).substr(0, bytes.size() - 1)), Error);
    CHECK(storefmt::crc32("123456789") == 0xCBF43926u);
}

TEST_CASE("empty directory opens as an empty store") {
    TempDir dir;
    auto store = Store::open(dir.path() / "nested", ref());
    CHECK(store.size() == 0);
    CHECK(store.collections().empty());
}
