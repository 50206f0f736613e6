#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "plat/data.hpp"
#include "plat/errors.hpp"

using namespace plat;

namespace {

GeneratorConfig small_cfg(uint64_t seed = 7, int n = 50) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.n = n;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("equation parsing") {
    auto eq = parse_equation("13 + 4 = 17");
    REQUIRE(eq.has_value());
    CHECK(eq->lhs == 13);
    CHECK(eq->op == '+');
    CHECK(eq->rhs == 4);
    CHECK(eq->result == 17);
    CHECK(equation_true(*eq));

    CHECK_FALSE(parse_equation("hello there").has_value());
    CHECK(parse_equation("<step> 3 * 4 = 12 <step>").has_value());
    CHECK_FALSE(equation_true(*parse_equation("2 + 2 = 5")));
    CHECK(equation_true(*parse_equation("12 / 4 = 3")));
    CHECK_FALSE(equation_true(*parse_equation("13 / 4 = 3")));  // inexact division
}

TEST_CASE("number extraction") {
    CHECK(extract_numbers("start with 13 . then add 4 .") == std::vector<long long>{13, 4});
    CHECK(extract_numbers("no numbers here").empty());
}

TEST_CASE("generator is deterministic under seed") {
    auto a = generate_corpus(small_cfg(7, 10));
    auto b = generate_corpus(small_cfg(7, 10));
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].question == b[i].question);
        CHECK(a[i].steps == b[i].steps);
        CHECK(a[i].answer == b[i].answer);
    }
    auto c = generate_corpus(small_cfg(8, 10));
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i) any_diff = any_diff || a[i].question != c[i].question;
    CHECK(any_diff);
}

TEST_CASE("samples satisfy the arithmetic invariants") {
    auto corpus = generate_corpus(small_cfg(21, 120));
    for (const auto& s : corpus) {
        REQUIRE(s.steps.size() == static_cast<size_t>(s.n_steps));
        const auto q_numbers = extract_numbers(s.question);
        std::set<long long> avail(q_numbers.begin(), q_numbers.end());
        long long prev = -1;
        for (const auto& text : s.steps) {
            auto eq = parse_equation(text);
            REQUIRE(eq.has_value());
            CHECK(equation_true(*eq));
            // lhs is a question number or the previous result; rhs is asked for
            // in the question text.
            CHECK((avail.count(eq->lhs) || eq->lhs == prev));
            CHECK(avail.count(eq->rhs));
            avail.insert(eq->result);
            prev = eq->result;
        }
        CHECK(s.answer == prev);
        CHECK(s.answer >= 0);
        CHECK(s.answer <= s.value_cap);
    }
}

TEST_CASE("single-step corpus answers match the single equation") {
    auto cfg = small_cfg(3, 20);
    cfg.step_min = cfg.step_max = 1;
    for (const auto& s : generate_corpus(cfg)) {
        auto eq = parse_equation(s.steps.at(0));
        REQUIRE(eq.has_value());
        CHECK(s.answer == eq->result);
    }
}

TEST_CASE("step counts are balanced") {
    auto corpus = generate_corpus(small_cfg(5, 90));
    int counts[4] = {0, 0, 0, 0};
    for (const auto& s : corpus) counts[s.n_steps]++;
    CHECK(counts[1] == 30);
    CHECK(counts[2] == 30);
    CHECK(counts[3] == 30);
}

TEST_CASE("infeasible generator config rejected") {
    auto cfg = small_cfg();
    cfg.operand_min = 10;
    cfg.operand_max = 5;
    CHECK_THROWS_AS(generate_corpus(cfg), ConfigError);
    cfg = small_cfg();
    cfg.value_cap = 1;
    CHECK_THROWS_AS(generate_corpus(cfg), ConfigError);
}

TEST_CASE("tokenizer round-trips corpus text") {
    const auto& v = Vocab::standard();
    auto corpus = generate_corpus(small_cfg(17, 60));
    for (const auto& s : corpus) {
        CHECK(v.detokenize(v.tokenize(s.question)) == s.question);
        for (const auto& st : s.steps) CHECK(v.detokenize(v.tokenize(st)) == st);
    }
}

TEST_CASE("splits are disjoint and sized") {
    auto corpus = generate_corpus(small_cfg(9, 100));
    auto splits = make_splits(corpus, {0.8, 0.1, 0.1}, 42);
    CHECK(static_cast<int>(splits.train.size()) == 80);
    CHECK(static_cast<int>(splits.val.size()) == 10);
    CHECK(static_cast<int>(splits.test.size()) == 10);

    std::set<std::string> train_q, test_q;
    for (const auto& s : splits.train) train_q.insert(s.question);
    for (const auto& s : splits.test) test_q.insert(s.question);
    for (const auto& q : test_q) CHECK(train_q.count(q) == 0);

    // hard split: operands strictly above, one extra step
    int corpus_max_op = corpus.front().operand_max;
    for (const auto& s : splits.hard_ood) {
        CHECK(s.operand_min > corpus_max_op);
        CHECK(s.n_steps == 4);
    }
}

TEST_CASE("cot rendering layout") {
    const auto& v = Vocab::standard();
    ReasoningSample s;
    s.question = "start with 3 . then add 4 . what do you get ?";
    s.steps = {"3 + 4 = 7"};
    s.answer = 7;
    s.n_steps = 1;
    auto ids = render_cot_sequence(v, s);
    // question ... <enc> <step> 3 + 4 = 7 <ans> 7 <eos>
    auto q = question_token_ids(v, s);
    CHECK(std::vector<int>(ids.begin(), ids.begin() + static_cast<long>(q.size())) == q);
    CHECK(ids[q.size()] == v.specials().step);
    CHECK(ids.back() == v.specials().eos);
    CHECK(ids[ids.size() - 3] == v.specials().ans);
    CHECK_THROWS_AS(render_cot_sequence(v, s, 5), CapacityError);
}

TEST_CASE("plat rendering has one segment per step plus the answer") {
    const auto& v = Vocab::standard();
    auto cfg = small_cfg(11, 12);
    cfg.step_min = cfg.step_max = 2;
    for (const auto& s : generate_corpus(cfg)) {
        auto r = render_plat_segments(v, s);
        REQUIRE(r.segments.size() == 3);
        CHECK(r.segments[0].back() == v.specials().step);
        CHECK(r.segments[1].back() == v.specials().step);
        CHECK(r.segments[2].front() == v.specials().ans);
        CHECK(r.segments[2].back() == v.specials().eos);
        CHECK(r.question.back() == v.specials().enc);
    }
}

TEST_CASE("cot and plat renderings share the same content tokens") {
    const auto& v = Vocab::standard();
    auto corpus = generate_corpus(small_cfg(13, 30));
    for (const auto& s : corpus) {
        auto cot = render_cot_sequence(v, s);
        auto plat = render_plat_segments(v, s);
        std::multiset<int> cot_content, plat_content;
        for (int t : cot)
            if (!v.is_special(t)) cot_content.insert(t);
        for (int t : plat.question)
            if (!v.is_special(t)) plat_content.insert(t);
        for (const auto& seg : plat.segments)
            for (int t : seg)
                if (!v.is_special(t)) plat_content.insert(t);
        CHECK(cot_content == plat_content);
    }
}

TEST_CASE("corpus file round-trip") {
    auto corpus = generate_corpus(small_cfg(31, 25));
    const std::string path = "test_corpus_tmp.jsonl";
    write_corpus_jsonl(path, corpus);
    auto back = read_corpus_jsonl(path);
    REQUIRE(back.size() == corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(back[i].question == corpus[i].question);
        CHECK(back[i].steps == corpus[i].steps);
        CHECK(back[i].answer == corpus[i].answer);
        CHECK(back[i].n_steps == corpus[i].n_steps);
    }
    // byte-identical on rewrite
    auto first = slurp(path);
    write_corpus_jsonl(path, back);
    CHECK(slurp(path) == first);
    std::remove(path.c_str());
}
