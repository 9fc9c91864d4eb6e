import pytest

from oracles import canonical_string, class_counts, derive_all, numeric_classes, \
    unique_by_canonical_form
from symatlas.enumerator import (EnumerationBudgetExceeded, Phrase, count_unique,
                                 derive_sentences, enumerate_expressions, is_sentence, prune,
                                 sentence_to_tree, stream_expressions, text_tokens)
from symatlas.expr import semantic_hash, size_metrics

LIMIT1 = {"x", "exp(x)", "log(x)", "sin(x)",
          "1/(x)", "1/(exp(x))", "1/(log(x))", "1/(sin(x))"}


def test_limit1_exact_set():
    res = enumerate_expressions(1)
    assert {e.text for e in res.expressions} == LIMIT1


@pytest.mark.parametrize("limit", [1, 2, 3, 4, 5])
def test_counts_match_generating_functions(limit, limit5):
    expected = class_counts(5)[limit - 1]
    if limit == 5:
        assert len(limit5) == expected
    else:
        assert len(enumerate_expressions(limit)) == expected


def test_known_counts():
    assert class_counts(5) == [8, 100, 1002, 9458, 84693]


@pytest.mark.parametrize("limit", [1, 2, 3])
def test_set_matches_naive_rewriting(limit):
    res = enumerate_expressions(limit)
    got = {canonical_string(text_tokens(e.text)) for e in res.expressions}
    assert got == unique_by_canonical_form(limit)


@pytest.mark.parametrize("limit", [1, 2, 3])
def test_stack_and_memo_agree(limit):
    memo = enumerate_expressions(limit, method="memo")
    stack = enumerate_expressions(limit, method="stack")
    assert [e.text for e in memo.expressions] == [e.text for e in stack.expressions]
    assert memo.digests == stack.digests


@pytest.mark.parametrize("limit", [1, 2])
def test_sentences_match_oracle_derivations(limit):
    ours = sorted(derive_sentences(limit))
    theirs = sorted(derive_all(limit))
    assert ours == theirs
    assert len(ours) == [8, 146][limit - 1]


@pytest.mark.parametrize("limit, max_symbols", [(2, 20), (3, 28)])
def test_pruning_does_not_change_the_language(limit, max_symbols):
    pruned = {semantic_hash(sentence_to_tree(s)) for s in derive_sentences(limit)}
    longest = max(len(s) for s in derive_sentences(limit))
    assert longest < max_symbols
    unpruned = {semantic_hash(sentence_to_tree(s))
                for s in derive_sentences(limit, use_pruning=False, max_symbols=max_symbols)}
    assert pruned == unpruned


def test_unpruned_needs_a_bound():
    with pytest.raises(ValueError):
        list(derive_sentences(2, use_pruning=False))


def test_prune_examples():
    # Term + Expr needs at least two more references
    assert not prune(Phrase(("Term", "+", "Expr"), 6, 2), 7)
    assert prune(Phrase(("Factor",), 6, 1), 7)
    assert prune(Phrase(("x", "+", "Term"), 6, 1), 7)
    assert not prune(Phrase(("x",), 8, 0), 7)


def test_records_are_well_formed(limit3):
    exprs = limit3.expressions
    assert [e.id for e in exprs] == list(range(len(exprs)))
    assert len({e.digest for e in exprs}) == len(exprs)
    assert [e.text for e in exprs] == sorted(e.text for e in exprs)
    for e in exprs:
        assert is_sentence(text_tokens(e.text))
        assert e.metrics == size_metrics(e.tree)
        assert 1 <= e.metrics.variable_refs <= 3
        assert semantic_hash(e.tree) == e.digest


def test_is_sentence_rejects():
    assert not is_sentence(text_tokens("exp(x + x)"))
    assert not is_sentence(text_tokens("exp(sin(x))"))
    assert not is_sentence(text_tokens("1/(1/(x))"))
    assert not is_sentence(text_tokens("log(exp(x))"))
    assert is_sentence(text_tokens("log(x + x * x)"))


def test_monotone_in_limit(limit3):
    prev = set()
    for limit in (1, 2, 3):
        cur = enumerate_expressions(limit).digests
        assert prev < cur
        prev = cur
    assert prev == limit3.digests


def test_limit_zero_is_empty():
    assert len(enumerate_expressions(0)) == 0
    assert list(derive_sentences(0)) == []
    assert count_unique(0)[0] == 0


def test_budget_error_reports_phrases():
    with pytest.raises(EnumerationBudgetExceeded) as err:
        enumerate_expressions(3, method="stack", max_phrases=50)
    assert err.value.phrases == 51
    assert "51" in str(err.value)


def test_count_unique_and_stream(limit5):
    assert count_unique(4)[0] == 9458
    streamed = dict(stream_expressions(5))
    assert set(streamed) == limit5.digests
    assert all(semantic_hash(t) == d for d, t in streamed.items())


def test_derivation_counts_reported(limit3):
    assert limit3.derived_count >= len(limit3)
    assert limit3.duplicate_count == limit3.derived_count - len(limit3)
    stack = enumerate_expressions(2, method="stack")
    assert stack.derived_count == 146
    assert stack.duplicate_count == 46


def test_numeric_classes_small():
    assert numeric_classes(1) == 8
    # x * 1/(x), exp(x) * 1/(exp(x)) etc. are all the constant 1
    assert numeric_classes(2) == 98
