import string

from hypothesis import given, strategies as st

from groundtrack.textmatch import levenshtein, match_keyword, match_threshold

from oracles import levenshtein_ref

words = st.text(alphabet=string.ascii_lowercase + "-_ ", min_size=0, max_size=12)


@given(words, words)
def test_levenshtein_matches_reference(a, b):
    assert levenshtein(a, b) == levenshtein_ref(a, b)


@given(words, words)
def test_levenshtein_symmetry(a, b):
    assert levenshtein(a, b) == levenshtein(b, a)


@given(words, words, words)
def test_levenshtein_triangle_inequality(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


def test_threshold_rule():
    assert match_threshold("cup") == 1  # 3 // 4 == 0, floor at 1
    assert match_threshold("open") == 1
    assert match_threshold("fragile") == 1  # 7 // 4 == 1
    assert match_threshold("refrigerator") == 3  # 12 // 4


def test_single_typo_accepted():
    # distance("fragil", "fragile") == 1 <= threshold 1
    assert levenshtein_ref("fragil", "fragile") == 1
    assert match_keyword("fragil", ["fragile", "sturdy"]) == "fragile"


def test_unrelated_word_rejected():
    for target in ("metal", "plastic"):
        dist = levenshtein_ref("metalic-ish-stuff", target)
        assert dist > match_threshold(target)
    assert match_keyword("metalic-ish-stuff", ["metal", "plastic"]) is None


def test_exact_match_always_wins():
    assert match_keyword("open", ["open", "closed"]) == "open"
    assert match_keyword("OPEN", ["open", "closed"]) == "open"  # case-insensitive


def test_tie_goes_to_earlier_keyword():
    # "cat" is distance 1 from both "cas" and "cab".
    assert match_keyword("cat", ["cas", "cab"]) == "cas"
    assert match_keyword("cat", ["cab", "cas"]) == "cab"


@given(words)
def test_exact_is_distance_zero(a):
    assert levenshtein(a, a) == 0
