import pytest

from growfrag.errors import NotAlive
from growfrag.genealogy import EVE, Label, ancestor_at, is_prefix, label_sort_key


def test_child_concatenates():
    assert EVE.child(2, 1, 1) == Label(((2, 1, 1),))
    u = Label(((2, 1, 1),)).child(1, 3, 2)
    assert u.triples == ((2, 1, 1), (1, 3, 2))
    assert u.generation == 2


def test_child_injective():
    seen = {EVE.child(m, k, i) for m in (1, 2) for k in (1, 2) for i in (1, 2)}
    assert len(seen) == 8


def test_child_rejects_nonpositive():
    with pytest.raises(ValueError):
        EVE.child(0, 1, 1)


def test_prefix_relation():
    u = Label(((1, 1, 1),))
    v = u.child(2, 1, 1)
    assert is_prefix(EVE, v)
    assert is_prefix(u, v) and is_prefix(u, u)
    assert not is_prefix(Label(((1, 1, 2),)), v)
    assert not is_prefix(v, u)


def test_prefix_partial_order():
    labels = [EVE, Label(((1, 1, 1),)), Label(((1, 1, 1), (2, 1, 1))), Label(((2, 1, 1),))]
    for a in labels:
        assert is_prefix(a, a)
        for b in labels:
            if is_prefix(a, b) and is_prefix(b, a):
                assert a == b
            for c in labels:
                if is_prefix(a, b) and is_prefix(b, c):
                    assert is_prefix(a, c)


def test_max_level():
    assert EVE.max_level == 0
    assert Label(((2, 1, 1), (1, 3, 2))).max_level == 2
    assert Label(((3, 1, 1),)).max_level == 3


def test_max_level_of_child():
    u = Label(((2, 1, 1),))
    assert u.child(1, 5, 2).max_level == max(u.max_level, 1)
    assert u.child(3, 1, 1).max_level == 3


def test_ancestor_at_examples():
    assert ancestor_at({}, 0.0, EVE) == EVE
    v = Label(((1, 1, 1),))
    births = {EVE: 0.0, v: 2.0}
    assert ancestor_at(births, 1.0, v) == EVE
    assert ancestor_at(births, 2.0, v) == v  # boundary: birth <= s


def test_ancestor_at_tower():
    v = Label(((1, 1, 1), (2, 1, 1)))
    births = {EVE: 0.0, v.parent(): 1.0, v: 3.0}
    for s in (0.0, 0.5, 1.0, 2.0, 3.0, 4.0):
        for t in (s, s + 1.0):
            a_st = ancestor_at(births, s, ancestor_at(births, t, v))
            assert a_st == ancestor_at(births, s, v)


def test_ancestor_monotone_in_time():
    v = Label(((1, 1, 1), (2, 1, 1)))
    births = {EVE: 0.0, v.parent(): 1.0, v: 3.0}
    prev = EVE
    for s in (0.0, 1.0, 2.0, 3.0):
        cur = ancestor_at(births, s, v)
        assert is_prefix(prev, cur)
        prev = cur


def test_ancestor_not_alive():
    with pytest.raises(NotAlive):
        ancestor_at({EVE: 1.0}, 0.5, EVE)


def test_text_roundtrip():
    for lab in (EVE, Label(((2, 1, 1),)), Label(((2, 1, 1), (1, 3, 2)))):
        assert Label.parse(str(lab)) == lab
    assert str(EVE) == "∅"
    assert str(Label(((2, 1, 1), (1, 3, 2)))) == "(2,1,1)(1,3,2)"


def test_sort_key_lexicographic():
    labs = [Label(((1, 2, 1),)), Label(((1, 1, 2),)), EVE, Label(((2, 1, 1),))]
    ordered = sorted(labs, key=label_sort_key)
    assert ordered[0] == EVE
    assert ordered[-1] == Label(((2, 1, 1),))
