import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adhpl.data import (
    HdiMatrix,
    SynthParams,
    load_ratings,
    split,
    synth_lowrank,
    write_ratings,
)
from adhpl.errors import (
    ConfigError,
    DuplicateEntryError,
    GenerationError,
    ParseError,
    SplitError,
)


def test_load_counts():
    m, ids = load_ratings(io.StringIO("a\tx\t5\na\ty\t3\nb\tx\t1\n"))
    assert (m.n_rows, m.n_cols, len(m)) == (2, 2, 3)
    assert ids.row_ids == ["a", "b"]
    assert ids.col_ids == ["x", "y"]


def test_load_empty():
    m, _ = load_ratings(io.StringIO(""))
    assert (m.n_rows, m.n_cols, len(m)) == (0, 0, 0)


def test_load_duplicate_names_pair():
    with pytest.raises(DuplicateEntryError, match=r"\(A, X\)"):
        load_ratings(io.StringIO("A,X,5\nA,X,3\n"))


def test_load_first_appearance_order_and_extra_columns():
    text = "# comment\n10,7,4.5,881250949\n3,7,2,0\n10,2,1,0\n"
    m, ids = load_ratings(io.StringIO(text))
    assert ids.row_ids == ["10", "3"]
    assert ids.col_ids == ["7", "2"]
    assert m.triples() == [(0, 0, 4.5), (1, 0, 2.0), (0, 1, 1.0)]


def test_load_explicit_delimiter_and_header():
    m, _ = load_ratings(io.StringIO("user::item::r\n1::2::3\n"), delimiter="::", has_header=True)
    assert m.triples() == [(0, 0, 3.0)]


@pytest.mark.parametrize("text, line", [("a,b\n", 1), ("a,b,1\na,c,x\n", 2), ("\n\na,b,nan\n", 3)])
def test_load_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as exc:
        load_ratings(io.StringIO(text))
    assert exc.value.line_no == line


def test_row_and_col_index_are_transposes():
    m, _ = synth_lowrank(20, 30, 2, 0.3, 0.0, seed=1)
    from_rows = {(u, int(i), float(z)) for u in range(m.n_rows) for i, z in zip(*m.group("row", u))}
    from_cols = {(int(u), i, float(z)) for i in range(m.n_cols) for u, z in zip(*m.group("col", i))}
    assert from_rows == from_cols == set(m.triples())


def test_matrix_rejects_duplicates_and_is_readonly():
    with pytest.raises(DuplicateEntryError):
        HdiMatrix(2, 2, [0, 0], [1, 1], [1.0, 2.0])
    m = HdiMatrix(2, 2, [0], [1], [1.0])
    with pytest.raises(ValueError):
        m.vals[0] = 3.0


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9),
                          st.floats(-1e6, 1e6, allow_nan=False)),
                max_size=60, unique_by=lambda t: (t[0], t[1])))
@settings(max_examples=50, deadline=None)
def test_write_load_round_trip(triples):
    rows = [t[0] for t in triples]
    cols = [t[1] for t in triples]
    vals = [t[2] for t in triples]
    m = HdiMatrix(10, 10, rows, cols, vals)
    buf = io.StringIO()
    write_ratings(m, buf)
    back, ids = load_ratings(io.StringIO(buf.getvalue()))
    restored = {(int(ids.row_ids[u]), int(ids.col_ids[i]), z) for u, i, z in back.triples()}
    assert restored == set(m.triples())


def test_split_sizes_ten():
    m = HdiMatrix(5, 5, np.arange(10) // 5, np.arange(10) % 5, np.arange(10.0))
    s = split(m, (0.7, 0.1, 0.2), seed=3)
    assert (len(s.train), len(s.validation), len(s.test)) == (7, 1, 2)


def test_split_deterministic():
    m, _ = synth_lowrank(30, 30, 2, 0.2, 0.0, seed=2)
    a, b = split(m, seed=5), split(m, seed=5)
    for part in ("train", "validation", "test"):
        assert getattr(a, part).triples() == getattr(b, part).triples()
    assert split(m, seed=6).train.triples() != a.train.triples()


def test_split_partition_large():
    m, _ = synth_lowrank(400, 500, 2, 0.5, 0.0, seed=0)
    assert len(m) == 100_000
    s = split(m, (0.7, 0.1, 0.2), seed=1)
    assert (len(s.train), len(s.validation), len(s.test)) == (70000, 10000, 20000)
    keys = [set((s_.rows * m.n_cols + s_.cols).tolist()) for s_ in (s.train, s.validation, s.test)]
    assert not (keys[0] & keys[1]) and not (keys[0] & keys[2]) and not (keys[1] & keys[2])
    assert keys[0] | keys[1] | keys[2] == set((m.rows * m.n_cols + m.cols).tolist())


@pytest.mark.parametrize("fractions", [(0.7, 0.1, 0.1), (0.8, 0.2, 0.0), (1.2, -0.1, -0.1)])
def test_split_bad_fractions(fractions):
    m, _ = synth_lowrank(10, 10, 1, 0.5, 0.0, seed=0)
    with pytest.raises(ConfigError):
        split(m, fractions)


def test_split_too_small():
    with pytest.raises(SplitError):
        split(HdiMatrix(2, 2, [0, 1], [0, 1], [1.0, 2.0]))


def test_synth_zero_noise_rank_one_dense():
    m, p = synth_lowrank(2, 2, 1, 1.0, 0.0, seed=4)
    assert len(m) == 4
    dense = p.P @ p.Q.T + p.b[:, None] + p.c[None, :]
    np.testing.assert_array_equal(m.to_dense(), dense)


def test_synth_counts_and_ranges():
    m, p = synth_lowrank(200, 300, 5, 0.08, 0.1, seed=1)
    assert len(m) == 4800
    assert np.unique(m.rows * 300 + m.cols).size == 4800
    assert p.P.min() >= 0 and p.P.max() <= 1 / np.sqrt(5)
    assert p.b.min() >= 0 and p.b.max() <= 0.1


def test_synth_noise_level():
    m, p = synth_lowrank(200, 300, 5, 0.08, 0.1, seed=7)
    noise = m.vals - p.expected(m.rows, m.cols)
    assert 0.09 <= noise.std() <= 0.11


def test_synth_clip_and_errors():
    m, _ = synth_lowrank(20, 20, 2, 0.5, 1.0, rating_clip=(0.0, 0.5), seed=3)
    assert m.vals.min() >= 0.0 and m.vals.max() <= 0.5
    with pytest.raises(GenerationError):
        synth_lowrank(3, 3, 1, 0.05, 0.0)
    with pytest.raises(GenerationError):
        synth_lowrank(3, 3, 1, 0.0, 0.0)


def test_synth_params_json_round_trip():
    _, p = synth_lowrank(5, 6, 2, 0.5, 0.1, rating_clip=(0, 1), seed=3)
    q = SynthParams.from_json(p.to_json())
    for name in "PQbc":
        np.testing.assert_array_equal(getattr(p, name), getattr(q, name))
    assert json.loads(q.to_json()) == json.loads(p.to_json())
