import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ghzsq import matrixfile
from ghzsq.adversary import EntangleMeasure
from ghzsq.matrixfile import MatrixFileError, format_matrices, parse_matrices

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
complex_matrix = st.tuples(st.integers(1, 4), st.integers(1, 4)).flatmap(
    lambda shape: st.builds(
        lambda re, im: re + 1j * im,
        arrays(np.float64, shape, elements=finite),
        arrays(np.float64, shape, elements=finite),
    )
)


@given(st.dictionaries(st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True), complex_matrix, min_size=1, max_size=3))
def test_roundtrip_is_lossless(mats):
    back = parse_matrices(format_matrices(mats))
    assert back.keys() == mats.keys()
    for k, m in mats.items():
        np.testing.assert_array_equal(back[k], m)


def test_comments_and_blank_lines():
    text = """
    # two blocks
    m 1 2
    1,0   0,-1   # trailing comment

    n 1 1
    0.5,0.5
    """
    mats = parse_matrices(text)
    np.testing.assert_array_equal(mats["m"], [[1, -1j]])
    assert mats["n"][0, 0] == 0.5 + 0.5j


@pytest.mark.parametrize(
    "text,match",
    [
        ("m 2\n1,0", "expected"),
        ("m 2 x\n", "integers"),
        ("m 0 1\n", "positive"),
        ("m 2 1\n1,0\n", "ended early"),
        ("m 1 2\n1,0\n", "entries"),
        ("m 1 1\n1\n", "bad entry"),
        ("m 1 1\n1,0\nm 1 1\n1,0\n", "duplicate"),
    ],
)
def test_parse_errors(text, match):
    with pytest.raises(MatrixFileError, match=match):
        parse_matrices(text)


def test_entangle_measure_file(tmp_path):
    em = EntangleMeasure.identity([0, 1, 0], probe_dim=3)
    path = tmp_path / "attack.txt"
    matrixfile.save_entangle_measure(path, em)
    back = matrixfile.load_entangle_measure(path)
    assert back.probe_dim == 3
    np.testing.assert_array_equal(back.ue_b, em.ue_b)
    np.testing.assert_array_equal(back.uf, em.uf)


def test_entangle_measure_file_missing_block(tmp_path):
    path = tmp_path / "attack.txt"
    matrixfile.save_matrices(path, {"ue_b": np.eye(2)})
    with pytest.raises(MatrixFileError, match="missing"):
        matrixfile.load_entangle_measure(path)
