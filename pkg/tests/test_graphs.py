import numpy as np
import pytest

from sidlab.graphs import (
    CorruptionMask,
    GraphInstance,
    GraphSchema,
    element_count,
    iter_slots,
    load_graphs,
    save_graphs,
)


def test_schema_validation():
    with pytest.raises(ValueError):
        GraphSchema(d_x=0, d_e=2, has_mask=False, n_min=1, n_max=2)
    with pytest.raises(ValueError):
        GraphSchema(d_x=1, d_e=1, has_mask=False, n_min=1, n_max=2)
    s = GraphSchema(d_x=3, d_e=2, has_mask=True, n_min=2, n_max=4)
    assert s.node_mask == 3 and s.edge_mask == 2
    assert s.node_vocab == 4 and s.edge_vocab == 3


def test_instance_symmetry_enforced():
    e = np.zeros((3, 3), dtype=np.int64)
    e[0, 1] = 1
    with pytest.raises(ValueError):
        GraphInstance([0, 0, 0], e)
    e[1, 0] = 1
    g = GraphInstance([0, 0, 0], e)
    assert np.array_equal(g.upper_edges(), [1, 0, 0])


def test_instance_diagonal_fixed():
    e = np.eye(2, dtype=np.int64)
    with pytest.raises(ValueError):
        GraphInstance([0, 0], e)


def test_from_upper_roundtrip():
    g = GraphInstance.from_upper([1, 0, 2], np.array([2, 0, 1]))
    assert g.edge_labels[0, 1] == 2 and g.edge_labels[1, 0] == 2
    assert g.edge_labels[0, 2] == 0 and g.edge_labels[1, 2] == 1
    assert np.array_equal(g.upper_edges(), [2, 0, 1])


def test_element_count():
    assert element_count(GraphInstance.from_upper([0] * 4, np.zeros(6, dtype=np.int64))) == (4, 6)
    assert element_count(GraphInstance.from_upper([0], np.zeros(0, dtype=np.int64))) == (1, 0)
    assert element_count(GraphInstance.from_upper([0] * 9, np.zeros(36, dtype=np.int64))) == (9, 36)


def test_gamma_weights_from_element_count():
    n, m = element_count(GraphInstance.from_upper([0] * 4, np.zeros(6, dtype=np.int64)))
    assert n / (n + m) == pytest.approx(0.4)
    n, m = element_count(GraphInstance.from_upper([0], np.zeros(0, dtype=np.int64)))
    assert n / (n + m) == pytest.approx(1.0)


def test_permuted_conjugates_edges():
    g = GraphInstance.from_upper([0, 1, 2], np.array([1, 0, 2]))
    perm = np.array([2, 0, 1])
    gp = g.permuted(perm)
    for i in range(3):
        for j in range(3):
            assert gp.edge_labels[i, j] == g.edge_labels[perm[i], perm[j]]
    assert np.array_equal(gp.node_labels, g.node_labels[perm])


def test_mask_symmetry_and_diagonal():
    flags = np.zeros((3, 3), dtype=bool)
    flags[0, 1] = True
    with pytest.raises(ValueError):
        CorruptionMask([True, False, True], flags)
    m = CorruptionMask.from_upper([True, False, True], np.array([True, False, True]))
    assert m.edge_flags[0, 1] == m.edge_flags[1, 0]
    assert m.edge_flags.diagonal().all()
    assert np.array_equal(m.upper_flags(), [True, False, True])


def test_iter_slots_order():
    slots = list(iter_slots(3))
    assert slots == [
        ("node", 0),
        ("node", 1),
        ("node", 2),
        ("edge", 0, 1),
        ("edge", 0, 2),
        ("edge", 1, 2),
    ]


def test_jsonl_roundtrip(tmp_path):
    graphs = [
        GraphInstance.from_upper([0, 1], np.array([2])),
        GraphInstance.from_upper([1, 0, 2], np.array([0, 1, 2])),
    ]
    path = tmp_path / "graphs.jsonl"
    save_graphs(path, graphs)
    header = path.read_text().splitlines()[0]
    assert '"format": "sidlab-graphs"' in header and '"version": 1' in header
    loaded = load_graphs(path)
    assert loaded == graphs


def test_jsonl_bytes_deterministic(tmp_path):
    graphs = [GraphInstance.from_upper([0, 1], np.array([1]))]
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_graphs(p1, graphs)
    save_graphs(p2, graphs)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_other_formats(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"format": "something-else", "version": 1}\n')
    with pytest.raises(ValueError):
        load_graphs(path)
