"""Model serialization, decoding graphs and shot-file round trips."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demkit.codes import NoiseModel, gen_rotated_surface_memory, reference_dem
from demkit.dem import (
    Dem,
    DecodingGraph,
    GraphEdge,
    Mechanism,
    build_decoding_graph,
    edge_weight,
    parse_dem,
    read_shots,
    serialize_dem,
    write_shots,
)
from demkit.sampler import ShotBatch


def test_edge_weight_values():
    assert edge_weight(0.1, "estimated") == pytest.approx(
        2.1972245773362196  # log(9)
    )
    assert edge_weight(0.25, "uniform") == 1.0
    # clamping keeps weights finite at both ends
    assert edge_weight(0.0, "estimated") == pytest.approx(
        math.log((1 - 1e-6) / 1e-6)
    )
    assert edge_weight(0.9, "estimated") == pytest.approx(
        math.log((0.5 + 1e-6) / (0.5 - 1e-6))
    )
    with pytest.raises(ValueError):
        edge_weight(0.1, "bogus")


def test_mechanism_validation():
    with pytest.raises(ValueError):
        Mechanism((2, 1), 0.1)  # unsorted
    with pytest.raises(ValueError):
        Mechanism((1, 1), 0.1)  # duplicate
    with pytest.raises(ValueError):
        Mechanism((), 0.1)
    with pytest.raises(ValueError):
        Mechanism((0,), 1.0)


def small_model():
    return Dem(
        n_detectors=4,
        mechanisms=[
            Mechanism((0,), 0.01, True),
            Mechanism((0, 1), 0.02),
            Mechanism((1, 2), 0.125),
            Mechanism((3,), 0.25),
            Mechanism((0, 2, 3), 0.0625),  # hyperedge
        ],
        detector_coords=[(0, 0), (1, 0), (0, 1), (1, 1)],
    )


def test_dem_serialize_parse_roundtrip():
    dem = small_model()
    text = serialize_dem(dem)
    back = parse_dem(text)
    assert back.n_detectors == dem.n_detectors
    assert back.mechanisms == dem.mechanisms
    assert back.detector_coords == dem.detector_coords
    assert serialize_dem(back) == text  # byte stable


def test_dem_parse_infers_detector_count():
    dem = parse_dem("error(0.1) D0 D4\n")
    assert dem.n_detectors == 5
    assert dem.mechanisms == [Mechanism((0, 4), 0.1)]


def test_dem_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_dem("")
    with pytest.raises(ValueError):
        parse_dem("wibble D0\n")
    with pytest.raises(ValueError):
        parse_dem("error(0.1) D0 Q3\n")
    with pytest.raises(ValueError):
        parse_dem("# detectors 2\nerror(0.1) D5\n")
    with pytest.raises(ValueError):  # duplicate mechanism
        parse_dem("error(0.1) D0\nerror(0.2) D0\n")


def test_probability_survives_roundtrip_exactly():
    dem = Dem(2, [Mechanism((0, 1), 0.03328753741602479)])
    assert parse_dem(serialize_dem(dem)).mechanisms[0].probability == (
        0.03328753741602479
    )


def test_build_decoding_graph_classifies_mechanisms():
    graph = build_decoding_graph(small_model(), policy="estimated")
    assert graph.n_hyperedges_dropped == 1
    assert len(graph.edges) == 4
    by_pair = {(e.u, e.v): e for e in graph.edges}
    assert (0, 4) in by_pair and by_pair[(0, 4)].logical_flip
    assert (1, 2) in by_pair
    assert by_pair[(1, 2)].weight == pytest.approx(math.log(7))


def test_build_decoding_graph_needs_matchable_edges():
    dem = Dem(3, [Mechanism((0, 1, 2), 0.1)])
    with pytest.raises(ValueError):
        build_decoding_graph(dem)


def test_reference_surface_dem_has_no_hyperedges():
    noise = NoiseModel(theta_data=0.1, q_flip=0.02, mode="twirled")
    circ = gen_rotated_surface_memory(3, 3, noise, level="phenomenological")
    graph = build_decoding_graph(reference_dem(circ))
    assert graph.n_hyperedges_dropped == 0


def test_all_pairs_on_hand_graph():
    #   0 --1.0-- 1 --2.0-- B      plus a direct 0--B edge of weight 5,
    # the 1--B edge flips the logical.
    edges = [
        GraphEdge(0, 1, 1.0, False, 0.1),
        GraphEdge(1, 2, 2.0, True, 0.1),
        GraphEdge(0, 2, 5.0, False, 0.1),
    ]
    graph = DecodingGraph(2, edges, policy="estimated")
    dist, par = graph.all_pairs()
    assert dist[0, 1] == 1.0
    assert dist[0, 2] == 3.0  # through node 1, not the direct edge
    assert par[0, 2] == 1  # picks up the logical flip on 1--B
    assert par[0, 1] == 0
    assert dist[2, 0] == 3.0 and par[2, 0] == 1


def test_all_pairs_unreachable_is_inf():
    graph = DecodingGraph(3, [GraphEdge(0, 1, 1.0, False, 0.1)], "uniform")
    dist, _ = graph.all_pairs()
    assert math.isinf(dist[0, 2])
    assert math.isinf(dist[2, graph.boundary])


@settings(max_examples=60, deadline=None)
@given(
    n_det=st.integers(0, 19),
    n_obs=st.integers(0, 3),
    n_shots=st.integers(0, 40),
    fmt=st.sampled_from(["b8", "01"]),
    seed=st.one_of(st.none(), st.integers(0, 2**63 - 1)),
    data=st.data(),
)
def test_shot_file_roundtrip(tmp_path_factory, n_det, n_obs, n_shots, fmt, seed, data):
    if n_det + n_obs == 0:
        n_det = 1
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    det = rng.integers(0, 2, (n_shots, n_det)).astype(np.uint8)
    obs = rng.integers(0, 2, (n_shots, n_obs)).astype(np.uint8)
    batch = ShotBatch.from_bits(det, obs, master_seed=seed)
    path = str(tmp_path_factory.mktemp("shots") / f"case.{fmt}")
    write_shots(batch, path, fmt=fmt)
    back = read_shots(path)
    assert back.n_shots == n_shots
    assert back.n_detectors == n_det
    assert back.n_observables == n_obs
    assert back.master_seed == seed
    assert np.array_equal(back.detector_array(), det)
    assert np.array_equal(back.observable_array(), obs)


def test_write_shots_rejects_unknown_format(tmp_path):
    batch = ShotBatch.from_bits(np.zeros((1, 3), np.uint8), None)
    with pytest.raises(ValueError):
        write_shots(batch, str(tmp_path / "x"), fmt="hex")


def test_read_shots_rejects_corruption(tmp_path):
    batch = ShotBatch.from_bits(
        np.ones((4, 5), np.uint8), np.zeros((4, 1), np.uint8), master_seed=3
    )
    good = tmp_path / "good.b8"
    write_shots(batch, str(good), fmt="b8")
    raw = good.read_bytes()

    bad_magic = tmp_path / "bad_magic.b8"
    bad_magic.write_bytes(b"# other stuff\n" + raw.split(b"\n", 1)[1])
    with pytest.raises(ValueError):
        read_shots(str(bad_magic))

    truncated = tmp_path / "trunc.b8"
    truncated.write_bytes(raw[:-1])
    with pytest.raises(ValueError):
        read_shots(str(truncated))

    ascii_path = tmp_path / "good.01"
    write_shots(batch, str(ascii_path), fmt="01")
    text = ascii_path.read_text()
    bad_char = tmp_path / "bad_char.01"
    bad_char.write_text(text.replace("1", "2", 1))
    with pytest.raises(ValueError):
        read_shots(str(bad_char))

    short_row = tmp_path / "short_row.01"
    lines = text.splitlines()
    lines[1] = lines[1][:-1]
    short_row.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError):
        read_shots(str(short_row))


def test_b8_and_01_agree(tmp_path):
    rng = np.random.default_rng(0)
    det = rng.integers(0, 2, (13, 11)).astype(np.uint8)
    batch = ShotBatch.from_bits(det, None)
    pa = tmp_path / "a.b8"
    pb = tmp_path / "b.01"
    write_shots(batch, str(pa), fmt="b8")
    write_shots(batch, str(pb), fmt="01")
    assert np.array_equal(
        read_shots(str(pa)).detector_array(),
        read_shots(str(pb)).detector_array(),
    )
