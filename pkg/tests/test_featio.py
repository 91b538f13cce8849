"""Container round-trips, format errors, synthetic generator properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgat.exceptions import ContractError, FmapFormatError
from fgat.featio import (
    FeatureSample,
    TaskManifest,
    fmap_file_size,
    gen_synthetic,
    read_fmap,
    write_fmap,
)


def _sample(rng, dims, label):
    scales = [rng.standard_normal(d).astype(np.float32).astype(np.float64) for d in dims]
    return FeatureSample(scales=scales, label=label)


def test_round_trip_single_sample(tmp_path):
    rng = np.random.default_rng(0)
    sample = _sample(rng, [(2, 2, 2), (3, 1, 1)], label=7)
    path = tmp_path / "one.fmap"
    write_fmap([sample], path)
    back = read_fmap(path)
    assert len(back) == 1
    assert back[0].label == 7
    for orig, loaded in zip(sample.scales, back[0].scales):
        np.testing.assert_array_equal(orig, loaded)


def test_empty_container_round_trips(tmp_path):
    path = tmp_path / "empty.fmap"
    write_fmap([], path, dims=[(2, 2, 2)])
    assert read_fmap(path) == []


def test_file_size_matches_layout(tmp_path):
    rng = np.random.default_rng(1)
    dims = [(2, 2, 2), (3, 1, 1)]
    path = tmp_path / "two.fmap"
    write_fmap([_sample(rng, dims, 0), _sample(rng, dims, 1)], path)
    header = 4 + 2 + 2 + 4 + 12 * len(dims)
    record = 4 + sum(4 * c * h * w for c, h, w in dims)
    assert path.stat().st_size == header + 2 * record
    assert path.stat().st_size == fmap_file_size(dims, 2)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.fmap"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(FmapFormatError, match="magic"):
        read_fmap(path)


def test_truncated_payload_fails_closed(tmp_path):
    rng = np.random.default_rng(2)
    dims = [(2, 2, 2)]
    path = tmp_path / "trunc.fmap"
    write_fmap([_sample(rng, dims, 0), _sample(rng, dims, 1)], path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(FmapFormatError, match="byte"):
        read_fmap(path)


def test_trailing_bytes_rejected(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "trail.fmap"
    write_fmap([_sample(rng, [(1, 2, 2)], 0)], path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(FmapFormatError, match="trailing"):
        read_fmap(path)


def test_heterogeneous_dims_rejected(tmp_path):
    rng = np.random.default_rng(4)
    a = _sample(rng, [(2, 2, 2)], 0)
    b = _sample(rng, [(3, 2, 2)], 1)
    with pytest.raises(ContractError, match="dims"):
        write_fmap([a, b], tmp_path / "x.fmap")


def test_missing_directory_surfaces_io_error(tmp_path):
    rng = np.random.default_rng(5)
    with pytest.raises(FileNotFoundError):
        write_fmap([_sample(rng, [(1, 1, 1)], 0)], tmp_path / "nope" / "x.fmap")


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_round_trip_arbitrary_shapes(tmp_path_factory, data):
    num_scales = data.draw(st.integers(1, 3))
    h = data.draw(st.integers(1, 6))
    w = data.draw(st.integers(1, 6))
    dims = [(data.draw(st.integers(1, 4)), h, w)]
    div_h, div_w = 1, 1
    for _ in range(num_scales - 1):
        # each scale must divide the finest resolution and keep coarsening
        div_h = data.draw(st.sampled_from([d for d in (1, 2, 3, 6) if h % d == 0 and d >= div_h]))
        div_w = data.draw(st.sampled_from([d for d in (1, 2, 3, 6) if w % d == 0 and d >= div_w]))
        dims.append((data.draw(st.integers(1, 4)), h // div_h, w // div_w))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31 - 1)))
    samples = [_sample(rng, dims, i % 3) for i in range(data.draw(st.integers(1, 4)))]
    path = tmp_path_factory.mktemp("fmap") / "prop.fmap"
    write_fmap(samples, path)
    back = read_fmap(path)
    assert len(back) == len(samples)
    for orig, loaded in zip(samples, back):
        assert orig.label == loaded.label
        for s_orig, s_loaded in zip(orig.scales, loaded.scales):
            np.testing.assert_array_equal(s_orig, s_loaded)


def test_sample_rejects_finer_later_scale():
    rng = np.random.default_rng(6)
    with pytest.raises(ContractError):
        FeatureSample(scales=[rng.standard_normal((1, 2, 2)), rng.standard_normal((1, 4, 4))], label=0)


def test_sample_rejects_non_dividing_scale():
    rng = np.random.default_rng(7)
    with pytest.raises(ContractError):
        FeatureSample(scales=[rng.standard_normal((1, 6, 6)), rng.standard_normal((1, 4, 4))], label=0)


# --- synthetic generator -----------------------------------------------------


def test_generator_is_deterministic():
    a = gen_synthetic(3, 5, [(2, 3, 3)], 1.0, seed=42)
    b = gen_synthetic(3, 5, [(2, 3, 3)], 1.0, seed=42)
    for x, y in zip(a, b):
        assert x.label == y.label
        for sx, sy in zip(x.scales, y.scales):
            np.testing.assert_array_equal(sx, sy)


def test_generator_balanced_labels():
    samples = gen_synthetic(5, 20, [(2, 2, 2)], 1.0, seed=0)
    assert len(samples) == 100
    labels, counts = np.unique([s.label for s in samples], return_counts=True)
    assert list(labels) == [0, 1, 2, 3, 4]
    assert (counts == 20).all()


def test_high_separation_is_nearest_mean_separable():
    samples = gen_synthetic(4, 30, [(3, 3, 3)], 50.0, seed=1)
    flat = np.array([np.concatenate([sc.reshape(-1) for sc in s.scales]) for s in samples])
    labels = np.array([s.label for s in samples])
    train = np.arange(len(samples)) % 30 < 15
    centroids = np.stack([flat[train & (labels == c)].mean(axis=0) for c in range(4)])
    test = ~train
    d = ((flat[test, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assert (np.argmin(d, axis=1) == labels[test]).all()


def test_interclass_distance_scales_linearly_with_separation():
    def mean_pairwise_distance(sep, seed):
        samples = gen_synthetic(4, 40, [(2, 3, 3)], sep, seed=seed)
        flat = np.array([s.scales[0].reshape(-1) for s in samples])
        labels = np.array([s.label for s in samples])
        centroids = np.stack([flat[labels == c].mean(axis=0) for c in range(4)])
        dists = [
            np.linalg.norm(centroids[i] - centroids[j])
            for i in range(4)
            for j in range(i + 1, 4)
        ]
        return np.mean(dists)

    ratios = []
    for seed in range(5):
        base = mean_pairwise_distance(2.0, seed)
        doubled = mean_pairwise_distance(4.0, seed)
        ratios.append(doubled / base)
    assert abs(np.mean(ratios) - 2.0) < 0.2


def test_generator_rejects_nonpositive_separation():
    with pytest.raises(ContractError):
        gen_synthetic(2, 2, [(1, 2, 2)], 0.0, seed=0)


# --- manifest ---------------------------------------------------------------


def test_manifest_round_trip(tmp_path):
    manifest = TaskManifest(
        dataset="demo",
        tasks=[[0, 1], [2, 3]],
        train_fmap="train.fmap",
        test_fmap="test.fmap",
    )
    path = tmp_path / "manifest.json"
    manifest.save(path)
    back = TaskManifest.load(path)
    assert back == manifest
    assert back.all_classes() == {0, 1, 2, 3}


def test_manifest_rejects_overlapping_tasks():
    with pytest.raises(ContractError, match="repeat"):
        TaskManifest(dataset="demo", tasks=[[0, 1], [1, 2]], train_fmap="a", test_fmap="b")
