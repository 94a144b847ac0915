import json
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from quadrig import io as rio
from quadrig.model import BlendshapeModel
from quadrig.solver import solve
from quadrig.spectral import assemble, compute_spectra
from quadrig.synth import SynthSpec, generate_model, generate_target

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def same_model(a, b):
    return (a.neutral.tobytes() == b.neutral.tobytes()
            and a.deltas.tobytes() == b.deltas.tobytes()
            and a.pair_index.tobytes() == b.pair_index.tobytes()
            and a.corrective_matrix.tobytes() == b.corrective_matrix.tobytes())


def edit_json(path, fn):
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))


class TestRig:
    @pytest.mark.parametrize("sidecar", [False, True])
    def test_round_trip(self, tmp_path, sidecar):
        model = generate_model(SynthSpec(seed=42))
        path = tmp_path / "rig.json"
        rio.write_rig(model, path, sidecar=sidecar)
        assert (tmp_path / "rig.bin").exists() == sidecar
        assert same_model(rio.read_rig(path), model)

    def test_round_trip_awkward_values(self, tmp_path):
        neutral = np.array([5e-324, -0.0, 1e308, 0.1, 1 / 3, -2.5e-17])
        deltas = np.array([[np.nextafter(1.0, 2.0), 0.0]] * 6)
        model = BlendshapeModel(neutral, deltas, [(0, 1, neutral[::-1].copy())])
        rio.write_rig(model, tmp_path / "r.json")
        assert same_model(rio.read_rig(tmp_path / "r.json"), model)

    def test_write_is_byte_stable(self, tmp_path):
        model = random_model(np.random.default_rng(1))
        rio.write_rig(model, tmp_path / "a.json")
        rio.write_rig(rio.read_rig(tmp_path / "a.json"), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_delta_column_count(self, tmp_path):
        path = tmp_path / "rig.json"
        rio.write_rig(random_model(np.random.default_rng(2), m=3), path)
        edit_json(path, lambda d: d.update(deltas=[row[:2] for row in d["deltas"]]))
        with pytest.raises(rio.FormatError, match=r"deltas\[0\].*2 entries, expected 3"):
            rio.read_rig(path)

    def test_unknown_version(self, tmp_path):
        path = tmp_path / "rig.json"
        rio.write_rig(random_model(np.random.default_rng(2)), path)
        edit_json(path, lambda d: d.update(format_version=99))
        with pytest.raises(rio.FormatError, match="unsupported format_version 99"):
            rio.read_rig(path)

    def test_parse_error_location(self, tmp_path):
        path = tmp_path / "rig.json"
        path.write_text('{\n  "format": "quadrig-rig",\n  oops\n}\n')
        with pytest.raises(rio.FormatError, match="line 3 column 3"):
            rio.read_rig(path)

    @pytest.mark.parametrize("mutate, message", [
        (lambda d: d["neutral"].__setitem__(0, "x"), "entry 0 is not a number"),
        (lambda d: d["neutral"].__setitem__(0, True), "entry 0 is not a number"),
        (lambda d: d.update(n_vertices=-1), "non-negative integer"),
        (lambda d: d.update(storage="zip"), "'storage'"),
        (lambda d: d.update(format="something"), "'format'"),
        (lambda d: d.pop("correctives"), "missing field 'correctives'"),
        (lambda d: d["correctives"].reverse(), "sorted"),
        (lambda d: d["correctives"][0].update(k=d["correctives"][0]["j"]), "duplicate-index"),
    ])
    def test_rejects_malformed(self, tmp_path, mutate, message):
        path = tmp_path / "rig.json"
        rio.write_rig(random_model(np.random.default_rng(3), m=4, n_pairs=3), path)
        edit_json(path, mutate)
        with pytest.raises(rio.FormatError, match=message):
            rio.read_rig(path)

    def test_rejects_nan_literal(self, tmp_path):
        path = tmp_path / "rig.json"
        rio.write_rig(random_model(np.random.default_rng(3)), path)
        text = path.read_text()
        path.write_text(text.replace('"neutral": [', '"neutral": [NaN, ', 1))
        with pytest.raises(rio.FormatError, match="non-finite"):
            rio.read_rig(path)

    def test_sidecar_tamper_detected(self, tmp_path):
        path = tmp_path / "rig.json"
        rio.write_rig(random_model(np.random.default_rng(4)), path, sidecar=True)
        blob = bytearray((tmp_path / "rig.bin").read_bytes())
        blob[0] ^= 1
        (tmp_path / "rig.bin").write_bytes(bytes(blob))
        with pytest.raises(rio.FormatError, match="sha256"):
            rio.read_rig(path)

    def test_sidecar_layout(self, tmp_path):
        model = random_model(np.random.default_rng(5), n=2, m=3, n_pairs=2)
        rio.write_rig(model, tmp_path / "rig.json", sidecar=True)
        data = np.frombuffer((tmp_path / "rig.bin").read_bytes(), dtype="<f8")
        expected = np.concatenate([model.neutral, model.deltas.ravel()]
                                  + [p.offsets for p in model.corrective_pairs])
        assert data.tobytes() == expected.astype("<f8").tobytes()


class TestTargetWeights:
    def test_target_round_trip(self, tmp_path):
        spec = SynthSpec(seed=43, noise_std=0.01)
        target, _ = generate_target(generate_model(spec), spec)
        rio.write_target(target, tmp_path / "t.json")
        assert rio.read_target(tmp_path / "t.json").tobytes() == target.tobytes()

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=0, max_size=30))
    def test_weights_round_trip_any_finite(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("w") / "w.json"
        w = np.array(values, dtype=np.float64)
        rio.write_weights(w, path)
        assert rio.read_weights(path).tobytes() == w.tobytes()

    def test_weights_plain_text(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("# initial guess\n0.1 0.2\n0.3  # last\n")
        np.testing.assert_array_equal(rio.read_weights(path), [0.1, 0.2, 0.3])
        path.write_text("0.1 abc\n")
        with pytest.raises(rio.FormatError, match="line 1"):
            rio.read_weights(path)

    def test_weights_count_checked(self, tmp_path):
        path = tmp_path / "w.json"
        rio.write_weights([0.1, 0.2], path)
        edit_json(path, lambda d: d.update(n_blendshapes=3))
        with pytest.raises(rio.FormatError, match="'weights' has 2 entries, expected 3"):
            rio.read_weights(path)

    def test_target_rejects_non_flat(self, tmp_path):
        with pytest.raises(rio.FormatError):
            rio.write_target(np.zeros(4), tmp_path / "t.json")


class TestCache:
    def test_round_trip(self, tmp_path):
        model = generate_model(SynthSpec(seed=42))
        cache = compute_spectra(assemble(model))
        rio.write_cache(cache, model, tmp_path / "c.bin")
        back = rio.read_cache(tmp_path / "c.bin", model)
        for name in ("lambda_min", "lambda_max", "sigma", "half_values", "pair_index"):
            assert getattr(back, name).tobytes() == getattr(cache, name).tobytes()

    def test_layout(self, tmp_path):
        model = random_model(np.random.default_rng(6), n=1, m=3, n_pairs=2)
        cache = compute_spectra(assemble(model))
        rio.write_cache(cache, model, tmp_path / "c.bin")
        blob = (tmp_path / "c.bin").read_bytes()
        magic, version, digest, n3, m = struct.unpack_from("<8sI32sQQ", blob)
        assert (magic, version, digest, n3, m) == (b"QRIGSPEC", 1, rio.model_hash(model), 3, 3)
        recs = np.frombuffer(blob, dtype="<f8", offset=60).reshape(3, 4)
        np.testing.assert_array_equal(recs[:, 0], [0, 1, 2])
        np.testing.assert_array_equal(recs[:, 3], cache.sigma)

    def test_stale(self, tmp_path):
        a = generate_model(SynthSpec(seed=42))
        b = generate_model(SynthSpec(seed=43))
        rio.write_cache(compute_spectra(assemble(a)), a, tmp_path / "c.bin")
        with pytest.raises(rio.StaleCacheError):
            rio.read_cache(tmp_path / "c.bin", b)

    def test_truncated_and_bad_magic(self, tmp_path):
        model = random_model(np.random.default_rng(7))
        path = tmp_path / "c.bin"
        rio.write_cache(compute_spectra(assemble(model)), model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(rio.FormatError, match="bytes"):
            rio.read_cache(path, model)
        path.write_bytes(b"NOTCACHE" + blob[8:])
        with pytest.raises(rio.FormatError, match="magic"):
            rio.read_cache(path, model)

    def test_hash_sensitive_to_every_part(self):
        model = random_model(np.random.default_rng(8), n_pairs=1)
        h = rio.model_hash(model)
        d = model.deltas.copy()
        d[0, 0] = np.nextafter(d[0, 0], np.inf)
        assert rio.model_hash(BlendshapeModel(model.neutral, d, model.corrective_pairs)) != h
        j, k, off = model.corrective_pairs[0]
        off = off.copy()
        off[-1] += 1e-9
        assert rio.model_hash(BlendshapeModel(model.neutral, model.deltas, [(j, k, off)])) != h


def test_report_has_nonincreasing_trace(tmp_path):
    spec = SynthSpec(seed=42)
    model = generate_model(spec)
    target, _ = generate_target(model, spec)
    rep = solve(model, None, target)
    rio.write_report({"weights": rep.weights, "objective_trace": rep.objective_trace,
                      "converged": np.bool_(rep.converged)}, tmp_path / "r.json")
    doc = rio.read_report(tmp_path / "r.json")
    trace = doc["objective_trace"]
    assert len(trace) == rep.iterations_run + 1
    assert all(b <= a + 1e-9 * (1 + abs(a)) for a, b in zip(trace, trace[1:]))
    assert doc["weights"] == rep.weights.tolist()


@pytest.mark.parametrize("seed", [42, 43, 44])
def test_golden_fixtures_regenerate(tmp_path, seed):
    spec = SynthSpec(seed=seed)
    model = generate_model(spec)
    target, truth = generate_target(model, spec)
    rio.write_rig(model, tmp_path / "rig.json", sidecar=True)
    rio.write_target(target, tmp_path / "target.json")
    rio.write_weights(truth, tmp_path / "truth.json")
    golden = FIXTURES / f"seed{seed}"
    for name in ("rig.json", "rig.bin", "target.json", "truth.json"):
        assert (tmp_path / name).read_bytes() == (golden / name).read_bytes(), name


def test_small_inline_fixture():
    spec = SynthSpec(n_vertices=4, n_blendshapes=3, n_pairs=2, locality=0.5, sparsity=0.5,
                     seed=1)
    model = rio.read_rig(FIXTURES / "small" / "rig.json")
    assert same_model(model, generate_model(spec))
    target, truth = generate_target(model, spec)
    assert rio.read_target(FIXTURES / "small" / "target.json").tobytes() == target.tobytes()
    assert rio.read_weights(FIXTURES / "small" / "truth.json").tobytes() == truth.tobytes()
