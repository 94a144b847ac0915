import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadrig.model import validate_model
from quadrig.prng import GAMMA, Stream, splitmix64
from quadrig.solver import objective
from quadrig.spectral import assemble
from quadrig.synth import SpecError, SynthSpec, generate_model, generate_target

MASK = 2**64 - 1


def reference_splitmix(state, count):
    """Textbook sequential SplitMix64 on Python integers."""
    out = []
    for _ in range(count):
        state = (state + GAMMA) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


class TestPrng:
    def test_known_vector(self):
        # first output of SplitMix64 from state 0
        assert int(Stream(0, 0).u64(1)[0]) == 0xE220A8397B1DCDAF

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, MASK), stream=st.integers(0, 10), n=st.integers(1, 20))
    def test_matches_sequential_reference(self, seed, stream, n):
        start = (seed + GAMMA * stream * 2**32) & MASK
        got = [int(x) for x in Stream(seed, stream).u64(n)]
        assert got == reference_splitmix(start, n)

    def test_reads_continue_the_sequence(self):
        a = Stream(7, 2)
        first = list(a.u64(3)) + list(a.u64(4))
        assert first == list(Stream(7, 2).u64(7))

    def test_finaliser_is_vectorised(self):
        z = np.array([0, 1, MASK], dtype=np.uint64)
        assert splitmix64(z).tolist() == [
            reference_splitmix((x - GAMMA) & MASK, 1)[0] for x in (0, 1, MASK)]

    def test_uniform_symmetric_ranges(self):
        s = Stream(3, 0)
        u = s.uniform(10000)
        assert np.all((u > 0) & (u < 1))
        v = Stream(3, 1).symmetric(10000)
        assert np.all((v > -1) & (v < 1) & (v != 0))

    def test_uniform_formula(self):
        x = int(Stream(5, 4).u64(1)[0])
        assert Stream(5, 4).uniform(1)[0] == ((x >> 11) + 0.5) * 2.0**-53

    def test_shuffle_is_permutation(self):
        for n in (0, 1, 2, 17):
            assert sorted(Stream(1, 3).shuffled(n)) == list(range(n))

    def test_normal_moments(self):
        x = Stream(9, 7).normal(20000)
        assert abs(x.mean()) < 0.03 and abs(x.std() - 1) < 0.03

    def test_normal_formula(self):
        u = Stream(2, 7).uniform(2)
        expected = math.sqrt(-2 * math.log(u[0])) * math.cos(2 * math.pi * u[1])
        assert Stream(2, 7).normal(1)[0] == expected

    def test_rejects_bad_seed(self):
        with pytest.raises(ValueError):
            Stream(-1, 0)


class TestSpec:
    def test_too_many_pairs(self):
        with pytest.raises(SpecError, match="n_pairs"):
            SynthSpec(n_blendshapes=10, n_pairs=1000)
        SynthSpec(n_blendshapes=10, n_pairs=45)

    @pytest.mark.parametrize("kwargs", [
        {"n_vertices": 0}, {"n_blendshapes": 0}, {"locality": 0.0}, {"locality": 1.5},
        {"sparsity": 0.0}, {"delta_scale": 0.0}, {"corrective_scale": -1.0},
        {"noise_std": -0.1}, {"seed": -1}, {"n_pairs": -1},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(SpecError):
            SynthSpec(**kwargs)

    def test_ceiling_arithmetic(self):
        assert SynthSpec(n_blendshapes=20, sparsity=0.25).n_active == 5
        assert SynthSpec(n_vertices=100, locality=0.2).window == 20
        assert SynthSpec(n_vertices=10, locality=0.05).window == 1


class TestGenerateModel:
    def test_no_pairs(self):
        spec = SynthSpec(n_vertices=10, n_blendshapes=3, n_pairs=0, seed=1)
        model = generate_model(spec)
        assert validate_model(model) == []
        assert not assemble(model).half_values.any()

    def test_standard_instance(self):
        model = generate_model(SynthSpec(seed=42))
        assert validate_model(model) == []
        assert (model.n_vertices, model.n_blendshapes, model.n_pairs) == (100, 20, 30)
        for _, _, off in model.corrective_pairs:
            assert np.count_nonzero(off) >= 1

    def test_deterministic(self):
        a, b = generate_model(SynthSpec(seed=42)), generate_model(SynthSpec(seed=42))
        assert a.neutral.tobytes() == b.neutral.tobytes()
        assert a.deltas.tobytes() == b.deltas.tobytes()
        assert a.corrective_matrix.tobytes() == b.corrective_matrix.tobytes()
        assert a.pair_index.tobytes() == b.pair_index.tobytes()

    def test_seeds_differ(self):
        a, b = generate_model(SynthSpec(seed=42)), generate_model(SynthSpec(seed=43))
        assert a.deltas.tobytes() != b.deltas.tobytes()

    def test_windows_are_contiguous(self):
        spec = SynthSpec(seed=44)
        model = generate_model(spec)
        for i in range(model.n_blendshapes):
            moved = np.flatnonzero(np.any(model.deltas[:, i].reshape(-1, 3) != 0, axis=1))
            assert moved.size == spec.window
            assert moved[-1] - moved[0] == spec.window - 1
            assert np.max(np.abs(model.deltas[:, i])) < spec.delta_scale

    def test_correctives_on_intersection(self):
        model = generate_model(SynthSpec(seed=42))
        moved = np.any(model.deltas.reshape(100, 3, -1) != 0, axis=1)
        for j, k, off in model.corrective_pairs:
            support = np.any(off.reshape(-1, 3) != 0, axis=1)
            inter = moved[:, j] & moved[:, k]
            expected = inter if inter.any() else (moved[:, j] | moved[:, k])
            np.testing.assert_array_equal(support, expected)

    def test_prefers_overlapping_pairs(self):
        # with few pairs requested, all of them must overlap
        model = generate_model(SynthSpec(seed=42, n_pairs=5))
        moved = np.any(model.deltas.reshape(100, 3, -1) != 0, axis=1)
        for j, k in model.pair_index:
            assert np.any(moved[:, j] & moved[:, k])

    def test_falls_back_to_disjoint_pairs(self):
        spec = SynthSpec(n_vertices=50, n_blendshapes=6, n_pairs=15, locality=0.1, seed=3)
        model = generate_model(spec)
        assert model.n_pairs == 15 and validate_model(model) == []


class TestGenerateTarget:
    def test_noise_free_exact(self):
        spec = SynthSpec(seed=42)
        model = generate_model(spec)
        target, truth = generate_target(model, spec)
        assert objective(model, None, truth, target, 0.0) == 0.0

    def test_single_active(self):
        spec = SynthSpec(n_blendshapes=8, n_pairs=4, sparsity=1 / 8, seed=5)
        model = generate_model(spec)
        _, truth = generate_target(model, spec)
        assert np.count_nonzero(truth) == 1

    def test_truth_feasible(self):
        for seed in range(10):
            spec = SynthSpec(seed=seed, n_vertices=30, n_blendshapes=12, n_pairs=10)
            _, truth = generate_target(generate_model(spec), spec)
            active = truth[truth != 0]
            assert active.size == spec.n_active
            assert np.all((active >= 0.2) & (active <= 1.0))

    def test_noise_level(self):
        spec = SynthSpec(seed=42, noise_std=0.01)
        model = generate_model(spec)
        target, truth = generate_target(model, spec)
        fid = objective(model, None, truth, target, 0.0)
        expected = 3 * 100 * 0.01 ** 2
        assert 0.5 * expected <= fid <= 1.5 * expected
        # regression value from the first run
        assert fid == pytest.approx(0.028193886883619575, rel=1e-12)

    def test_noise_does_not_move_truth(self):
        a = SynthSpec(seed=42)
        b = SynthSpec(seed=42, noise_std=0.05)
        model = generate_model(a)
        assert generate_target(model, a)[1].tobytes() == generate_target(model, b)[1].tobytes()
